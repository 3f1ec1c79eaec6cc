#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dsol/geometry.hpp"
#include "dsol/map.hpp"
#include "dsol/parallel.hpp"
#include "dsol/photometric.hpp"

namespace dsol {

struct PbaConfig {
  int max_iters = 4;  // per pyramid level
  int levels = -1;    // finest levels used; <0: all but the two coarsest
  double plateau_tol = 0.005;
  double rho_min = 1e-4;
  double rho_max = 10.0;
  double damping_init = 1e-4;  // relative to the diagonal
  double c = 4.0;
  double nu = 5.0;
  bool stereo = true;  // project into right images when every keyframe has one
  ExecPolicy exec;

  void Validate() const;
};

inline constexpr int kLeftCam = 0;
inline constexpr int kRightCam = 1;

/// Points hosted by keyframe `host` projected into camera `cam` of keyframe `target`.
struct ProjectionPass {
  int host = 0;
  int target = 0;
  int cam = kLeftCam;
};

/// Stereo: own right image plus both images of every other keyframe, N (2N - 1) passes.
/// Mono: left images of every other keyframe, N (N - 1) passes.
std::vector<ProjectionPass> EnumeratePasses(int num_keyframes, bool stereo);

/// Normal equations H dx = b. Frame variables first (kFrameDim per keyframe, window
/// order), then one inverse depth per point, grouped by host in window order.
struct LinearSystem {
  Eigen::MatrixXd Hpp;
  Eigen::VectorXd bp;
  Eigen::MatrixXd Hpm;  // frame rows x point columns
  Eigen::VectorXd Hmm;  // point block, diagonal
  Eigen::VectorXd bm;
  double cost = 0;  // sum w_g robust_loss(r)
  double sigma = 0;
  int num_residuals = 0;
  int num_passes = 0;

  static LinearSystem Zero(int num_frames, int num_points);
  int num_frames() const { return static_cast<int>(Hpp.rows()) / kFrameDim; }
  int frame_vars() const { return static_cast<int>(Hpp.rows()); }
  int num_points() const { return static_cast<int>(Hmm.size()); }

  Eigen::MatrixXd DenseH() const;
  Eigen::VectorXd DenseB() const;

  /// Holds a variable at zero: clears its row and column, unit diagonal, zero rhs.
  void FixFrameVar(int i);
  void FixPoint(int m);
};

struct SchurSolution {
  Eigen::VectorXd frames;
  Eigen::VectorXd points;
};

/// Eliminates the points, solves the reduced frame system and back-substitutes.
/// lambda scales the diagonal (H_ii *= 1 + lambda). Throws RankDeficiencyError when the
/// reduced system is singular.
SchurSolution schur_solve(const LinearSystem& sys, double lambda = 0);

/// Residual of one host pixel in a target camera and its derivatives.
struct PbaTerm {
  double residual = 0;
  double target_intensity = 0;
  Point2 target_uv;
  Row6 d_target_pose;  // T_w_target <- Exp(xi) T_w_target
  double d_rho = 0;
  double d_host_a = 0;
  double d_host_b = 0;
  double d_target_a = 0;
  double d_target_b = 0;

  /// T_w_host <- Exp(xi) T_w_host moves the point with the host, so the derivative is
  /// the negative of the target one.
  Row6 d_host_pose() const { return -d_target_pose; }
};

/// T_t_h: target camera from host left camera. ad_t_w: Ad(T_target_camera_w).
template <class Sampler>
std::optional<PbaTerm> PbaResidual(const Sampler& target, const Pinhole& cam,
                                   const Point2& host_px, double rho, double host_intensity,
                                   const Pose& T_t_h, const Mat6& ad_t_w,
                                   const AffineParams& host, const AffineParams& tgt,
                                   bool with_jacobian = true) {
  const auto w = warp(host_px, rho, T_t_h, cam);
  if (!w) return std::nullopt;
  const auto s = target(w->uv);
  if (!s) return std::nullopt;
  const double e = std::exp(host.a - tgt.a);
  PbaTerm out;
  out.target_uv = w->uv;
  out.target_intensity = s->value;
  out.residual = (host_intensity - host.b) - e * (s->value - tgt.b);
  if (!with_jacobian) return out;
  const Eigen::RowVector3d a = e * s->grad.transpose() * ProjectionJacobian(cam, w->point);
  out.d_target_pose = a * PointTwistJacobian(w->point) * ad_t_w;
  const Point3 ph = backproject(cam, host_px, rho);
  out.d_rho = a.dot(T_t_h.rotation() * ph) / rho;
  out.d_host_a = -e * (s->value - tgt.b);
  out.d_host_b = -1;
  out.d_target_a = e * (s->value - tgt.b);
  out.d_target_b = e;
  return out;
}

/// Optional restriction of a build to passes touching one keyframe.
struct PbaBuildOptions {
  int level = 0;
  double sigma = 0;           // <= 0: estimated from the residuals (MAD)
  int involving = -1;         // window index, or -1 for every pass
};

/// Assembles the PBA normal equations at the window's current states.
LinearSystem build_pba_system(const SlidingWindow& window, const StereoRig& rig,
                              const PbaConfig& cfg, const PbaBuildOptions& opt = {});

/// Adds the window prior at the current offsets: H += H_prior, b += b_prior - H_prior y.
void add_prior(LinearSystem& sys, const SlidingWindow& window);

/// Prior energy 1/2 y^T H y - b^T y at the current offsets.
double prior_energy(const SlidingWindow& window);

struct PbaResult {
  int iterations = 0;  // accepted steps over all levels
  int num_passes = 0;
  double initial_cost = 0;
  double final_cost = 0;
  std::vector<double> costs;       // after every accepted step
  std::vector<double> step_norms;  // of every accepted step
  int dropped_points = 0;
  bool diverged = false;  // some level stopped on cost increases above 1%
};

/// Gauss-Newton over all keyframe states and inverse depths, coarse to fine. Keyframes
/// in the prior follow state = linearization [+] offset. Drops points that leave
/// (rho_min, rho_max) or have no surviving residual at level 0. No-op below 2 keyframes.
PbaResult run_pba(SlidingWindow& window, const StereoRig& rig, const PbaConfig& cfg);

/// Prior over the remaining frames, in order, after eliminating every point with
/// information and then the frame `frame` of sys.
struct ReducedPrior {
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
};

ReducedPrior marginalize_linear(const LinearSystem& sys, int frame);

/// Symmetrizes H and clamps negative eigenvalues to zero. Throws ConsistencyError when
/// the input is asymmetric beyond 1e-9 relative.
Eigen::MatrixXd condition_prior(const Eigen::MatrixXd& H);

/// Folds keyframe `index` and its points into the window prior and removes them.
/// Residuals touching the keyframe are linearized at the first estimates.
void marginalize_keyframe(SlidingWindow& window, int index, const StereoRig& rig,
                          const PbaConfig& cfg);

}  // namespace dsol
