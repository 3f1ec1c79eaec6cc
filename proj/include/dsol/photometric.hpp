#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"
#include "dsol/map.hpp"

namespace dsol {

/// r = (I_host - b_host) - e^(a_host - a_target) (I_target - b_target)
inline double photometric_residual(double host_intensity, const AffineParams& host,
                                   double target_intensity, const AffineParams& target) {
  return (host_intensity - host.b) - std::exp(host.a - target.a) * (target_intensity - target.b);
}

/// c^2 / (c^2 + |grad|^2)
inline double gradient_weight(double grad_norm2, double c) { return c * c / (c * c + grad_norm2); }
inline double gradient_weight(const Vec2& grad, double c) {
  return gradient_weight(grad.squaredNorm(), c);
}

/// Student-t weight (nu + 1) / (nu + (r / sigma)^2).
inline double robust_weight(double r, double sigma, double nu) {
  const double x = r / sigma;
  return (nu + 1) / (nu + x * x);
}

/// Student-t negative log-likelihood (nu + 1) sigma^2 / 2 log(1 + (r / sigma)^2 / nu), up to a
/// constant. Its derivative is robust_weight * r, so reweighted least squares descends it.
inline double robust_loss(double r, double sigma, double nu) {
  const double x = r / sigma;
  return 0.5 * (nu + 1) * sigma * sigma * std::log1p(x * x / nu);
}

struct PatchVerdict {
  std::array<bool, kPatchSize> use{};  // in view and not bad
  int num_bad = 0;
  int num_valid = 0;
  bool rejected = false;  // two or more bad pixels
  bool discard = false;   // rejected, or too few pixels in view
};

/// Minimum number of patch pixels that must land in view.
inline constexpr int kMinPatchPixelsInView = 4;

/// A pixel is bad when r^2 exceeds the squared host gradient norm; the patch is discarded
/// when two or more pixels are bad or fewer than four are in view.
PatchVerdict reject_patch(std::span<const double, kPatchSize> residuals,
                          std::span<const double, kPatchSize> host_grad2,
                          std::span<const bool, kPatchSize> in_view);

PatchVerdict reject_patch(std::span<const double, kPatchSize> residuals,
                          std::span<const double, kPatchSize> host_grad2);

/// Scale of the residual distribution: 1.4826 * median |r|, floored at min_sigma.
/// Reorders the input.
double MadSigma(std::span<double> abs_residuals, double min_sigma = 1e-3);

/// Bilinear sampler over one pyramid level.
struct LevelSampler {
  const PyramidLevel* level;
  std::optional<IntensitySample> operator()(const Point2& uv) const { return sample(*level, uv); }
};

using Row6 = Eigen::Matrix<double, 1, 6>;

/// d I_host(pi(Exp(delta) p_h)) / d delta, mapped to a left perturbation of T_w_target
/// through Ad(T_host_w). Depends only on host data, so it is shared by every target.
inline Row6 HostPoseJacobian(const Pinhole& cam, const Point2& host_px, double rho,
                             const Vec2& host_grad, const Pose& T_host_w) {
  const Point3 p = backproject(cam, host_px, rho);
  const Row6 j_delta = host_grad.transpose() * ProjectionJacobian(cam, p) * PointTwistJacobian(p);
  return j_delta * T_host_w.Adjoint();
}

/// Residual and true derivative of one pixel w.r.t. the target frame, used by the
/// forward-compositional reference path and by the derivative checks.
struct ForwardTerm {
  double residual = 0;
  double target_intensity = 0;
  Point2 target_uv;
  Row6 d_pose;     // T_w_target <- Exp(xi) T_w_target
  double d_a = 0;  // target affine
  double d_b = 0;
};

/// T_c_h: target camera from host camera; T_c_w: target camera from world.
template <class Sampler>
std::optional<ForwardTerm> ForwardResidual(const Sampler& target, const Pinhole& cam,
                                           const Point2& host_px, double rho,
                                           double host_intensity, const Pose& T_c_h,
                                           const Pose& T_c_w, const AffineParams& host,
                                           const AffineParams& tgt) {
  const auto w = warp(host_px, rho, T_c_h, cam);
  if (!w) return std::nullopt;
  const auto s = target(w->uv);
  if (!s) return std::nullopt;
  const double e = std::exp(host.a - tgt.a);
  ForwardTerm out;
  out.target_uv = w->uv;
  out.target_intensity = s->value;
  out.residual = (host_intensity - host.b) - e * (s->value - tgt.b);
  out.d_pose = e * s->grad.transpose() * ProjectionJacobian(cam, w->point) *
               PointTwistJacobian(w->point) * T_c_w.Adjoint();
  out.d_a = e * (s->value - tgt.b);
  out.d_b = e;
  return out;
}

}  // namespace dsol
