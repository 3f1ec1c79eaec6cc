#include "dsol/adjust.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dsol/error.hpp"

namespace dsol {

void PbaConfig::Validate() const {
  if (max_iters < 0) throw ConfigError("pba.max_iters must be >= 0");
  if (!(plateau_tol >= 0)) throw ConfigError("pba.plateau_tol must be >= 0");
  if (!(rho_min > 0 && rho_max > rho_min)) {
    throw ConfigError("pba.rho_min / pba.rho_max must satisfy 0 < rho_min < rho_max");
  }
  if (!(damping_init >= 0)) throw ConfigError("pba.damping_init must be >= 0");
  if (!(c > 0) || !(nu > 0)) throw ConfigError("PBA weight constants must be positive");
}

std::vector<ProjectionPass> EnumeratePasses(int num_keyframes, bool stereo) {
  std::vector<ProjectionPass> out;
  for (int h = 0; h < num_keyframes; ++h) {
    if (stereo) out.push_back({h, h, kRightCam});
    for (int t = 0; t < num_keyframes; ++t) {
      if (t == h) continue;
      out.push_back({h, t, kLeftCam});
      if (stereo) out.push_back({h, t, kRightCam});
    }
  }
  return out;
}

LinearSystem LinearSystem::Zero(int num_frames, int num_points) {
  const int f = num_frames * kFrameDim;
  LinearSystem s;
  s.Hpp = Eigen::MatrixXd::Zero(f, f);
  s.bp = Eigen::VectorXd::Zero(f);
  s.Hpm = Eigen::MatrixXd::Zero(f, num_points);
  s.Hmm = Eigen::VectorXd::Zero(num_points);
  s.bm = Eigen::VectorXd::Zero(num_points);
  return s;
}

Eigen::MatrixXd LinearSystem::DenseH() const {
  const int f = frame_vars();
  const int m = num_points();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(f + m, f + m);
  H.topLeftCorner(f, f) = Hpp;
  H.topRightCorner(f, m) = Hpm;
  H.bottomLeftCorner(m, f) = Hpm.transpose();
  H.bottomRightCorner(m, m) = Hmm.asDiagonal();
  return H;
}

Eigen::VectorXd LinearSystem::DenseB() const {
  Eigen::VectorXd b(frame_vars() + num_points());
  b << bp, bm;
  return b;
}

void LinearSystem::FixFrameVar(int i) {
  Hpp.row(i).setZero();
  Hpp.col(i).setZero();
  Hpp(i, i) = 1;
  bp(i) = 0;
  Hpm.row(i).setZero();
}

void LinearSystem::FixPoint(int m) {
  Hpm.col(m).setZero();
  Hmm(m) = 1;
  bm(m) = 0;
}

SchurSolution schur_solve(const LinearSystem& sys, double lambda) {
  const int m = sys.num_points();
  Eigen::VectorXd hmm = sys.Hmm * (1 + lambda);
  for (int i = 0; i < m; ++i) {
    if (!(hmm(i) > 0)) throw Error("schur_solve: point " + std::to_string(i) + " has no information");
  }
  const Eigen::VectorXd inv = hmm.cwiseInverse();
  Eigen::MatrixXd S = sys.Hpp;
  S.diagonal() *= 1 + lambda;
  const Eigen::MatrixXd W = sys.Hpm * inv.asDiagonal();
  S.noalias() -= W * sys.Hpm.transpose();
  const Eigen::VectorXd bs = sys.bp - W * sys.bm;

  // Jacobi scaling keeps the rank test independent of variable units.
  const int f = static_cast<int>(S.rows());
  Eigen::VectorXd scale(f);
  for (int i = 0; i < f; ++i) scale(i) = S(i, i) > 0 ? 1 / std::sqrt(S(i, i)) : 0;
  const Eigen::MatrixXd Sn = scale.asDiagonal() * S * scale.asDiagonal();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(Sn);
  const auto d = ldlt.vectorD();
  const bool singular = scale.minCoeff() == 0 || ldlt.info() != Eigen::Success ||
                        (f > 0 && d.minCoeff() <= 1e-10 * std::max(1.0, d.maxCoeff()));
  if (singular) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const Eigen::VectorXd v = es.eigenvectors().col(0);
    int worst = 0;
    v.cwiseAbs().maxCoeff(&worst);
    throw RankDeficiencyError("reduced frame system is rank deficient (smallest eigenvalue " +
                                  std::to_string(es.eigenvalues()(0)) + ", dominant variable " +
                                  std::to_string(worst) + ")",
                              std::vector<double>(v.data(), v.data() + v.size()));
  }
  SchurSolution out;
  out.frames = scale.asDiagonal() * ldlt.solve(scale.asDiagonal() * bs);
  out.points = inv.asDiagonal() * (sys.bm - sys.Hpm.transpose() * out.frames);
  return out;
}

namespace {

using Mat10 = Eigen::Matrix<double, kFrameDim, kFrameDim>;
using Vec10 = Eigen::Matrix<double, kFrameDim, 1>;

constexpr double kNegligibleStep = 1e-12;
constexpr double kDivergenceRise = 0.01;

bool UseStereo(const SlidingWindow& window, const PbaConfig& cfg) {
  if (!cfg.stereo) return false;
  return std::all_of(window.keyframes.begin(), window.keyframes.end(),
                     [](const Keyframe& k) { return k.frame.has_right(); });
}

// Compressed per-pixel Jacobian layout: target pose (6), host a, b, target a, b.
struct Scatter {
  int full;
  int comp;
  double sign;
};

std::vector<Scatter> ScatterOf(const ProjectionPass& p) {
  std::vector<Scatter> s;
  if (p.host != p.target) {
    for (int i = 0; i < 6; ++i) {
      s.push_back({p.target * kFrameDim + i, i, 1.0});
      s.push_back({p.host * kFrameDim + i, i, -1.0});
    }
  }
  const int ai = p.cam == kLeftCam ? frame_index::kAffineLeft : frame_index::kAffineRight;
  s.push_back({p.host * kFrameDim + frame_index::kAffineLeft, 6, 1.0});
  s.push_back({p.host * kFrameDim + frame_index::kAffineLeft + 1, 7, 1.0});
  s.push_back({p.target * kFrameDim + ai, 8, 1.0});
  s.push_back({p.target * kFrameDim + ai + 1, 9, 1.0});
  return s;
}

struct PassGeometry {
  ProjectionPass pass;
  Pose T_t_h;
  Mat6 ad_t_w;
  const PyramidLevel* image = nullptr;
  AffineParams host_affine;
  AffineParams target_affine;
};

struct PixelTerms {
  std::array<PbaTerm, kPatchSize> terms;
  std::array<bool, kPatchSize> in_view{};
  PatchVerdict verdict;
};

// Per point and pass, bit j set when patch pixel j is an inlier.
using InlierMask = std::vector<std::uint8_t>;

class PbaProblem {
 public:
  PbaProblem(const SlidingWindow& window, const StereoRig& rig, const PbaConfig& cfg, int level,
             int involving)
      : window_(window), rig_(rig), cfg_(cfg), level_(level) {
    cam_ = scale_camera(rig.cam, level);
    const int n = window.size();
    for (const auto& p : EnumeratePasses(n, UseStereo(window, cfg))) {
      if (involving >= 0 && p.host != involving && p.target != involving) continue;
      passes_.push_back(p);
    }
    host_passes_.resize(static_cast<size_t>(n));
    for (int i = 0; i < static_cast<int>(passes_.size()); ++i) host_passes_[passes_[i].host].push_back(i);
    offsets_.push_back(0);
    for (int k = 0; k < n; ++k) {
      const auto& pts = window.keyframes[k].points;
      offsets_.push_back(offsets_.back() + static_cast<int>(pts.size()));
      if (host_passes_[k].empty()) continue;
      int begin = 0;
      for (int i = 1; i <= static_cast<int>(pts.size()); ++i) {
        if (i == static_cast<int>(pts.size()) || pts[i].cell_row != pts[begin].cell_row) {
          tasks_.push_back({k, begin, i});
          begin = i;
        }
      }
    }
  }

  int num_passes() const { return static_cast<int>(passes_.size()); }
  int num_points() const { return offsets_.back(); }
  int offset(int k) const { return offsets_[k]; }

  std::vector<PassGeometry> Geometry(std::span<const FrameState> states) const {
    std::vector<PassGeometry> g;
    const Pose T_rl = rig_.RightFromLeft();
    for (const auto& p : passes_) {
      PassGeometry pg;
      pg.pass = p;
      const Pose T_t_w = (p.cam == kRightCam ? T_rl : Pose()) * states[p.target].pose.inverse();
      pg.T_t_h = T_t_w * states[p.host].pose;
      pg.ad_t_w = T_t_w.Adjoint();
      const auto& frame = window_.keyframes[p.target].frame;
      pg.image = &(p.cam == kRightCam ? frame.right : frame.left)->level(level_);
      pg.host_affine = states[p.host].affine_left;
      pg.target_affine =
          p.cam == kRightCam ? states[p.target].affine_right : states[p.target].affine_left;
      g.push_back(pg);
    }
    return g;
  }

  // Calls fn(m, point, pass index, pixel terms) for every point-pass of a task.
  template <class Fn>
  void ForTask(int t, const std::vector<PassGeometry>& geom, std::span<const double> rho,
               bool with_jacobian, Fn&& fn) const {
    const auto& task = tasks_[t];
    const auto& kf = window_.keyframes[task.kf];
    for (int i = task.begin; i < task.end; ++i) {
      const int m = offsets_[task.kf] + i;
      const double r = rho[m];
      if (!(r > cfg_.rho_min && r < cfg_.rho_max)) continue;
      const auto& pt = kf.points[i];
      if (level_ >= static_cast<int>(pt.patch.levels.size())) continue;
      const auto& pl = pt.patch.levels[level_];
      for (int pi : host_passes_[task.kf]) {
        const auto& g = geom[pi];
        PixelTerms px;
        std::array<double, kPatchSize> res{};
        std::array<double, kPatchSize> grad2{};
        std::array<bool, kPatchSize> in_view{};
        for (int j = 0; j < kPatchSize; ++j) {
          grad2[j] = pl.GradNorm2(j);
          const auto term = PbaResidual(LevelSampler{g.image}, cam_,
                                        Patch::PixelAt(pt.uv, level_, j), r, pl.intensity[j],
                                        g.T_t_h, g.ad_t_w, g.host_affine, g.target_affine,
                                        with_jacobian);
          if (!term) continue;
          in_view[j] = true;
          px.in_view[j] = true;
          res[j] = term->residual;
          px.terms[j] = *term;
        }
        px.verdict = reject_patch(res, grad2, in_view);
        fn(m, pl, pi, px);
      }
    }
  }

  std::vector<double> AbsResiduals(std::span<const FrameState> states,
                                   std::span<const double> rho) const {
    const auto geom = Geometry(states);
    return ParallelReduce(
        num_tasks(), std::vector<double>{},
        [&](std::vector<double>& acc, int t) {
          ForTask(t, geom, rho, false, [&](int, const PatchLevel&, int, const PixelTerms& px) {
            if (px.verdict.discard) return;
            for (int j = 0; j < kPatchSize; ++j) {
              if (px.verdict.use[j]) acc.push_back(std::abs(px.terms[j].residual));
            }
          });
        },
        [](std::vector<double>& into, const std::vector<double>& from) {
          into.insert(into.end(), from.begin(), from.end());
        },
        cfg_.exec);
  }

  double Sigma(std::span<const FrameState> states, std::span<const double> rho) const {
    auto r = AbsResiduals(states, rho);
    return MadSigma(r);
  }

  InlierMask Inliers(std::span<const FrameState> states, std::span<const double> rho) const {
    InlierMask mask(static_cast<size_t>(num_points()) * num_passes(), 0);
    const auto geom = Geometry(states);
    ParallelFor(num_tasks(), [&](int t) {
      ForTask(t, geom, rho, false, [&](int m, const PatchLevel&, int pi, const PixelTerms& px) {
        if (px.verdict.discard) return;
        std::uint8_t bits = 0;
        for (int j = 0; j < kPatchSize; ++j) {
          if (px.verdict.use[j]) bits |= static_cast<std::uint8_t>(1u << j);
        }
        mask[static_cast<size_t>(m) * num_passes() + pi] = bits;
      });
    });
    return mask;
  }

  /// With a mask, sums over its inliers that are still in view instead of re-running the
  /// outlier rejection, so costs of nearby states compare over the same residuals.
  double Cost(std::span<const FrameState> states, std::span<const double> rho, double sigma,
              const InlierMask* mask = nullptr) const {
    const auto geom = Geometry(states);
    return ParallelReduce(
        num_tasks(), 0.0,
        [&](double& acc, int t) {
          ForTask(t, geom, rho, false, [&](int m, const PatchLevel& pl, int pi, const PixelTerms& px) {
            if (mask) {
              const std::uint8_t bits = (*mask)[static_cast<size_t>(m) * num_passes() + pi];
              for (int j = 0; j < kPatchSize; ++j) {
                if ((bits >> j & 1u) && px.in_view[j]) acc += Loss(pl, j, px.terms[j].residual, sigma);
              }
              return;
            }
            if (px.verdict.discard) return;
            for (int j = 0; j < kPatchSize; ++j) {
              if (!px.verdict.use[j]) continue;
              const double r = px.terms[j].residual;
              acc += Loss(pl, j, r, sigma);
            }
          });
        },
        [](double& into, double from) { into += from; }, cfg_.exec);
  }

  /// Per point: 1 when some pass keeps its patch.
  std::vector<std::uint8_t> Observed(std::span<const FrameState> states,
                                     std::span<const double> rho) const {
    std::vector<std::uint8_t> seen(static_cast<size_t>(num_points()), 0);
    const auto geom = Geometry(states);
    ParallelFor(num_tasks(), [&](int t) {
      ForTask(t, geom, rho, false, [&](int m, const PatchLevel&, int, const PixelTerms& px) {
        if (!px.verdict.discard) seen[m] = 1;
      });
    });
    return seen;
  }

  LinearSystem Build(std::span<const FrameState> states, std::span<const double> rho,
                     double sigma) const {
    const int n = window_.size();
    LinearSystem sys = LinearSystem::Zero(n, num_points());
    sys.sigma = sigma;
    sys.num_passes = num_passes();
    const auto geom = Geometry(states);
    std::vector<std::vector<Scatter>> scatter;
    for (const auto& p : passes_) scatter.push_back(ScatterOf(p));

    struct Acc {
      std::vector<Mat10> C;
      std::vector<Vec10> g;
      double cost = 0;
      int n = 0;
    };
    Acc identity;
    identity.C.assign(passes_.size(), Mat10::Zero());
    identity.g.assign(passes_.size(), Vec10::Zero());

    const Acc acc = ParallelReduce(
        num_tasks(), identity,
        [&](Acc& a, int t) {
          ForTask(t, geom, rho, true, [&](int m, const PatchLevel& pl, int pi, const PixelTerms& px) {
            if (px.verdict.discard) return;
            Eigen::Matrix<double, kFrameDim + 1, kFrameDim + 1> L;
            L.setZero();
            Eigen::Matrix<double, kFrameDim + 1, 1> gl;
            gl.setZero();
            Eigen::Matrix<double, kFrameDim + 1, 1> J;
            for (int j = 0; j < kPatchSize; ++j) {
              if (!px.verdict.use[j]) continue;
              const auto& tm = px.terms[j];
              const double w = Weight(pl, j, tm.residual, sigma);
              J << tm.d_target_pose.transpose(), tm.d_host_a, tm.d_host_b, tm.d_target_a,
                  tm.d_target_b, tm.d_rho;
              L.selfadjointView<Eigen::Upper>().rankUpdate(J, w);
              gl -= w * tm.residual * J;
              a.cost += Loss(pl, j, tm.residual, sigma);
              ++a.n;
            }
            const Mat10 C = L.topLeftCorner<kFrameDim, kFrameDim>().selfadjointView<Eigen::Upper>();
            a.C[pi] += C;
            a.g[pi] += gl.head<kFrameDim>();
            // Point entries are owned by this task.
            for (const auto& s : scatter[pi]) sys.Hpm(s.full, m) += s.sign * L(s.comp, kFrameDim);
            sys.Hmm(m) += L(kFrameDim, kFrameDim);
            sys.bm(m) += gl(kFrameDim);
          });
        },
        [](Acc& into, const Acc& from) {
          for (size_t i = 0; i < into.C.size(); ++i) {
            into.C[i] += from.C[i];
            into.g[i] += from.g[i];
          }
          into.cost += from.cost;
          into.n += from.n;
        },
        cfg_.exec);

    for (size_t pi = 0; pi < passes_.size(); ++pi) {
      for (const auto& a : scatter[pi]) {
        sys.bp(a.full) += a.sign * acc.g[pi](a.comp);
        for (const auto& b : scatter[pi]) {
          sys.Hpp(a.full, b.full) += a.sign * b.sign * acc.C[pi](a.comp, b.comp);
        }
      }
    }
    sys.cost = acc.cost;
    sys.num_residuals = acc.n;
    return sys;
  }

 private:
  struct Task {
    int kf;
    int begin;
    int end;
  };

  int num_tasks() const { return static_cast<int>(tasks_.size()); }

  double Weight(const PatchLevel& pl, int j, double r, double sigma) const {
    return gradient_weight(pl.GradNorm2(j), cfg_.c) * robust_weight(r, sigma, cfg_.nu);
  }

  double Loss(const PatchLevel& pl, int j, double r, double sigma) const {
    return gradient_weight(pl.GradNorm2(j), cfg_.c) * robust_loss(r, sigma, cfg_.nu);
  }

  const SlidingWindow& window_;
  const StereoRig& rig_;
  const PbaConfig& cfg_;
  int level_;
  Pinhole cam_;
  std::vector<ProjectionPass> passes_;
  std::vector<std::vector<int>> host_passes_;
  std::vector<int> offsets_;
  std::vector<Task> tasks_;
};

std::vector<FrameState> States(const SlidingWindow& w) {
  std::vector<FrameState> s;
  for (const auto& k : w.keyframes) s.push_back(k.state);
  return s;
}

std::vector<double> Rhos(const SlidingWindow& w) {
  std::vector<double> r;
  for (const auto& k : w.keyframes) {
    for (const auto& p : k.points) r.push_back(p.rho);
  }
  return r;
}

int MinLevels(const SlidingWindow& w) {
  int levels = 1 << 20;
  for (const auto& k : w.keyframes) {
    levels = std::min(levels, k.frame.left->num_levels());
    if (k.frame.has_right()) levels = std::min(levels, k.frame.right->num_levels());
  }
  return levels;
}

// Window index of every prior frame, or -1 when it left the window.
std::vector<int> PriorSlots(const SlidingWindow& w) {
  std::vector<int> slots;
  for (int id : w.prior.frame_ids) slots.push_back(w.IndexOf(id));
  return slots;
}

Eigen::VectorXd StackOffsets(const std::vector<FrameDelta>& offsets) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(offsets.size()) * kFrameDim);
  for (size_t i = 0; i < offsets.size(); ++i) y.segment<kFrameDim>(static_cast<Eigen::Index>(i) * kFrameDim) = offsets[i];
  return y;
}

void AddPrior(LinearSystem& sys, const MargPrior& prior, const std::vector<int>& slots,
              const std::vector<FrameDelta>& offsets) {
  if (prior.empty()) return;
  const Eigen::VectorXd y = StackOffsets(offsets);
  const Eigen::VectorXd rhs = prior.b - prior.H * y;
  const int p = static_cast<int>(slots.size());
  for (int i = 0; i < p; ++i) {
    if (slots[i] < 0) continue;
    sys.bp.segment<kFrameDim>(slots[i] * kFrameDim) += rhs.segment<kFrameDim>(i * kFrameDim);
    for (int j = 0; j < p; ++j) {
      if (slots[j] < 0) continue;
      sys.Hpp.block<kFrameDim, kFrameDim>(slots[i] * kFrameDim, slots[j] * kFrameDim) +=
          prior.H.block<kFrameDim, kFrameDim>(i * kFrameDim, j * kFrameDim);
    }
  }
}

double PriorEnergy(const MargPrior& prior, const std::vector<FrameDelta>& offsets) {
  if (prior.empty()) return 0;
  const Eigen::VectorXd y = StackOffsets(offsets);
  return 0.5 * y.dot(prior.H * y) - prior.b.dot(y);
}

void FixGauge(LinearSystem& sys, bool stereo) {
  for (int i = 0; i < frame_index::kAffineLeft + 2; ++i) sys.FixFrameVar(i);
  if (!stereo) {
    for (int k = 0; k < sys.num_frames(); ++k) {
      sys.FixFrameVar(k * kFrameDim + frame_index::kAffineRight);
      sys.FixFrameVar(k * kFrameDim + frame_index::kAffineRight + 1);
    }
    const double floor = 1e-8 * std::max(1.0, sys.num_points() > 0 ? sys.Hmm.maxCoeff() : 0.0);
    for (int m = 0; m < sys.num_points(); ++m) {
      if (sys.Hmm(m) > floor) {
        sys.FixPoint(m);
        break;
      }
    }
  }
  for (int i = 0; i < sys.frame_vars(); ++i) {
    if (!(sys.Hpp(i, i) > 0)) sys.FixFrameVar(i);
  }
  // Depths seen without parallax carry roundoff-level information only.
  const double floor = 1e-8 * std::max(1.0, sys.num_points() > 0 ? sys.Hmm.maxCoeff() : 0.0);
  for (int m = 0; m < sys.num_points(); ++m) {
    if (!(sys.Hmm(m) > floor)) sys.FixPoint(m);
  }
}

}  // namespace

LinearSystem build_pba_system(const SlidingWindow& window, const StereoRig& rig,
                              const PbaConfig& cfg, const PbaBuildOptions& opt) {
  const PbaProblem prob(window, rig, cfg, opt.level, opt.involving);
  const auto states = States(window);
  const auto rho = Rhos(window);
  const double sigma = opt.sigma > 0 ? opt.sigma : prob.Sigma(states, rho);
  return prob.Build(states, rho, sigma);
}

void add_prior(LinearSystem& sys, const SlidingWindow& window) {
  AddPrior(sys, window.prior, PriorSlots(window), window.prior.offset);
}

double prior_energy(const SlidingWindow& window) {
  return PriorEnergy(window.prior, window.prior.offset);
}

PbaResult run_pba(SlidingWindow& window, const StereoRig& rig, const PbaConfig& cfg) {
  cfg.Validate();
  PbaResult res;
  if (window.size() < 2) return res;
  const bool stereo = UseStereo(window, cfg);
  const int pyr = MinLevels(window);
  const int levels = cfg.levels < 0 ? std::max(1, pyr - 2) : std::clamp(cfg.levels, 1, pyr);

  auto& prior = window.prior;
  const auto slots = PriorSlots(window);
  std::vector<int> prior_index(static_cast<size_t>(window.size()), -1);
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] >= 0) prior_index[slots[i]] = static_cast<int>(i);
  }

  std::vector<FrameState> states = States(window);
  std::vector<double> rho = Rhos(window);
  std::vector<FrameDelta> offsets = prior.offset;
  double lambda = cfg.damping_init;
  bool first = true;

  for (int level = levels - 1; level >= 0; --level) {
    const PbaProblem prob(window, rig, cfg, level, -1);
    res.num_passes = prob.num_passes();
    const double sigma_ref = prob.Sigma(states, rho);
    double cost_ref = 0;
    for (int it = 0; it < cfg.max_iters; ++it) {
      // Trial steps are judged on the inliers of the linearization state; re-running the
      // rejection would count patches a good step brings back as a cost increase.
      const auto inliers = prob.Inliers(states, rho);
      cost_ref = prob.Cost(states, rho, sigma_ref, &inliers) + PriorEnergy(prior, offsets);
      if (first) res.initial_cost = cost_ref;
      first = false;
      const double sigma = prob.Sigma(states, rho);
      LinearSystem sys = prob.Build(states, rho, sigma);
      AddPrior(sys, prior, slots, offsets);
      FixGauge(sys, stereo);

      bool accepted = false;
      double best_rejected = std::numeric_limits<double>::infinity();
      for (int attempt = 0; attempt < 3 && !accepted; ++attempt) {
        const SchurSolution sol = schur_solve(sys, lambda);
        const double step = std::hypot(sol.frames.norm(), sol.points.norm());
        if (step < kNegligibleStep) {
          // Converged; the cost comparison is pure rounding at this point.
          accepted = true;
          res.step_norms.push_back(step);
          it = cfg.max_iters;
          break;
        }
        std::vector<FrameState> trial = states;
        std::vector<FrameDelta> trial_offsets = offsets;
        for (int k = 0; k < window.size(); ++k) {
          const FrameDelta d = sol.frames.segment<kFrameDim>(k * kFrameDim);
          if (const int pi = prior_index[k]; pi >= 0) {
            trial_offsets[pi] += d;
            trial[k] = box_plus(prior.linearization[pi], trial_offsets[pi]);
          } else {
            trial[k] = box_plus(states[k], d);
          }
        }
        std::vector<double> trial_rho = rho;
        for (size_t m = 0; m < rho.size(); ++m) trial_rho[m] += sol.points(static_cast<Eigen::Index>(m));
        const double cost =
            prob.Cost(trial, trial_rho, sigma_ref, &inliers) + PriorEnergy(prior, trial_offsets);
        if (cost <= cost_ref) {
          accepted = true;
          lambda = std::max(lambda * 0.5, 1e-12);
          const double decrease = cost_ref > 0 ? (cost_ref - cost) / cost_ref : 0.0;
          states = std::move(trial);
          rho = std::move(trial_rho);
          offsets = std::move(trial_offsets);
          cost_ref = cost;
          ++res.iterations;
          res.costs.push_back(cost);
          res.step_norms.push_back(step);
          if (decrease < cfg.plateau_tol) it = cfg.max_iters;
        } else {
          best_rejected = std::min(best_rejected, cost);
          lambda *= 2;
        }
      }
      if (!accepted) {
        // A marginal rise means the level has converged rather than diverged.
        if (!(best_rejected <= cost_ref * (1 + kDivergenceRise))) res.diverged = true;
        break;
      }
    }
    res.final_cost = cost_ref;
  }

  // Write back and prune.
  const PbaProblem finest(window, rig, cfg, 0, -1);
  const auto seen = finest.Observed(states, rho);
  prior.offset = offsets;
  for (int k = 0; k < window.size(); ++k) {
    auto& kf = window.keyframes[k];
    kf.state = states[k];
    const int base = finest.offset(k);
    std::vector<DepthPoint> kept;
    kept.reserve(kf.points.size());
    for (size_t i = 0; i < kf.points.size(); ++i) {
      const int m = base + static_cast<int>(i);
      const double r = rho[m];
      if (!(r > cfg.rho_min && r < cfg.rho_max) || !seen[m]) {
        ++res.dropped_points;
        continue;
      }
      kf.points[i].rho = r;
      kept.push_back(std::move(kf.points[i]));
    }
    kf.points = std::move(kept);
  }
  return res;
}

ReducedPrior marginalize_linear(const LinearSystem& sys, int frame) {
  Eigen::MatrixXd H = sys.Hpp;
  Eigen::VectorXd b = sys.bp;
  for (int m = 0; m < sys.num_points(); ++m) {
    if (!(sys.Hmm(m) > 0)) continue;
    const auto col = sys.Hpm.col(m);
    H.noalias() -= col * col.transpose() / sys.Hmm(m);
    b -= col * (sys.bm(m) / sys.Hmm(m));
  }
  const int f = static_cast<int>(H.rows());
  const int lo = frame * kFrameDim;
  std::vector<int> keep;
  for (int i = 0; i < f; ++i) {
    if (i < lo || i >= lo + kFrameDim) keep.push_back(i);
  }
  const int r = static_cast<int>(keep.size());
  Eigen::MatrixXd Hrr(r, r);
  Eigen::MatrixXd Hrf(r, kFrameDim);
  Eigen::VectorXd br(r);
  for (int i = 0; i < r; ++i) {
    br(i) = b(keep[i]);
    Hrf.row(i) = H.block(keep[i], lo, 1, kFrameDim);
    for (int j = 0; j < r; ++j) Hrr(i, j) = H(keep[i], keep[j]);
  }
  const Mat10 Hff = H.block<kFrameDim, kFrameDim>(lo, lo);
  const Vec10 bf = b.segment<kFrameDim>(lo);

  // Pseudo-inverse: unobserved frame directions carry no information.
  const Eigen::SelfAdjointEigenSolver<Mat10> es(0.5 * (Hff + Hff.transpose()));
  const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Vec10 inv_ev;
  for (int i = 0; i < kFrameDim; ++i) {
    inv_ev(i) = es.eigenvalues()(i) > tol ? 1 / es.eigenvalues()(i) : 0;
  }
  const Mat10 pinv = es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();

  ReducedPrior out;
  out.H = Hrr - Hrf * pinv * Hrf.transpose();
  out.b = br - Hrf * (pinv * bf);
  return out;
}

Eigen::MatrixXd condition_prior(const Eigen::MatrixXd& H) {
  if (H.size() == 0) return H;
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * scale) {
    throw ConsistencyError("marginalization prior lost symmetry (" + std::to_string(asym) + ")");
  }
  const Eigen::MatrixXd S = 0.5 * (H + H.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.eigenvalues().minCoeff() >= 0) return S;
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

void marginalize_keyframe(SlidingWindow& window, int index, const StereoRig& rig,
                          const PbaConfig& cfg) {
  if (index < 0 || index >= window.size()) {
    throw Error("marginalize_keyframe: index " + std::to_string(index) + " out of range");
  }
  auto& prior = window.prior;
  const auto slots = PriorSlots(window);

  // First estimates for frames already in the prior, current states otherwise.
  std::vector<FrameState> lin = States(window);
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] >= 0) lin[slots[i]] = prior.linearization[i];
  }
  const auto rho = Rhos(window);
  const PbaProblem prob(window, rig, cfg, 0, index);
  LinearSystem sys = prob.Build(lin, rho, prob.Sigma(lin, rho));
  AddPrior(sys, prior, slots, std::vector<FrameDelta>(slots.size(), FrameDelta::Zero()));
  const ReducedPrior reduced = marginalize_linear(sys, index);

  MargPrior next;
  next.H = condition_prior(reduced.H);
  next.b = reduced.b;
  for (int k = 0; k < window.size(); ++k) {
    if (k == index) continue;
    const auto& kf = window.keyframes[k];
    next.frame_ids.push_back(kf.id);
    if (const int pi = prior.IndexOf(kf.id); pi >= 0) {
      next.linearization.push_back(prior.linearization[pi]);
      next.offset.push_back(prior.offset[pi]);
    } else {
      next.linearization.push_back(kf.state);
      next.offset.push_back(FrameDelta::Zero());
    }
  }
  prior = std::move(next);
  window.keyframes.erase(window.keyframes.begin() + index);
}

}  // namespace dsol
