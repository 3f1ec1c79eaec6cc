#include "dsol/align.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "dsol/error.hpp"
#include "dsol/photometric.hpp"

namespace dsol {

void AlignConfig::Validate() const {
  if (!(c > 0)) throw ConfigError("align.c must be positive");
  if (!(nu > 0)) throw ConfigError("align.nu must be positive");
  if (max_iters < 0) throw ConfigError("align.max_iters must be >= 0");
  if (!(plateau_tol >= 0)) throw ConfigError("align.plateau_tol must be >= 0");
}

FrameState predict_state(std::span<const FrameState> history) {
  if (history.empty()) return {};
  FrameState out = history.back();
  if (history.size() >= 2) {
    const Pose& prev = history[history.size() - 2].pose;
    const Pose& last = history.back().pose;
    out.pose = last * (prev.inverse() * last);
    out.pose.Normalize();
  }
  return out;
}

namespace {

using Mat10 = Eigen::Matrix<double, kFrameDim, kFrameDim>;
using Vec10 = Eigen::Matrix<double, kFrameDim, 1>;

constexpr int kLeft = 0;
constexpr int kRight = 1;

struct HostPixel {
  Point2 px;  // level-local host pixel
  double intensity = 0;
  double grad2 = 0;
  double wg = 0;
  Row6 J;  // inverse-compositional pose Jacobian
};

struct TrackPoint {
  int kf = 0;
  int index = 0;
  int cell_row = 0;
  double rho = 0;
  AffineParams host_affine;
  std::array<HostPixel, kPatchSize> px;
};

// Per point and target camera, evaluated at one state.
struct Observation {
  std::array<double, kPatchSize> r{};
  std::array<double, kPatchSize> it{};
  std::array<Row6, kPatchSize> j_fwd;
  PatchVerdict verdict;
  Point2 center_uv;
};

struct Accumulator {
  Mat10 H = Mat10::Zero();
  Vec10 g = Vec10::Zero();
  double cost = 0;
  int n = 0;

  void Merge(const Accumulator& o) {
    H += o.H;
    g += o.g;
    cost += o.cost;
    n += o.n;
  }
};

class Tracker {
 public:
  Tracker(const SlidingWindow& window, const StereoFrame& frame, const StereoRig& rig,
          const AlignConfig& cfg)
      : window_(window), frame_(frame), rig_(rig), cfg_(cfg) {
    use_right_ = cfg.stereo && frame.has_right();
    num_cams_ = use_right_ ? 2 : 1;
    first_kf_ = cfg.scope == TrackScope::kNewestKeyframe ? window.size() - 1 : 0;
    for (int k = 0; k < window.size(); ++k) {
      T_h_w_.push_back(window.keyframes[k].state.pose.inverse());
      ad_h_w_.push_back(T_h_w_.back().Adjoint());
    }
  }

  int SelectedCount() const {
    int n = 0;
    for (int k = first_kf_; k < window_.size(); ++k) {
      for (const auto& p : window_.keyframes[k].points) n += p.rho > 0;
    }
    return n;
  }

  void PrepareLevel(int level) {
    level_ = level;
    cam_ = scale_camera(rig_.cam, level);
    points_.clear();
    for (int k = first_kf_; k < window_.size(); ++k) {
      const auto& kf = window_.keyframes[k];
      for (int i = 0; i < static_cast<int>(kf.points.size()); ++i) {
        const auto& p = kf.points[i];
        if (!(p.rho > 0) || level >= static_cast<int>(p.patch.levels.size())) continue;
        TrackPoint tp;
        tp.kf = k;
        tp.index = i;
        tp.cell_row = p.cell_row;
        tp.rho = p.rho;
        tp.host_affine = kf.state.affine_left;
        const auto& pl = p.patch.levels[level];
        for (int j = 0; j < kPatchSize; ++j) {
          auto& hp = tp.px[j];
          hp.px = Patch::PixelAt(p.uv, level, j);
          hp.intensity = pl.intensity[j];
          hp.grad2 = pl.GradNorm2(j);
          hp.wg = gradient_weight(hp.grad2, cfg_.c);
          if (cfg_.inverse_compositional) {
            const Point3 ph = backproject(cam_, hp.px, p.rho);
            hp.J = Vec2(pl.grad_x[j], pl.grad_y[j]).transpose() * ProjectionJacobian(cam_, ph) *
                   PointTwistJacobian(ph) * ad_h_w_[k];
          }
        }
        points_.push_back(tp);
      }
    }
    // One task per (keyframe, row of cells); points are ordered by cell within a keyframe.
    tasks_.clear();
    for (int i = 0; i < static_cast<int>(points_.size()); ++i) {
      if (i == 0 || points_[i].kf != points_[i - 1].kf ||
          points_[i].cell_row != points_[i - 1].cell_row) {
        tasks_.push_back({i, i});
      }
      tasks_.back().second = i + 1;
    }
  }

  void Evaluate(const FrameState& state, std::vector<Observation>& obs) const {
    obs.resize(points_.size() * num_cams_);
    const Pose T_l_w = state.pose.inverse();
    std::array<Pose, 2> T_c_w{T_l_w, rig_.RightFromLeft() * T_l_w};
    std::array<AffineParams, 2> aff{state.affine_left, state.affine_right};
    std::array<const PyramidLevel*, 2> lvl{&frame_.left->level(level_), nullptr};
    if (use_right_) lvl[kRight] = &frame_.right->level(level_);
    std::vector<Pose> T_c_h;
    std::vector<Mat6> ad_c_w;
    for (int c = 0; c < num_cams_; ++c) {
      ad_c_w.push_back(T_c_w[c].Adjoint());
      for (int k = 0; k < window_.size(); ++k) {
        T_c_h.push_back(T_c_w[c] * window_.keyframes[k].state.pose);
      }
    }
    ParallelFor(static_cast<int>(tasks_.size()), [&](int t) {
      for (int i = tasks_[t].first; i < tasks_[t].second; ++i) {
        const auto& tp = points_[i];
        for (int c = 0; c < num_cams_; ++c) {
          auto& o = obs[static_cast<size_t>(i) * num_cams_ + c];
          const Pose& pose = T_c_h[static_cast<size_t>(c) * window_.size() + tp.kf];
          const double e = std::exp(tp.host_affine.a - aff[c].a);
          std::array<bool, kPatchSize> in_view{};
          std::array<double, kPatchSize> grad2{};
          for (int j = 0; j < kPatchSize; ++j) {
            const auto& hp = tp.px[j];
            grad2[j] = hp.grad2;
            o.r[j] = 0;
            const auto w = warp(hp.px, tp.rho, pose, cam_);
            if (!w) continue;
            const auto s = sample(*lvl[c], w->uv);
            if (!s) continue;
            in_view[j] = true;
            o.it[j] = s->value;
            o.r[j] = (hp.intensity - tp.host_affine.b) - e * (s->value - aff[c].b);
            if (!cfg_.inverse_compositional) {
              o.j_fwd[j] = e * s->grad.transpose() * ProjectionJacobian(cam_, w->point) *
                           PointTwistJacobian(w->point) * ad_c_w[c];
            }
            if (j == 0) o.center_uv = w->uv;
          }
          o.verdict = reject_patch(o.r, grad2, in_view);
        }
      }
    });
  }

  double Sigma(const std::vector<Observation>& obs) const {
    std::vector<double> abs_r;
    for (const auto& o : obs) {
      for (int j = 0; j < kPatchSize; ++j) {
        if (o.verdict.use[j]) abs_r.push_back(std::abs(o.r[j]));
      }
    }
    return MadSigma(abs_r);
  }

  Accumulator Accumulate(const FrameState& state, const std::vector<Observation>& obs,
                         double sigma, bool with_system) const {
    std::array<AffineParams, 2> aff{state.affine_left, state.affine_right};
    return ParallelReduce(
        static_cast<int>(tasks_.size()), Accumulator{},
        [&](Accumulator& acc, int t) {
          Vec10 J;
          for (int i = tasks_[t].first; i < tasks_[t].second; ++i) {
            const auto& tp = points_[i];
            for (int c = 0; c < num_cams_; ++c) {
              const auto& o = obs[static_cast<size_t>(i) * num_cams_ + c];
              if (o.verdict.discard) continue;
              const double e = std::exp(tp.host_affine.a - aff[c].a);
              const int ai = c == kLeft ? frame_index::kAffineLeft : frame_index::kAffineRight;
              for (int j = 0; j < kPatchSize; ++j) {
                if (!o.verdict.use[j]) continue;
                const double r = o.r[j];
                const double w = tp.px[j].wg * robust_weight(r, sigma, cfg_.nu);
                acc.cost += 2 * tp.px[j].wg * robust_loss(r, sigma, cfg_.nu);
                ++acc.n;
                if (!with_system) continue;
                J.setZero();
                J.head<6>() = cfg_.inverse_compositional ? tp.px[j].J.transpose()
                                                         : o.j_fwd[j].transpose();
                J[ai] = e * (o.it[j] - aff[c].b);
                J[ai + 1] = e;
                acc.H.selfadjointView<Eigen::Upper>().rankUpdate(J, w);
                acc.g += w * r * J;
              }
            }
          }
        },
        [](Accumulator& into, const Accumulator& from) { into.Merge(from); }, cfg_.exec);
  }

  static double MeanCost(const Accumulator& acc) { return acc.n > 0 ? acc.cost / acc.n : 0.0; }

  std::optional<Vec10> Solve(Accumulator acc) const {
    Mat10 H = acc.H.selfadjointView<Eigen::Upper>();
    Vec10 g = acc.g;
    std::array<bool, kFrameDim> fixed{};
    if (!cfg_.optimize_pose) std::fill_n(fixed.begin(), 6, true);
    if (!cfg_.optimize_affine) {
      for (int i = frame_index::kAffineLeft; i < kFrameDim; ++i) fixed[i] = true;
    }
    if (!use_right_) fixed[frame_index::kAffineRight] = fixed[frame_index::kAffineRight + 1] = true;
    for (int i = 0; i < kFrameDim; ++i) {
      if (H(i, i) <= 0) fixed[i] = true;
      if (!fixed[i]) continue;
      H.row(i).setZero();
      H.col(i).setZero();
      H(i, i) = 1;
      g[i] = 0;
    }
    const Eigen::LDLT<Mat10> ldlt(H);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    Vec10 delta = -ldlt.solve(g);
    if (!delta.allFinite()) return std::nullopt;
    return delta;
  }

  TrackResult Run(const FrameState& init) {
    TrackResult res;
    res.state = init;
    res.selected_count = SelectedCount();
    const int pyr_levels = frame_.left->num_levels();
    const int levels = cfg_.levels < 0 ? pyr_levels : std::min(cfg_.levels, pyr_levels);
    res.iterations.assign(static_cast<size_t>(pyr_levels), 0);

    std::vector<Observation> obs;
    std::vector<Observation> trial_obs;
    for (int level = levels - 1; level >= 0; --level) {
      PrepareLevel(level);
      if (points_.empty()) continue;
      Evaluate(res.state, obs);
      // Weights use the current sigma; acceptance and the logged cost use the level's first
      // sigma so costs stay comparable within the level.
      const double sigma_ref = Sigma(obs);
      double cost_ref = MeanCost(Accumulate(res.state, obs, sigma_ref, false));
      for (int it = 0; it < cfg_.max_iters; ++it) {
        const double sigma = Sigma(obs);
        const Accumulator acc = Accumulate(res.state, obs, sigma, true);
        if (acc.n < kFrameDim || !(cost_ref > 0)) break;
        const auto delta = Solve(acc);
        if (!delta) break;
        bool accepted = false;
        double cost = cost_ref;
        for (double scale : {1.0, 0.5}) {
          const FrameState trial = box_plus(res.state, scale * *delta);
          Evaluate(trial, trial_obs);
          const Accumulator t = Accumulate(trial, trial_obs, sigma_ref, false);
          cost = MeanCost(t);
          if (t.n > 0 && cost <= cost_ref) {
            res.state = trial;
            std::swap(obs, trial_obs);
            accepted = true;
            break;
          }
        }
        if (!accepted) break;
        ++res.iterations[level];
        res.costs.push_back(cost);
        const double decrease = (cost_ref - cost) / cost_ref;
        cost_ref = cost;
        if (decrease < cfg_.plateau_tol) break;
      }
    }

    // Final bookkeeping at level 0.
    PrepareLevel(0);
    Evaluate(res.state, obs);
    res.sigma = Sigma(obs);
    res.final_cost = MeanCost(Accumulate(res.state, obs, res.sigma, false));
    for (size_t i = 0; i < points_.size(); ++i) {
      for (int c = 0; c < num_cams_; ++c) {
        const auto& o = obs[i * num_cams_ + c];
        if (!o.verdict.discard) (c == kLeft ? res.tracked_count : res.right_tracked_count)++;
        if (c == kLeft && o.verdict.rejected) {
          ++res.rejected_count;
          res.rejected_uv.push_back(o.center_uv);
        }
      }
    }
    res.Q = res.selected_count > 0
                ? static_cast<double>(res.tracked_count) / res.selected_count
                : 0.0;
    return res;
  }

 private:
  const SlidingWindow& window_;
  const StereoFrame& frame_;
  const StereoRig& rig_;
  const AlignConfig& cfg_;
  bool use_right_ = false;
  int num_cams_ = 1;
  int first_kf_ = 0;
  std::vector<Pose> T_h_w_;
  std::vector<Mat6> ad_h_w_;

  int level_ = 0;
  Pinhole cam_;
  std::vector<TrackPoint> points_;
  std::vector<std::pair<int, int>> tasks_;
};

}  // namespace

TrackResult track_frame(const SlidingWindow& window, const StereoFrame& frame,
                        const FrameState& init, const StereoRig& rig, const AlignConfig& cfg) {
  if (window.empty()) throw TrackingLostError("cannot track against an empty window");
  Tracker tracker(window, frame, rig, cfg);
  TrackResult res = tracker.Run(init);
  if (res.tracked_count + res.right_tracked_count == 0) {
    throw TrackingLostError("no patch survived tracking");
  }
  return res;
}

}  // namespace dsol
