#include "dsol/window.hpp"

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "dsol/error.hpp"

namespace dsol {

void FrontendConfig::Validate() const {
  if (N < 2) throw ConfigError("window.N must be >= 2, got " + std::to_string(N));
  if (!(Q_min > 0 && Q_min < 1)) {
    throw ConfigError("window.Q_min must be in (0, 1), got " + std::to_string(Q_min));
  }
  if (min_points < 0) throw ConfigError("window.min_points must be >= 0");
}

void OdometryConfig::Validate() const {
  if (pyramid_levels < 1) throw ConfigError("pyramid.levels must be >= 1");
  window.Validate();
  align.Validate();
  pba.Validate();
  if (select.cell_size < 1) throw ConfigError("select.cell_size must be >= 1");
  if (!(select.g_min_init >= 0) || !(select.delta_g >= 0)) {
    throw ConfigError("select.g_min_init and select.delta_g must be >= 0");
  }
  if (select.dilation_radius < 0) throw ConfigError("select.dilation_radius must be >= 0");
  if (stereo.search_radius < 1) throw ConfigError("stereo.search_radius must be >= 1");
  if (!(stereo.zncc_min >= -1 && stereo.zncc_min <= 1)) {
    throw ConfigError("stereo.zncc_min must be in [-1, 1]");
  }
}

void OdometryConfig::SetDeterministic(bool deterministic) {
  align.exec.deterministic = deterministic;
  pba.exec.deterministic = deterministic;
}

bool should_create_keyframe(const TrackResult& tr, const FrontendConfig& cfg) {
  return tr.Q < cfg.Q_min;
}

int CountVisible(const Keyframe& kf, const Pose& T_w_frame, const Pinhole& cam) {
  const Pose T_f_h = T_w_frame.inverse() * kf.state.pose;
  int n = 0;
  for (const auto& pt : kf.points) {
    const auto w = warp(pt.uv, pt.rho, T_f_h, cam);
    if (w && cam.InBounds(w->uv)) ++n;
  }
  return n;
}

int select_removal(const SlidingWindow& window, const TrackResult& tr, const Pinhole& cam) {
  if (window.empty()) throw ConsistencyError("select_removal on an empty window");
  int best = 0;
  int best_count = CountVisible(window.keyframes[0], tr.state.pose, cam);
  for (int k = 1; k < window.size(); ++k) {
    const int n = CountVisible(window.keyframes[k], tr.state.pose, cam);
    // Keyframes are ordered by id, so strict < keeps the oldest on ties.
    if (n < best_count) {
      best = k;
      best_count = n;
    }
  }
  return best;
}

KeyframeReport create_keyframe(SlidingWindow& window, const StereoFrame& frame,
                               const FrameState& state, int id, const StereoRig& rig,
                               const OdometryConfig& cfg, SelectorState& selector,
                               bool initializing) {
  if (window.full()) throw ConsistencyError("create_keyframe on a full window");
  if (!frame.left) throw ConsistencyError("create_keyframe without a left image");
  const Pinhole& cam = rig.cam;
  KeyframeReport rep;
  rep.id = id;

  const auto projections = ProjectMap(window, state.pose, cam);
  const auto mask =
      make_occupancy_mask(projections, cam.width, cam.height, cfg.select.dilation_radius);
  const auto sel = select_points(*frame.left, mask, selector);
  selector = sel.state;
  rep.selected = static_cast<int>(sel.pixels.size());

  Keyframe kf;
  kf.id = id;
  kf.frame = frame;
  kf.state = state;
  kf.points.reserve(sel.pixels.size());
  for (const auto& px : sel.pixels) {
    auto patch = extract_patch(*frame.left, px.uv);
    if (!patch) continue;
    DepthPoint p;
    p.uv = px.uv;
    p.patch = std::move(*patch);
    p.host_id = id;
    p.cell_row = px.cell_row;
    p.cell_col = px.cell_col;
    kf.points.push_back(std::move(p));
  }

  MapHits hits(CellGrid(cam.width, cam.height, selector.cell_size));
  for (const auto& p : projections) hits.Add(p.uv, p.rho);
  DepthSources src;
  if (frame.depth) src.depth = &*frame.depth;
  if (frame.has_right()) {
    src.left = frame.left.get();
    src.right = frame.right.get();
  }
  if (!projections.empty()) src.map = &hits;
  init_depths(kf.points, src, rig, cfg.stereo);
  std::erase_if(kf.points, [&](const DepthPoint& p) {
    return !(p.rho > cfg.pba.rho_min && p.rho < cfg.pba.rho_max);
  });
  for (const auto& p : kf.points) ++rep.by_source[static_cast<size_t>(p.source)];
  rep.initialized = static_cast<int>(kf.points.size());

  if (rep.initialized < cfg.window.min_points) {
    rep.degenerate = true;
    if (!initializing) {
      throw DegenerateKeyframeError("keyframe " + std::to_string(id) + " has only " +
                                        std::to_string(rep.initialized) + " initialized points",
                                    rep.initialized);
    }
  }

  window.keyframes.push_back(std::move(kf));
  rep.inserted = true;
  if (window.size() >= 2) rep.pba = run_pba(window, rig, cfg.pba);
  return rep;
}

const char* ToString(FrameStatus s) {
  switch (s) {
    case FrameStatus::kInitialized: return "initialized";
    case FrameStatus::kTracked: return "tracked";
    case FrameStatus::kKeyframe: return "keyframe";
    case FrameStatus::kReinitialized: return "reinitialized";
  }
  return "?";
}

namespace {

using Clock = std::chrono::steady_clock;

double MsSince(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Odometry::Odometry(const StereoRig& rig, const OdometryConfig& cfg) : rig_(rig), cfg_(cfg) {
  rig_.Validate();
  cfg_.Validate();
  selector_ = SelectorState::FromConfig(cfg_.select, rig_.cam.width, rig_.cam.height);
  window_.capacity = cfg_.window.N;
}

FrameOutput Odometry::Bootstrap(const StereoFrame& frame, const FrameState& state,
                                FrameStatus status) {
  if (!frame.has_right() && !frame.depth) {
    throw ConfigError("initialization needs a right image or a depth image");
  }
  const auto t0 = Clock::now();
  window_.keyframes.clear();
  window_.prior.Clear();
  selector_ = SelectorState::FromConfig(cfg_.select, rig_.cam.width, rig_.cam.height);
  const auto rep = create_keyframe(window_, frame, state, next_id_++, rig_, cfg_, selector_, true);

  FrameOutput out;
  out.timestamp = frame.timestamp;
  out.state = window_.keyframes.back().state;
  out.tracked_state = state;
  out.status = status;
  out.Q = 1.0;
  out.tracked = rep.initialized;
  out.window_size = window_.size();
  out.degenerate_keyframe = rep.degenerate;
  out.kf_ms = MsSince(t0);
  history_.assign(1, out.state);
  return out;
}

FrameOutput Odometry::ProcessFrame(const StereoFrame& frame) {
  if (window_.empty()) {
    const FrameState start = history_.empty() ? FrameState{} : history_.back();
    return Bootstrap(frame, start,
                     history_.empty() ? FrameStatus::kInitialized : FrameStatus::kReinitialized);
  }

  const auto t0 = Clock::now();
  const std::vector<FrameState> hist(history_.begin(), history_.end());
  TrackResult tr;
  try {
    tr = track_frame(window_, frame, predict_state(hist), rig_, cfg_.align);
  } catch (const TrackingLostError&) {
    // Restart from the last tracked pose; the prior is discarded with the window.
    ++reinits_;
    const double track_ms = MsSince(t0);
    auto out = Bootstrap(frame, history_.back(), FrameStatus::kReinitialized);
    out.track_ms = track_ms;
    return out;
  }

  FrameOutput out;
  out.timestamp = frame.timestamp;
  out.state = tr.state;
  out.tracked_state = tr.state;
  out.status = FrameStatus::kTracked;
  out.Q = tr.Q;
  out.tracked = tr.tracked_count;
  out.rejected_uv = std::move(tr.rejected_uv);
  out.track_ms = MsSince(t0);

  if (should_create_keyframe(tr, cfg_.window)) {
    const auto t1 = Clock::now();
    if (window_.full()) {
      const int k = select_removal(window_, tr, rig_.cam);
      out.removed_keyframe = window_.keyframes[k].id;
      marginalize_keyframe(window_, k, rig_, cfg_.pba);
    }
    try {
      create_keyframe(window_, frame, tr.state, next_id_, rig_, cfg_, selector_, false);
      ++next_id_;
      out.state = window_.keyframes.back().state;
      out.status = FrameStatus::kKeyframe;
    } catch (const DegenerateKeyframeError&) {
      // Too little overlap with the map and too little texture for a new keyframe: the
      // frame cannot be tracked any further, so restart from the last tracked pose.
      ++reinits_;
      const double track_ms = *out.track_ms;
      const FrameState last = history_.back();
      out = Bootstrap(frame, last, FrameStatus::kReinitialized);
      out.degenerate_keyframe = true;
      out.track_ms = track_ms;
      return out;
    }
    out.kf_ms = MsSince(t1);
  }

  out.window_size = window_.size();
  history_.push_back(out.state);
  while (history_.size() > 2) history_.pop_front();
  return out;
}

}  // namespace dsol
