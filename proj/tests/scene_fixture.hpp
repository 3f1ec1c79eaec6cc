#pragma once

#include <random>

#include "dsol/io/synth.hpp"
#include "dsol/map.hpp"
#include "dsol/select.hpp"
#include "dsol/stereo.hpp"

namespace dsol::testing {

/// Renders synthetic stereo frames and builds keyframes with ground-truth depth.
struct SceneFixture {
  StereoRig rig = SyntheticRig();
  Scene scene;
  int levels = 5;
  double noise = 0;
  unsigned noise_seed = 1;

  StereoFrame Frame(const Pose& T_w_c, double timestamp = 0, bool with_right = true) const {
    auto s = RenderStereo(scene, rig, T_w_c, timestamp);
    if (noise > 0) {
      std::mt19937 rng(noise_seed + static_cast<unsigned>(timestamp * 1000));
      AddNoise(s.left, noise, rng);
      AddNoise(s.right, noise, rng);
    }
    return MakeStereoFrame(timestamp, s.left, with_right ? &s.right : nullptr, s.depth, levels);
  }

  /// Selects and extracts points on the frame and initializes them from its depth image.
  Keyframe MakeKeyframe(int id, const StereoFrame& frame, const FrameState& state,
                        const SelectConfig& select = {}) const {
    Keyframe kf;
    kf.id = id;
    kf.frame = frame;
    kf.state = state;
    const auto sel_state = SelectorState::FromConfig(select, rig.cam.width, rig.cam.height);
    const auto sel = select_points(*frame.left, OccupancyMask(rig.cam.width, rig.cam.height), sel_state);
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
    DepthSources src;
    if (frame.depth) src.depth = &*frame.depth;
    init_depths(kf.points, src, rig, StereoConfig{});
    std::erase_if(kf.points, [](const DepthPoint& p) { return !(p.rho > 0); });
    return kf;
  }

  Keyframe MakeKeyframe(int id, const Pose& T_w_c) const {
    FrameState s;
    s.pose = T_w_c;
    return MakeKeyframe(id, Frame(T_w_c, id), s);
  }
};

inline double TranslationError(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

inline double RotationErrorDeg(const Pose& a, const Pose& b) {
  return RotationAngle(a.rotation().transpose() * b.rotation()) * 180.0 / 3.14159265358979323846;
}

}  // namespace dsol::testing
