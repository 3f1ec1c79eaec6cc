#pragma once

#include <span>
#include <vector>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"
#include "dsol/map.hpp"
#include "dsol/parallel.hpp"

namespace dsol {

enum class TrackScope {
  kWindow,          // points of every keyframe in the window
  kNewestKeyframe,  // points of the newest keyframe only
};

struct AlignConfig {
  double c = 4.0;   // gradient weight constant, intensity / px
  double nu = 5.0;  // t-distribution degrees of freedom
  int max_iters = 4;
  double plateau_tol = 0.005;  // relative cost decrease
  int levels = -1;             // <0: every pyramid level
  bool stereo = true;          // also align against the right image when available
  bool optimize_pose = true;
  bool optimize_affine = true;
  bool inverse_compositional = true;  // false: forward-compositional reference path
  TrackScope scope = TrackScope::kWindow;
  ExecPolicy exec;

  void Validate() const;
};

struct TrackResult {
  FrameState state;
  int tracked_count = 0;        // left-image patches surviving at level 0
  int right_tracked_count = 0;  // same for the right image
  int selected_count = 0;       // initialized points of the tracked keyframes
  double Q = 0;                 // tracked_count / selected_count
  double final_cost = 0;        // mean 2 w_g robust_loss(r) at level 0
  double sigma = 0;             // residual scale used for final_cost
  std::vector<int> iterations;  // accepted steps, indexed by pyramid level
  std::vector<double> costs;    // cost after every accepted step, coarse to fine
  int rejected_count = 0;       // left patches discarded by the outlier test at level 0
  std::vector<Point2> rejected_uv;  // their centers in the left image
};

/// Constant-velocity prediction from the most recent states (oldest first).
/// Affine parameters are carried over from the last state.
FrameState predict_state(std::span<const FrameState> history);

/// Aligns a new frame against the window (keyframe states fixed), coarse to fine.
/// Throws TrackingLostError when no patch survives in either image.
TrackResult track_frame(const SlidingWindow& window, const StereoFrame& frame,
                        const FrameState& init, const StereoRig& rig, const AlignConfig& cfg);

}  // namespace dsol
