#pragma once

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "dsol/adjust.hpp"
#include "dsol/align.hpp"
#include "dsol/geometry.hpp"
#include "dsol/image.hpp"
#include "dsol/map.hpp"
#include "dsol/select.hpp"
#include "dsol/stereo.hpp"

namespace dsol {

struct FrontendConfig {
  int N = 4;
  double Q_min = 0.6;
  int min_points = 50;  // initialized points below which a keyframe is degenerate

  void Validate() const;
};

/// Every tunable of the odometry pipeline.
struct OdometryConfig {
  int pyramid_levels = 5;
  FrontendConfig window;
  SelectConfig select;
  StereoConfig stereo;
  AlignConfig align;
  PbaConfig pba;

  void Validate() const;
  /// Applies one execution policy to every parallel stage.
  void SetDeterministic(bool deterministic);
};

/// True iff Q < Q_min.
bool should_create_keyframe(const TrackResult& tr, const FrontendConfig& cfg);

/// Points of kf whose level-0 warp into a camera at T_w_frame has positive depth and lands
/// inside the image.
int CountVisible(const Keyframe& kf, const Pose& T_w_frame, const Pinhole& cam);

/// Index of the keyframe with the fewest points visible from the tracked frame; ties go to
/// the oldest.
int select_removal(const SlidingWindow& window, const TrackResult& tr, const Pinhole& cam);

struct KeyframeReport {
  int id = -1;
  int selected = 0;     // pixels chosen by the selector
  int initialized = 0;  // points kept with a depth
  std::array<int, 4> by_source{};  // indexed by InitSource
  bool degenerate = false;
  bool inserted = false;
  std::optional<PbaResult> pba;
};

/// occupancy mask -> select -> extract -> init depths (depth image, stereo, map) -> insert
/// -> PBA. Throws DegenerateKeyframeError when fewer than min_points are initialized,
/// unless `initializing`, in which case the keyframe is inserted and flagged.
/// The window must have room.
KeyframeReport create_keyframe(SlidingWindow& window, const StereoFrame& frame,
                               const FrameState& state, int id, const StereoRig& rig,
                               const OdometryConfig& cfg, SelectorState& selector,
                               bool initializing);

enum class FrameStatus {
  kInitialized,    // bootstrap keyframe created
  kTracked,
  kKeyframe,       // tracked, then a keyframe was created
  kReinitialized,  // tracking lost, window rebuilt from this frame
};

const char* ToString(FrameStatus s);

struct FrameOutput {
  double timestamp = 0;
  FrameState state;          // final estimate, refined by PBA on keyframes
  FrameState tracked_state;  // the tracker's estimate, before any PBA
  FrameStatus status = FrameStatus::kTracked;
  double Q = 0;
  int tracked = 0;
  int window_size = 0;
  bool degenerate_keyframe = false;
  int removed_keyframe = -1;  // id
  std::vector<Point2> rejected_uv;  // left patches discarded while tracking this frame
  std::optional<double> track_ms;  // absent on bootstrap frames
  std::optional<double> kf_ms;     // only when a keyframe was created
};

/// Frame-by-frame state machine: bootstrap, track, keyframe management, reinitialization.
class Odometry {
 public:
  Odometry(const StereoRig& rig, const OdometryConfig& cfg);

  FrameOutput ProcessFrame(const StereoFrame& frame);

  const SlidingWindow& window() const { return window_; }
  int keyframes_created() const { return next_id_; }
  int reinitializations() const { return reinits_; }
  bool initialized() const { return !window_.empty(); }

 private:
  FrameOutput Bootstrap(const StereoFrame& frame, const FrameState& state, FrameStatus status);

  StereoRig rig_;
  OdometryConfig cfg_;
  SelectorState selector_;
  SlidingWindow window_;
  std::deque<FrameState> history_;  // most recent states, oldest first
  int next_id_ = 0;
  int reinits_ = 0;
};

}  // namespace dsol
