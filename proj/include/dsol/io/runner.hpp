#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsol/io/dataset.hpp"
#include "dsol/io/trajectory.hpp"
#include "dsol/window.hpp"

namespace dsol {

struct RunOptions {
  int threads = 1;
  bool deterministic = false;
  /// Decode frame k+1 on a second thread while frame k is processed.
  bool prefetch = true;
  /// Called after every processed frame.
  std::function<void(int, const FrameOutput&)> on_frame;
};

/// Wall times of one stage in milliseconds.
struct StageTiming {
  std::string name;
  int count = 0;
  double mean = 0;
  double p50 = 0;
  double p90 = 0;
  double p99 = 0;
  double max = 0;

  static StageTiming FromSamples(std::string name, std::vector<double> ms);
};

struct RunResult {
  Trajectory trajectory;
  std::vector<FrameOutput> frames;
  int total_frames = 0;
  /// Frames that were not re-initializations, over all input frames.
  double tracked_fraction = 0;
  int keyframes = 0;
  int reinitializations = 0;
  StageTiming track;  // every frame tracked against the window
  StageTiming kf;     // every keyframe insertion, including bootstrap
  /// Set when a frame failed to load or the pipeline threw; the trajectory is partial.
  std::string error;
};

struct FrameSource {
  int size = 0;
  std::function<StereoFrame(int)> load;
};

RunResult run_odometry(const FrameSource& source, const StereoRig& rig, OdometryConfig cfg,
                       const RunOptions& opts = {});
RunResult run_odometry(const Dataset& dataset, OdometryConfig cfg, const RunOptions& opts = {});

/// "stage,count,mean_ms,p50_ms,p90_ms,p99_ms,max_ms" then a track row and a kf row.
std::string FormatTiming(const RunResult& r);

}  // namespace dsol
