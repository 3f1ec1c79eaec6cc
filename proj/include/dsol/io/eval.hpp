#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dsol/io/trajectory.hpp"

namespace dsol {

struct EvalOptions {
  bool align = true;
  /// Estimate a similarity (mono). Otherwise the alignment is rigid, scale 1 (stereo).
  bool with_scale = false;
};

struct EvalReport {
  double ape_trans = 0;  // % of path length, RMSE
  double ape_rot = 0;    // deg, RMSE
  double rpe_trans = 0;  // % of path length, RMSE over consecutive matched pairs
  double rpe_rot = 0;    // deg, RMSE
  double path_length = 0;  // meters, over the matched groundtruth poses
  double tracked_fraction = 0;  // matched estimates / groundtruth records
  int matches = 0;
  /// Scale of the applied alignment (1 unless with_scale) and the scale of a best-fit
  /// similarity, reported in every mode.
  double scale = 1;
  double sim3_scale = 1;
};

/// Pairs (est index, gt index) of nearest timestamps within half the median groundtruth
/// interval, each gt record used at most once, in time order.
std::vector<std::pair<int, int>> MatchTimestamps(const Trajectory& est, const Trajectory& gt);

/// x -> s R x + t acting on camera positions; rotations are premultiplied by R.
struct Similarity {
  double scale = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Pose Apply(const Pose& T_w_c) const;
};

/// Least-squares fit of dst ~ s R src + t (Umeyama). Columns are points.
Similarity AlignPoints(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& dst, bool with_scale);

/// Throws Error when fewer than two poses match.
EvalReport evaluate(const Trajectory& est, const Trajectory& gt, const EvalOptions& opts = {});

std::string ToJson(const EvalReport& r);
std::string ToText(const EvalReport& r);

}  // namespace dsol
