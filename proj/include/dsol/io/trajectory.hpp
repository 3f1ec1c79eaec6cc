#pragma once

#include <string>
#include <vector>

#include "dsol/geometry.hpp"

namespace dsol {

/// One line "timestamp tx ty tz qx qy qz qw" of T_w_c, values printed with %.9f.
/// The quaternion is kept as stored (unit, w >= 0) so that a read file is written back
/// byte-identically.
struct TrajectoryRecord {
  double timestamp = 0;
  Vec3 translation = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  TrajectoryRecord() = default;
  TrajectoryRecord(double t, const Pose& T_w_c);

  Pose pose() const;
};

class Trajectory {
 public:
  /// Throws ParseError unless timestamp > back().timestamp.
  void Append(const TrajectoryRecord& rec);
  void Append(double timestamp, const Pose& T_w_c) { Append(TrajectoryRecord(timestamp, T_w_c)); }

  int size() const { return static_cast<int>(records_.size()); }
  bool empty() const { return records_.empty(); }
  const TrajectoryRecord& operator[](int i) const { return records_[static_cast<size_t>(i)]; }
  const std::vector<TrajectoryRecord>& records() const { return records_; }

  /// Sum of consecutive translation distances.
  double PathLength() const;

 private:
  std::vector<TrajectoryRecord> records_;
};

/// '#' lines and blank lines are skipped. Throws ParseError naming the line.
Trajectory ParseTrajectory(const std::string& text);
Trajectory ReadTrajectory(const std::string& path);
/// One '#' header line, then one record per line.
std::string FormatTrajectory(const Trajectory& traj);
void WriteTrajectory(const std::string& path, const Trajectory& traj);

}  // namespace dsol
