#include "dsol/io/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dsol/error.hpp"

namespace dsol {

namespace {

constexpr const char* kHeader = "# timestamp tx ty tz qx qy qz qw\n";

Eigen::Quaterniond Canonical(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

TrajectoryRecord::TrajectoryRecord(double t, const Pose& T_w_c)
    : timestamp(t), translation(T_w_c.translation()), rotation(Canonical(T_w_c.quaternion())) {}

Pose TrajectoryRecord::pose() const { return Pose(rotation.normalized(), translation); }

void Trajectory::Append(const TrajectoryRecord& rec) {
  if (!records_.empty() && !(rec.timestamp > records_.back().timestamp)) {
    throw ParseError("trajectory timestamps must increase strictly");
  }
  records_.push_back(rec);
}

double Trajectory::PathLength() const {
  double len = 0;
  for (size_t i = 1; i < records_.size(); ++i) {
    len += (records_[i].translation - records_[i - 1].translation).norm();
  }
  return len;
}

Trajectory ParseTrajectory(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto first = raw.find_first_not_of(" \t\r");
    if (first == std::string::npos || raw[first] == '#') continue;
    std::istringstream line(raw);
    TrajectoryRecord rec;
    double qx = 0, qy = 0, qz = 0, qw = 0;
    std::string rest;
    const std::string where = "trajectory line " + std::to_string(number) + ": ";
    if (!(line >> rec.timestamp >> rec.translation.x() >> rec.translation.y() >>
          rec.translation.z() >> qx >> qy >> qz >> qw) ||
        (line >> rest)) {
      throw ParseError(where + "expected 'timestamp tx ty tz qx qy qz qw'");
    }
    rec.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    const double n = rec.rotation.norm();
    if (!(std::abs(n - 1) < 1e-3)) throw ParseError(where + "quaternion is not unit length");
    if (!traj.empty() && !(rec.timestamp > traj.records().back().timestamp)) {
      throw ParseError(where + "timestamp does not increase");
    }
    traj.Append(rec);
  }
  return traj;
}

Trajectory ReadTrajectory(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ParseTrajectory(ss.str());
}

std::string FormatTrajectory(const Trajectory& traj) {
  std::string out = kHeader;
  char buf[256];
  for (const auto& r : traj.records()) {
    const auto& t = r.translation;
    const auto& q = r.rotation;
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", r.timestamp,
                  t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out += buf;
  }
  return out;
}

void WriteTrajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write " + path);
  f << FormatTrajectory(traj);
  if (!f) throw ParseError("cannot write " + path);
}

}  // namespace dsol
