#include "dsol/io/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Geometry>
#include <json.hpp>

#include "dsol/error.hpp"

namespace dsol {

namespace {

constexpr double kRadToDeg = 180.0 / M_PI;

double Rmse(const std::vector<double>& e) {
  if (e.empty()) return 0;
  double s = 0;
  for (double v : e) s += v * v;
  return std::sqrt(s / static_cast<double>(e.size()));
}

}  // namespace

Pose Similarity::Apply(const Pose& T_w_c) const {
  return Pose(rotation * T_w_c.rotation(), *this * T_w_c.translation());
}

std::vector<std::pair<int, int>> MatchTimestamps(const Trajectory& est, const Trajectory& gt) {
  std::vector<std::pair<int, int>> out;
  if (gt.empty()) return out;
  double tol = 0;
  if (gt.size() >= 2) {
    std::vector<double> dt;
    for (int i = 1; i < gt.size(); ++i) dt.push_back(gt[i].timestamp - gt[i - 1].timestamp);
    std::nth_element(dt.begin(), dt.begin() + dt.size() / 2, dt.end());
    tol = 0.5 * dt[dt.size() / 2];
  }
  const auto& g = gt.records();
  std::vector<bool> used(g.size(), false);
  for (int i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    const auto it = std::lower_bound(g.begin(), g.end(), t, [](const TrajectoryRecord& r, double v) {
      return r.timestamp < v;
    });
    int best = -1;
    double best_dt = 0;
    for (auto c : {it - 1, it}) {
      if (c < g.begin() || c >= g.end()) continue;
      const double d = std::abs(c->timestamp - t);
      if (best < 0 || d < best_dt) {
        best = static_cast<int>(c - g.begin());
        best_dt = d;
      }
    }
    if (best < 0 || best_dt > tol || used[static_cast<size_t>(best)]) continue;
    used[static_cast<size_t>(best)] = true;
    out.emplace_back(i, best);
  }
  return out;
}

Similarity AlignPoints(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& dst, bool with_scale) {
  if (src.cols() != dst.cols() || src.cols() < 1) throw Error("AlignPoints needs matching point sets");
  const Eigen::Vector3d mean = src.rowwise().mean();
  const double spread = (src.colwise() - mean).squaredNorm();
  // A single point or a static camera has no scale information.
  const bool scale = with_scale && spread > 1e-18;
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, scale);
  Similarity s;
  const Mat3 sR = T.topLeftCorner<3, 3>();
  s.scale = scale ? std::cbrt(sR.determinant()) : 1.0;
  s.rotation = sR / s.scale;
  s.translation = T.topRightCorner<3, 1>();
  return s;
}

EvalReport evaluate(const Trajectory& est, const Trajectory& gt, const EvalOptions& opts) {
  const auto pairs = MatchTimestamps(est, gt);
  if (pairs.size() < 2) {
    throw Error("evaluation needs at least 2 matched poses, got " + std::to_string(pairs.size()));
  }
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    src.col(k) = est[pairs[static_cast<size_t>(k)].first].translation;
    dst.col(k) = gt[pairs[static_cast<size_t>(k)].second].translation;
  }

  EvalReport r;
  r.matches = static_cast<int>(n);
  r.tracked_fraction = static_cast<double>(n) / gt.size();
  r.sim3_scale = AlignPoints(src, dst, true).scale;
  Similarity S;
  if (opts.align) S = AlignPoints(src, dst, opts.with_scale);
  r.scale = S.scale;

  std::vector<Pose> E, G;
  for (const auto& [i, j] : pairs) {
    E.push_back(S.Apply(est[i].pose()));
    G.push_back(gt[j].pose());
  }
  for (size_t k = 1; k < G.size(); ++k) {
    r.path_length += (G[k].translation() - G[k - 1].translation()).norm();
  }

  std::vector<double> at, ar, rt, rr;
  for (size_t k = 0; k < G.size(); ++k) {
    at.push_back((E[k].translation() - G[k].translation()).norm());
    ar.push_back(RotationAngle(G[k].rotation().transpose() * E[k].rotation()) * kRadToDeg);
    if (k == 0) continue;
    const Pose dg = G[k - 1].inverse() * G[k];
    const Pose de = E[k - 1].inverse() * E[k];
    const Pose err = dg.inverse() * de;
    rt.push_back(err.translation().norm());
    rr.push_back(RotationAngle(err.rotation()) * kRadToDeg);
  }
  // A motionless groundtruth leaves translation errors in meters.
  const double norm = r.path_length > 0 ? 100.0 / r.path_length : 1.0;
  r.ape_trans = Rmse(at) * norm;
  r.ape_rot = Rmse(ar);
  r.rpe_trans = Rmse(rt) * norm;
  r.rpe_rot = Rmse(rr);
  return r;
}

std::string ToJson(const EvalReport& r) {
  const nlohmann::ordered_json j = {
      {"ape_trans_percent", r.ape_trans}, {"ape_rot_deg", r.ape_rot},
      {"rpe_trans_percent", r.rpe_trans}, {"rpe_rot_deg", r.rpe_rot},
      {"path_length_m", r.path_length},   {"tracked_fraction", r.tracked_fraction},
      {"matches", r.matches},             {"scale", r.scale},
      {"sim3_scale", r.sim3_scale},
  };
  return j.dump(2);
}

std::string ToText(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "APE trans  %.4f %%\nAPE rot    %.4f deg\nRPE trans  %.4f %%\nRPE rot    %.4f deg\n"
                "path       %.4f m\ntracked    %.4f\nmatches    %d\nscale      %.6f\nsim3 scale %.6f\n",
                r.ape_trans, r.ape_rot, r.rpe_trans, r.rpe_rot, r.path_length, r.tracked_fraction,
                r.matches, r.scale, r.sim3_scale);
  return buf;
}

}  // namespace dsol
