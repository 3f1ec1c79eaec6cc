#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsol/adjust.hpp"

namespace dsol::testing {

// Random block system from sparse residual rows; each row touches one point.
inline LinearSystem RandomBlockSystem(std::mt19937& rng, int frames, int points) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, frames - 1);
  LinearSystem s = LinearSystem::Zero(frames, points);
  const int f = frames * kFrameDim;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(f + points, f + points) * 1e-3;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(f + points);
  auto add_row = [&](const Eigen::VectorXd& j, double r) {
    H += j * j.transpose();
    b -= j * r;
  };
  for (int m = 0; m < points; ++m) {
    for (int k = 0; k < 6; ++k) {
      Eigen::VectorXd j = Eigen::VectorXd::Zero(f + points);
      const int a = pick(rng);
      const int c = pick(rng);
      for (int i = 0; i < kFrameDim; ++i) {
        j(a * kFrameDim + i) += n(rng);
        j(c * kFrameDim + i) += n(rng);
      }
      j(f + m) = n(rng);
      add_row(j, n(rng));
    }
  }
  for (int k = 0; k < 3 * f; ++k) {
    Eigen::VectorXd j = Eigen::VectorXd::Zero(f + points);
    for (int i = 0; i < f; ++i) j(i) = n(rng);
    add_row(j, n(rng));
  }
  s.Hpp = H.topLeftCorner(f, f);
  s.Hpm = H.topRightCorner(f, points);
  s.Hmm = H.bottomRightCorner(points, points).diagonal();
  s.bp = b.head(f);
  s.bm = b.tail(points);
  return s;
}

// Linear-Gaussian toy: quadratic factors over 10-dim frames and scalar points.
struct ToyGraph {
  int frames;
  int points;
  std::vector<int> host;  // per point
  std::vector<std::pair<std::vector<int>, Eigen::VectorXd>> rows;  // touched frames, jacobian
  std::vector<int> row_point;                                      // -1 for frame-only rows
  std::vector<double> row_r;

  int dim() const { return frames * kFrameDim + points; }

  LinearSystem System(const std::vector<int>& frame_map, const std::vector<int>& point_map,
                      int num_frames, int num_points, const std::function<bool(size_t)>& keep) const {
    LinearSystem s = LinearSystem::Zero(num_frames, num_points);
    const int f = num_frames * kFrameDim;
    for (size_t k = 0; k < rows.size(); ++k) {
      if (!keep(k)) continue;
      Eigen::VectorXd J = Eigen::VectorXd::Zero(f + num_points);
      const auto& [touched, jac] = rows[k];
      for (size_t t = 0; t < touched.size(); ++t) {
        J.segment<kFrameDim>(frame_map[touched[t]] * kFrameDim) += jac.segment<kFrameDim>(static_cast<Eigen::Index>(t) * kFrameDim);
      }
      if (row_point[k] >= 0) J(f + point_map[row_point[k]]) = jac(jac.size() - 1);
      const Eigen::MatrixXd JJ = J * J.transpose();
      s.Hpp += JJ.topLeftCorner(f, f);
      s.Hpm += JJ.topRightCorner(f, num_points);
      s.Hmm += JJ.bottomRightCorner(num_points, num_points).diagonal();
      s.bp -= J.head(f) * row_r[k];
      s.bm -= J.tail(num_points) * row_r[k];
    }
    return s;
  }
};

inline ToyGraph MakeToy(std::mt19937& rng, int frames, int points, int drop) {
  std::normal_distribution<double> n(0.0, 1.0);
  ToyGraph g{frames, points, {}, {}, {}, {}};
  for (int m = 0; m < points; ++m) g.host.push_back(m % frames);
  for (int m = 0; m < points; ++m) {
    // Only points hosted by the dropped frame may connect to it.
    std::vector<int> others;
    for (int a = 0; a < frames; ++a) {
      if (a != g.host[m] && (a != drop || g.host[m] == drop)) others.push_back(a);
    }
    for (int k = 0; k < 4; ++k) {
      std::vector<int> touched{g.host[m]};
      if (!others.empty()) touched.push_back(others[rng() % others.size()]);
      Eigen::VectorXd jac(static_cast<Eigen::Index>(touched.size()) * kFrameDim + 1);
      for (int i = 0; i < jac.size(); ++i) jac(i) = n(rng);
      g.rows.push_back({touched, jac});
      g.row_point.push_back(m);
      g.row_r.push_back(n(rng));
    }
  }
  for (int a = 0; a < frames; ++a) {
    for (int k = 0; k < 12; ++k) {
      Eigen::VectorXd jac(kFrameDim + 1);
      for (int i = 0; i < jac.size(); ++i) jac(i) = n(rng);
      g.rows.push_back({{a}, jac});
      g.row_point.push_back(-1);
      g.row_r.push_back(n(rng));
    }
  }
  return g;
}

struct ToyError {
  double frames = 0;  // max over kept frames of |x - x_joint| / max(1, |x_joint|)
  double points = 0;  // max absolute point error
};

/// Removes one frame of a random toy graph through the prior and compares the reduced
/// solve with the joint dense solve restricted to the remaining variables.
inline ToyError MarginalizationToyError(int seed, int frames, int points) {
  std::mt19937 rng(100 + seed);
  const int drop = seed % frames;
  const auto g = MakeToy(rng, frames, points, drop);

  std::vector<int> ident_f(frames);
  std::iota(ident_f.begin(), ident_f.end(), 0);
  std::vector<int> ident_p(points);
  std::iota(ident_p.begin(), ident_p.end(), 0);
  const auto joint = g.System(ident_f, ident_p, frames, points, [](size_t) { return true; });
  const Eigen::VectorXd x = joint.DenseH().ldlt().solve(joint.DenseB());

  auto touches_drop = [&](size_t k) {
    const auto& t = g.rows[k].first;
    return std::find(t.begin(), t.end(), drop) != t.end();
  };
  const auto hk = g.System(ident_f, ident_p, frames, points, touches_drop);
  const auto prior = marginalize_linear(hk, drop);

  std::vector<int> fmap(frames, -1);
  int next = 0;
  for (int a = 0; a < frames; ++a) {
    if (a != drop) fmap[a] = next++;
  }
  std::vector<int> pmap(points, -1);
  std::vector<int> kept_points;
  for (int m = 0; m < points; ++m) {
    if (g.host[m] != drop) {
      pmap[m] = static_cast<int>(kept_points.size());
      kept_points.push_back(m);
    }
  }
  auto rest = g.System(fmap, pmap, frames - 1, static_cast<int>(kept_points.size()),
                       [&](size_t k) { return !touches_drop(k); });
  rest.Hpp += condition_prior(prior.H);
  rest.bp += prior.b;
  const auto sol = schur_solve(rest);

  ToyError err;
  for (int a = 0; a < frames; ++a) {
    if (a == drop) continue;
    const Eigen::VectorXd want = x.segment<kFrameDim>(a * kFrameDim);
    const Eigen::VectorXd got = sol.frames.segment<kFrameDim>(fmap[a] * kFrameDim);
    err.frames = std::max(err.frames, (want - got).norm() / std::max(1.0, want.norm()));
  }
  for (size_t i = 0; i < kept_points.size(); ++i) {
    err.points = std::max(err.points, std::abs(sol.points(static_cast<Eigen::Index>(i)) -
                                               x(frames * kFrameDim + kept_points[i])));
  }
  return err;
}

/// Relative error of the Schur solve against a dense LDLT solve of the same system.
inline double SchurVsDenseError(const LinearSystem& sys) {
  const auto sol = schur_solve(sys);
  const Eigen::VectorXd dense = sys.DenseH().ldlt().solve(sys.DenseB());
  Eigen::VectorXd got(dense.size());
  got << sol.frames, sol.points;
  return (got - dense).norm() / dense.norm();
}

}  // namespace dsol::testing
