#include "dsol/stereo.hpp"

#include <algorithm>
#include <cmath>

#include "dsol/parallel.hpp"

namespace dsol {

ZnccPatch ZnccPatch::FromValues(std::span<const double, kSize> v) {
  ZnccPatch p;
  double mean = 0;
  for (int i = 0; i < kSize; ++i) {
    p.values[i] = v[i];
    mean += v[i];
  }
  mean /= kSize;
  double ss = 0;
  for (int i = 0; i < kSize; ++i) {
    p.centered[i] = v[i] - mean;
    ss += p.centered[i] * p.centered[i];
  }
  p.norm = std::sqrt(ss);
  return p;
}

namespace {

double ClampedBilinear(const Image& img, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(img.width() - 1));
  v = std::clamp(v, 0.0, static_cast<double>(img.height() - 1));
  return *interpolate(img, Point2(u, v));
}

}  // namespace

ZnccPatch ZnccPatch::Extract(const Image& img, const Point2& center) {
  std::array<double, kSize> v{};
  int i = 0;
  for (int dy = -kRows / 2; dy <= kRows / 2; ++dy) {
    for (int dx = -kCols / 2; dx <= kCols / 2; ++dx) {
      v[i++] = ClampedBilinear(img, center.x() + dx, center.y() + dy);
    }
  }
  return FromValues(v);
}

double zncc(const ZnccPatch& a, const ZnccPatch& b) {
  // Relative floor so that float-rounding noise on a flat patch is not treated as texture.
  constexpr double kEps = 1e-9;
  if (a.norm <= kEps || b.norm <= kEps) return 0.0;
  double dot = 0;
  for (int i = 0; i < ZnccPatch::kSize; ++i) dot += a.centered[i] * b.centered[i];
  return std::clamp(dot / (a.norm * b.norm), -1.0, 1.0);
}

namespace {

struct LevelMatcher {
  const Image& left;
  const Image& right;
  ZnccPatch ref;
  Point2 uv;

  LevelMatcher(const Image& l, const Image& r, const Point2& p)
      : left(l), right(r), ref(ZnccPatch::Extract(l, p)), uv(p) {}

  double Score(double d) const {
    return zncc(ref, ZnccPatch::Extract(right, Point2(uv.x() - d, uv.y())));
  }

  // Best integer disparity in [lo, hi]; ties keep the smaller disparity.
  std::pair<int, double> Best(int lo, int hi) const {
    int best = lo;
    double best_score = -2;
    for (int d = lo; d <= hi; ++d) {
      if (uv.x() - d < 0) break;
      const double s = Score(d);
      if (s > best_score) {
        best_score = s;
        best = d;
      }
    }
    return {best, best_score};
  }
};

DisparityResult MatchOne(const FramePyramid& left, const FramePyramid& right, const Point2& uv,
                         double max_disparity, const StereoConfig& cfg) {
  DisparityResult res;
  const int top = left.num_levels() - 1;
  const double s_top = std::ldexp(1.0, -top);
  LevelMatcher coarse(left.level(top).intensity, right.level(top).intensity, uv * s_top);
  if (coarse.ref.norm <= 1e-9) return res;
  const int max_d = static_cast<int>(std::ceil(max_disparity * s_top));
  auto [d, score] = coarse.Best(0, max_d);

  for (int l = top - 1; l >= 0; --l) {
    const double s = std::ldexp(1.0, -l);
    const LevelMatcher m(left.level(l).intensity, right.level(l).intensity, uv * s);
    if (m.ref.norm <= 1e-9) return res;
    const int center = 2 * d;
    const int hi_limit = static_cast<int>(std::ceil(max_disparity * s));
    const auto found = m.Best(std::max(0, center - cfg.search_radius),
                              std::min(hi_limit, center + cfg.search_radius));
    d = found.first;
    score = found.second;
  }

  const LevelMatcher fine(left.level(0).intensity, right.level(0).intensity, uv);
  // Three-point parabola at 1 px spacing, then again at 0.5 px around the refined peak.
  double disparity = d;
  double center_score = score;
  for (const double h : {1.0, 0.5}) {
    const double sm = fine.Score(disparity - h);
    const double sp = fine.Score(disparity + h);
    const double denom = sm - 2 * center_score + sp;
    if (!(denom < 0)) break;
    const double offset = 0.5 * h * (sm - sp) / denom;
    if (std::abs(offset) >= h) break;
    disparity += offset;
    center_score = fine.Score(disparity);
  }
  res.disparity = std::max(0.0, disparity);
  res.score = score;
  res.matched = score >= cfg.zncc_min;
  return res;
}

}  // namespace

std::vector<DisparityResult> match_stereo(const FramePyramid& left, const FramePyramid& right,
                                          std::span<const Point2> points,
                                          const StereoConfig& cfg) {
  const double max_disparity = cfg.max_disparity < 0 ? left.width() / 4.0 : cfg.max_disparity;
  std::vector<DisparityResult> out(points.size());
  ParallelFor(static_cast<int>(points.size()), [&](int i) {
    out[i] = MatchOne(left, right, points[i], max_disparity, cfg);
    out[i].index = i;
  });
  return out;
}

double disparity_to_inv_depth(double disparity, const StereoRig& rig) {
  if (disparity <= 0) return 0.0;
  return disparity / (rig.cam.fx * rig.baseline);
}

void MapHits::Add(const Point2& uv, double rho) {
  const auto cell = grid_.CellOf(uv);
  if (!cell || !(rho > 0)) return;
  const size_t idx = static_cast<size_t>(cell->first) * grid_.cols + cell->second;
  sum_[idx] += rho;
  ++count_[idx];
}

std::optional<double> MapHits::Average(int row, int col) const {
  if (row < 0 || col < 0 || row >= grid_.rows || col >= grid_.cols) return std::nullopt;
  const size_t idx = static_cast<size_t>(row) * grid_.cols + col;
  if (count_[idx] == 0) return std::nullopt;
  return sum_[idx] / count_[idx];
}

void init_depths(std::span<DepthPoint> points, const DepthSources& sources,
                 const StereoRig& rig, const StereoConfig& cfg) {
  std::vector<int> pending;
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    auto& pt = points[i];
    pt.rho = 0;
    pt.source = InitSource::kNone;
    if (sources.depth != nullptr) {
      const Image& depth = *sources.depth;
      const int x = static_cast<int>(std::lround(pt.uv.x()));
      const int y = static_cast<int>(std::lround(pt.uv.y()));
      if (x >= 0 && y >= 0 && x < depth.width() && y < depth.height()) {
        const double z = depth(x, y);
        if (z > 0 && z < kMaxValidDepth) {
          pt.rho = 1.0 / z;
          pt.source = InitSource::kDepthImage;
          continue;
        }
      }
    }
    pending.push_back(i);
  }

  if (sources.left != nullptr && sources.right != nullptr && !pending.empty()) {
    std::vector<Point2> uvs;
    uvs.reserve(pending.size());
    for (int i : pending) uvs.push_back(points[i].uv);
    const auto matches = match_stereo(*sources.left, *sources.right, uvs, cfg);
    std::vector<int> still;
    for (size_t k = 0; k < pending.size(); ++k) {
      auto& pt = points[pending[k]];
      const double rho = matches[k].matched ? disparity_to_inv_depth(matches[k].disparity, rig) : 0;
      if (rho > 0) {
        pt.rho = rho;
        pt.source = InitSource::kStereo;
      } else {
        still.push_back(pending[k]);
      }
    }
    pending = std::move(still);
  }

  if (sources.map != nullptr) {
    for (int i : pending) {
      auto& pt = points[i];
      if (const auto avg = sources.map->Average(pt.cell_row, pt.cell_col)) {
        pt.rho = *avg;
        pt.source = InitSource::kMap;
      }
    }
  }
}

}  // namespace dsol
