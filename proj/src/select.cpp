#include "dsol/select.hpp"

#include <algorithm>
#include <cmath>

#include "dsol/error.hpp"

namespace dsol {

SelectorState SelectorState::FromConfig(const SelectConfig& cfg, int width, int height) {
  if (cfg.cell_size < 4) throw ConfigError("select.cell_size must be >= 4");
  if (cfg.g_min_init < 0 || cfg.delta_g < 0) throw ConfigError("select thresholds must be >= 0");
  const CellGrid grid(width, height, cfg.cell_size);
  SelectorState s;
  s.cell_size = cfg.cell_size;
  s.g_min = cfg.g_min_init;
  s.delta_g = cfg.delta_g;
  s.max_points = cfg.max_points < 0 ? grid.size() : cfg.max_points;
  s.min_points = cfg.min_points < 0 ? grid.size() / 2 : cfg.min_points;
  return s;
}

std::optional<std::pair<int, int>> CellGrid::CellOf(const Point2& uv) const {
  if (!(uv.x() >= 0 && uv.y() >= 0)) return std::nullopt;
  const int col = static_cast<int>(uv.x()) / cell_size;
  const int row = static_cast<int>(uv.y()) / cell_size;
  if (row >= rows || col >= cols) return std::nullopt;
  return std::make_pair(row, col);
}

void OccupancyMask::Mark(const Point2& uv, int radius) {
  const int cx = static_cast<int>(std::lround(uv.x()));
  const int cy = static_cast<int>(std::lround(uv.y()));
  const int x0 = std::max(cx - radius, 0);
  const int x1 = std::min(cx + radius, width_ - 1);
  const int y0 = std::max(cy - radius, 0);
  const int y1 = std::min(cy + radius, height_ - 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) bits_[static_cast<size_t>(y) * width_ + x] = 1;
  }
}

int OccupancyMask::CountMasked() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<MapProjection> ProjectMap(const SlidingWindow& window, const Pose& T_w_frame,
                                      const Pinhole& cam) {
  std::vector<MapProjection> out;
  const Pose T_frame_w = T_w_frame.inverse();
  for (int k = 0; k < window.size(); ++k) {
    const auto& kf = window.keyframes[k];
    const Pose T_frame_host = T_frame_w * kf.state.pose;
    for (int i = 0; i < static_cast<int>(kf.points.size()); ++i) {
      const auto& pt = kf.points[i];
      const auto w = warp(pt.uv, pt.rho, T_frame_host, cam);
      if (!w || !cam.InBounds(w->uv)) continue;
      out.push_back({w->uv, w->rho, k, i});
    }
  }
  return out;
}

OccupancyMask make_occupancy_mask(std::span<const MapProjection> projections, int width,
                                  int height, int dilation_radius) {
  OccupancyMask mask(width, height);
  for (const auto& p : projections) mask.Mark(p.uv, dilation_radius);
  return mask;
}

OccupancyMask make_occupancy_mask(const SlidingWindow& window, const Pose& T_w_frame,
                                  const Pinhole& cam, int dilation_radius) {
  const auto proj = ProjectMap(window, T_w_frame, cam);
  return make_occupancy_mask(proj, cam.width, cam.height, dilation_radius);
}

namespace {

// Level-0 pixel range [lo, hi] whose cross patch is interpolable at every level.
std::pair<int, int> ExtractableRange(int size, int levels) {
  int lo = 0;
  int hi = size - 1;
  int level_size = size;
  for (int l = 0; l < levels; ++l) {
    const double s = std::ldexp(1.0, l);
    // need 1 <= u / s <= level_size - 2
    lo = std::max(lo, static_cast<int>(std::ceil(s)));
    hi = std::min(hi, static_cast<int>(std::floor((level_size - 2) * s)));
    level_size = (level_size + 1) / 2;
  }
  return {lo, hi};
}

}  // namespace

Selection select_points(const FramePyramid& pyr, const OccupancyMask& mask,
                        const SelectorState& state) {
  const auto& lvl = pyr.level(0);
  const int w = lvl.intensity.width();
  const int h = lvl.intensity.height();
  const CellGrid grid(w, h, state.cell_size);
  const auto [xlo, xhi] = ExtractableRange(w, pyr.num_levels());
  const auto [ylo, yhi] = ExtractableRange(h, pyr.num_levels());

  // One candidate per cell, one task per row of cells.
  std::vector<std::vector<SelectedPixel>> rows(static_cast<size_t>(grid.rows));
  ParallelFor(grid.rows, [&](int row) {
    auto& out = rows[static_cast<size_t>(row)];
    for (int col = 0; col < grid.cols; ++col) {
      SelectedPixel best;
      best.grad2 = -1;
      const int y0 = std::max(row * grid.cell_size, ylo);
      const int y1 = std::min((row + 1) * grid.cell_size - 1, yhi);
      const int x0 = std::max(col * grid.cell_size, xlo);
      const int x1 = std::min((col + 1) * grid.cell_size - 1, xhi);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (mask.masked(x, y)) continue;
          const double gx = lvl.grad_x(x, y);
          const double gy = lvl.grad_y(x, y);
          const double g2 = gx * gx + gy * gy;
          if (g2 > best.grad2) best = {Point2(x, y), row, col, g2};
        }
      }
      if (best.grad2 >= 0) out.push_back(best);
    }
  });

  auto accept = [&](double threshold) {
    std::vector<SelectedPixel> sel;
    for (const auto& r : rows) {
      for (const auto& c : r) {
        if (c.grad2 > threshold) sel.push_back(c);
      }
    }
    return sel;
  };

  Selection out;
  out.state = state;
  out.pixels = accept(state.g_min);
  const auto first_count = static_cast<int>(out.pixels.size());
  if (first_count < state.min_points) {
    out.pixels = accept(state.g_min * 0.5);
    out.second_round = true;
    out.state.g_min = std::max(0.0, state.g_min - state.delta_g);
  } else if (first_count > state.max_points) {
    out.state.g_min = state.g_min + state.delta_g;
  }
  return out;
}

std::optional<Patch> extract_patch(const FramePyramid& pyr, const Point2& uv) {
  Patch patch;
  patch.center = uv;
  patch.levels.resize(static_cast<size_t>(pyr.num_levels()));
  for (int l = 0; l < pyr.num_levels(); ++l) {
    const auto& lvl = pyr.level(l);
    auto& out = patch.levels[l];
    for (int k = 0; k < kPatchSize; ++k) {
      const Point2 px = Patch::PixelAt(uv, l, k);
      const auto value = interpolate(lvl.intensity, px);
      const auto grad = gradient_at(lvl, px);
      if (!value || !grad) return std::nullopt;
      out.intensity[k] = *value;
      out.grad_x[k] = grad->x();
      out.grad_y[k] = grad->y();
    }
  }
  return patch;
}

}  // namespace dsol
