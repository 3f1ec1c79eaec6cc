#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"
#include "dsol/map.hpp"
#include "dsol/parallel.hpp"

namespace dsol {

struct SelectConfig {
  int cell_size = 16;
  double g_min_init = 64.0;  // squared gradient magnitude, (intensity / px)^2
  double delta_g = 4.0;
  int dilation_radius = 2;
  int min_points = -1;  // <0: half the cell count
  int max_points = -1;  // <0: the cell count
};

struct SelectorState {
  int cell_size = 16;
  double g_min = 64.0;
  double delta_g = 4.0;
  int min_points = 0;
  int max_points = 0;

  static SelectorState FromConfig(const SelectConfig& cfg, int width, int height);
};

/// Cell grid over the level-0 image; partial cells at the right/bottom edge are ignored.
struct CellGrid {
  int cell_size = 16;
  int rows = 0;
  int cols = 0;

  CellGrid(int width, int height, int cell_size)
      : cell_size(cell_size), rows(height / cell_size), cols(width / cell_size) {}
  int size() const { return rows * cols; }
  /// Cell containing uv, or nullopt when uv is outside the grid.
  std::optional<std::pair<int, int>> CellOf(const Point2& uv) const;
};

class OccupancyMask {
 public:
  OccupancyMask(int width, int height) : width_(width), height_(height), bits_(static_cast<size_t>(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool masked(int x, int y) const { return bits_[static_cast<size_t>(y) * width_ + x] != 0; }
  /// Marks every pixel within Chebyshev distance `radius` of the rounded uv.
  void Mark(const Point2& uv, int radius);
  int CountMasked() const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
};

/// A map point seen from the current frame.
struct MapProjection {
  Point2 uv;
  double rho = 0;  // inverse depth in the current frame
  int keyframe_index = -1;
  int point_index = -1;
};

/// Projects every window point into a frame at T_w_frame (left camera, level 0).
std::vector<MapProjection> ProjectMap(const SlidingWindow& window, const Pose& T_w_frame,
                                      const Pinhole& cam);

OccupancyMask make_occupancy_mask(std::span<const MapProjection> projections, int width,
                                  int height, int dilation_radius);

OccupancyMask make_occupancy_mask(const SlidingWindow& window, const Pose& T_w_frame,
                                  const Pinhole& cam, int dilation_radius);

struct SelectedPixel {
  Point2 uv;
  int cell_row = 0;
  int cell_col = 0;
  double grad2 = 0;
};

struct Selection {
  std::vector<SelectedPixel> pixels;  // sorted by (cell_row, cell_col)
  SelectorState state;                // updated running threshold
  bool second_round = false;
};

/// One candidate per cell (the unmasked, patch-extractable pixel of largest gradient),
/// accepted when its squared gradient exceeds g_min; a second round at g_min / 2 runs
/// when the first yields fewer than min_points.
Selection select_points(const FramePyramid& pyr, const OccupancyMask& mask,
                        const SelectorState& state);

/// Cross patch at every level; empty when any pixel at any level is not interpolable.
std::optional<Patch> extract_patch(const FramePyramid& pyr, const Point2& uv);

}  // namespace dsol
