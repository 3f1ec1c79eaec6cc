#pragma once

#include <array>
#include <span>
#include <vector>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"
#include "dsol/map.hpp"
#include "dsol/select.hpp"

namespace dsol {

struct StereoConfig {
  double max_disparity = -1;  // <0: a quarter of the image width
  int search_radius = 2;
  double zncc_min = 0.5;
};

/// 5 rows x 7 columns, wider along the epipolar line.
struct ZnccPatch {
  static constexpr int kRows = 5;
  static constexpr int kCols = 7;
  static constexpr int kSize = kRows * kCols;

  std::array<double, kSize> values{};
  std::array<double, kSize> centered{};
  double norm = 0;  // |centered|

  static ZnccPatch FromValues(std::span<const double, kSize> v);
  /// Bilinear samples around center; coordinates are clamped to the image.
  static ZnccPatch Extract(const Image& img, const Point2& center);
};

/// Zero-normalized cross-correlation in [-1, 1]; 0 when either patch has no variance.
double zncc(const ZnccPatch& a, const ZnccPatch& b);

struct DisparityResult {
  int index = -1;
  double disparity = 0;
  double score = 0;
  bool matched = false;
};

/// Coarse-to-fine search along rectified rows: exhaustive at the coarsest level,
/// +-search_radius around the doubled estimate at each finer level, parabola
/// refinement at level 0.
std::vector<DisparityResult> match_stereo(const FramePyramid& left, const FramePyramid& right,
                                          std::span<const Point2> points,
                                          const StereoConfig& cfg);

/// rho = d / (fx * baseline); 0 for d = 0 (uninitialized).
double disparity_to_inv_depth(double disparity, const StereoRig& rig);

/// Per-cell running average of inverse depths observed from the current frame.
class MapHits {
 public:
  MapHits(const CellGrid& grid) : grid_(grid), sum_(grid.size(), 0.0), count_(grid.size(), 0) {}

  void Add(const Point2& uv, double rho);
  std::optional<double> Average(int row, int col) const;

 private:
  CellGrid grid_;
  std::vector<double> sum_;
  std::vector<int> count_;
};

struct DepthSources {
  const Image* depth = nullptr;        // meters, 0 = invalid
  const FramePyramid* left = nullptr;  // with right: stereo matching
  const FramePyramid* right = nullptr;
  const MapHits* map = nullptr;
};

/// Valid depth: (0, 100) meters.
inline constexpr double kMaxValidDepth = 100.0;

/// Fills rho and source of each point from the first available source in the order
/// depth image, stereo, map. Points without a source keep rho = 0 and kNone.
void init_depths(std::span<DepthPoint> points, const DepthSources& sources,
                 const StereoRig& rig, const StereoConfig& cfg);

}  // namespace dsol
