#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"

namespace dsol {

/// Cross-shaped patch: center plus the four 4-neighbours, in level-local pixels.
inline constexpr int kPatchSize = 5;
inline constexpr std::array<std::array<int, 2>, kPatchSize> kPatchOffsets{
    {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

struct PatchLevel {
  std::array<double, kPatchSize> intensity{};
  std::array<double, kPatchSize> grad_x{};
  std::array<double, kPatchSize> grad_y{};

  double GradNorm2(int k) const { return grad_x[k] * grad_x[k] + grad_y[k] * grad_y[k]; }
};

/// Host-side intensities and gradients of a selected pixel at every pyramid level.
struct Patch {
  Point2 center;  // level 0
  std::vector<PatchLevel> levels;

  /// Pixel k of the patch at a level, following the coordinate-halving convention.
  static Point2 PixelAt(const Point2& center, int level, int k) {
    const double s = std::ldexp(1.0, -level);
    return {center.x() * s + kPatchOffsets[k][0], center.y() * s + kPatchOffsets[k][1]};
  }
};

enum class InitSource : std::uint8_t { kNone, kDepthImage, kStereo, kMap };

const char* ToString(InitSource s);

struct DepthPoint {
  Point2 uv;        // level-0 pixel in the host left image
  double rho = 0;   // inverse depth, 1/m
  Patch patch;
  InitSource source = InitSource::kNone;
  int host_id = -1;
  int cell_row = 0;
  int cell_col = 0;
};

struct Keyframe {
  int id = -1;  // creation index, strictly increasing
  StereoFrame frame;
  FrameState state;
  std::vector<DepthPoint> points;
};

/// Quadratic prior on frame variables left behind by marginalization:
///   E(y) = 1/2 y^T H y - b^T y,  y = offset, state = linearization [+] offset.
struct MargPrior {
  std::vector<int> frame_ids;
  Eigen::MatrixXd H;
  Eigen::VectorXd b;
  std::vector<FrameState> linearization;  // first estimates, fixed once set
  std::vector<FrameDelta> offset;         // accumulated update since the first estimate

  bool empty() const { return frame_ids.empty(); }
  int IndexOf(int frame_id) const;
  void Clear();
};

struct SlidingWindow {
  int capacity = 4;
  std::vector<Keyframe> keyframes;  // ordered by id
  MargPrior prior;

  int size() const { return static_cast<int>(keyframes.size()); }
  bool empty() const { return keyframes.empty(); }
  bool full() const { return size() >= capacity; }
  int NumPoints() const;
  /// Index of the keyframe with the given id, or -1.
  int IndexOf(int id) const;
};

}  // namespace dsol
