#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dsol/geometry.hpp"

namespace dsol {

/// Row-major float intensity image, nominally in [0, 255].
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0F);
  Image(int width, int height, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  float operator()(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  float& operator()(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  double Mean() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// Bilinear interpolation over the closed domain [0, w-1] x [0, h-1].
/// Empty outside; no extrapolation.
inline std::optional<double> interpolate(const Image& img, const Point2& uv) {
  const double u = uv.x();
  const double v = uv.y();
  if (!(u >= 0 && v >= 0 && u <= img.width() - 1 && v <= img.height() - 1)) return std::nullopt;
  const int x0 = std::min(static_cast<int>(u), img.width() - 2 < 0 ? 0 : img.width() - 2);
  const int y0 = std::min(static_cast<int>(v), img.height() - 2 < 0 ? 0 : img.height() - 2);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const double top = (1 - fx) * img(x0, y0) + fx * img(x1, y0);
  const double bottom = (1 - fx) * img(x0, y1) + fx * img(x1, y1);
  return (1 - fy) * top + fy * bottom;
}

struct PyramidLevel {
  Image intensity;
  Image grad_x;
  Image grad_y;
};

struct IntensitySample {
  double value = 0;
  Vec2 grad = Vec2::Zero();
};

/// Intensity and gradient at a sub-pixel location, sharing the bilinear weights.
inline std::optional<IntensitySample> sample(const PyramidLevel& lvl, const Point2& uv) {
  const Image& img = lvl.intensity;
  const double u = uv.x();
  const double v = uv.y();
  if (img.width() < 2 || img.height() < 2) return std::nullopt;
  if (!(u >= 0 && v >= 0 && u <= img.width() - 1 && v <= img.height() - 1)) return std::nullopt;
  const int x0 = std::min(static_cast<int>(u), img.width() - 2);
  const int y0 = std::min(static_cast<int>(v), img.height() - 2);
  const double fx = u - x0;
  const double fy = v - y0;
  const double w00 = (1 - fx) * (1 - fy);
  const double w10 = fx * (1 - fy);
  const double w01 = (1 - fx) * fy;
  const double w11 = fx * fy;
  auto blend = [&](const Image& im) {
    return w00 * im(x0, y0) + w10 * im(x0 + 1, y0) + w01 * im(x0, y0 + 1) +
           w11 * im(x0 + 1, y0 + 1);
  };
  return IntensitySample{blend(img), {blend(lvl.grad_x), blend(lvl.grad_y)}};
}

/// Bilinearly interpolated precomputed gradient (intensity / pixel).
inline std::optional<Vec2> gradient_at(const PyramidLevel& lvl, const Point2& uv) {
  auto s = sample(lvl, uv);
  if (!s) return std::nullopt;
  return s->grad;
}

/// Level 0 is the input; level k is a 2x2 box-average of level k-1 with size ceil(prev / 2).
/// Gradients are central differences, one-sided at the borders.
class FramePyramid {
 public:
  FramePyramid() = default;
  explicit FramePyramid(std::vector<PyramidLevel> levels) : levels_(std::move(levels)) {}

  int num_levels() const { return static_cast<int>(levels_.size()); }
  const PyramidLevel& level(int k) const { return levels_.at(static_cast<size_t>(k)); }
  int width() const { return levels_.front().intensity.width(); }
  int height() const { return levels_.front().intensity.height(); }

 private:
  std::vector<PyramidLevel> levels_;
};

/// Throws ConfigError when the image is smaller than 2^(levels-1) along an axis.
FramePyramid build_pyramid(const Image& img, int levels);

Image Downsample(const Image& img);
void ComputeGradients(const Image& img, Image& gx, Image& gy);

struct StereoFrame {
  double timestamp = 0;
  std::shared_ptr<const FramePyramid> left;
  std::shared_ptr<const FramePyramid> right;  // null in mono(+depth) mode
  std::optional<Image> depth;                 // meters, 0 = invalid

  bool has_right() const { return right != nullptr; }
};

StereoFrame MakeStereoFrame(double timestamp, const Image& left, const Image* right,
                            std::optional<Image> depth, int levels);

}  // namespace dsol
