#include "dsol/image.hpp"

#include <numeric>
#include <sstream>

#include <tbb/parallel_invoke.h>

#include "dsol/error.hpp"

namespace dsol {

Image::Image(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

Image::Image(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (data_.size() != static_cast<size_t>(width) * height) {
    throw ConfigError("image data length does not match its dimensions");
  }
}

double Image::Mean() const {
  if (data_.empty()) return 0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

Image Downsample(const Image& img) {
  const int w = (img.width() + 1) / 2;
  const int h = (img.height() + 1) / 2;
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = 2 * y;
    const int y1 = std::min(y0 + 1, img.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = 2 * x;
      const int x1 = std::min(x0 + 1, img.width() - 1);
      out(x, y) = 0.25F * (img(x0, y0) + img(x1, y0) + img(x0, y1) + img(x1, y1));
    }
  }
  return out;
}

void ComputeGradients(const Image& img, Image& gx, Image& gy) {
  const int w = img.width();
  const int h = img.height();
  gx = Image(w, h);
  gy = Image(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (w > 1) {
        if (x == 0) {
          gx(x, y) = img(1, y) - img(0, y);
        } else if (x == w - 1) {
          gx(x, y) = img(x, y) - img(x - 1, y);
        } else {
          gx(x, y) = 0.5F * (img(x + 1, y) - img(x - 1, y));
        }
      }
      if (h > 1) {
        if (y == 0) {
          gy(x, y) = img(x, 1) - img(x, 0);
        } else if (y == h - 1) {
          gy(x, y) = img(x, y) - img(x, y - 1);
        } else {
          gy(x, y) = 0.5F * (img(x, y + 1) - img(x, y - 1));
        }
      }
    }
  }
}

FramePyramid build_pyramid(const Image& img, int levels) {
  if (levels < 1) throw ConfigError("pyramid needs at least one level");
  const int min_size = 1 << (levels - 1);
  if (img.width() < min_size || img.height() < min_size || img.width() < 2 ||
      img.height() < 2) {
    std::ostringstream os;
    os << "image " << img.width() << "x" << img.height() << " too small for " << levels
       << " pyramid levels";
    throw ConfigError(os.str());
  }
  std::vector<PyramidLevel> out(static_cast<size_t>(levels));
  out[0].intensity = img;
  for (int k = 1; k < levels; ++k) out[k].intensity = Downsample(out[k - 1].intensity);
  for (auto& lvl : out) ComputeGradients(lvl.intensity, lvl.grad_x, lvl.grad_y);
  return FramePyramid(std::move(out));
}

StereoFrame MakeStereoFrame(double timestamp, const Image& left, const Image* right,
                            std::optional<Image> depth, int levels) {
  StereoFrame f;
  f.timestamp = timestamp;
  if (right != nullptr) {
    if (right->width() != left.width() || right->height() != left.height()) {
      throw ConfigError("left and right images differ in size");
    }
    FramePyramid pl;
    FramePyramid pr;
    tbb::parallel_invoke([&] { pl = build_pyramid(left, levels); },
                         [&] { pr = build_pyramid(*right, levels); });
    f.left = std::make_shared<const FramePyramid>(std::move(pl));
    f.right = std::make_shared<const FramePyramid>(std::move(pr));
  } else {
    f.left = std::make_shared<const FramePyramid>(build_pyramid(left, levels));
  }
  f.depth = std::move(depth);
  return f;
}

}  // namespace dsol
