#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"

namespace dsol {

/// Plain-text calibration:
///   fx fy cx cy
///   baseline B          (meters)
///   size W H            (optional; otherwise taken from the first image)
///   depth_scale S       (optional; meters per 16-bit depth unit, default 1/1000)
/// Blank lines and '#' comments are ignored.
struct Calibration {
  StereoRig rig;
  bool has_size = false;
  double depth_scale = 1e-3;
};

/// Throws ParseError naming the offending line.
Calibration ParseCalibration(const std::string& text);
Calibration LoadCalibration(const std::string& path);
std::string FormatCalibration(const Calibration& calib);

/// 8-bit as is, 16-bit scaled by 1/257 to the 8-bit range.
Image ReadGrayImage(const std::string& path);
/// 16-bit units times scale, 0 = invalid.
Image ReadDepthImage(const std::string& path, double scale);
/// Rounds and clamps to [0, 255].
void WriteGray8(const std::string& path, const Image& img);
/// Meters divided by scale, rounded and clamped to 16 bits.
void WriteDepth16(const std::string& path, const Image& depth_m, double scale);

struct DatasetSpec {
  std::string left_dir;
  std::string right_dir;  // empty: mono
  std::string depth_dir;  // empty: no depth
  std::string calib;
  std::string timestamps;  // empty: index-based, one second apart
};

/// Image files (png, pgm) of a directory in filename order.
std::vector<std::string> ListImages(const std::string& dir);

/// Ordered stereo stream. Images are decoded and their pyramids built on Load.
class Dataset {
 public:
  /// Throws ParseError for a missing or empty left directory, mismatched pair counts,
  /// a bad calibration, or a timestamp count that does not match the images.
  explicit Dataset(const DatasetSpec& spec);

  int size() const { return static_cast<int>(left_.size()); }
  bool stereo() const { return !right_.empty(); }
  bool has_depth() const { return !depth_.empty(); }
  const StereoRig& rig() const { return calib_.rig; }
  const Calibration& calibration() const { return calib_; }
  double timestamp(int i) const { return timestamps_[static_cast<size_t>(i)]; }

  /// Throws ParseError with the file path when an image cannot be read.
  StereoFrame Load(int i, int levels) const;

 private:
  Calibration calib_;
  std::vector<std::string> left_;
  std::vector<std::string> right_;
  std::vector<std::string> depth_;
  std::vector<double> timestamps_;
};

}  // namespace dsol
