#include "dsol/io/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dsol/error.hpp"

namespace dsol {

namespace fs = std::filesystem;

namespace {

std::string ReadFile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string StripComment(std::string line) {
  if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
  return line;
}

bool OnlySpace(std::istringstream& in) {
  std::string rest;
  return !(in >> rest);
}

}  // namespace

Calibration ParseCalibration(const std::string& text) {
  Calibration c;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  int field = 0;  // 0: intrinsics, 1: baseline, then optional keywords
  while (std::getline(in, raw)) {
    ++number;
    std::istringstream line(StripComment(raw));
    std::string first;
    if (!(line >> first)) continue;
    const std::string where = "calibration line " + std::to_string(number) + ": ";
    if (field == 0) {
      std::istringstream all(StripComment(raw));
      Pinhole& cam = c.rig.cam;
      if (!(all >> cam.fx >> cam.fy >> cam.cx >> cam.cy) || !OnlySpace(all)) {
        throw ParseError(where + "expected 'fx fy cx cy'");
      }
      field = 1;
    } else if (field == 1) {
      if (first != "baseline" || !(line >> c.rig.baseline) || !OnlySpace(line)) {
        throw ParseError(where + "expected 'baseline B'");
      }
      field = 2;
    } else if (first == "size") {
      if (!(line >> c.rig.cam.width >> c.rig.cam.height) || !OnlySpace(line) ||
          c.rig.cam.width <= 0 || c.rig.cam.height <= 0) {
        throw ParseError(where + "expected 'size W H'");
      }
      c.has_size = true;
    } else if (first == "depth_scale") {
      if (!(line >> c.depth_scale) || !OnlySpace(line) || !(c.depth_scale > 0)) {
        throw ParseError(where + "expected 'depth_scale S'");
      }
    } else {
      throw ParseError(where + "unknown entry '" + first + "'");
    }
  }
  if (field == 0) throw ParseError("calibration: missing 'fx fy cx cy' line");
  if (field == 1) throw ParseError("calibration: missing 'baseline B' line");
  if (!(c.rig.cam.fx > 0 && c.rig.cam.fy > 0)) throw ParseError("calibration: fx, fy must be > 0");
  if (!(c.rig.baseline >= 0)) throw ParseError("calibration: baseline must be >= 0");
  return c;
}

Calibration LoadCalibration(const std::string& path) { return ParseCalibration(ReadFile(path)); }

std::string FormatCalibration(const Calibration& calib) {
  // Shortest text that reads back to the same double.
  auto num = [](double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  };
  const Pinhole& cam = calib.rig.cam;
  std::string out = num(cam.fx) + ' ' + num(cam.fy) + ' ' + num(cam.cx) + ' ' + num(cam.cy) + '\n';
  out += "baseline " + num(calib.rig.baseline) + '\n';
  if (calib.has_size) out += "size " + std::to_string(cam.width) + ' ' + std::to_string(cam.height) + '\n';
  out += "depth_scale " + num(calib.depth_scale) + '\n';
  return out;
}

Image ReadGrayImage(const std::string& path) {
  const cv::Mat m = cv::imread(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw ParseError("cannot read image " + path);
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      img(x, y) = m.depth() == CV_16U ? static_cast<float>(m.at<std::uint16_t>(y, x) / 257.0)
                                      : static_cast<float>(m.at<std::uint8_t>(y, x));
    }
  }
  return img;
}

Image ReadDepthImage(const std::string& path, double scale) {
  const cv::Mat m = cv::imread(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw ParseError("cannot read depth image " + path);
  if (m.depth() != CV_16U) throw ParseError("depth image is not 16-bit: " + path);
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) img(x, y) = static_cast<float>(m.at<std::uint16_t>(y, x) * scale);
  }
  return img;
}

void WriteGray8(const std::string& path, const Image& img) {
  cv::Mat m(img.height(), img.width(), CV_8U);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      m.at<std::uint8_t>(y, x) =
          static_cast<std::uint8_t>(std::clamp(std::lround(img(x, y)), 0L, 255L));
    }
  }
  if (!cv::imwrite(path, m)) throw ParseError("cannot write image " + path);
}

void WriteDepth16(const std::string& path, const Image& depth_m, double scale) {
  cv::Mat m(depth_m.height(), depth_m.width(), CV_16U);
  for (int y = 0; y < depth_m.height(); ++y) {
    for (int x = 0; x < depth_m.width(); ++x) {
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(
          std::clamp(std::lround(depth_m(x, y) / scale), 0L, 65535L));
    }
  }
  if (!cv::imwrite(path, m)) throw ParseError("cannot write image " + path);
}

std::vector<std::string> ListImages(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ParseError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".pgm") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset::Dataset(const DatasetSpec& spec) {
  calib_ = LoadCalibration(spec.calib);
  left_ = ListImages(spec.left_dir);
  if (left_.empty()) throw ParseError("no images in " + spec.left_dir);
  if (!spec.right_dir.empty()) {
    right_ = ListImages(spec.right_dir);
    if (right_.size() != left_.size()) {
      throw ParseError("stereo pair count mismatch: " + std::to_string(left_.size()) + " left, " +
                       std::to_string(right_.size()) + " right");
    }
  }
  if (!spec.depth_dir.empty()) {
    depth_ = ListImages(spec.depth_dir);
    if (depth_.size() != left_.size()) {
      throw ParseError("depth count mismatch: " + std::to_string(left_.size()) + " left, " +
                       std::to_string(depth_.size()) + " depth");
    }
  }
  if (!calib_.has_size) {
    const Image first = ReadGrayImage(left_.front());
    calib_.rig.cam.width = first.width();
    calib_.rig.cam.height = first.height();
    calib_.has_size = true;
  }
  calib_.rig.Validate();

  if (spec.timestamps.empty()) {
    for (int i = 0; i < size(); ++i) timestamps_.push_back(i);
  } else {
    std::istringstream in(ReadFile(spec.timestamps));
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
      ++number;
      std::istringstream line(StripComment(raw));
      double t = 0;
      if (!(line >> t)) {
        if (OnlySpace(line)) continue;
        throw ParseError("timestamps line " + std::to_string(number) + ": not a number");
      }
      if (!timestamps_.empty() && !(t > timestamps_.back())) {
        throw ParseError("timestamps line " + std::to_string(number) + ": not increasing");
      }
      timestamps_.push_back(t);
    }
    if (static_cast<int>(timestamps_.size()) != size()) {
      throw ParseError("timestamp count " + std::to_string(timestamps_.size()) +
                       " does not match " + std::to_string(size()) + " images");
    }
  }
}

StereoFrame Dataset::Load(int i, int levels) const {
  const auto k = static_cast<size_t>(i);
  const Image left = ReadGrayImage(left_.at(k));
  const Pinhole& cam = calib_.rig.cam;
  auto check = [&](const Image& img, const std::string& path) {
    if (img.width() != cam.width || img.height() != cam.height) {
      throw ParseError("image size " + std::to_string(img.width()) + "x" +
                       std::to_string(img.height()) + " does not match calibration: " + path);
    }
  };
  check(left, left_[k]);
  std::optional<Image> right;
  if (stereo()) {
    right = ReadGrayImage(right_[k]);
    check(*right, right_[k]);
  }
  std::optional<Image> depth;
  if (has_depth()) {
    depth = ReadDepthImage(depth_[k], calib_.depth_scale);
    check(*depth, depth_[k]);
  }
  return MakeStereoFrame(timestamps_[k], left, right ? &*right : nullptr, std::move(depth), levels);
}

}  // namespace dsol
