#include "dsol/io/synth.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dsol/error.hpp"
#include "dsol/io/dataset.hpp"
#include "dsol/io/trajectory.hpp"
#include "dsol/parallel.hpp"

namespace dsol {

SceneKind ParseSceneKind(const std::string& name) {
  if (name == "plane") return SceneKind::kPlane;
  if (name == "ramp") return SceneKind::kRamp;
  if (name == "two-planes") return SceneKind::kTwoPlanes;
  throw ConfigError("unknown scene '" + name + "' (expected plane, ramp, or two-planes)");
}

const char* ToString(SceneKind kind) {
  switch (kind) {
    case SceneKind::kPlane:
      return "plane";
    case SceneKind::kRamp:
      return "ramp";
    case SceneKind::kTwoPlanes:
      return "two-planes";
  }
  return "unknown";
}

namespace {

double Hash01(std::int64_t i, std::int64_t j, std::uint32_t salt) {
  auto h = static_cast<std::uint32_t>(i * 374761393LL + j * 668265263LL) ^ (salt * 2246822519U);
  h = (h ^ (h >> 13)) * 1274126177U;
  h ^= h >> 16;
  return h / 4294967296.0;
}

double ValueNoise(double x, double y, std::uint32_t salt) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = smooth(x - fx);
  const double ty = smooth(y - fy);
  const double top = (1 - tx) * Hash01(i, j, salt) + tx * Hash01(i + 1, j, salt);
  const double bottom = (1 - tx) * Hash01(i, j + 1, salt) + tx * Hash01(i + 1, j + 1, salt);
  return (1 - ty) * top + ty * bottom;
}

// Ray/plane intersection for n . X = d.
std::optional<double> RayPlane(const Point3& o, const Vec3& dir, const Vec3& n, double d) {
  const double den = n.dot(dir);
  if (std::abs(den) < 1e-12) return std::nullopt;
  const double t = (d - n.dot(o)) / den;
  if (!(t > 1e-9)) return std::nullopt;
  return t;
}

}  // namespace

double Scene::Texture(int surface, double s, double t) const {
  constexpr double kWeights[] = {0.5, 0.3, 0.2};
  double v = 0;
  for (int k = 0; k < 3; ++k) {
    const double scale = texture_scale / std::ldexp(1.0, k);
    v += kWeights[k] * ValueNoise(s / scale, t / scale, seed * 7919U + surface * 104729U + k);
  }
  return 20 + 215 * v;
}

std::optional<Scene::Hit> Scene::Intersect(const Point3& origin, const Vec3& dir) const {
  std::optional<Hit> best;
  auto consider = [&](std::optional<double> t, int surface, const Vec3& e1, const Vec3& e2,
                      const Point3& anchor, bool half) {
    if (!t || (best && *t >= best->t)) return;
    const Point3 p = origin + *t * dir;
    if (half && !(p.x() < 0)) return;
    const Vec3 rel = p - anchor;
    best = Hit{*t, p, Texture(surface, rel.dot(e1), rel.dot(e2))};
  };
  const Vec3 ex = Vec3::UnitX();
  const Vec3 ey = Vec3::UnitY();
  const Vec3 ez = Vec3::UnitZ();
  switch (kind) {
    case SceneKind::kPlane:
      consider(RayPlane(origin, dir, ez, depth), 0, ex, ey, Point3::Zero(), false);
      break;
    case SceneKind::kRamp: {
      const Vec3 n(std::sin(tilt), 0, -std::cos(tilt));
      const Point3 anchor(0, 0, depth);
      const Vec3 e1(std::cos(tilt), 0, std::sin(tilt));
      consider(RayPlane(origin, dir, n, n.dot(anchor)), 0, e1, ey, anchor, false);
      break;
    }
    case SceneKind::kTwoPlanes:
      consider(RayPlane(origin, dir, ez, depth), 0, ex, ey, Point3::Zero(), true);
      consider(RayPlane(origin, dir, ez, back_depth), 1, ex, ey, Point3::Zero(), false);
      break;
  }
  return best;
}

namespace {

template <class F>
Image RenderWith(const Scene& scene, const Pinhole& cam, const Pose& T_w_c, F&& value) {
  Image img(cam.width, cam.height);
  const Mat3& R = T_w_c.rotation();
  const Point3& o = T_w_c.translation();
  ParallelFor(cam.height, [&](int y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dc((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      const auto hit = scene.Intersect(o, R * dc);
      img(x, y) = static_cast<float>(hit ? value(*hit) : 0.0);
    }
  });
  return img;
}

}  // namespace

Image RenderIntensity(const Scene& scene, const Pinhole& cam, const Pose& T_w_c) {
  return RenderWith(scene, cam, T_w_c, [](const Scene::Hit& h) { return h.texture; });
}

Image RenderDepth(const Scene& scene, const Pinhole& cam, const Pose& T_w_c) {
  // dir has unit camera-frame Z, so the ray parameter is the depth.
  return RenderWith(scene, cam, T_w_c, [](const Scene::Hit& h) { return h.t; });
}

void AddNoise(Image& img, double stddev, std::mt19937& rng) {
  if (!(stddev > 0)) return;
  std::normal_distribution<double> n(0.0, stddev);
  for (float& v : img.data()) v = static_cast<float>(v + n(rng));
}

Motion Motion::Parse(const std::string& spec) {
  Motion m;
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        size_t used = 0;
        args.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("bad number '" + item + "' in motion '" + spec + "'");
      }
    }
  }
  if (name == "static") {
    if (!args.empty()) throw ConfigError("motion 'static' takes no arguments");
    m.kind = Kind::kStatic;
  } else if (name == "linear") {
    if (args.size() != 3 && args.size() != 6) {
      throw ConfigError("motion 'linear' takes tx,ty,tz[,rx,ry,rz]");
    }
    m.kind = Kind::kLinear;
    m.translation = Vec3(args[0], args[1], args[2]);
    if (args.size() == 6) m.rotation_deg = Vec3(args[3], args[4], args[5]);
  } else if (name == "orbit") {
    if (args.size() != 2 && args.size() != 3) {
      throw ConfigError("motion 'orbit' takes radius,frames_per_rev[,target_depth]");
    }
    m.kind = Kind::kOrbit;
    m.radius = args[0];
    m.frames_per_rev = args[1];
    if (args.size() == 3) m.target_depth = args[2];
    if (!(m.frames_per_rev > 0)) throw ConfigError("orbit frames_per_rev must be positive");
  } else {
    throw ConfigError("unknown motion '" + spec + "'");
  }
  return m;
}

Pose Motion::PoseAt(int frame) const {
  switch (kind) {
    case Kind::kStatic:
      return Pose::Identity();
    case Kind::kLinear: {
      Tangent xi;
      xi << rotation_deg * (std::numbers::pi / 180.0), translation;
      Pose step(Pose::Exp(xi));
      Pose out;
      for (int i = 0; i < frame; ++i) out = out * step;
      return out;
    }
    case Kind::kOrbit: {
      const double phi = 2 * std::numbers::pi * frame / frames_per_rev;
      const Point3 c(radius * std::cos(phi), radius * std::sin(phi), 0);
      const Vec3 z = (Point3(0, 0, target_depth) - c).normalized();
      const Vec3 x = Vec3::UnitY().cross(z).normalized();
      const Vec3 y = z.cross(x);
      Mat3 r;
      r << x, y, z;
      return {r, c};
    }
  }
  return {};
}

StereoRig SyntheticRig() {
  StereoRig rig;
  rig.cam.fx = 400;
  rig.cam.fy = 400;
  rig.cam.cx = 320;
  rig.cam.cy = 240;
  rig.cam.width = 640;
  rig.cam.height = 480;
  rig.baseline = 0.1;
  return rig;
}

SynthFrame RenderStereo(const Scene& scene, const StereoRig& rig, const Pose& T_w_left,
                        double timestamp) {
  SynthFrame f;
  f.timestamp = timestamp;
  f.T_w_c = T_w_left;
  const Pose T_w_right = T_w_left * rig.RightFromLeft().inverse();
  f.left = RenderIntensity(scene, rig.cam, T_w_left);
  f.right = RenderIntensity(scene, rig.cam, T_w_right);
  f.depth = RenderDepth(scene, rig.cam, T_w_left);
  return f;
}

SynthFrame RenderSequenceFrame(const SynthSequence& seq, int k, std::mt19937& rng) {
  SynthFrame f = RenderStereo(seq.scene, seq.rig, seq.motion.PoseAt(k), k);
  AddNoise(f.left, seq.noise, rng);
  AddNoise(f.right, seq.noise, rng);
  return f;
}

void WriteSynthDataset(const std::string& dir, const SynthSequence& seq) {
  namespace fs = std::filesystem;
  if (seq.frames < 1) throw ConfigError("synthetic sequence needs at least one frame");
  for (const char* sub : {"left", "right", "depth"}) fs::create_directories(fs::path(dir) / sub);
  Calibration calib;
  calib.rig = seq.rig;
  calib.has_size = true;
  {
    std::ofstream f(fs::path(dir) / "calib.txt");
    f << FormatCalibration(calib);
  }
  std::mt19937 rng(seq.noise_seed);
  Trajectory gt;
  std::ofstream times(fs::path(dir) / "times.txt");
  times.precision(17);
  for (int k = 0; k < seq.frames; ++k) {
    const SynthFrame f = RenderSequenceFrame(seq, k, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", k);
    WriteGray8((fs::path(dir) / "left" / name).string(), f.left);
    WriteGray8((fs::path(dir) / "right" / name).string(), f.right);
    WriteDepth16((fs::path(dir) / "depth" / name).string(), f.depth, calib.depth_scale);
    times << f.timestamp << '\n';
    gt.Append(f.timestamp, f.T_w_c);
  }
  WriteTrajectory((fs::path(dir) / "groundtruth.txt").string(), gt);
}

}  // namespace dsol
