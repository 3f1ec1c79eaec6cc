#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dsol/geometry.hpp"
#include "dsol/image.hpp"

namespace dsol {

enum class SceneKind { kPlane, kRamp, kTwoPlanes };

SceneKind ParseSceneKind(const std::string& name);
const char* ToString(SceneKind kind);

/// Textured planar scene in world coordinates (the first camera looks along +Z).
///  plane:      Z = depth
///  ramp:       plane through (0, 0, depth) tilted about the Y axis by `tilt` radians
///  two-planes: half plane X < 0 at Z = depth in front of a full plane at Z = back_depth
struct Scene {
  SceneKind kind = SceneKind::kPlane;
  double depth = 2.0;
  double back_depth = 4.0;
  double tilt = 0.5;
  double texture_scale = 0.12;  // coarsest texture octave, meters
  unsigned seed = 1;

  struct Hit {
    double t = 0;  // ray parameter
    Point3 point;  // world
    double texture = 0;
  };

  /// First intersection along origin + t * dir, t > 0.
  std::optional<Hit> Intersect(const Point3& origin, const Vec3& dir) const;

  /// Texture value in [20, 235] at surface coordinates (s, t) of plane `surface`.
  double Texture(int surface, double s, double t) const;
};

Image RenderIntensity(const Scene& scene, const Pinhole& cam, const Pose& T_w_c);

/// Camera-frame Z of the first hit per pixel, 0 where nothing is hit.
Image RenderDepth(const Scene& scene, const Pinhole& cam, const Pose& T_w_c);

/// Adds i.i.d. Gaussian noise.
void AddNoise(Image& img, double stddev, std::mt19937& rng);

/// Parametric camera path; `Parse` accepts
///   static
///   linear:tx,ty,tz[,rx,ry,rz]  per-frame body motion, meters and degrees
///   orbit:radius,frames_per_rev[,target_depth]  circle in the XY plane looking at (0, 0, target)
struct Motion {
  enum class Kind { kStatic, kLinear, kOrbit } kind = Kind::kStatic;
  Vec3 translation = Vec3::Zero();
  Vec3 rotation_deg = Vec3::Zero();
  double radius = 0;
  double frames_per_rev = 1;
  double target_depth = 2.0;

  static Motion Parse(const std::string& spec);
  Pose PoseAt(int frame) const;  // T_w_left
};

/// The default synthetic camera: 640x480, f = 400 px, baseline 0.1 m.
StereoRig SyntheticRig();

struct SynthFrame {
  double timestamp = 0;
  Pose T_w_c;
  Image left;
  Image right;
  Image depth;
};

/// Renders the left, right, and left depth images at a pose.
SynthFrame RenderStereo(const Scene& scene, const StereoRig& rig, const Pose& T_w_left,
                        double timestamp = 0);

struct SynthSequence {
  Scene scene;
  Motion motion;
  int frames = 10;
  double noise = 0;  // intensity stddev
  unsigned noise_seed = 7;
  StereoRig rig = SyntheticRig();
};

/// Frame k has timestamp k, matching the index-based default of Dataset.
SynthFrame RenderSequenceFrame(const SynthSequence& seq, int k, std::mt19937& rng);

/// Writes left/, right/, depth/ (8-bit and 16-bit PNG, %06d.png), calib.txt, times.txt,
/// and groundtruth.txt under dir, creating it.
void WriteSynthDataset(const std::string& dir, const SynthSequence& seq);

}  // namespace dsol
