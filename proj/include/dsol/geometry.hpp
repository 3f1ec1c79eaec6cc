#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace dsol {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

using Point2 = Vec2;
using Point3 = Vec3;

/// se(3) tangent, ordered (rotation, translation).
using Tangent = Vec6;

Mat3 Hat(const Vec3& w);

/// Rigid transform on SE(3). Keyframe and frame poses are stored
/// camera-to-world; relative transforms are T_target_host = T_w_target^-1 * T_w_host.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}
  Pose(const Eigen::Quaterniond& q, const Vec3& translation)
      : rotation_(q.normalized().toRotationMatrix()), translation_(translation) {}

  static Pose Identity() { return {}; }
  static Pose Translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Pose Exp(const Tangent& xi);

  Tangent Log() const;

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_); }

  Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }
  Pose operator*(const Pose& other) const {
    return {rotation_ * other.rotation_, rotation_ * other.translation_ + translation_};
  }
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Ad_T such that T * Exp(xi) * T^-1 = Exp(Ad_T * xi).
  Mat6 Adjoint() const;

  /// max |R^T R - I|
  double OrthonormalityError() const;

  /// Projects the rotation back onto SO(3).
  void Normalize();

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Rotation angle of a relative rotation in radians.
double RotationAngle(const Mat3& r);

struct Pinhole {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int width = 0;
  int height = 0;

  /// Throws ConfigError unless fx, fy > 0 and the principal point is inside the image.
  void Validate() const;

  bool InBounds(const Point2& uv, double border = 0) const {
    return uv.x() >= border && uv.y() >= border && uv.x() <= width - 1 - border &&
           uv.y() <= height - 1 - border;
  }
};

struct StereoRig {
  Pinhole cam;
  double baseline = 0;  // meters

  void Validate() const;
  /// T_right_left: pure translation (-baseline, 0, 0).
  Pose RightFromLeft() const { return Pose::Translation(Vec3(-baseline, 0, 0)); }
};

/// Pixel of a point in front of the camera. Throws BehindCameraError when Z <= 0.
Point2 project(const Pinhole& cam, const Point3& p);

/// Point at inverse depth rho along the ray of uv. Throws InvalidDepthError when rho <= 0.
Point3 backproject(const Pinhole& cam, const Point2& uv, double rho);

/// Camera scaled to pyramid level: every intrinsic halves per level (cx' = cx / 2),
/// image size follows the pyramid, ceil(size / 2) per level.
Pinhole scale_camera(const Pinhole& cam, int level);

struct Warped {
  Point2 uv;
  double rho = 0;  // inverse depth in the target camera
  Point3 point;    // point in target camera coordinates
};

/// pi(T_target_host * pi^-1(uv, rho)). Empty when the point lands behind the target.
std::optional<Warped> warp(const Point2& uv, double rho, const Pose& T_target_host,
                           const Pinhole& cam);

struct WarpJacobian {
  Warped warped;
  Mat26 d_pose;  // d uv' / d delta for T_target_host <- Exp(delta) * T_target_host
  Vec2 d_rho;    // d uv' / d rho
};

std::optional<WarpJacobian> warp_with_jacobian(const Point2& uv, double rho,
                                               const Pose& T_target_host, const Pinhole& cam);

/// d pi(p) / d p
inline Eigen::Matrix<double, 2, 3> ProjectionJacobian(const Pinhole& cam, const Point3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz, 0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

/// d (Exp(delta) * p) / d delta at delta = 0.
inline Eigen::Matrix<double, 3, 6> PointTwistJacobian(const Point3& p) {
  Eigen::Matrix<double, 3, 6> j;
  j.leftCols<3>() = -Hat(p);
  j.rightCols<3>().setIdentity();
  return j;
}

struct AffineParams {
  double a = 0;  // log gain
  double b = 0;  // offset, intensity units
};

/// Variables of one camera frame: pose (6), left affine (2), right affine (2).
inline constexpr int kFrameDim = 10;
using FrameDelta = Eigen::Matrix<double, kFrameDim, 1>;

namespace frame_index {
inline constexpr int kPose = 0;
inline constexpr int kAffineLeft = 6;
inline constexpr int kAffineRight = 8;
}  // namespace frame_index

struct FrameState {
  Pose pose;  // T_w_left
  AffineParams affine_left;
  AffineParams affine_right;
};

/// pose <- Exp(delta_pose) * pose, affine parameters additive.
FrameState box_plus(const FrameState& x, const FrameDelta& delta);

/// Inverse of box_plus: box_plus(b, box_minus(a, b)) == a.
FrameDelta box_minus(const FrameState& a, const FrameState& b);

}  // namespace dsol
