#include "dsol/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dsol/error.hpp"

namespace dsol {

Mat3 Hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

namespace {

// Coefficients of Rodrigues' formula and the SE(3) left Jacobian.
struct ExpCoeffs {
  double a;  // sin(t)/t
  double b;  // (1 - cos(t))/t^2
  double c;  // (t - sin(t))/t^3
};

ExpCoeffs Coeffs(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-5) {
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0};
  }
  return {std::sin(theta) / theta, (1.0 - std::cos(theta)) / t2,
          (theta - std::sin(theta)) / (t2 * theta)};
}

}  // namespace

Pose Pose::Exp(const Tangent& xi) {
  const Vec3 w = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  const double theta = w.norm();
  const auto k = Coeffs(theta);
  const Mat3 wx = Hat(w);
  const Mat3 wx2 = wx * wx;
  const Mat3 r = Mat3::Identity() + k.a * wx + k.b * wx2;
  const Mat3 vm = Mat3::Identity() + k.b * wx + k.c * wx2;
  Pose out(r, vm * v);
  out.Normalize();
  return out;
}

Tangent Pose::Log() const {
  const Eigen::AngleAxisd aa(rotation_);
  const double theta = aa.angle();
  const Vec3 w = aa.axis() * theta;
  const Mat3 wx = Hat(w);
  Mat3 v_inv;
  if (theta < 1e-5) {
    v_inv = Mat3::Identity() - 0.5 * wx + (1.0 / 12.0) * wx * wx;
  } else {
    const auto k = Coeffs(theta);
    v_inv = Mat3::Identity() - 0.5 * wx +
            (1.0 / (theta * theta)) * (1.0 - k.a / (2.0 * k.b)) * wx * wx;
  }
  Tangent xi;
  xi << w, v_inv * translation_;
  return xi;
}

Mat6 Pose::Adjoint() const {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = rotation_;
  ad.bottomRightCorner<3, 3>() = rotation_;
  ad.bottomLeftCorner<3, 3>() = Hat(translation_) * rotation_;
  return ad;
}

double Pose::OrthonormalityError() const {
  return (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
}

void Pose::Normalize() {
  rotation_ = Eigen::Quaterniond(rotation_).normalized().toRotationMatrix();
}

double RotationAngle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near zero; use the sine from the skew part as well.
  const Vec3 s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

void Pinhole::Validate() const {
  if (!(fx > 0 && fy > 0)) throw ConfigError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (!(cx > 0 && cx < width && cy > 0 && cy < height)) {
    std::ostringstream os;
    os << "principal point (" << cx << ", " << cy << ") outside " << width << "x" << height;
    throw ConfigError(os.str());
  }
}

void StereoRig::Validate() const {
  cam.Validate();
  if (!(baseline > 0)) throw ConfigError("stereo baseline must be positive");
}

Point2 project(const Pinhole& cam, const Point3& p) {
  if (!(p.z() > 0)) throw BehindCameraError("point is behind the camera");
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Point3 backproject(const Pinhole& cam, const Point2& uv, double rho) {
  if (!(rho > 0)) throw InvalidDepthError("inverse depth must be positive");
  return {(uv.x() - cam.cx) / (cam.fx * rho), (uv.y() - cam.cy) / (cam.fy * rho), 1.0 / rho};
}

Pinhole scale_camera(const Pinhole& cam, int level) {
  Pinhole out = cam;
  for (int i = 0; i < level; ++i) {
    out.fx *= 0.5;
    out.fy *= 0.5;
    out.cx *= 0.5;
    out.cy *= 0.5;
    out.width = (out.width + 1) / 2;
    out.height = (out.height + 1) / 2;
  }
  return out;
}

std::optional<Warped> warp(const Point2& uv, double rho, const Pose& T_target_host,
                           const Pinhole& cam) {
  const Point3 p = T_target_host * backproject(cam, uv, rho);
  if (!(p.z() > 0)) return std::nullopt;
  return Warped{{cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy},
                1.0 / p.z(),
                p};
}

std::optional<WarpJacobian> warp_with_jacobian(const Point2& uv, double rho,
                                               const Pose& T_target_host, const Pinhole& cam) {
  const Point3 ph = backproject(cam, uv, rho);
  auto w = warp(uv, rho, T_target_host, cam);
  if (!w) return std::nullopt;
  const auto jp = ProjectionJacobian(cam, w->point);
  WarpJacobian out;
  out.warped = *w;
  out.d_pose = jp * PointTwistJacobian(w->point);
  out.d_rho = jp * (T_target_host.rotation() * (-ph / rho));
  return out;
}

FrameState box_plus(const FrameState& x, const FrameDelta& delta) {
  FrameState out;
  out.pose = Pose::Exp(delta.segment<6>(frame_index::kPose)) * x.pose;
  out.pose.Normalize();
  out.affine_left = {x.affine_left.a + delta(frame_index::kAffineLeft),
                     x.affine_left.b + delta(frame_index::kAffineLeft + 1)};
  out.affine_right = {x.affine_right.a + delta(frame_index::kAffineRight),
                      x.affine_right.b + delta(frame_index::kAffineRight + 1)};
  return out;
}

FrameDelta box_minus(const FrameState& a, const FrameState& b) {
  FrameDelta d;
  d.segment<6>(frame_index::kPose) = (a.pose * b.pose.inverse()).Log();
  d(frame_index::kAffineLeft) = a.affine_left.a - b.affine_left.a;
  d(frame_index::kAffineLeft + 1) = a.affine_left.b - b.affine_left.b;
  d(frame_index::kAffineRight) = a.affine_right.a - b.affine_right.a;
  d(frame_index::kAffineRight + 1) = a.affine_right.b - b.affine_right.b;
  return d;
}

}  // namespace dsol
