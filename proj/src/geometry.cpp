#include "sfsm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sfsm/errors.hpp"

namespace sfsm {

CameraModel::CameraModel(double fx, double fy, double cx, double cy, int width, int height)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height) {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
    throw ValidationError("camera: focal lengths must be positive and finite");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    throw ValidationError("camera: principal point must be finite");
  if (width <= 0 || height <= 0) throw ValidationError("camera: image size must be positive");
}

Mat3 CameraModel::K() const {
  Mat3 k;
  k << fx_, 0.0, cx_, 0.0, fy_, cy_, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraModel::K_inverse() const {
  Mat3 k;
  k << 1.0 / fx_, 0.0, -cx_ / fx_, 0.0, 1.0 / fy_, -cy_ / fy_, 0.0, 0.0, 1.0;
  return k;
}

CameraModel CameraModel::from_fov(double fov_deg, int width, int height) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0))
    throw ValidationError("camera: fov must lie in (0, 180) degrees");
  const double half = 0.5 * fov_deg * std::numbers::pi / 180.0;
  const double f = 0.5 * width / std::tan(half);
  return CameraModel(f, f, 0.5 * width, 0.5 * height, width, height);
}

NormalizedPoint normalize_homogeneous(const Vec3& v) {
  if (std::abs(v.z()) <= kDepthEpsilon)
    throw DegenerateDepth("normalize: third component is zero");
  return {v.x() / v.z(), v.y() / v.z()};
}

NormalizedPoint pixel_to_camera(const CameraModel& cam, const PixelPoint& p) {
  return {(p.u - cam.cx()) / cam.fx(), (p.v - cam.cy()) / cam.fy()};
}

PixelPoint camera_to_pixel(const CameraModel& cam, const NormalizedPoint& x) {
  return {cam.fx() * x.x + cam.cx(), cam.fy() * x.y + cam.cy()};
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Mat3 small_rotation_matrix(const RotationVector& theta) {
  return Mat3::Identity() + skew(theta);
}

Mat3 exact_rotation(const RotationVector& theta) {
  const double angle2 = theta.squaredNorm();
  const Mat3 W = skew(theta);
  double a, b;
  if (angle2 < 1e-10) {
    // Taylor terms of sin(t)/t and (1 - cos(t))/t^2.
    a = 1.0 - angle2 / 6.0;
    b = 0.5 - angle2 / 24.0;
  } else {
    const double angle = std::sqrt(angle2);
    a = std::sin(angle) / angle;
    b = (1.0 - std::cos(angle)) / angle2;
  }
  return Mat3::Identity() + a * W + b * W * W;
}

RotationVector rotation_log(const Mat3& R) {
  const double cos_angle = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (angle < 1e-7) return 0.5 * w;
  if (std::numbers::pi - angle < 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    const Mat3 S = 0.5 * (R + Mat3::Identity());
    int k;
    S.diagonal().maxCoeff(&k);
    Vec3 axis = S.col(k) / std::sqrt(std::max(S(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(w) < 0.0) axis = -axis;
    return angle * axis;
  }
  return 0.5 * angle / std::sin(angle) * w;
}

double softplus(double omega, const SoftPlusParams& sp) {
  const double a = sp.alpha;
  return std::max(0.0, omega) + std::log1p(std::exp(-std::abs(a * omega))) / a;
}

double softplus_derivative(double omega, const SoftPlusParams& sp) {
  const double z = sp.alpha * omega;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus_inverse(double w, const SoftPlusParams& sp) {
  if (!(w > 0.0)) throw NonPositiveDepth("softplus_inverse: w must be positive, got " + std::to_string(w));
  const double a = sp.alpha;
  if (a * w > 30.0) return w;
  return std::log(std::expm1(a * w)) / a;
}

Vec3 direction_vector(double psi, double phi) {
  const double cp = std::cos(phi);
  return {cp * std::sin(psi), -std::sin(phi), cp * std::cos(psi)};
}

Eigen::Matrix<double, 3, 2> direction_vector_jacobian(double psi, double phi) {
  const double cps = std::cos(psi), sps = std::sin(psi);
  const double cph = std::cos(phi), sph = std::sin(phi);
  Eigen::Matrix<double, 3, 2> J;
  J << cph * cps, -sph * sps,
       0.0,       -cph,
       -cph * sps, -sph * cps;
  return J;
}

AzimuthElevation point_to_azel(const Vec3& y) {
  const double norm = y.norm();
  if (!(y.z() > 0.0) || norm <= kDepthEpsilon)
    throw DegenerateDepth("point_to_azel: point must lie in front of the reference camera");
  AzimuthElevation out;
  out.psi = std::atan2(y.x(), y.z());
  out.phi = std::atan2(-y.y(), std::hypot(y.x(), y.z()));
  out.rho = 1.0 / norm;
  return out;
}

}  // namespace sfsm
