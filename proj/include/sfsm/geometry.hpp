#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sfsm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation vector (axis times angle, radians).
using RotationVector = Eigen::Vector3d;

inline constexpr double kDepthEpsilon = 1e-12;

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  bool operator==(const PixelPoint&) const = default;
};

/// Camera-frame coordinates on the z = 1 plane.
struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const NormalizedPoint&) const = default;
  Vec3 homogeneous() const { return {x, y, 1.0}; }
};

/// Pinhole intrinsics without skew. The constructor rejects non-positive
/// focal lengths and image sizes.
class CameraModel {
 public:
  CameraModel(double fx, double fy, double cx, double cy, int width, int height);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }

  Mat3 K() const;
  Mat3 K_inverse() const;

  bool contains(const PixelPoint& p) const {
    return p.u >= 0.0 && p.u <= width_ && p.v >= 0.0 && p.v <= height_;
  }

  /// Square-pixel camera with the principal point at the image center.
  static CameraModel from_fov(double fov_deg, int width, int height);

  bool operator==(const CameraModel&) const = default;

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
};

NormalizedPoint normalize_homogeneous(const Vec3& v);

NormalizedPoint pixel_to_camera(const CameraModel& cam, const PixelPoint& p);
PixelPoint camera_to_pixel(const CameraModel& cam, const NormalizedPoint& x);

Mat3 skew(const Vec3& v);

/// First-order rotation I + [theta]x. Not orthonormal in general.
Mat3 small_rotation_matrix(const RotationVector& theta);

/// Exponential map so(3) -> SO(3).
Mat3 exact_rotation(const RotationVector& theta);

/// Logarithm SO(3) -> so(3); inverse of exact_rotation for angles below pi.
RotationVector rotation_log(const Mat3& R);

/// Soft-plus sharpness. Must be positive.
struct SoftPlusParams {
  double alpha = 10.0;
};

/// max(0, w) + log1p(exp(-|alpha w|)) / alpha
double softplus(double omega, const SoftPlusParams& sp);

/// d softplus / d omega, a logistic sigmoid of alpha * omega.
double softplus_derivative(double omega, const SoftPlusParams& sp);

/// Throws NonPositiveDepth for w <= 0.
double softplus_inverse(double w, const SoftPlusParams& sp);

/// Unit direction from azimuth psi and elevation phi:
/// [cos(phi) sin(psi), -sin(phi), cos(phi) cos(psi)].
Vec3 direction_vector(double psi, double phi);

/// Partial derivatives of direction_vector; columns are d/dpsi and d/dphi.
Eigen::Matrix<double, 3, 2> direction_vector_jacobian(double psi, double phi);

struct AzimuthElevation {
  double psi = 0.0;
  double phi = 0.0;
  double rho = 0.0;  // inverse of the Euclidean distance
};

/// Throws DegenerateDepth when z <= 0 or the point is at the origin.
AzimuthElevation point_to_azel(const Vec3& y);

}  // namespace sfsm
