#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <stdexcept>

namespace rgbds {

/// Tangent-space increment: angular part in radians, translational part in
/// meters. The translational part is a plain offset, not a screw velocity
/// (see Pose::exp).
struct Twist {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();

  Twist() = default;
  Twist(const Eigen::Vector3d& w, const Eigen::Vector3d& t) : omega(w), v(t) {}

  static Twist from_vector(const Eigen::Matrix<double, 6, 1>& xi) {
    return Twist(xi.head<3>(), xi.tail<3>());
  }
  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> xi;
    xi << omega, v;
    return xi;
  }
  double norm() const { return vector().norm(); }
  bool is_finite() const { return omega.allFinite() && v.allFinite(); }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

/// Rigid transform. T_ab maps points expressed in frame b into frame a:
/// p_a = R * p_b + t.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& R, const Eigen::Vector3d& t)
      : rotation(R), translation(t) {}

  static Pose identity() { return Pose(); }

  /// Minimal-parametrization exponential: Rodrigues rotation from omega and
  /// the translation increment copied verbatim. This is deliberately not the
  /// full SE(3) exponential (no left-Jacobian on v); the tracker's update rule
  /// is derived against this form.
  static Pose exp(const Twist& xi);

  /// Inverse of exp: SO(3) log of the rotation, translation copied.
  /// Throws std::domain_error when the rotation angle is within 1e-6 of pi,
  /// where the axis is numerically unstable.
  Twist log() const;

  Pose inverse() const {
    return Pose(rotation.transpose(), -(rotation.transpose() * translation));
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  /// Composition re-orthonormalizes lazily: only when accumulated drift in
  /// R^T R exceeds 1e-9.
  Pose operator*(const Pose& rhs) const;

  double rotation_angle() const;
  bool is_valid(double tol = 1e-9) const;
  Pose orthonormalized() const;
};

/// Pinhole camera with the structured-light sensor model attached: `baseline`
/// is the emitter-camera distance b and `disparity_sigma` the matching noise
/// sigma_d, both feeding the depth covariance model below.
struct PinholeIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;
  double baseline = 0.075;        // meters
  double disparity_sigma = 0.5;   // pixels

  void validate() const;

  /// Intrinsics of the 2x2 box-downsampled image. Pixel centers map as
  /// u_half = (u - 0.5) / 2.
  PinholeIntrinsics halved() const {
    PinholeIntrinsics h = *this;
    h.fx = fx / 2.0;
    h.fy = fy / 2.0;
    h.cx = (cx - 0.5) / 2.0;
    h.cy = (cy - 0.5) / 2.0;
    h.width = width / 2;
    h.height = height / 2;
    return h;
  }
};

/// Inverse depth with its first-order standard deviation, both in 1/m.
struct InverseDepthEstimate {
  double rho = 0.0;
  double sigma = 0.0;
};

/// Pinhole projection. Empty when the point is on or behind the image plane.
std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p_cam,
                                       const PinholeIntrinsics& intr);

/// Point at depth 1/rho along the ray through `pixel`. Throws
/// std::invalid_argument for rho <= 0.
Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double rho,
                            const PinholeIntrinsics& intr);

/// Jacobian of project() w.r.t. the camera-frame point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p_cam,
                                                const PinholeIntrinsics& intr);

/// First-order depth noise of a structured-light sensor:
/// sigma_z = z^2 * sigma_d / (fx * b). Grows quadratically with depth.
double sigma_depth(double z, const PinholeIntrinsics& intr);

/// Inverse-depth noise: sigma_rho = sigma_d / (fx * b), independent of depth
/// because inverse depth is linear in disparity.
double sigma_inverse_depth(const PinholeIntrinsics& intr);

/// Same model with an explicit baseline (mapping uses the multi-view baseline
/// instead of the sensor one).
double sigma_inverse_depth(const PinholeIntrinsics& intr, double baseline);

}  // namespace rgbds
