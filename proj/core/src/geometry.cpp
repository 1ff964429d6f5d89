#include "rgbds/geometry.hpp"

#include <cmath>

namespace rgbds {

namespace {
constexpr double kTinyAngle = 1e-12;
constexpr double kOrthoDrift = 1e-9;
}  // namespace

Pose Pose::exp(const Twist& xi) {
  const double angle = xi.omega.norm();
  Eigen::Matrix3d R;
  if (angle < kTinyAngle) {
    R = Eigen::Matrix3d::Identity() + skew(xi.omega);
  } else {
    R = Eigen::AngleAxisd(angle, xi.omega / angle).toRotationMatrix();
  }
  return Pose(R, xi.v);
}

Twist Pose::log() const {
  Eigen::AngleAxisd aa(rotation);
  double angle = aa.angle();
  if (angle >= M_PI - 1e-6) {
    throw std::domain_error("rotation log near pi is numerically singular");
  }
  Twist xi;
  xi.omega = angle < kTinyAngle ? Eigen::Vector3d::Zero()
                                : Eigen::Vector3d(angle * aa.axis());
  xi.v = translation;
  return xi;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out(rotation * rhs.rotation,
           rotation * rhs.translation + translation);
  const Eigen::Matrix3d gram =
      out.rotation.transpose() * out.rotation - Eigen::Matrix3d::Identity();
  if (gram.cwiseAbs().maxCoeff() > kOrthoDrift) {
    out = out.orthonormalized();
  }
  return out;
}

double Pose::rotation_angle() const {
  const double c = std::clamp((rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d gram =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (gram.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose Pose::orthonormalized() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return Pose(q.toRotationMatrix(), translation);
}

void PinholeIntrinsics::validate() const {
  if (fx <= 0.0 || fy <= 0.0) {
    throw std::invalid_argument("focal lengths must be positive");
  }
  if (cx <= 0.0 || cx >= width || cy <= 0.0 || cy >= height) {
    throw std::invalid_argument("principal point outside image");
  }
  if (baseline <= 0.0) {
    throw std::invalid_argument("baseline must be positive");
  }
  if (disparity_sigma <= 0.0) {
    throw std::invalid_argument("disparity sigma must be positive");
  }
}

std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p_cam,
                                       const PinholeIntrinsics& intr) {
  if (p_cam.z() <= 0.0) return std::nullopt;
  return Eigen::Vector2d(intr.fx * p_cam.x() / p_cam.z() + intr.cx,
                         intr.fy * p_cam.y() / p_cam.z() + intr.cy);
}

Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double rho,
                            const PinholeIntrinsics& intr) {
  if (rho <= 0.0) {
    throw std::invalid_argument("inverse depth must be positive");
  }
  const double z = 1.0 / rho;
  return Eigen::Vector3d((pixel.x() - intr.cx) / intr.fx * z,
                         (pixel.y() - intr.cy) / intr.fy * z, z);
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p_cam,
                                                const PinholeIntrinsics& intr) {
  const double iz = 1.0 / p_cam.z();
  const double iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> j;
  // clang-format off
  j << intr.fx * iz, 0.0,           -intr.fx * p_cam.x() * iz2,
       0.0,          intr.fy * iz,  -intr.fy * p_cam.y() * iz2;
  // clang-format on
  return j;
}

double sigma_depth(double z, const PinholeIntrinsics& intr) {
  if (z <= 0.0) throw std::invalid_argument("depth must be positive");
  return z * z * intr.disparity_sigma / (intr.fx * intr.baseline);
}

double sigma_inverse_depth(const PinholeIntrinsics& intr) {
  return sigma_inverse_depth(intr, intr.baseline);
}

double sigma_inverse_depth(const PinholeIntrinsics& intr, double baseline) {
  if (baseline <= 0.0) throw std::invalid_argument("baseline must be positive");
  return intr.disparity_sigma / (intr.fx * baseline);
}

}  // namespace rgbds
