#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rgbds/geometry.hpp"

using namespace rgbds;

namespace {

Pose random_pose(std::mt19937_64& rng, double max_angle = 2.5,
                 double max_trans = 5.0) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::Vector3d axis(uni(rng), uni(rng), uni(rng));
  while (axis.norm() < 1e-6) axis = Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
  axis.normalize();
  std::uniform_real_distribution<double> mag(0.0, max_angle);
  Twist xi;
  xi.omega = mag(rng) * axis;
  xi.v = max_trans * Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
  return Pose::exp(xi);
}

// Truncated-series matrix exponential of the skew matrix, the independent
// oracle for the Rodrigues path.
Eigen::Matrix3d expm_series(const Eigen::Vector3d& omega) {
  const Eigen::Matrix3d A = skew(omega);
  Eigen::Matrix3d term = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sum = Eigen::Matrix3d::Identity();
  for (int k = 1; k <= 30; ++k) {
    term = (term * A) / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

PinholeIntrinsics default_intr() {
  PinholeIntrinsics intr;
  intr.fx = intr.fy = 525.0;
  intr.cx = 319.5;
  intr.cy = 239.5;
  intr.baseline = 0.075;
  intr.disparity_sigma = 0.5;
  return intr;
}

}  // namespace

TEST_CASE("exp of a zero twist is the identity") {
  const Pose p = Pose::exp(Twist());
  CHECK((p.rotation - Eigen::Matrix3d::Identity()).norm() == 0.0);
  CHECK(p.translation.norm() == 0.0);
}

TEST_CASE("quarter turn about z maps x to y") {
  Twist xi;
  xi.omega = Eigen::Vector3d(0, 0, M_PI / 2);
  const Pose p = Pose::exp(xi);
  const Eigen::Vector3d rotated = p * Eigen::Vector3d(1, 0, 0);
  CHECK((rotated - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("exp matches the series matrix exponential") {
  const Eigen::Vector3d omega(0.1, -0.2, 0.3);
  const Pose p = Pose::exp(Twist(omega, Eigen::Vector3d::Zero()));
  CHECK((p.rotation - expm_series(omega)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("exp keeps the translation increment verbatim") {
  // The parametrization composes a Rodrigues rotation with a plain
  // translation; there is no coupling term.
  Twist xi;
  xi.omega = Eigen::Vector3d(0.3, 0.1, -0.2);
  xi.v = Eigen::Vector3d(1.0, -2.0, 0.5);
  const Pose p = Pose::exp(xi);
  CHECK((p.translation - xi.v).norm() == 0.0);
}

TEST_CASE("log of identity is the zero twist") {
  CHECK(Pose::identity().log().norm() == 0.0);
}

TEST_CASE("axis-aligned log round trip") {
  Twist xi;
  xi.omega = Eigen::Vector3d(0.5, 0, 0);
  const Twist back = Pose::exp(xi).log();
  CHECK((back.omega - xi.omega).norm() < 1e-10);
}

TEST_CASE("exp/log round trip over random twists") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Vector3d axis(uni(rng), uni(rng), uni(rng));
    if (axis.norm() < 1e-9) continue;
    axis.normalize();
    std::uniform_real_distribution<double> mag(0.0, 3.0);
    Twist xi;
    xi.omega = mag(rng) * axis;
    xi.v = Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
    const Pose p = Pose::exp(xi);
    const Twist back = p.log();
    CHECK((back.omega - xi.omega).norm() < 1e-9);
    CHECK((back.v - xi.v).norm() == 0.0);
    const Pose again = Pose::exp(back);
    CHECK((again.rotation - p.rotation).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("log near pi signals the singularity") {
  Twist xi;
  xi.omega = Eigen::Vector3d(M_PI - 1e-9, 0, 0);
  const Pose p = Pose::exp(xi);
  CHECK_THROWS_AS(p.log(), std::domain_error);
}

TEST_CASE("compose with inverse gives identity") {
  std::mt19937_64 rng(11);
  const Pose p = random_pose(rng);
  const Pose id = p * p.inverse();
  CHECK((id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK(id.translation.norm() < 1e-12);
}

TEST_CASE("identity is the neutral element") {
  std::mt19937_64 rng(12);
  const Pose p = random_pose(rng);
  const Pose q = Pose::identity() * p;
  CHECK((q.rotation - p.rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((q.translation - p.translation).norm() == 0.0);
}

TEST_CASE("composition is associative") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose c = random_pose(rng);
    const Pose left = (a * b) * c;
    const Pose right = a * (b * c);
    CHECK((left.rotation - right.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((left.translation - right.translation).norm() < 1e-12);
  }
}

TEST_CASE("orthonormality survives a million compositions") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Pose p = Pose::identity();
  for (int i = 0; i < 1000000; ++i) {
    Twist xi;
    xi.omega = 0.01 * Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
    xi.v = Eigen::Vector3d::Zero();
    p = p * Pose::exp(xi);
  }
  const Eigen::Matrix3d gram =
      p.rotation.transpose() * p.rotation - Eigen::Matrix3d::Identity();
  CHECK(gram.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(p.is_valid());
}

TEST_CASE("projection of the principal axis hits the principal point") {
  const auto intr = default_intr();
  const auto px = project(Eigen::Vector3d(0, 0, 2), intr);
  REQUIRE(px.has_value());
  CHECK(px->x() == doctest::Approx(319.5).epsilon(1e-12));
  CHECK(px->y() == doctest::Approx(239.5).epsilon(1e-12));
}

TEST_CASE("projection arithmetic") {
  const auto intr = default_intr();
  const auto px = project(Eigen::Vector3d(0.5, 0, 2), intr);
  REQUIRE(px.has_value());
  // u = 525 * 0.25 + 319.5
  CHECK(px->x() == doctest::Approx(450.75).epsilon(1e-12));
  CHECK(px->y() == doctest::Approx(239.5).epsilon(1e-12));
}

TEST_CASE("points behind the camera are rejected") {
  const auto intr = default_intr();
  CHECK_FALSE(project(Eigen::Vector3d(0, 0, -1), intr).has_value());
  CHECK_FALSE(project(Eigen::Vector3d(0.3, 0.1, 0.0), intr).has_value());
}

TEST_CASE("backproject inverts project on the valid domain") {
  const auto intr = default_intr();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ux(0.0, intr.width - 1.0);
  std::uniform_real_distribution<double> uy(0.0, intr.height - 1.0);
  std::uniform_real_distribution<double> ur(0.1, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d px(ux(rng), uy(rng));
    const double rho = ur(rng);
    const Eigen::Vector3d p = backproject(px, rho, intr);
    const auto back = project(p, intr);
    REQUIRE(back.has_value());
    CHECK((*back - px).norm() < 1e-12);
    CHECK(p.z() == doctest::Approx(1.0 / rho).epsilon(1e-12));
  }
}

TEST_CASE("backproject at the principal point runs down the axis") {
  const auto intr = default_intr();
  const Eigen::Vector3d p = backproject({319.5, 239.5}, 0.5, intr);
  CHECK((p - Eigen::Vector3d(0, 0, 2)).norm() < 1e-12);
}

TEST_CASE("backproject rejects non-positive inverse depth") {
  const auto intr = default_intr();
  CHECK_THROWS_AS(backproject({10, 10}, 0.0, intr), std::invalid_argument);
  CHECK_THROWS_AS(backproject({10, 10}, -1.0, intr), std::invalid_argument);
}

TEST_CASE("depth noise model arithmetic") {
  const auto intr = default_intr();
  // z^2 sigma_d / (f b) = 4 * 0.5 / 39.375
  CHECK(sigma_depth(2.0, intr) == doctest::Approx(0.050794).epsilon(1e-4));
  // doubling depth quadruples the noise
  CHECK(sigma_depth(4.0, intr) ==
        doctest::Approx(4.0 * sigma_depth(2.0, intr)).epsilon(1e-12));
}

TEST_CASE("inverse-depth noise is constant and matches the arithmetic") {
  const auto intr = default_intr();
  CHECK(sigma_inverse_depth(intr) == doctest::Approx(0.012698).epsilon(1e-4));
}

TEST_CASE("noise models agree with finite-difference propagation") {
  const auto intr = default_intr();
  const double fb = intr.fx * intr.baseline;
  for (const double z : {0.5, 1.0, 2.0, 4.5, 6.5}) {
    const double d = fb / z;
    const double h = 1e-4;
    const double dz_dd = (fb / (d + h) - fb / (d - h)) / (2.0 * h);
    const double drho_dd = ((d + h) / fb - (d - h) / fb) / (2.0 * h);
    const double sigma_z_fd = std::abs(dz_dd) * intr.disparity_sigma;
    const double sigma_rho_fd = std::abs(drho_dd) * intr.disparity_sigma;
    CHECK(sigma_depth(z, intr) ==
          doctest::Approx(sigma_z_fd).epsilon(1e-4));
    CHECK(sigma_inverse_depth(intr) ==
          doctest::Approx(sigma_rho_fd).epsilon(1e-4));
  }
}

TEST_CASE("sigma_z equals sigma_rho scaled by z squared") {
  const auto intr = default_intr();
  for (const double z : {0.3, 1.0, 2.7, 6.9}) {
    CHECK(sigma_depth(z, intr) ==
          doctest::Approx(z * z * sigma_inverse_depth(intr)).epsilon(1e-12));
  }
}

TEST_CASE("intrinsics validation rejects bad values") {
  PinholeIntrinsics intr = default_intr();
  intr.fx = -1.0;
  CHECK_THROWS_AS(intr.validate(), std::invalid_argument);
  intr = default_intr();
  intr.baseline = 0.0;
  CHECK_THROWS_AS(intr.validate(), std::invalid_argument);
  intr = default_intr();
  intr.cx = 700.0;
  CHECK_THROWS_AS(intr.validate(), std::invalid_argument);
}
