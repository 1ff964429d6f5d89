#pragma once

#include <Eigen/Core>

#include <array>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/geometry.hpp"
#include "rgbds/image.hpp"
#include "rgbds/mapping.hpp"

namespace rgbds {

/// Per-frame tracker state. `gain` and `brightness` model the current frame's
/// appearance relative to the keyframe template as I_f ~= gain * I_k -
/// brightness, so a frame with intensities 1.2 * I - 10 is recovered as
/// gain 1.2, brightness 10. sigma_ph is the robust photometric scale carried
/// from frame to frame (MAD of the previous frame's residuals).
struct TrackingState {
  Pose pose;  // T_w_f, camera to world
  double gain = 1.0;
  double brightness = 0.0;
  double sigma_ph = 15.0;
  int ref_keyframe_id = -1;
  std::array<int, kPyramidLevels> level_iterations{};
  bool converged = false;
  bool lost = false;
};

/// Solver knobs of the residual minimization (one value set per run).
struct ResidualConfig {
  ResidualMode mode = ResidualMode::kPSGIDD;
  double lambda = 1.0;      // weight of the geometric term
  double gm_factor = 2.0;   // Geman-McClure scale c = gm_factor * sigma
  int max_iter_coarse = 20; // two coarsest pyramid levels
  int max_iter_fine = 10;   // two finest levels
  double epsilon = 1e-6;    // twist-norm convergence threshold
  int min_residuals = 20;   // fewer usable residuals at the finest level = lost
  double sigma_ph_floor = 1.0;
  int max_halvings = 5;
  double condition_limit = 1e12;
  double damping = 1e-6;
  double depth_jump = 0.08;  // see geometric_residuals

  static ResidualConfig from(const RunConfig& cfg);
};

/// Summary of the final residual evaluation at the finest level.
struct ResidualStats {
  double sigma_ph = 0.0;
  double sigma_g = 0.0;
  double inlier_fraction = 0.0;
  double cost = 0.0;  // weighted, whitened
  int residual_count = 0;
  std::vector<float> raw_photometric;  // signed raw residuals, feeds the MAD
};

/// One residual with the jacobian of its *raw* value w.r.t.
/// (twist omega, twist v, gain, brightness); whitening by `sigma` and the
/// IRLS weight are kept separate.
struct ResidualSample {
  int point_index = 0;
  double raw = 0.0;
  double sigma = 1.0;
  double weight = 1.0;
  Eigen::Matrix<double, 1, 8> jacobian = Eigen::Matrix<double, 1, 8>::Zero();
};

/// IRLS weight of the Geman-McClure cost, w(r) = 1 / (1 + (r/c)^2)^2 with
/// c = k * sigma. Redescending: w(0) = 1, w(c) = 1/4, w(10c) < 1e-3.
double geman_mcclure_weight(double r, double sigma, double k);

/// Robust scale from the previous frame's raw residuals:
/// 1.482 * median(|r - median(r)|), floored; empty input keeps the previous
/// value.
double update_sigma_ph(const std::vector<float>& raw_residuals,
                       double previous, double floor_value);

/// Photometric residuals r = gain * I_k - brightness - I_f(warped) over the
/// keyframe's point set at one pyramid level. The pose jacobian is the
/// keyframe-template (inverse compositional) one, precomputed per point.
/// Out-of-bounds and behind-camera projections are dropped.
std::vector<ResidualSample> photometric_residuals(const Frame& frame,
                                                  const Keyframe& kf,
                                                  const TrackingState& state,
                                                  const ResidualConfig& cfg,
                                                  int level);

/// Geometric residuals r = 1/z_warped - D_f(warped pixel) in the inverse
/// depth parametrization (PS_GDD replaces both sides with plain depth).
/// The frame's depth map is sampled bilinearly only where all four neighbors
/// are valid and agree within the depth_jump threshold, so depths are never
/// blended across a discontinuity; elsewhere the sample falls back to the
/// nearest neighbor with a zero map gradient. Jacobians are recomputed at
/// the current warp and include the map gradient where bilinear sampling is
/// active.
std::vector<ResidualSample> geometric_residuals(const Frame& frame,
                                                const Keyframe& kf,
                                                const TrackingState& state,
                                                const ResidualConfig& cfg,
                                                int level);

/// Coarse-to-fine Gauss-Newton over the 4-level pyramid with the combined
/// photometric + lambda * geometric functional, Geman-McClure IRLS weights
/// and the inverse-compositional update T <- T * exp(delta)^-1. The keyframe
/// point cloud stays fixed. Steps that would raise the fixed-weight cost are
/// halved up to max_halvings times, then the level terminates.
TrackingState track_frame(const Frame& frame, const Keyframe& kf,
                          const TrackingState& init, const ResidualConfig& cfg,
                          ResidualStats* stats = nullptr);

}  // namespace rgbds
