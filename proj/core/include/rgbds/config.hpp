#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rgbds {

/// Residual configuration of the tracker. The names follow the ablation
/// variants: photometric semi-dense/dense, geometric inverse-depth
/// semi-dense/subsampled/full-dense, and the combined modes (PS_GDD uses the
/// depth parametrization in the geometric term).
enum class ResidualMode { kPS, kPD, kGIDS, kGIDD, kGIDDFull, kPSGIDD, kPSGDD };

ResidualMode parse_residual_mode(const std::string& name);
std::string to_string(ResidualMode mode);
bool mode_uses_photometric(ResidualMode mode);
bool mode_uses_geometric(ResidualMode mode);
bool mode_geometric_uses_inverse_depth(ResidualMode mode);

/// Thrown on malformed files, unknown keys, and invalid values. The CLI maps
/// it to its config-error exit status.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One flat, echoable bag of every tunable in the pipeline. All numeric
/// defaults here are the authoritative ones; modules receive values from this
/// struct rather than hard-coding them.
struct RunConfig {
  // camera.*
  double cam_fx = 525.0;
  double cam_fy = 525.0;
  double cam_cx = 319.5;
  double cam_cy = 239.5;
  int cam_width = 640;
  int cam_height = 480;
  double cam_baseline = 0.075;
  double cam_disparity_sigma = 0.5;

  // depth.*
  double depth_scale = 5000.0;  // 16-bit ticks per meter
  double depth_min = 0.3;
  double depth_max = 7.0;

  // assoc.*
  double assoc_max_dt = 0.02;

  // canny.*
  double canny_blur_sigma = 1.5;
  double canny_low_percentile = 0.70;
  double canny_high_percentile = 0.90;
  int canny_budget = 8000;

  // tracking.*
  std::string tracking_mode = "PS_GIDD";
  double tracking_lambda = 1.0;
  double tracking_gm_factor = 2.0;  // Geman-McClure scale c = factor * sigma
  double tracking_epsilon = 1e-6;
  int tracking_max_iter_coarse = 20;
  int tracking_max_iter_fine = 10;
  int tracking_min_residuals = 20;
  double tracking_sigma_ph_init = 15.0;
  double tracking_sigma_ph_floor = 1.0;
  int tracking_max_halvings = 5;
  double tracking_condition_limit = 1e12;
  double tracking_damping = 1e-6;
  double tracking_depth_jump = 0.08;  // inverse-depth discontinuity, 1/m
  double tracking_jitter_rot = 0.005;    // first-frame prior jitter, radians
  double tracking_jitter_trans = 0.005;  // meters

  // keyframe.*
  double keyframe_min_overlap = 0.80;
  double keyframe_max_translation = 0.25;
  double keyframe_max_rotation_deg = 15.0;

  // mapping.*
  double mapping_min_baseline = 0.01;
  int mapping_max_views = 5;
  double mapping_rho_min = 1.0 / 15.0;
  double mapping_rho_max = 10.0;
  int mapping_samples = 64;
  double mapping_prior_sigmas = 3.0;
  double mapping_ambiguity_ratio = 1.3;
  double mapping_ambiguity_floor = 2.0;
  double mapping_max_sample_ssd = 50.0;  // per template sample per view
  int mapping_max_pool = 12;

  // loop.*
  bool loop_enabled = true;
  double loop_ratio = 0.5;
  int loop_min_inliers = 30;
  double loop_ransac_confidence = 0.99;
  int loop_ransac_max_iters = 500;
  double loop_inlier_px = 2.0;
  int loop_max_keypoints = 500;
  double loop_fast_threshold = 10.0;
  int loop_max_hamming = 80;
  int loop_temporal_exclusion = 2;
  int loop_max_candidates = 5;
  bool loop_reuse_enabled = true;
  double loop_reuse_overlap = 0.80;
  double loop_reuse_sigma_ph = 15.0;
  double loop_reuse_nsigma = 3.0;

  // posegraph.*
  int posegraph_max_iterations = 50;
  double posegraph_epsilon = 1e-9;

  // run.*
  unsigned long run_seed = 0;
  bool run_deterministic = false;
  bool run_verbose = false;

  ResidualMode mode() const { return parse_residual_mode(tracking_mode); }

  /// Parses `key = value` lines ('#' comments). Unknown keys and malformed
  /// values raise ConfigError.
  static RunConfig from_file(const std::string& path);

  /// Applies one `key=value` override (CLI --set).
  void set(const std::string& key, const std::string& value);

  /// Serializes every key with its current value, sorted by key.
  std::string serialize() const;
  void write_file(const std::string& path) const;

  /// Throws ConfigError when a value is out of its documented domain.
  void validate() const;
};

}  // namespace rgbds
