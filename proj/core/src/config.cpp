#include "rgbds/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

namespace rgbds {

ResidualMode parse_residual_mode(const std::string& name) {
  if (name == "PS") return ResidualMode::kPS;
  if (name == "PD") return ResidualMode::kPD;
  if (name == "GIDS") return ResidualMode::kGIDS;
  if (name == "GIDD") return ResidualMode::kGIDD;
  if (name == "GIDD_FULL" || name == "GIDD*") return ResidualMode::kGIDDFull;
  if (name == "PS_GIDD" || name == "PS+GIDD") return ResidualMode::kPSGIDD;
  if (name == "PS_GDD" || name == "PS+GDD") return ResidualMode::kPSGDD;
  throw ConfigError("unknown residual mode: " + name);
}

std::string to_string(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::kPS: return "PS";
    case ResidualMode::kPD: return "PD";
    case ResidualMode::kGIDS: return "GIDS";
    case ResidualMode::kGIDD: return "GIDD";
    case ResidualMode::kGIDDFull: return "GIDD_FULL";
    case ResidualMode::kPSGIDD: return "PS_GIDD";
    case ResidualMode::kPSGDD: return "PS_GDD";
  }
  return "?";
}

bool mode_uses_photometric(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::kPS:
    case ResidualMode::kPD:
    case ResidualMode::kPSGIDD:
    case ResidualMode::kPSGDD:
      return true;
    default:
      return false;
  }
}

bool mode_uses_geometric(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::kGIDS:
    case ResidualMode::kGIDD:
    case ResidualMode::kGIDDFull:
    case ResidualMode::kPSGIDD:
    case ResidualMode::kPSGDD:
      return true;
    default:
      return false;
  }
}

bool mode_geometric_uses_inverse_depth(ResidualMode mode) {
  return mode != ResidualMode::kPSGDD;
}

namespace {

using Field = std::variant<double*, int*, bool*, std::string*,
                           unsigned long*>;

std::map<std::string, Field> field_table(RunConfig& c) {
  return {
      {"camera.fx", &c.cam_fx},
      {"camera.fy", &c.cam_fy},
      {"camera.cx", &c.cam_cx},
      {"camera.cy", &c.cam_cy},
      {"camera.width", &c.cam_width},
      {"camera.height", &c.cam_height},
      {"camera.baseline", &c.cam_baseline},
      {"camera.disparity_sigma", &c.cam_disparity_sigma},
      {"depth.scale", &c.depth_scale},
      {"depth.min", &c.depth_min},
      {"depth.max", &c.depth_max},
      {"assoc.max_dt", &c.assoc_max_dt},
      {"canny.blur_sigma", &c.canny_blur_sigma},
      {"canny.low_percentile", &c.canny_low_percentile},
      {"canny.high_percentile", &c.canny_high_percentile},
      {"canny.budget", &c.canny_budget},
      {"tracking.mode", &c.tracking_mode},
      {"tracking.lambda", &c.tracking_lambda},
      {"tracking.gm_factor", &c.tracking_gm_factor},
      {"tracking.epsilon", &c.tracking_epsilon},
      {"tracking.max_iter_coarse", &c.tracking_max_iter_coarse},
      {"tracking.max_iter_fine", &c.tracking_max_iter_fine},
      {"tracking.min_residuals", &c.tracking_min_residuals},
      {"tracking.sigma_ph_init", &c.tracking_sigma_ph_init},
      {"tracking.sigma_ph_floor", &c.tracking_sigma_ph_floor},
      {"tracking.max_halvings", &c.tracking_max_halvings},
      {"tracking.condition_limit", &c.tracking_condition_limit},
      {"tracking.damping", &c.tracking_damping},
      {"tracking.depth_jump", &c.tracking_depth_jump},
      {"tracking.jitter_rot", &c.tracking_jitter_rot},
      {"tracking.jitter_trans", &c.tracking_jitter_trans},
      {"keyframe.min_overlap", &c.keyframe_min_overlap},
      {"keyframe.max_translation", &c.keyframe_max_translation},
      {"keyframe.max_rotation_deg", &c.keyframe_max_rotation_deg},
      {"mapping.min_baseline", &c.mapping_min_baseline},
      {"mapping.max_views", &c.mapping_max_views},
      {"mapping.rho_min", &c.mapping_rho_min},
      {"mapping.rho_max", &c.mapping_rho_max},
      {"mapping.samples", &c.mapping_samples},
      {"mapping.prior_sigmas", &c.mapping_prior_sigmas},
      {"mapping.ambiguity_ratio", &c.mapping_ambiguity_ratio},
      {"mapping.ambiguity_floor", &c.mapping_ambiguity_floor},
      {"mapping.max_sample_ssd", &c.mapping_max_sample_ssd},
      {"mapping.max_pool", &c.mapping_max_pool},
      {"loop.enabled", &c.loop_enabled},
      {"loop.ratio", &c.loop_ratio},
      {"loop.min_inliers", &c.loop_min_inliers},
      {"loop.ransac_confidence", &c.loop_ransac_confidence},
      {"loop.ransac_max_iters", &c.loop_ransac_max_iters},
      {"loop.inlier_px", &c.loop_inlier_px},
      {"loop.max_keypoints", &c.loop_max_keypoints},
      {"loop.fast_threshold", &c.loop_fast_threshold},
      {"loop.max_hamming", &c.loop_max_hamming},
      {"loop.temporal_exclusion", &c.loop_temporal_exclusion},
      {"loop.max_candidates", &c.loop_max_candidates},
      {"loop.reuse_enabled", &c.loop_reuse_enabled},
      {"loop.reuse_overlap", &c.loop_reuse_overlap},
      {"loop.reuse_sigma_ph", &c.loop_reuse_sigma_ph},
      {"loop.reuse_nsigma", &c.loop_reuse_nsigma},
      {"posegraph.max_iterations", &c.posegraph_max_iterations},
      {"posegraph.epsilon", &c.posegraph_epsilon},
      {"run.seed", &c.run_seed},
      {"run.deterministic", &c.run_deterministic},
      {"run.verbose", &c.run_verbose},
  };
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void assign(const std::string& key, Field field, const std::string& raw) {
  const std::string value = trim(raw);
  try {
    if (auto** d = std::get_if<double*>(&field)) {
      size_t pos = 0;
      **d = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
    } else if (auto** i = std::get_if<int*>(&field)) {
      size_t pos = 0;
      **i = std::stoi(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
    } else if (auto** u = std::get_if<unsigned long*>(&field)) {
      size_t pos = 0;
      **u = std::stoul(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
    } else if (auto** b = std::get_if<bool*>(&field)) {
      if (value == "true" || value == "1") {
        **b = true;
      } else if (value == "false" || value == "0") {
        **b = false;
      } else {
        throw std::invalid_argument(value);
      }
    } else {
      *std::get<std::string*>(field) = value;
    }
  } catch (const std::exception&) {
    throw ConfigError("invalid value for " + key + ": '" + value + "'");
  }
}

std::string format_value(const Field& field) {
  std::ostringstream os;
  if (auto* const* d = std::get_if<double*>(&field)) {
    os.precision(12);
    os << **d;
  } else if (auto* const* i = std::get_if<int*>(&field)) {
    os << **i;
  } else if (auto* const* u = std::get_if<unsigned long*>(&field)) {
    os << **u;
  } else if (auto* const* b = std::get_if<bool*>(&field)) {
    os << (**b ? "true" : "false");
  } else {
    os << *std::get<std::string*>(field);
  }
  return os.str();
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto table = field_table(*this);
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key: " + key);
  assign(key, it->second, value);
}

std::string RunConfig::serialize() const {
  auto table = field_table(const_cast<RunConfig&>(*this));
  std::ostringstream os;
  for (const auto& [key, field] : table) {
    os << key << " = " << format_value(field) << "\n";
  }
  return os.str();
}

void RunConfig::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << serialize();
}

void RunConfig::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string(name) + " must be positive");
    }
  };
  positive(cam_fx, "camera.fx");
  positive(cam_fy, "camera.fy");
  positive(cam_baseline, "camera.baseline");
  positive(cam_disparity_sigma, "camera.disparity_sigma");
  positive(depth_scale, "depth.scale");
  if (depth_min <= 0.0 || depth_max <= depth_min) {
    throw ConfigError("depth range must satisfy 0 < min < max");
  }
  if (tracking_lambda < 0.0) throw ConfigError("tracking.lambda must be >= 0");
  parse_residual_mode(tracking_mode);
  if (mapping_rho_min <= 0.0 || mapping_rho_max <= mapping_rho_min) {
    throw ConfigError("mapping search range must satisfy 0 < min < max");
  }
  if (mapping_samples < 4) throw ConfigError("mapping.samples must be >= 4");
  if (canny_low_percentile < 0.0 || canny_high_percentile > 1.0 ||
      canny_low_percentile > canny_high_percentile) {
    throw ConfigError("canny percentiles must satisfy 0 <= low <= high <= 1");
  }
  if (loop_ransac_confidence <= 0.0 || loop_ransac_confidence >= 1.0) {
    throw ConfigError("loop.ransac_confidence must be in (0, 1)");
  }
}

}  // namespace rgbds
