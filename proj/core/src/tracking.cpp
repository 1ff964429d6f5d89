#include "rgbds/tracking.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace rgbds {

ResidualConfig ResidualConfig::from(const RunConfig& cfg) {
  ResidualConfig rc;
  rc.mode = cfg.mode();
  rc.lambda = cfg.tracking_lambda;
  rc.gm_factor = cfg.tracking_gm_factor;
  rc.max_iter_coarse = cfg.tracking_max_iter_coarse;
  rc.max_iter_fine = cfg.tracking_max_iter_fine;
  rc.epsilon = cfg.tracking_epsilon;
  rc.min_residuals = cfg.tracking_min_residuals;
  rc.sigma_ph_floor = cfg.tracking_sigma_ph_floor;
  rc.max_halvings = cfg.tracking_max_halvings;
  rc.condition_limit = cfg.tracking_condition_limit;
  rc.damping = cfg.tracking_damping;
  rc.depth_jump = cfg.tracking_depth_jump;
  return rc;
}

double geman_mcclure_weight(double r, double sigma, double k) {
  const double x = r / (k * sigma);
  const double d = 1.0 + x * x;
  return 1.0 / (d * d);
}

double update_sigma_ph(const std::vector<float>& raw_residuals,
                       double previous, double floor_value) {
  if (raw_residuals.empty()) return previous;
  std::vector<float> work(raw_residuals);
  const size_t mid = work.size() / 2;
  std::nth_element(work.begin(), work.begin() + mid, work.end());
  const float med = work[mid];
  for (float& r : work) r = std::abs(r - med);
  std::nth_element(work.begin(), work.begin() + mid, work.end());
  return std::max(floor_value, 1.482 * static_cast<double>(work[mid]));
}

namespace {

struct Warp {
  Pose T_f_k;        // keyframe camera -> frame camera
  double gain;
  double brightness;
};

Warp make_warp(const Keyframe& kf, const TrackingState& state) {
  return Warp{state.pose.inverse() * kf.pose, state.gain, state.brightness};
}

// Depth-map sample with its in-image gradient. Bilinear only when the 2x2
// cell is fully valid and spans no inverse-depth discontinuity; otherwise the
// nearest valid neighbor with a zero gradient (never blending across edges).
struct TargetSample {
  double value;
  Eigen::Matrix<double, 1, 2> grad;
};

inline bool sample_target(const DepthImage& native, const DepthImage& inv,
                          double u, double v, double jump,
                          TargetSample* out) {
  if (u < 0.0 || v < 0.0 || u > native.width - 1 || v > native.height - 1) {
    return false;
  }
  const int x0 = std::min(static_cast<int>(u), native.width - 2);
  const int y0 = std::min(static_cast<int>(v), native.height - 2);
  const double fx = u - x0;
  const double fy = v - y0;
  const float n00 = native.at(x0, y0), n10 = native.at(x0 + 1, y0);
  const float n01 = native.at(x0, y0 + 1), n11 = native.at(x0 + 1, y0 + 1);
  if (n00 > 0.0f && n10 > 0.0f && n01 > 0.0f && n11 > 0.0f) {
    const float i00 = inv.at(x0, y0), i10 = inv.at(x0 + 1, y0);
    const float i01 = inv.at(x0, y0 + 1), i11 = inv.at(x0 + 1, y0 + 1);
    const float lo = std::min(std::min(i00, i10), std::min(i01, i11));
    const float hi = std::max(std::max(i00, i10), std::max(i01, i11));
    if (hi - lo <= jump) {
      out->value = (1.0 - fx) * (1.0 - fy) * n00 + fx * (1.0 - fy) * n10 +
                   (1.0 - fx) * fy * n01 + fx * fy * n11;
      out->grad(0, 0) = (1.0 - fy) * (n10 - n00) + fy * (n11 - n01);
      out->grad(0, 1) = (1.0 - fx) * (n01 - n00) + fx * (n11 - n10);
      return true;
    }
  }
  const int xn = static_cast<int>(std::lround(u));
  const int yn = static_cast<int>(std::lround(v));
  if (!native.in_bounds(xn, yn)) return false;
  const float d = native.at(xn, yn);
  if (d <= 0.0f) return false;
  out->value = d;
  out->grad.setZero();
  return true;
}

void collect_photometric(const Frame& frame, const Keyframe& kf,
                         const Warp& warp, double sigma_ph, int level,
                         std::vector<ResidualSample>& out) {
  out.clear();
  const std::vector<MapPoint>& points = kf.photometric[level];
  const GrayImage& img_f = frame.pyramid.gray[level];
  const PinholeIntrinsics& intr = frame.pyramid.intrinsics[level];
  out.reserve(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    const MapPoint& mp = points[i];
    const Eigen::Vector3d p_f = warp.T_f_k * mp.p_cam;
    const auto uv = project(p_f, intr);
    if (!uv || uv->x() < 0.0 || uv->y() < 0.0 || uv->x() > img_f.width - 1 ||
        uv->y() > img_f.height - 1) {
      continue;
    }
    ResidualSample s;
    s.point_index = static_cast<int>(i);
    s.raw = warp.gain * mp.intensity - warp.brightness -
            sample_bilinear(img_f, uv->x(), uv->y());
    s.sigma = sigma_ph;
    s.jacobian.leftCols<6>() = warp.gain * mp.j_pose;
    s.jacobian(0, 6) = mp.intensity;  // d r / d gain
    s.jacobian(0, 7) = -1.0;          // d r / d brightness
    out.push_back(s);
  }
}

void collect_geometric(const Frame& frame, const Keyframe& kf,
                       const Warp& warp, const ResidualConfig& cfg, int level,
                       std::vector<ResidualSample>& out) {
  out.clear();
  const bool inverse_param = mode_geometric_uses_inverse_depth(cfg.mode);
  const std::vector<GridPoint>& points = kf.geometric_points(cfg.mode, level);
  const DepthImage& target = inverse_param ? frame.pyramid.inv_depth[level]
                                           : frame.pyramid.depth[level];
  const PinholeIntrinsics& intr = frame.pyramid.intrinsics[level];
  const Eigen::Matrix3d& R = warp.T_f_k.rotation;
  out.reserve(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    const GridPoint& gp = points[i];
    const Eigen::Vector3d p_f = warp.T_f_k * gp.p_cam;
    const auto uv = project(p_f, intr);
    if (!uv) continue;
    TargetSample measured;
    if (!sample_target(target, frame.pyramid.inv_depth[level], uv->x(),
                       uv->y(), cfg.depth_jump, &measured)) {
      continue;
    }

    // d p_f / d delta = R [ [p]x | -I ] at delta = 0.
    Eigen::Matrix<double, 3, 6> dp;
    dp.leftCols<3>() = R * skew(gp.p_cam);
    dp.rightCols<3>() = -R;
    const Eigen::Matrix<double, 1, 6> dz_f = dp.row(2);
    // Map-gradient chain: d D_f(pi(p_f)) / d delta.
    const Eigen::Matrix<double, 1, 6> d_map =
        measured.grad * projection_jacobian(p_f, intr) * dp;

    ResidualSample s;
    s.point_index = static_cast<int>(i);
    const double z = p_f.z();
    if (inverse_param) {
      s.raw = 1.0 / z - measured.value;
      s.sigma = gp.sigma_rho;
      s.jacobian.leftCols<6>() = -dz_f / (z * z) - d_map;
    } else {
      s.raw = z - measured.value;
      const double z_k = 1.0 / gp.rho;
      s.sigma = z_k * z_k * gp.sigma_rho;  // sigma_z = z^2 sigma_rho
      s.jacobian.leftCols<6>() = dz_f - d_map;
    }
    out.push_back(s);
  }
}

struct NormalEquations {
  Eigen::Matrix<double, 8, 8> H = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
  double cost = 0.0;
  int count = 0;
};

void accumulate(std::vector<ResidualSample>& samples, double term_weight,
                double gm_factor, NormalEquations& eq) {
  for (ResidualSample& s : samples) {
    s.weight = geman_mcclure_weight(s.raw, s.sigma, gm_factor);
    const double inv_var = term_weight * s.weight / (s.sigma * s.sigma);
    eq.H.noalias() += inv_var * s.jacobian.transpose() * s.jacobian;
    eq.g.noalias() += inv_var * s.jacobian.transpose() * s.raw;
    eq.cost += inv_var * s.raw * s.raw;
    ++eq.count;
  }
}

// Cost of a candidate state over the intersection of samples valid at both
// states, with the weights of the linearization point frozen. Returns false
// when the candidate loses every sample.
struct FrozenTerm {
  const std::vector<ResidualSample>* reference;
  double term_weight;
  bool photometric;
};

bool frozen_cost(const Frame& frame, const Keyframe& kf, const Warp& candidate,
                 const ResidualConfig& cfg, int level,
                 const std::vector<FrozenTerm>& terms, double* cost_candidate,
                 double* cost_reference) {
  *cost_candidate = 0.0;
  *cost_reference = 0.0;
  int used = 0;
  std::vector<ResidualSample> fresh;
  for (const FrozenTerm& term : terms) {
    if (term.photometric) {
      collect_photometric(frame, kf, candidate, 1.0, level, fresh);
    } else {
      collect_geometric(frame, kf, candidate, cfg, level, fresh);
    }
    // Join on point_index; both lists are sorted by construction.
    size_t j = 0;
    for (const ResidualSample& s : fresh) {
      while (j < term.reference->size() &&
             (*term.reference)[j].point_index < s.point_index) {
        ++j;
      }
      if (j == term.reference->size()) break;
      const ResidualSample& ref = (*term.reference)[j];
      if (ref.point_index != s.point_index) continue;
      const double inv_var =
          term.term_weight * ref.weight / (ref.sigma * ref.sigma);
      *cost_candidate += inv_var * s.raw * s.raw;
      *cost_reference += inv_var * ref.raw * ref.raw;
      ++used;
      ++j;
    }
  }
  return used > 0;
}

}  // namespace

std::vector<ResidualSample> photometric_residuals(const Frame& frame,
                                                  const Keyframe& kf,
                                                  const TrackingState& state,
                                                  const ResidualConfig& cfg,
                                                  int level) {
  std::vector<ResidualSample> out;
  collect_photometric(frame, kf, make_warp(kf, state), state.sigma_ph, level,
                      out);
  for (ResidualSample& s : out) {
    s.weight = geman_mcclure_weight(s.raw, s.sigma, cfg.gm_factor);
  }
  return out;
}

std::vector<ResidualSample> geometric_residuals(const Frame& frame,
                                                const Keyframe& kf,
                                                const TrackingState& state,
                                                const ResidualConfig& cfg,
                                                int level) {
  std::vector<ResidualSample> out;
  collect_geometric(frame, kf, make_warp(kf, state), cfg, level, out);
  for (ResidualSample& s : out) {
    s.weight = geman_mcclure_weight(s.raw, s.sigma, cfg.gm_factor);
  }
  return out;
}

TrackingState track_frame(const Frame& frame, const Keyframe& kf,
                          const TrackingState& init, const ResidualConfig& cfg,
                          ResidualStats* stats) {
  TrackingState state = init;
  state.ref_keyframe_id = kf.id;
  state.level_iterations.fill(0);
  state.converged = false;
  state.lost = false;

  const bool use_ph = mode_uses_photometric(cfg.mode);
  const bool use_geo = mode_uses_geometric(cfg.mode) && cfg.lambda > 0.0;

  Warp warp = make_warp(kf, state);
  std::vector<ResidualSample> ph_samples, geo_samples;

  for (int level = 0; level < kPyramidLevels; ++level) {
    const int max_iter =
        level <= 1 ? cfg.max_iter_coarse : cfg.max_iter_fine;
    bool level_converged = false;

    for (int iter = 0; iter < max_iter && !level_converged; ++iter) {
      NormalEquations eq;
      if (use_ph) {
        collect_photometric(frame, kf, warp, state.sigma_ph, level,
                            ph_samples);
        accumulate(ph_samples, 1.0, cfg.gm_factor, eq);
      }
      if (use_geo) {
        collect_geometric(frame, kf, warp, cfg, level, geo_samples);
        accumulate(geo_samples, cfg.lambda, cfg.gm_factor, eq);
      }
      if (eq.count == 0) break;
      if (!std::isfinite(eq.cost)) {
        state.lost = true;
        break;
      }

      // Gain/brightness columns participate only when the photometric term
      // is active.
      const int dims = use_ph ? 8 : 6;
      Eigen::MatrixXd H = eq.H.topLeftCorner(dims, dims);
      const Eigen::VectorXd g = eq.g.head(dims);

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
      const double lambda_max = eig.eigenvalues().maxCoeff();
      const double lambda_min = eig.eigenvalues().minCoeff();
      if (!(lambda_max > 0.0) ||
          lambda_min <= lambda_max / cfg.condition_limit) {
        H.diagonal().array() += cfg.damping * H.trace();
      }
      const Eigen::VectorXd delta = H.ldlt().solve(-g);
      if (!delta.allFinite()) break;

      std::vector<FrozenTerm> terms;
      if (use_ph) terms.push_back({&ph_samples, 1.0, true});
      if (use_geo) terms.push_back({&geo_samples, cfg.lambda, false});

      bool accepted = false;
      double applied_norm = 0.0;
      for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
        const double scale = std::ldexp(1.0, -halving);
        const Eigen::VectorXd step = scale * delta;
        Warp candidate = warp;
        candidate.T_f_k =
            warp.T_f_k * Pose::exp(Twist::from_vector(
                                       (Eigen::Matrix<double, 6, 1>() <<
                                        step.head(3), step.segment(3, 3))
                                           .finished()))
                             .inverse();
        if (dims == 8) {
          candidate.gain = std::max(1e-3, warp.gain + step(6));
          candidate.brightness =
              std::clamp(warp.brightness + step(7), -255.0, 255.0);
        }
        double cost_candidate, cost_reference;
        if (!frozen_cost(frame, kf, candidate, cfg, level, terms,
                         &cost_candidate, &cost_reference)) {
          continue;
        }
        if (cost_candidate <= cost_reference) {
          warp = candidate;
          applied_norm = step.head(6).norm();
          accepted = true;
          break;
        }
      }
      ++state.level_iterations[level];
      if (!accepted) break;  // no improving step at this level
      if (applied_norm < cfg.epsilon) {
        level_converged = true;
      }
    }
    if (state.lost) break;
    if (level == kPyramidLevels - 1) state.converged = level_converged;
  }

  state.pose = kf.pose * warp.T_f_k.inverse();
  state.gain = warp.gain;
  state.brightness = warp.brightness;

  // Final evaluation at the converged state: lost check and statistics.
  const int finest = kPyramidLevels - 1;
  int final_count = 0;
  double final_cost = 0.0;
  int inliers = 0;
  if (use_ph) {
    collect_photometric(frame, kf, warp, state.sigma_ph, finest, ph_samples);
    final_count += static_cast<int>(ph_samples.size());
    for (ResidualSample& s : ph_samples) {
      s.weight = geman_mcclure_weight(s.raw, s.sigma, cfg.gm_factor);
      final_cost += s.weight * s.raw * s.raw / (s.sigma * s.sigma);
      if (std::abs(s.raw) < 3.0 * s.sigma) ++inliers;
    }
  }
  if (use_geo) {
    collect_geometric(frame, kf, warp, cfg, finest, geo_samples);
    final_count += static_cast<int>(geo_samples.size());
    for (ResidualSample& s : geo_samples) {
      s.weight = geman_mcclure_weight(s.raw, s.sigma, cfg.gm_factor);
      final_cost += cfg.lambda * s.weight * s.raw * s.raw / (s.sigma * s.sigma);
      if (std::abs(s.raw) < 3.0 * s.sigma) ++inliers;
    }
  }
  if (final_count < cfg.min_residuals || !std::isfinite(final_cost)) {
    state.lost = true;
  }

  if (stats) {
    stats->sigma_ph = state.sigma_ph;
    const PinholeIntrinsics& intr = frame.pyramid.intrinsics[finest];
    stats->sigma_g = mode_geometric_uses_inverse_depth(cfg.mode)
                         ? sigma_inverse_depth(intr)
                         : sigma_depth(1.0, intr);
    stats->cost = final_cost;
    stats->residual_count = final_count;
    stats->inlier_fraction =
        final_count > 0 ? static_cast<double>(inliers) / final_count : 0.0;
    stats->raw_photometric.clear();
    if (use_ph) {
      stats->raw_photometric.reserve(ph_samples.size());
      for (const ResidualSample& s : ph_samples) {
        stats->raw_photometric.push_back(static_cast<float>(s.raw));
      }
    }
  }
  return state;
}

}  // namespace rgbds
