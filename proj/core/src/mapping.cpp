#include "rgbds/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace rgbds {

Eigen::Matrix<double, 1, 6> template_pose_jacobian(
    const Eigen::Vector2d& grad, const Eigen::Vector3d& p_cam,
    const PinholeIntrinsics& intr) {
  const Eigen::Matrix<double, 2, 3> j_proj = projection_jacobian(p_cam, intr);
  Eigen::Matrix<double, 3, 6> j_point;
  j_point.leftCols<3>() = -skew(p_cam);
  j_point.rightCols<3>() = Eigen::Matrix3d::Identity();
  return grad.transpose() * j_proj * j_point;
}

const std::vector<GridPoint>& Keyframe::geometric_points(ResidualMode mode,
                                                         int level) const {
  switch (mode) {
    case ResidualMode::kGIDS:
      return grid_edges[level];
    case ResidualMode::kGIDDFull:
      return grid_dense[level];
    default:
      return grid[level];
  }
}

namespace {

std::vector<GridPoint> build_grid_level(const Pyramid& pyr, int level,
                                        int stride) {
  const DepthImage& inv = pyr.inv_depth[level];
  const PinholeIntrinsics& intr = pyr.intrinsics[level];
  const double sigma = sigma_inverse_depth(intr);
  std::vector<GridPoint> points;
  points.reserve(static_cast<size_t>(inv.width / stride + 1) *
                 (inv.height / stride + 1));
  for (int y = 0; y < inv.height; y += stride) {
    for (int x = 0; x < inv.width; x += stride) {
      const float rho = inv.at(x, y);
      if (rho <= 0.0f) continue;
      GridPoint p;
      p.px = Eigen::Vector2d(x, y);
      p.rho = rho;
      p.sigma_rho = sigma;
      p.p_cam = backproject(p.px, p.rho, intr);
      points.push_back(p);
    }
  }
  return points;
}

MapPoint make_map_point(const Pyramid& pyr, int level, int x, int y,
                        double rho, double sigma, double sensor_rho,
                        double sensor_sigma, PointSource source) {
  const PinholeIntrinsics& intr = pyr.intrinsics[level];
  MapPoint p;
  p.px = Eigen::Vector2d(x, y);
  p.rho = rho;
  p.sigma = sigma;
  p.sensor_rho = sensor_rho;
  p.sensor_sigma = sensor_sigma;
  p.source = source;
  p.intensity = pyr.gray[level].at(x, y);
  p.grad = central_gradient(pyr.gray[level], x, y);
  p.p_cam = backproject(p.px, rho, intr);
  p.j_pose = template_pose_jacobian(p.grad, p.p_cam, intr);
  return p;
}

}  // namespace

void build_geometric_grid(Keyframe& kf, const RunConfig& cfg) {
  const ResidualMode mode = cfg.mode();
  const int finest = kf.pyramid.finest();
  for (int level = 0; level < kPyramidLevels; ++level) {
    kf.grid[level] =
        build_grid_level(kf.pyramid, level, geometric_subsample(level));
    if (mode == ResidualMode::kGIDDFull) {
      kf.grid_dense[level] = build_grid_level(kf.pyramid, level, 1);
    }
    if (mode == ResidualMode::kGIDS) {
      // Geometric residuals on the Canny set only.
      std::vector<GridPoint> pts;
      pts.reserve(kf.photometric[level].size());
      for (const MapPoint& mp : kf.photometric[level]) {
        GridPoint g;
        g.px = mp.px;
        g.p_cam = mp.p_cam;
        g.rho = mp.rho;
        g.sigma_rho = mp.sigma;
        pts.push_back(g);
      }
      kf.grid_edges[level] = std::move(pts);
    }
  }

  // Fold multi-view information into the finest grid where a fused map point
  // sits on a grid pixel.
  std::unordered_map<int64_t, const MapPoint*> fused;
  const int w = kf.pyramid.gray[finest].width;
  for (const MapPoint& mp : kf.photometric[finest]) {
    if (mp.source != PointSource::kSensor) {
      fused[static_cast<int64_t>(mp.px.y()) * w +
            static_cast<int64_t>(mp.px.x())] = &mp;
    }
  }
  if (!fused.empty()) {
    for (GridPoint& g : kf.grid[finest]) {
      const auto it = fused.find(static_cast<int64_t>(g.px.y()) * w +
                                 static_cast<int64_t>(g.px.x()));
      if (it != fused.end()) {
        g.rho = it->second->rho;
        g.sigma_rho = it->second->sigma;
        g.p_cam = it->second->p_cam;
      }
    }
  }
}

KeyframePtr create_keyframe(int id, const Frame& frame, const Pose& pose,
                            const RunConfig& cfg) {
  auto kf = std::make_shared<Keyframe>();
  kf->id = id;
  kf->timestamp = frame.timestamp;
  kf->pose = pose;
  kf->pyramid = frame.pyramid;

  CannyParams canny;
  canny.blur_sigma = cfg.canny_blur_sigma;
  canny.low_percentile = cfg.canny_low_percentile;
  canny.high_percentile = cfg.canny_high_percentile;
  canny.budget = cfg.canny_budget;

  const int finest = kf->pyramid.finest();
  for (int level = 0; level < kPyramidLevels; ++level) {
    const Pyramid& pyr = kf->pyramid;
    const EdgeMask edges = canny_edges(pyr.gray[level], canny);
    const double sigma = sigma_inverse_depth(pyr.intrinsics[level]);
    auto& points = kf->photometric[level];
    points.reserve(edges.pixels.size());
    for (const Eigen::Vector2i& px : edges.pixels) {
      const float rho = pyr.inv_depth[level].at(px.x(), px.y());
      if (rho > 0.0f) {
        points.push_back(make_map_point(pyr, level, px.x(), px.y(), rho,
                                        sigma, rho, sigma,
                                        PointSource::kSensor));
      } else if (level == finest) {
        kf->pending_pixels.push_back(px);
      }
    }
  }

  // The dense photometric variant uses every valid-depth pixel instead of
  // the Canny set.
  if (cfg.mode() == ResidualMode::kPD) {
    for (int level = 0; level < kPyramidLevels; ++level) {
      const Pyramid& pyr = kf->pyramid;
      const double sigma = sigma_inverse_depth(pyr.intrinsics[level]);
      auto& points = kf->photometric[level];
      points.clear();
      for (int y = 1; y < pyr.gray[level].height - 1; ++y) {
        for (int x = 1; x < pyr.gray[level].width - 1; ++x) {
          const float rho = pyr.inv_depth[level].at(x, y);
          if (rho <= 0.0f) continue;
          points.push_back(make_map_point(pyr, level, x, y, rho, sigma, rho,
                                          sigma, PointSource::kSensor));
        }
      }
    }
    kf->pending_pixels.clear();
  }

  build_geometric_grid(*kf, cfg);
  kf->place = compute_place_descriptor(kf->pyramid, cfg);
  return kf;
}

KeyframeDecision should_create_keyframe(const Keyframe& kf, const Pose& T_w_f,
                                        const RunConfig& cfg) {
  KeyframeDecision decision;
  const Pose T_f_k = T_w_f.inverse() * kf.pose;
  const int finest = kf.pyramid.finest();
  const PinholeIntrinsics& intr = kf.pyramid.intrinsics[finest];

  size_t visible = 0;
  size_t total = 0;
  const auto count_point = [&](const Eigen::Vector3d& p_cam) {
    ++total;
    const Eigen::Vector3d p_f = T_f_k * p_cam;
    const auto px = project(p_f, intr);
    if (px && px->x() >= 0.0 && px->y() >= 0.0 && px->x() <= intr.width - 1 &&
        px->y() <= intr.height - 1) {
      ++visible;
    }
  };
  if (!kf.photometric[finest].empty()) {
    for (const MapPoint& mp : kf.photometric[finest]) count_point(mp.p_cam);
  } else {
    for (const GridPoint& gp : kf.grid[finest]) count_point(gp.p_cam);
  }
  decision.overlap = total > 0 ? static_cast<double>(visible) / total : 0.0;

  const Pose T_k_f = T_f_k.inverse();
  const double translation = T_k_f.translation.norm();
  const double rotation_deg = T_k_f.rotation_angle() * 180.0 / M_PI;

  decision.create = decision.overlap < cfg.keyframe_min_overlap ||
                    translation > cfg.keyframe_max_translation ||
                    rotation_deg > cfg.keyframe_max_rotation_deg;
  return decision;
}

std::optional<InverseDepthEstimate> fuse_estimates(
    std::optional<InverseDepthEstimate> rho1,
    std::optional<InverseDepthEstimate> rho2) {
  if (!rho1) return rho2;
  if (!rho2) return rho1;
  const double w1 = 1.0 / (rho1->sigma * rho1->sigma);
  const double w2 = 1.0 / (rho2->sigma * rho2->sigma);
  InverseDepthEstimate fused;
  fused.rho = (rho1->rho * w1 + rho2->rho * w2) / (w1 + w2);
  fused.sigma = std::sqrt(1.0 / (w1 + w2));
  return fused;
}

namespace {

struct PreparedView {
  Pose T_v_k;       // keyframe camera -> view camera
  double baseline;  // meters
  const ViewSnapshot* view;
};

std::vector<PreparedView> prepare_views(const Keyframe& kf,
                                        const std::vector<ViewSnapshot>& views,
                                        double min_baseline) {
  std::vector<PreparedView> out;
  out.reserve(views.size());
  for (const ViewSnapshot& v : views) {
    PreparedView pv;
    pv.T_v_k = v.pose.inverse() * kf.pose;
    pv.baseline = (v.pose.translation - kf.pose.translation).norm();
    pv.view = &v;
    if (pv.baseline >= min_baseline) out.push_back(pv);
  }
  return out;
}

}  // namespace

EpipolarSearch search_inverse_depth(const Keyframe& kf,
                                    const Eigen::Vector2d& px,
                                    std::optional<InverseDepthEstimate> prior,
                                    const std::vector<ViewSnapshot>& views,
                                    const RunConfig& cfg) {
  EpipolarSearch result;
  const int finest = kf.pyramid.finest();
  const GrayImage& img_k = kf.pyramid.gray[finest];
  const PinholeIntrinsics& intr_k = kf.pyramid.intrinsics[finest];

  result.rho_min = cfg.mapping_rho_min;
  result.rho_max = cfg.mapping_rho_max;
  if (prior) {
    const double span = cfg.mapping_prior_sigmas * prior->sigma;
    result.rho_min = std::max(result.rho_min, prior->rho - span);
    result.rho_max = std::min(result.rho_max, prior->rho + span);
  }
  if (result.rho_min >= result.rho_max) return result;

  const std::vector<PreparedView> prepared =
      prepare_views(kf, views, cfg.mapping_min_baseline);
  if (prepared.size() < 2) return result;

  // Per-view template directions: toward the epipole of the view in the
  // keyframe image (homogeneous form, stable for lateral motion).
  struct ViewTemplate {
    const PreparedView* pv;
    std::array<Eigen::Vector2d, 5> sample_px;
    std::array<float, 5> sample_intensity;
  };
  std::vector<ViewTemplate> templates;
  for (const PreparedView& pv : prepared) {
    const Pose T_k_v = pv.T_v_k.inverse();
    const Eigen::Vector3d& c = T_k_v.translation;  // view center in kf frame
    const Eigen::Vector2d dir(
        intr_k.fx * c.x() + intr_k.cx * c.z() - px.x() * c.z(),
        intr_k.fy * c.y() + intr_k.cy * c.z() - px.y() * c.z());
    const double n = dir.norm();
    if (n < 1e-9) continue;  // pixel at the epipole: no parallax
    ViewTemplate vt;
    vt.pv = &pv;
    bool ok = true;
    for (int k = -2; k <= 2; ++k) {
      const Eigen::Vector2d s = px + (dir / n) * static_cast<double>(k);
      if (s.x() < 1.0 || s.y() < 1.0 || s.x() > img_k.width - 2 ||
          s.y() > img_k.height - 2) {
        ok = false;
        break;
      }
      vt.sample_px[k + 2] = s;
      vt.sample_intensity[k + 2] =
          sample_bilinear(img_k, s.x(), s.y());
    }
    if (ok) templates.push_back(std::move(vt));
  }
  if (templates.size() < 2) return result;
  result.template_samples = templates.front().sample_intensity;

  // Cost of one hypothesis: SSD of the warped 1-D patch summed over views.
  // Every prepared view must contribute, otherwise hypotheses that leave one
  // view's bounds would look artificially cheap.
  const auto evaluate = [&](double rho, double* max_baseline,
                            int* contributing) -> double {
    double cost = 0.0;
    double bmax = 0.0;
    for (const ViewTemplate& vt : templates) {
      const GrayImage& img_v = vt.pv->view->gray;
      const PinholeIntrinsics& intr_v = vt.pv->view->intrinsics;
      double ssd = 0.0;
      for (int k = 0; k < 5; ++k) {
        const Eigen::Vector3d p =
            backproject(vt.sample_px[k], rho, intr_k);
        const Eigen::Vector3d p_v = vt.pv->T_v_k * p;
        const auto uv = project(p_v, intr_v);
        if (!uv || uv->x() < 0.0 || uv->y() < 0.0 ||
            uv->x() > img_v.width - 1 || uv->y() > img_v.height - 1) {
          return -1.0;
        }
        const double diff =
            vt.sample_intensity[k] - sample_bilinear(img_v, uv->x(), uv->y());
        ssd += diff * diff;
      }
      cost += ssd;
      bmax = std::max(bmax, vt.pv->baseline);
    }
    if (max_baseline) *max_baseline = bmax;
    if (contributing) *contributing = static_cast<int>(templates.size());
    return cost;
  };

  const int n = cfg.mapping_samples;
  std::vector<double> costs(n);
  std::vector<double> rhos(n);
  const auto sample_pass = [&](double lo, double hi, int* best_idx) {
    const double step = (hi - lo) / (n - 1);
    *best_idx = -1;
    for (int i = 0; i < n; ++i) {
      rhos[i] = lo + i * step;
      costs[i] = evaluate(rhos[i], nullptr, nullptr);
      if (costs[i] >= 0.0 &&
          (*best_idx < 0 || costs[i] < costs[*best_idx])) {
        *best_idx = i;
      }
    }
    return step;
  };

  int best_idx = -1;
  double step = sample_pass(result.rho_min, result.rho_max, &best_idx);
  result.cost_profile = costs;
  if (best_idx < 0) return result;

  // Ambiguity test on the coarse pass: a second local minimum close in cost
  // to the best one means repetitive structure along the epipolar line.
  double second_best = -1.0;
  for (int i = 0; i < n; ++i) {
    if (costs[i] < 0.0 || std::abs(i - best_idx) <= 1) continue;
    const bool left_ok = i == 0 || costs[i - 1] < 0.0 || costs[i] <= costs[i - 1];
    const bool right_ok =
        i == n - 1 || costs[i + 1] < 0.0 || costs[i] <= costs[i + 1];
    if (left_ok && right_ok) {
      if (second_best < 0.0 || costs[i] < second_best) second_best = costs[i];
    }
  }
  result.second_best_cost = second_best;
  result.best_rho = rhos[best_idx];
  result.best_cost = costs[best_idx];
  if (second_best >= 0.0 &&
      second_best <= cfg.mapping_ambiguity_ratio * result.best_cost +
                         cfg.mapping_ambiguity_floor) {
    return result;  // rejected as ambiguous
  }

  // Zoom passes: resample around the winning basin until the implied step
  // along the widest epipolar line is subpixel, then refine with a parabola.
  double bmax = 0.0;
  int contributing = 0;
  evaluate(result.best_rho, &bmax, &contributing);
  const double px_per_rho = intr_k.fx * std::max(bmax, 1e-9);
  for (int pass = 0; pass < 3 && step * px_per_rho > 0.5; ++pass) {
    const double lo = std::max(result.rho_min, rhos[best_idx] - step);
    const double hi = std::min(result.rho_max, rhos[best_idx] + step);
    step = sample_pass(lo, hi, &best_idx);
    if (best_idx < 0) return result;
  }
  result.best_rho = rhos[best_idx];
  result.best_cost = std::min(result.best_cost, costs[best_idx]);

  result.refined_rho = result.best_rho;
  if (best_idx > 0 && best_idx < n - 1 && costs[best_idx - 1] >= 0.0 &&
      costs[best_idx + 1] >= 0.0) {
    const double denom =
        costs[best_idx - 1] - 2.0 * costs[best_idx] + costs[best_idx + 1];
    if (denom > 1e-12) {
      const double delta =
          0.5 * (costs[best_idx - 1] - costs[best_idx + 1]) / denom;
      result.refined_rho = rhos[best_idx] + std::clamp(delta, -1.0, 1.0) * step;
    }
  }
  if (result.refined_rho <= 0.0) return result;

  result.max_baseline = bmax;
  result.contributing_views = contributing;
  // A minimum that does not actually match the template is a mismatched
  // basin, not a measurement.
  const double match_gate =
      cfg.mapping_max_sample_ssd * 5.0 * std::max(contributing, 1);
  result.accepted = contributing >= 2 && result.best_cost <= match_gate;
  return result;
}

MultiviewEstimates triangulate_multiview(const Keyframe& kf,
                                         const std::vector<ViewSnapshot>& views,
                                         const RunConfig& cfg) {
  MultiviewEstimates out;
  const int finest = kf.pyramid.finest();
  const PinholeIntrinsics& intr = kf.pyramid.intrinsics[finest];

  const auto estimate = [&](const Eigen::Vector2d& px,
                            std::optional<InverseDepthEstimate> prior)
      -> std::optional<InverseDepthEstimate> {
    const EpipolarSearch search =
        search_inverse_depth(kf, px, prior, views, cfg);
    if (!search.accepted) return std::nullopt;
    InverseDepthEstimate est;
    est.rho = search.refined_rho;
    est.sigma = sigma_inverse_depth(intr, search.max_baseline);
    return est;
  };

  out.points.reserve(kf.photometric[finest].size());
  for (const MapPoint& mp : kf.photometric[finest]) {
    std::optional<InverseDepthEstimate> prior;
    if (mp.sensor_rho > 0.0) {
      prior = InverseDepthEstimate{mp.sensor_rho, mp.sensor_sigma};
    }
    out.points.push_back(estimate(mp.px, prior));
  }
  out.pending.reserve(kf.pending_pixels.size());
  for (const Eigen::Vector2i& px : kf.pending_pixels) {
    out.pending.push_back(estimate(px.cast<double>(), std::nullopt));
  }
  return out;
}

std::vector<ViewSnapshot> select_views(const Keyframe& kf,
                                       const std::vector<ViewSnapshot>& pool,
                                       const RunConfig& cfg) {
  std::vector<std::pair<double, const ViewSnapshot*>> ranked;
  for (const ViewSnapshot& v : pool) {
    const double b = (v.pose.translation - kf.pose.translation).norm();
    if (b >= cfg.mapping_min_baseline) ranked.emplace_back(b, &v);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (static_cast<int>(ranked.size()) > cfg.mapping_max_views) {
    ranked.resize(cfg.mapping_max_views);
  }
  std::vector<ViewSnapshot> out;
  out.reserve(ranked.size());
  for (const auto& [b, v] : ranked) out.push_back(*v);
  return out;
}

KeyframePtr refine_keyframe(const Keyframe& kf,
                            const std::vector<ViewSnapshot>& views,
                            const RunConfig& cfg) {
  const std::vector<ViewSnapshot> selected = select_views(kf, views, cfg);
  if (selected.size() < 2) return std::make_shared<Keyframe>(kf);

  const MultiviewEstimates estimates =
      triangulate_multiview(kf, selected, cfg);

  auto out = std::make_shared<Keyframe>(kf);
  const int finest = out->pyramid.finest();
  const PinholeIntrinsics& intr = out->pyramid.intrinsics[finest];

  // Refinement restarts from the pristine sensor estimates, so running it
  // again with the same views is idempotent.
  auto& points = out->photometric[finest];
  std::erase_if(points, [](const MapPoint& p) {
    return p.source == PointSource::kMultiview;
  });
  for (size_t i = 0; i < points.size(); ++i) {
    MapPoint& mp = points[i];
    std::optional<InverseDepthEstimate> sensor;
    if (mp.sensor_rho > 0.0) {
      sensor = InverseDepthEstimate{mp.sensor_rho, mp.sensor_sigma};
    }
    const auto fused = fuse_estimates(sensor, estimates.points[i]);
    if (!fused) continue;
    mp.rho = fused->rho;
    mp.sigma = fused->sigma;
    mp.source = estimates.points[i]
                    ? (sensor ? PointSource::kFused : PointSource::kMultiview)
                    : PointSource::kSensor;
    mp.p_cam = backproject(mp.px, mp.rho, intr);
    mp.j_pose = template_pose_jacobian(mp.grad, mp.p_cam, intr);
  }
  for (size_t i = 0; i < kf.pending_pixels.size(); ++i) {
    const auto& est = estimates.pending[i];
    if (!est || est->rho <= 0.0) continue;
    const Eigen::Vector2i& px = kf.pending_pixels[i];
    points.push_back(make_map_point(out->pyramid, finest, px.x(), px.y(),
                                    est->rho, est->sigma, 0.0, 0.0,
                                    PointSource::kMultiview));
  }

  build_geometric_grid(*out, cfg);
  return out;
}

}  // namespace rgbds
