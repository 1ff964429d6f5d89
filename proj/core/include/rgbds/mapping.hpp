#pragma once

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/geometry.hpp"
#include "rgbds/image.hpp"
#include "rgbds/place_recognition.hpp"

namespace rgbds {

enum class PointSource : uint8_t { kSensor, kMultiview, kFused };

/// Semi-dense map point of a keyframe, in keyframe-local coordinates. The
/// tracking template (intensity, gradient, precomputed pose jacobian) lives
/// alongside the inverse-depth state.
struct MapPoint {
  Eigen::Vector2d px;                 // pixel, at its pyramid level
  Eigen::Vector3d p_cam;              // backprojected at rho
  Eigen::Matrix<double, 1, 6> j_pose; // template-side jacobian (twist order: omega, v)
  Eigen::Vector2d grad;               // intensity gradient at px
  double intensity = 0.0;             // reference intensity
  double rho = 0.0;                   // inverse depth, 1/m
  double sigma = 0.0;                 // std of rho
  double sensor_rho = 0.0;            // raw sensor estimate, 0 when absent
  double sensor_sigma = 0.0;
  PointSource source = PointSource::kSensor;
};

/// Point of the dense geometric term.
struct GridPoint {
  Eigen::Vector2d px;
  Eigen::Vector3d p_cam;
  double rho = 0.0;        // keyframe inverse depth
  double sigma_rho = 0.0;  // constant per level (inverse depth is linear in disparity)
};

/// Inverse-compositional pose jacobian of the photometric residual
/// r = a*I_k(pi(T(xi) p)) - b - I_f, evaluated on the keyframe template at
/// xi = 0 (without the gain factor).
Eigen::Matrix<double, 1, 6> template_pose_jacobian(
    const Eigen::Vector2d& grad, const Eigen::Vector3d& p_cam,
    const PinholeIntrinsics& intr);

struct Keyframe {
  int id = 0;
  double timestamp = 0.0;
  Pose pose;  // T_w_k, camera to world, at publication time
  Pyramid pyramid;

  // Canny point set per level; the finest level is the fusion-bearing map.
  std::array<std::vector<MapPoint>, kPyramidLevels> photometric;
  // Finest-level Canny pixels without a sensor depth: multi-view candidates.
  std::vector<Eigen::Vector2i> pending_pixels;

  // Geometric point sets: strided grid (always), plus the mode-specific
  // full-density and edge-set variants.
  std::array<std::vector<GridPoint>, kPyramidLevels> grid;
  std::array<std::vector<GridPoint>, kPyramidLevels> grid_dense;
  std::array<std::vector<GridPoint>, kPyramidLevels> grid_edges;

  PlaceDescriptor place;

  const std::vector<GridPoint>& geometric_points(ResidualMode mode,
                                                 int level) const;
};

using KeyframePtr = std::shared_ptr<const Keyframe>;

KeyframePtr create_keyframe(int id, const Frame& frame, const Pose& pose,
                            const RunConfig& cfg);

/// Strided per-level geometric point sets from the keyframe depth, inverse
/// depths fused with the multi-view map where a pixel has one.
void build_geometric_grid(Keyframe& kf, const RunConfig& cfg);

struct KeyframeDecision {
  bool create = false;
  double overlap = 1.0;
};

/// A new keyframe is due when the visible-point overlap drops below the
/// threshold or the motion since the keyframe exceeds the translation or
/// rotation cap.
KeyframeDecision should_create_keyframe(const Keyframe& kf, const Pose& T_w_f,
                                        const RunConfig& cfg);

/// Inverse-variance fusion of the sensor and multi-view estimates. Either
/// input may be absent (pass-through). The combined spread formula
/// 1 / sum(1/sigma_j^2) is a variance; the returned sigma is its square root.
std::optional<InverseDepthEstimate> fuse_estimates(
    std::optional<InverseDepthEstimate> rho1,
    std::optional<InverseDepthEstimate> rho2);

/// One tracked frame retained for multi-view triangulation.
struct ViewSnapshot {
  Pose pose;  // camera to world
  GrayImage gray;
  PinholeIntrinsics intrinsics;
};

/// Per-pixel discrete search over inverse-depth hypotheses along the
/// epipolar correspondences, refined to sub-sample precision.
struct EpipolarSearch {
  std::array<float, 5> template_samples{};  // 1-D patch intensities
  double rho_min = 0.0, rho_max = 0.0;      // searched interval
  double best_rho = 0.0;                    // arg min over samples
  double refined_rho = 0.0;                 // parabola refinement
  double best_cost = 0.0;
  double second_best_cost = 0.0;            // best local minimum outside the winning basin
  std::vector<double> cost_profile;         // first-pass costs (negative = invalid)
  double max_baseline = 0.0;                // widest view contributing at the minimum
  int contributing_views = 0;
  bool accepted = false;
};

EpipolarSearch search_inverse_depth(const Keyframe& kf,
                                    const Eigen::Vector2d& px,
                                    std::optional<InverseDepthEstimate> prior,
                                    const std::vector<ViewSnapshot>& views,
                                    const RunConfig& cfg);

/// Multi-view estimates for the finest-level photometric points (aligned with
/// kf.photometric[finest]) and the pending depthless pixels (aligned with
/// kf.pending_pixels).
struct MultiviewEstimates {
  std::vector<std::optional<InverseDepthEstimate>> points;
  std::vector<std::optional<InverseDepthEstimate>> pending;
};

MultiviewEstimates triangulate_multiview(const Keyframe& kf,
                                         const std::vector<ViewSnapshot>& views,
                                         const RunConfig& cfg);

/// Rebuilds the keyframe with multi-view information fused in: sensor points
/// updated where triangulation succeeded, depthless edge pixels promoted to
/// multiview-only points (these may lie beyond the sensor range), finest grid
/// refreshed. Uses only this keyframe's own data and the given views; returns
/// the keyframe unchanged when fewer than two usable views exist.
KeyframePtr refine_keyframe(const Keyframe& kf,
                            const std::vector<ViewSnapshot>& views,
                            const RunConfig& cfg);

/// Selects up to cfg.mapping_max_views snapshots, widest baselines first.
std::vector<ViewSnapshot> select_views(const Keyframe& kf,
                                       const std::vector<ViewSnapshot>& pool,
                                       const RunConfig& cfg);

}  // namespace rgbds
