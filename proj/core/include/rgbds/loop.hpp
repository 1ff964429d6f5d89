#pragma once

#include <Eigen/Core>

#include <optional>
#include <random>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/geometry.hpp"
#include "rgbds/mapping.hpp"
#include "rgbds/pose_graph.hpp"

namespace rgbds {

/// Loop hypothesis between the current keyframe (query) and an older one.
struct LoopCandidate {
  int query_id = -1;
  int match_id = -1;
  double appearance_score = 0.0;
  Pose T_query_match;  // maps match-frame points into the query frame
  int inliers = 0;
  bool accepted = false;
};

/// Appearance retrieval with a ratio test: the best-scoring non-neighbor
/// keyframe becomes a candidate when its score exceeds `loop.ratio` times the
/// score of the current keyframe's temporal neighbor. The last
/// `loop.temporal_exclusion` keyframes never match. Needs at least 3
/// keyframes; an absent candidate is a normal outcome.
std::optional<LoopCandidate> detect_loop_candidate(
    const std::vector<KeyframePtr>& keyframes, int query_index,
    const RunConfig& cfg);

/// Closed-form absolute orientation (Horn): the rigid transform minimizing
/// sum |b_i - T a_i|^2, no scale. Throws std::invalid_argument for fewer
/// than 3 correspondences or a collinear point set.
Pose horn_align(const std::vector<Eigen::Vector3d>& a,
                const std::vector<Eigen::Vector3d>& b);

/// Binary-descriptor matching, 3-point RANSAC over Horn alignments, inlier
/// count by reprojection error into the query image, final refit on all
/// inliers. Accepted iff inliers >= loop.min_inliers.
LoopCandidate verify_and_align(const LoopCandidate& candidate,
                               const Keyframe& query, const Keyframe& match,
                               const RunConfig& cfg, std::mt19937_64& rng);

enum class ReuseAction { kReuse, kCloseLoop, kNewKeyframe };

struct ReuseDecision {
  ReuseAction action = ReuseAction::kNewKeyframe;
  int keyframe_id = -1;  // reuse target or loop candidate
};

/// Keyframe-reuse heuristics applied to place-recognition candidates
/// (indices into `keyframes`, pre-filtered of temporal neighbors): a
/// candidate is reusable when at least `loop.reuse_overlap` of its points
/// project into the current frame and the median photometric / geometric
/// reprojection errors stay below reuse_nsigma times their scales. Among the
/// survivors the oldest wins. With candidates but no survivor the caller
/// should attempt a loop closure; with no candidates, create a keyframe.
ReuseDecision map_reuse_decision(const Frame& frame, const Pose& tracked_pose,
                                 const std::vector<KeyframePtr>& keyframes,
                                 const std::vector<Pose>& current_poses,
                                 const std::vector<int>& candidate_indices,
                                 const RunConfig& cfg);

}  // namespace rgbds
