#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/image.hpp"

namespace rgbds {

/// Appearance model of one keyframe: a blurred 40x30 intensity thumbnail
/// (zero-mean, unit norm) for retrieval, plus FAST corners with 256-bit
/// binary descriptors and their sensor depths for geometric verification.
struct PlaceDescriptor {
  Eigen::VectorXf global;  // 1200 entries, norm 1 (empty if image was flat)

  struct Keypoint {
    Eigen::Vector2f px;     // finest-level pixel
    float depth;            // sensor depth, meters
    float score;            // corner strength
    std::array<uint64_t, 4> descriptor;
  };
  std::vector<Keypoint> keypoints;
};

PlaceDescriptor compute_place_descriptor(const Pyramid& pyramid,
                                         const RunConfig& cfg);

/// Correlation of the global descriptors mapped to [0, 1].
double place_similarity(const PlaceDescriptor& a, const PlaceDescriptor& b);

int hamming_distance(const std::array<uint64_t, 4>& a,
                     const std::array<uint64_t, 4>& b);

/// Mutual-best Hamming matching, distances above max_hamming discarded.
/// Returns (index in a, index in b) pairs.
std::vector<std::pair<int, int>> match_keypoints(
    const std::vector<PlaceDescriptor::Keypoint>& a,
    const std::vector<PlaceDescriptor::Keypoint>& b, int max_hamming);

}  // namespace rgbds
