#include "rgbds/place_recognition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

namespace rgbds {

namespace {

// Bresenham circle of radius 3 used by the FAST segment test.
constexpr int kCircle[16][2] = {
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},  {2, 2},  {1, 3},
    {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

bool fast_corner(const GrayImage& img, int x, int y, float t, float* score) {
  const float c = img.at(x, y);
  float ring[16];
  for (int i = 0; i < 16; ++i) {
    ring[i] = img.at(x + kCircle[i][0], y + kCircle[i][1]);
  }
  // Look for 9 contiguous samples all brighter or all darker than c +- t.
  for (int sign = 0; sign < 2; ++sign) {
    int run = 0;
    for (int i = 0; i < 16 + 9; ++i) {
      const float v = ring[i % 16];
      const bool on = sign == 0 ? v > c + t : v < c - t;
      run = on ? run + 1 : 0;
      if (run >= 9) {
        float s = 0.0f;
        for (int k = 0; k < 16; ++k) s += std::abs(ring[k] - c);
        *score = s;
        return true;
      }
    }
  }
  return false;
}

// Fixed 256-pair sampling pattern inside a 31x31 patch, generated once from a
// constant seed so descriptors are comparable across runs and machines.
struct BriefPattern {
  std::array<std::array<int8_t, 4>, 256> pairs;
  BriefPattern() {
    std::mt19937 rng(0x51f15eedu);
    std::normal_distribution<double> gauss(0.0, 31.0 / 5.0);
    auto draw = [&]() {
      return static_cast<int8_t>(
          std::clamp(static_cast<int>(std::lround(gauss(rng))), -15, 15));
    };
    for (auto& p : pairs) {
      p = {draw(), draw(), draw(), draw()};
    }
  }
};

const BriefPattern& brief_pattern() {
  static const BriefPattern pattern;
  return pattern;
}

std::array<uint64_t, 4> brief_descriptor(const GrayImage& img, int x, int y) {
  std::array<uint64_t, 4> desc{0, 0, 0, 0};
  const auto& pattern = brief_pattern().pairs;
  for (int i = 0; i < 256; ++i) {
    const auto& p = pattern[i];
    const float a = img.at(x + p[0], y + p[1]);
    const float b = img.at(x + p[2], y + p[3]);
    if (a < b) desc[i >> 6] |= uint64_t{1} << (i & 63);
  }
  return desc;
}

}  // namespace

PlaceDescriptor compute_place_descriptor(const Pyramid& pyramid,
                                         const RunConfig& cfg) {
  PlaceDescriptor out;

  // Global part: blur the coarsest level, halve it to ~40x30, normalize.
  const GrayImage blurred_coarse = gaussian_blur(pyramid.gray[0], 1.0);
  GrayImage thumb = blurred_coarse;
  if (thumb.width % 2 == 0 && thumb.height % 2 == 0) {
    thumb = downsample_box(thumb);
  }
  Eigen::VectorXf v(thumb.data.size());
  for (size_t i = 0; i < thumb.data.size(); ++i) v[i] = thumb.data[i];
  v.array() -= v.mean();
  const float norm = v.norm();
  if (norm > 1e-6f) {
    out.global = v / norm;
  }

  // Local part: FAST corners on the raw finest image (blurring flattens the
  // segment test), BRIEF descriptors on a smoothed copy. Only corners with a
  // valid sensor depth are kept, since verification needs their 3D position.
  const int finest = pyramid.finest();
  const GrayImage& raw = pyramid.gray[finest];
  const GrayImage smooth = gaussian_blur(raw, 2.0);
  const DepthImage& depth = pyramid.depth[finest];
  const float t = static_cast<float>(cfg.loop_fast_threshold);
  constexpr int kMargin = 16;  // BRIEF patch + FAST ring

  GrayImage scores(smooth.width, smooth.height, 0.0f);
  for (int y = kMargin; y < smooth.height - kMargin; ++y) {
    for (int x = kMargin; x < smooth.width - kMargin; ++x) {
      float s;
      if (fast_corner(raw, x, y, t, &s) && depth.at(x, y) > 0.0f) {
        scores.at(x, y) = s;
      }
    }
  }
  struct Corner {
    float score;
    int x, y;
  };
  std::vector<Corner> corners;
  for (int y = kMargin; y < smooth.height - kMargin; ++y) {
    for (int x = kMargin; x < smooth.width - kMargin; ++x) {
      const float s = scores.at(x, y);
      if (s <= 0.0f) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float n = scores.at(x + dx, y + dy);
          if (n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) corners.push_back({s, x, y});
    }
  }
  std::sort(corners.begin(), corners.end(),
            [](const Corner& a, const Corner& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.y != b.y) return a.y < b.y;
              return a.x < b.x;
            });
  if (static_cast<int>(corners.size()) > cfg.loop_max_keypoints) {
    corners.resize(cfg.loop_max_keypoints);
  }
  out.keypoints.reserve(corners.size());
  for (const Corner& c : corners) {
    PlaceDescriptor::Keypoint kp;
    kp.px = Eigen::Vector2f(static_cast<float>(c.x), static_cast<float>(c.y));
    kp.depth = depth.at(c.x, c.y);
    kp.score = c.score;
    kp.descriptor = brief_descriptor(smooth, c.x, c.y);
    out.keypoints.push_back(kp);
  }
  return out;
}

double place_similarity(const PlaceDescriptor& a, const PlaceDescriptor& b) {
  if (a.global.size() == 0 || a.global.size() != b.global.size()) return 0.0;
  // Correlation clamped at zero: unrelated views score near 0, a revisit
  // near 1, which is what the candidate ratio test expects of its scores.
  return std::clamp<double>(a.global.dot(b.global), 0.0, 1.0);
}

int hamming_distance(const std::array<uint64_t, 4>& a,
                     const std::array<uint64_t, 4>& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::vector<std::pair<int, int>> match_keypoints(
    const std::vector<PlaceDescriptor::Keypoint>& a,
    const std::vector<PlaceDescriptor::Keypoint>& b, int max_hamming) {
  std::vector<std::pair<int, int>> matches;
  if (a.empty() || b.empty()) return matches;
  std::vector<int> best_for_b(b.size(), -1);
  std::vector<int> best_dist_b(b.size(), max_hamming + 1);
  std::vector<int> best_for_a(a.size(), -1);
  for (size_t i = 0; i < a.size(); ++i) {
    int best = max_hamming + 1;
    int arg = -1;
    for (size_t j = 0; j < b.size(); ++j) {
      const int d = hamming_distance(a[i].descriptor, b[j].descriptor);
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    best_for_a[i] = arg;
    if (arg >= 0 && best < best_dist_b[arg]) {
      best_dist_b[arg] = best;
      best_for_b[arg] = static_cast<int>(i);
    }
  }
  for (size_t i = 0; i < a.size(); ++i) {
    const int j = best_for_a[i];
    if (j >= 0 && best_for_b[j] == static_cast<int>(i)) {
      matches.emplace_back(static_cast<int>(i), j);
    }
  }
  return matches;
}

}  // namespace rgbds
