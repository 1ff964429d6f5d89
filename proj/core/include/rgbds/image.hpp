#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rgbds/geometry.hpp"

namespace rgbds {

/// Row-major single-channel raster.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h) {
    data.assign(static_cast<size_t>(w) * h, fill);
  }

  T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  bool empty() const { return data.empty(); }
};

/// Intensities are stored as real numbers in [0, 255].
using GrayImage = Image<float>;
/// Depth in meters; 0 marks an invalid measurement.
using DepthImage = Image<float>;

constexpr int kPyramidLevels = 4;

/// Per-level image set, coarsest first: for VGA input the gray/depth levels
/// are 80x60, 160x120, 320x240, 640x480.
struct Pyramid {
  std::array<GrayImage, kPyramidLevels> gray;
  std::array<DepthImage, kPyramidLevels> depth;
  std::array<DepthImage, kPyramidLevels> inv_depth;
  std::array<PinholeIntrinsics, kPyramidLevels> intrinsics;

  int finest() const { return kPyramidLevels - 1; }
};

/// Tracking input: timestamped pyramid.
struct Frame {
  double timestamp = 0.0;
  Pyramid pyramid;
};

/// Canny pixels of one image, strongest gradient first.
struct EdgeMask {
  std::vector<Eigen::Vector2i> pixels;
  std::vector<float> strengths;  // gradient magnitudes, parallel to pixels
};

struct CannyParams {
  double blur_sigma = 1.5;
  double low_percentile = 0.70;   // of nonzero gradient magnitudes
  double high_percentile = 0.90;
  int budget = 8000;              // keep the strongest N edges
};

/// True bilinear interpolation; exact at integer coordinates. Caller must
/// keep (u, v) inside [0, w-1] x [0, h-1].
float sample_bilinear(const GrayImage& img, double u, double v);

/// Bounds-checked variant; empty outside the valid domain.
std::optional<float> try_sample_bilinear(const GrayImage& img, double u,
                                         double v);

/// Central-difference gradient at an interior integer pixel.
Eigen::Vector2d central_gradient(const GrayImage& img, int x, int y);

GrayImage gaussian_blur(const GrayImage& img, double sigma);

/// 2x2 box filter; requires even dimensions.
GrayImage downsample_box(const GrayImage& img);

/// 2x2 lower-median of the valid (nonzero) depths per block; 0 when the block
/// has none. Median instead of mean so foreground and background are never
/// mixed across a depth discontinuity.
DepthImage downsample_depth_median(const DepthImage& img);

DepthImage invert_depth(const DepthImage& depth);

/// Largest centered crop with both dimensions divisible by 8; shifts the
/// principal point accordingly.
void crop_to_multiple_of_8(GrayImage& gray, DepthImage& depth,
                           PinholeIntrinsics& intr);

/// Builds the 4-level pyramid. Input must be at least 80x60 with dimensions
/// divisible by 8 (use crop_to_multiple_of_8 first); throws otherwise.
Pyramid build_pyramid(const GrayImage& gray, const DepthImage& depth,
                      const PinholeIntrinsics& intr);

/// Canny edge detector with hysteresis thresholds taken as percentiles of the
/// nonzero gradient magnitudes. Deterministic; output sorted by strength
/// descending (ties by row, column) and truncated to the budget.
EdgeMask canny_edges(const GrayImage& img, const CannyParams& params);

/// Subsampling stride of the dense geometric point set per pyramid level
/// (0 = coarsest): every pixel at the coarsest level, then one in every
/// 2, 3, 4 pixels horizontally and vertically.
int geometric_subsample(int level);

float rgb_to_gray(uint8_t r, uint8_t g, uint8_t b);

}  // namespace rgbds
