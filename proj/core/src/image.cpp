#include "rgbds/image.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace rgbds {

float sample_bilinear(const GrayImage& img, double u, double v) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  // Clamp the cell so that u == width-1 still reads a valid 2x2 block.
  const int cx = std::min(x0, img.width - 2);
  const int cy = std::min(y0, img.height - 2);
  const double ax = u - cx;
  const double ay = v - cy;
  const float* row0 = &img.data[static_cast<size_t>(cy) * img.width + cx];
  const float* row1 = row0 + img.width;
  return static_cast<float>((1.0 - ax) * (1.0 - ay) * row0[0] +
                            ax * (1.0 - ay) * row0[1] +
                            (1.0 - ax) * ay * row1[0] + ax * ay * row1[1]);
}

std::optional<float> try_sample_bilinear(const GrayImage& img, double u,
                                         double v) {
  if (u < 0.0 || v < 0.0 || u > img.width - 1 || v > img.height - 1) {
    return std::nullopt;
  }
  return sample_bilinear(img, u, v);
}

Eigen::Vector2d central_gradient(const GrayImage& img, int x, int y) {
  return Eigen::Vector2d(0.5 * (img.at(x + 1, y) - img.at(x - 1, y)),
                         0.5 * (img.at(x, y + 1) - img.at(x, y - 1)));
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const auto reflect = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };

  GrayImage tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * img.at(reflect(x + k, img.width), y);
      }
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp.at(x, reflect(y + k, img.height));
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

GrayImage downsample_box(const GrayImage& img) {
  if (img.width % 2 != 0 || img.height % 2 != 0) {
    throw std::invalid_argument("box downsample requires even dimensions");
  }
  GrayImage out(img.width / 2, img.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const float s = img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) +
                      img.at(2 * x, 2 * y + 1) + img.at(2 * x + 1, 2 * y + 1);
      out.at(x, y) = 0.25f * s;
    }
  }
  return out;
}

DepthImage downsample_depth_median(const DepthImage& img) {
  if (img.width % 2 != 0 || img.height % 2 != 0) {
    throw std::invalid_argument("depth downsample requires even dimensions");
  }
  DepthImage out(img.width / 2, img.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      float vals[4];
      int n = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const float d = img.at(2 * x + dx, 2 * y + dy);
          if (d > 0.0f) vals[n++] = d;
        }
      }
      if (n == 0) {
        out.at(x, y) = 0.0f;
        continue;
      }
      std::sort(vals, vals + n);
      out.at(x, y) = vals[(n - 1) / 2];  // lower median: a measured value
    }
  }
  return out;
}

DepthImage invert_depth(const DepthImage& depth) {
  DepthImage out(depth.width, depth.height);
  for (size_t i = 0; i < depth.data.size(); ++i) {
    out.data[i] = depth.data[i] > 0.0f ? 1.0f / depth.data[i] : 0.0f;
  }
  return out;
}

void crop_to_multiple_of_8(GrayImage& gray, DepthImage& depth,
                           PinholeIntrinsics& intr) {
  const int w = gray.width - gray.width % 8;
  const int h = gray.height - gray.height % 8;
  if (w == gray.width && h == gray.height) return;
  const int x0 = (gray.width - w) / 2;
  const int y0 = (gray.height - h) / 2;
  GrayImage g(w, h);
  DepthImage d(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      g.at(x, y) = gray.at(x + x0, y + y0);
      d.at(x, y) = depth.at(x + x0, y + y0);
    }
  }
  gray = std::move(g);
  depth = std::move(d);
  intr.cx -= x0;
  intr.cy -= y0;
  intr.width = w;
  intr.height = h;
}

Pyramid build_pyramid(const GrayImage& gray, const DepthImage& depth,
                      const PinholeIntrinsics& intr) {
  if (gray.width < 80 || gray.height < 60) {
    throw std::invalid_argument("input smaller than 80x60");
  }
  if (gray.width % 8 != 0 || gray.height % 8 != 0) {
    throw std::invalid_argument("input dimensions must be divisible by 8");
  }
  if (depth.width != gray.width || depth.height != gray.height) {
    throw std::invalid_argument("gray/depth size mismatch");
  }
  Pyramid pyr;
  const int finest = kPyramidLevels - 1;
  pyr.gray[finest] = gray;
  pyr.depth[finest] = depth;
  pyr.intrinsics[finest] = intr;
  for (int level = finest - 1; level >= 0; --level) {
    pyr.gray[level] = downsample_box(pyr.gray[level + 1]);
    pyr.depth[level] = downsample_depth_median(pyr.depth[level + 1]);
    pyr.intrinsics[level] = pyr.intrinsics[level + 1].halved();
  }
  for (int level = 0; level < kPyramidLevels; ++level) {
    pyr.inv_depth[level] = invert_depth(pyr.depth[level]);
  }
  return pyr;
}

namespace {

// 3x3 Sobel; returns gradient magnitude image (border left zero).
GrayImage sobel_magnitude(const GrayImage& img, GrayImage& gx, GrayImage& gy) {
  GrayImage mag(img.width, img.height, 0.0f);
  gx = GrayImage(img.width, img.height, 0.0f);
  gy = GrayImage(img.width, img.height, 0.0f);
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      const float dx = (img.at(x + 1, y - 1) + 2.0f * img.at(x + 1, y) +
                        img.at(x + 1, y + 1)) -
                       (img.at(x - 1, y - 1) + 2.0f * img.at(x - 1, y) +
                        img.at(x - 1, y + 1));
      const float dy = (img.at(x - 1, y + 1) + 2.0f * img.at(x, y + 1) +
                        img.at(x + 1, y + 1)) -
                       (img.at(x - 1, y - 1) + 2.0f * img.at(x, y - 1) +
                        img.at(x + 1, y - 1));
      gx.at(x, y) = dx;
      gy.at(x, y) = dy;
      mag.at(x, y) = std::hypot(dx, dy);
    }
  }
  return mag;
}

}  // namespace

EdgeMask canny_edges(const GrayImage& img, const CannyParams& params) {
  EdgeMask mask;
  if (img.width < 3 || img.height < 3) return mask;

  const GrayImage smoothed = gaussian_blur(img, params.blur_sigma);
  GrayImage gx, gy;
  const GrayImage mag = sobel_magnitude(smoothed, gx, gy);

  // Percentile thresholds over the pixels that actually carry gradient.
  constexpr float kMinGradient = 1e-6f;
  std::vector<float> nonzero;
  nonzero.reserve(mag.data.size());
  for (float m : mag.data) {
    if (m > kMinGradient) nonzero.push_back(m);
  }
  if (nonzero.empty()) return mask;
  const auto percentile = [&nonzero](double p) {
    const size_t idx = static_cast<size_t>(
        std::min<double>(nonzero.size() - 1, p * (nonzero.size() - 1)));
    std::nth_element(nonzero.begin(), nonzero.begin() + idx, nonzero.end());
    return nonzero[idx];
  };
  const float high = percentile(params.high_percentile);
  const float low = percentile(params.low_percentile);

  // Non-maximum suppression with 4-way quantized direction.
  Image<uint8_t> state(img.width, img.height, 0);  // 1 = weak, 2 = strong
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      const float m = mag.at(x, y);
      if (m < low || m < kMinGradient) continue;
      const float dx = gx.at(x, y);
      const float dy = gy.at(x, y);
      float m1, m2;
      const float adx = std::abs(dx);
      const float ady = std::abs(dy);
      if (adx > 2.414f * ady) {  // ~horizontal gradient
        m1 = mag.at(x - 1, y);
        m2 = mag.at(x + 1, y);
      } else if (ady > 2.414f * adx) {  // ~vertical
        m1 = mag.at(x, y - 1);
        m2 = mag.at(x, y + 1);
      } else if (dx * dy > 0.0f) {  // 45 degrees
        m1 = mag.at(x - 1, y - 1);
        m2 = mag.at(x + 1, y + 1);
      } else {  // 135 degrees
        m1 = mag.at(x - 1, y + 1);
        m2 = mag.at(x + 1, y - 1);
      }
      if (m >= m1 && m >= m2) {
        state.at(x, y) = m >= high ? 2 : 1;
      }
    }
  }

  // Hysteresis: grow from strong pixels through weak ones.
  Image<uint8_t> accepted(img.width, img.height, 0);
  std::deque<Eigen::Vector2i> queue;
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      if (state.at(x, y) == 2 && !accepted.at(x, y)) {
        accepted.at(x, y) = 1;
        queue.emplace_back(x, y);
        while (!queue.empty()) {
          const Eigen::Vector2i p = queue.front();
          queue.pop_front();
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int nx = p.x() + dx;
              const int ny = p.y() + dy;
              if (nx < 1 || ny < 1 || nx >= img.width - 1 ||
                  ny >= img.height - 1) {
                continue;
              }
              if (state.at(nx, ny) != 0 && !accepted.at(nx, ny)) {
                accepted.at(nx, ny) = 1;
                queue.emplace_back(nx, ny);
              }
            }
          }
        }
      }
    }
  }

  struct Edge {
    float strength;
    int x, y;
  };
  std::vector<Edge> edges;
  for (int y = 1; y < img.height - 1; ++y) {
    for (int x = 1; x < img.width - 1; ++x) {
      if (accepted.at(x, y)) edges.push_back({mag.at(x, y), x, y});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.strength != b.strength) return a.strength > b.strength;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (static_cast<int>(edges.size()) > params.budget) {
    edges.resize(params.budget);
  }
  mask.pixels.reserve(edges.size());
  mask.strengths.reserve(edges.size());
  for (const Edge& e : edges) {
    mask.pixels.emplace_back(e.x, e.y);
    mask.strengths.push_back(e.strength);
  }
  return mask;
}

int geometric_subsample(int level) {
  if (level < 0 || level >= kPyramidLevels) {
    throw std::invalid_argument("pyramid level out of range");
  }
  return level + 1;
}

float rgb_to_gray(uint8_t r, uint8_t g, uint8_t b) {
  return static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
}

}  // namespace rgbds
