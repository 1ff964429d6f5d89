#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rgbds/image.hpp"

using namespace rgbds;

namespace {

GrayImage constant_image(int w, int h, float value) {
  return GrayImage(w, h, value);
}

GrayImage noise_image(int w, int h, uint64_t seed) {
  GrayImage img(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uni(0.0f, 255.0f);
  for (float& v : img.data) v = uni(rng);
  return img;
}

double mean_intensity(const GrayImage& img) {
  double sum = 0.0;
  for (float v : img.data) sum += v;
  return sum / img.data.size();
}

PinholeIntrinsics vga_intr() {
  PinholeIntrinsics intr;
  return intr;  // defaults are the VGA values
}

}  // namespace

TEST_CASE("pyramid of a constant image stays constant") {
  const GrayImage gray = constant_image(640, 480, 128.0f);
  const DepthImage depth(640, 480, 2.0f);
  const Pyramid pyr = build_pyramid(gray, depth, vga_intr());
  for (int level = 0; level < kPyramidLevels; ++level) {
    for (float v : pyr.gray[level].data) {
      CHECK(v == doctest::Approx(128.0f).epsilon(1e-9));
    }
  }
}

TEST_CASE("pyramid levels have the documented sizes for VGA input") {
  const Pyramid pyr = build_pyramid(constant_image(640, 480, 10.0f),
                                    DepthImage(640, 480, 1.0f), vga_intr());
  CHECK(pyr.gray[0].width == 80);
  CHECK(pyr.gray[0].height == 60);
  CHECK(pyr.gray[1].width == 160);
  CHECK(pyr.gray[1].height == 120);
  CHECK(pyr.gray[2].width == 320);
  CHECK(pyr.gray[2].height == 240);
  CHECK(pyr.gray[3].width == 640);
  CHECK(pyr.gray[3].height == 480);
}

TEST_CASE("box filter averages each 2x2 block") {
  GrayImage img(2, 2, 0.0f);
  img.at(0, 1) = 255.0f;
  img.at(1, 1) = 255.0f;
  const GrayImage down = downsample_box(img);
  CHECK(down.width == 1);
  CHECK(down.height == 1);
  CHECK(down.at(0, 0) == doctest::Approx(127.5f));
}

TEST_CASE("pyramid preserves the mean intensity per level") {
  const GrayImage gray = noise_image(640, 480, 99);
  const Pyramid pyr = build_pyramid(gray, DepthImage(640, 480, 1.0f),
                                    vga_intr());
  for (int level = 0; level < kPyramidLevels - 1; ++level) {
    CHECK(mean_intensity(pyr.gray[level]) ==
          doctest::Approx(mean_intensity(pyr.gray[level + 1])).epsilon(1e-9));
  }
}

TEST_CASE("pyramid rejects undersized input") {
  CHECK_THROWS_AS(build_pyramid(constant_image(72, 56, 0.0f),
                                DepthImage(72, 56, 1.0f), vga_intr()),
                  std::invalid_argument);
}

TEST_CASE("depth downsampling takes a measured value, never a blend") {
  DepthImage img(2, 2, 0.0f);
  img.at(0, 0) = 1.0f;   // foreground
  img.at(1, 0) = 1.01f;
  img.at(0, 1) = 4.0f;   // background
  img.at(1, 1) = 0.0f;   // invalid
  const DepthImage down = downsample_depth_median(img);
  // lower median of {1.0, 1.01, 4.0}
  CHECK(down.at(0, 0) == doctest::Approx(1.01f));

  DepthImage invalid(2, 2, 0.0f);
  CHECK(downsample_depth_median(invalid).at(0, 0) == 0.0f);
}

TEST_CASE("bilinear sampling is exact at integer coordinates") {
  const GrayImage img = noise_image(16, 16, 5);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(sample_bilinear(img, x, y) == img.at(x, y));
    }
  }
}

TEST_CASE("bilinear midpoint of a horizontal pair") {
  GrayImage img(2, 1, 0.0f);
  img.at(1, 0) = 100.0f;
  CHECK(sample_bilinear(img, 0.5, 0.0) == doctest::Approx(50.0f));
}

TEST_CASE("bilinear sampling matches an independent re-implementation") {
  // Oracle written against the weight-expansion formula instead of the
  // incremental form used by the implementation.
  const auto oracle = [](const GrayImage& img, double u, double v) {
    const int x0 = std::min(static_cast<int>(std::floor(u)), img.width - 2);
    const int y0 = std::min(static_cast<int>(std::floor(v)), img.height - 2);
    const double fx = u - x0;
    const double fy = v - y0;
    double acc = 0.0;
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
        acc += w * img.at(x0 + dx, y0 + dy);
      }
    }
    return acc;
  };
  const GrayImage img = noise_image(32, 24, 31);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ux(0.0, 31.0);
  std::uniform_real_distribution<double> uy(0.0, 23.0);
  for (int i = 0; i < 500; ++i) {
    const double u = ux(rng);
    const double v = uy(rng);
    CHECK(sample_bilinear(img, u, v) ==
          doctest::Approx(oracle(img, u, v)).epsilon(1e-6));
  }
}

TEST_CASE("bilinear sampling is Lipschitz in the gradient bound") {
  const GrayImage img = noise_image(32, 32, 8);
  float max_grad = 0.0f;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x + 1 < 32; ++x) {
      max_grad = std::max(max_grad, std::abs(img.at(x + 1, y) - img.at(x, y)));
    }
  }
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(0.0, 30.5);
  std::uniform_real_distribution<double> uy(0.0, 31.0);
  std::uniform_real_distribution<double> ueps(0.0, 0.4);
  for (int i = 0; i < 300; ++i) {
    const double u = ux(rng);
    const double v = uy(rng);
    const double eps = ueps(rng);
    const double delta =
        std::abs(sample_bilinear(img, u + eps, v) - sample_bilinear(img, u, v));
    CHECK(delta <= eps * max_grad + 1e-4);
  }
}

TEST_CASE("out-of-bounds sampling signals a discard") {
  const GrayImage img = constant_image(8, 8, 1.0f);
  CHECK_FALSE(try_sample_bilinear(img, -0.1, 0.0).has_value());
  CHECK_FALSE(try_sample_bilinear(img, 7.5, 0.0).has_value());
  CHECK(try_sample_bilinear(img, 7.0, 7.0).has_value());
}

TEST_CASE("canny of a constant image is empty") {
  const EdgeMask mask = canny_edges(constant_image(64, 64, 77.0f), {});
  CHECK(mask.pixels.empty());
}

TEST_CASE("canny localizes a vertical step edge") {
  GrayImage img(64, 64, 20.0f);
  const int c = 32;
  for (int y = 0; y < 64; ++y) {
    for (int x = c; x < 64; ++x) img.at(x, y) = 220.0f;
  }
  const EdgeMask mask = canny_edges(img, {});
  REQUIRE(!mask.pixels.empty());
  for (const auto& px : mask.pixels) {
    CHECK(px.x() >= c - 2);
    CHECK(px.x() <= c + 1);
  }
}

TEST_CASE("canny budget caps the edge count") {
  GrayImage img(640, 480);
  for (int y = 0; y < 480; ++y) {
    for (int x = 0; x < 640; ++x) {
      img.at(x, y) = ((x / 8 + y / 8) % 2) ? 200.0f : 40.0f;
    }
  }
  CannyParams params;
  params.budget = 8000;
  const EdgeMask mask = canny_edges(img, params);
  CHECK(mask.pixels.size() <= 8000);
  CHECK(mask.pixels.size() > 1000);
}

TEST_CASE("canny is deterministic") {
  const GrayImage img = noise_image(160, 120, 4242);
  const EdgeMask a = canny_edges(img, {});
  const EdgeMask b = canny_edges(img, {});
  REQUIRE(a.pixels.size() == b.pixels.size());
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    CHECK(a.pixels[i] == b.pixels[i]);
  }
}

TEST_CASE("geometric subsampling strides") {
  CHECK(geometric_subsample(0) == 1);
  CHECK(geometric_subsample(1) == 2);
  CHECK(geometric_subsample(2) == 3);
  CHECK(geometric_subsample(3) == 4);
  CHECK_THROWS_AS(geometric_subsample(4), std::invalid_argument);

  // Strided position count at the finest level of a VGA image.
  int count = 0;
  for (int y = 0; y < 480; y += 4) {
    for (int x = 0; x < 640; x += 4) ++count;
  }
  CHECK(count == 19200);
}

TEST_CASE("center crop shifts the principal point") {
  GrayImage gray(641, 482, 5.0f);
  DepthImage depth(641, 482, 1.0f);
  PinholeIntrinsics intr;
  intr.width = 641;
  intr.height = 482;
  intr.cx = 320.0;
  intr.cy = 240.5;
  crop_to_multiple_of_8(gray, depth, intr);
  CHECK(gray.width == 640);
  CHECK(gray.height == 480);
  CHECK(intr.cx == doctest::Approx(320.0));  // 0 columns cut on the left
  CHECK(intr.cy == doctest::Approx(239.5));  // 1 row cut on top
}
