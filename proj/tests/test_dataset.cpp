#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "rgbds/dataset.hpp"

using namespace rgbds;
namespace fs = std::filesystem;

namespace {

std::vector<TimedFile> timed(const std::vector<double>& ts) {
  std::vector<TimedFile> out;
  for (size_t i = 0; i < ts.size(); ++i) {
    out.push_back({ts[i], "f" + std::to_string(i)});
  }
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("rgbds_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Twist xi;
  xi.omega = 0.8 * Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
  xi.v = 2.0 * Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
  return Pose::exp(xi);
}

}  // namespace

TEST_CASE("identical timestamp lists pair one-to-one") {
  const auto pairs =
      associate(timed({0.0, 1.0, 2.0}), timed({0.0, 1.0, 2.0}), 0.02);
  REQUIRE(pairs.size() == 3);
  for (const auto& [a, b] : pairs) CHECK(a.timestamp == b.timestamp);
}

TEST_CASE("pairs beyond the tolerance are dropped") {
  const auto pairs =
      associate(timed({0.0, 1.0, 2.0}), timed({0.01, 1.5}), 0.02);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].first.timestamp == 0.0);
  CHECK(pairs[0].second.timestamp == 0.01);
}

TEST_CASE("disjoint ranges raise an error") {
  CHECK_THROWS_AS(associate(timed({0.0, 1.0}), timed({10.0, 11.0}), 0.02),
                  IoError);
}

TEST_CASE("association quality is symmetric under swapping") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(-0.015, 0.015);
  std::vector<double> a, b;
  for (int i = 0; i < 60; ++i) {
    a.push_back(i / 30.0);
    b.push_back(i / 30.0 + jitter(rng));
  }
  std::sort(b.begin(), b.end());
  const auto fwd = associate(timed(a), timed(b), 0.02);
  const auto rev = associate(timed(b), timed(a), 0.02);
  REQUIRE(fwd.size() == rev.size());
  for (size_t i = 0; i < fwd.size(); ++i) {
    CHECK(fwd[i].first.timestamp == rev[i].second.timestamp);
    CHECK(fwd[i].second.timestamp == rev[i].first.timestamp);
  }
}

TEST_CASE("raw depth decoding applies scale and range") {
  Rgb8Image rgb;
  rgb.width = 640;
  rgb.height = 480;
  rgb.data.assign(640 * 480 * 3, 100);
  Gray16Image depth;
  depth.width = 640;
  depth.height = 480;
  depth.data.assign(640 * 480, 5000);  // 1.000 m everywhere
  depth.data[0] = 0;                   // invalid sentinel
  depth.data[1] = 65535;               // 13.107 m: beyond max range
  depth.data[2] = 1000;                // 0.2 m: below min range

  PinholeIntrinsics intr;
  const Frame frame = frame_from_raw(rgb, depth, 1.5, intr, 5000.0, 0.3, 7.0);
  const DepthImage& d = frame.pyramid.depth[frame.pyramid.finest()];
  CHECK(frame.timestamp == 1.5);
  CHECK(d.at(0, 0) == 0.0f);
  CHECK(d.at(1, 0) == 0.0f);
  CHECK(d.at(2, 0) == 0.0f);
  CHECK(d.at(5, 5) == doctest::Approx(1.0f));
  // invalid pixels are excluded from the inverse-depth image as well
  CHECK(frame.pyramid.inv_depth[3].at(0, 0) == 0.0f);
  CHECK(frame.pyramid.inv_depth[3].at(5, 5) == doctest::Approx(1.0f));
}

TEST_CASE("16-bit png round trip is exact for every tick value") {
  TempDir tmp;
  Gray16Image img;
  img.width = 256;
  img.height = 256;
  img.data.resize(256 * 256);
  for (size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<uint16_t>(i);  // covers all 65536 values
  }
  const std::string path = (tmp.path / "depth.png").string();
  write_png_gray16(path, img);
  const Gray16Image back = read_png_gray16(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.data == img.data);
}

TEST_CASE("rgb png round trip") {
  TempDir tmp;
  Rgb8Image img;
  img.width = 31;
  img.height = 17;
  img.data.resize(31 * 17 * 3);
  std::mt19937_64 rng(5);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng());
  const std::string path = (tmp.path / "rgb.png").string();
  write_png_rgb8(path, img);
  const Rgb8Image back = read_png_rgb8(path);
  CHECK(back.data == img.data);
}

TEST_CASE("reading an 8-bit file as 16-bit depth fails") {
  TempDir tmp;
  Rgb8Image img;
  img.width = 4;
  img.height = 4;
  img.data.assign(48, 10);
  const std::string path = (tmp.path / "not_depth.png").string();
  write_png_rgb8(path, img);
  CHECK_THROWS_AS(read_png_gray16(path), std::runtime_error);
}

TEST_CASE("identity pose serializes to the canonical line") {
  TempDir tmp;
  const std::string path = (tmp.path / "traj.txt").string();
  write_trajectory(path, {TrajectoryRecord::from_pose(1.0, Pose::identity())});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // comment header
  std::getline(in, line);
  CHECK(line ==
        "1.000000 0.000000000 0.000000000 0.000000000 0.000000000 "
        "0.000000000 0.000000000 1.000000000");
}

TEST_CASE("trajectory files round trip within 1e-8") {
  TempDir tmp;
  std::mt19937_64 rng(11);
  std::vector<TrajectoryRecord> records;
  for (int i = 0; i < 64; ++i) {
    records.push_back(TrajectoryRecord::from_pose(0.1 * i, random_pose(rng)));
  }
  const std::string path = (tmp.path / "traj.txt").string();
  write_trajectory(path, records);
  const auto back = read_trajectory(path);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK((back[i].translation - records[i].translation).norm() < 1e-8);
    const Pose pa = records[i].to_pose();
    const Pose pb = back[i].to_pose();
    CHECK((pa.rotation - pb.rotation).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("malformed trajectory lines report the line number") {
  TempDir tmp;
  const std::string path = (tmp.path / "bad.txt").string();
  std::ofstream(path) << "# header\n1.0 0 0 0 0 0 0 1\n2.0 0 0 nonsense\n";
  try {
    read_trajectory(path);
    FAIL("expected a parse error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("ply writer emits one vertex per point") {
  TempDir tmp;
  std::vector<PlyVertex> vertices;
  vertices.push_back({Eigen::Vector3f(0, 0, 2), 128});
  vertices.push_back({Eigen::Vector3f(1, 0, 2), 30});
  const std::string path = (tmp.path / "map.ply").string();
  write_ply(path, vertices);
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(content.find("element vertex 2") != std::string::npos);
  CHECK(content.find("format ascii 1.0") != std::string::npos);
  CHECK(content.find("0.000000 0.000000 2.000000 128 128 128") !=
        std::string::npos);
}

TEST_CASE("manifest loading rejects missing files") {
  TempDir tmp;
  std::ofstream(tmp.path / "rgb.txt") << "1.0 rgb/a.png\n";
  std::ofstream(tmp.path / "depth.txt") << "1.0 depth/a.png\n";
  RunConfig cfg;
  CHECK_THROWS_AS(load_manifest(tmp.path.string(), cfg), IoError);
}
