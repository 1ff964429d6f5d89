#pragma once

#include <Eigen/Geometry>

#include <string>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/geometry.hpp"
#include "rgbds/image.hpp"
#include "rgbds/png_io.hpp"

namespace rgbds {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Timestamped file list, one of the two halves of a TUM sequence index.
struct TimedFile {
  double timestamp;
  std::string path;
};

/// Ordered rgb/depth associations of a sequence plus its camera model.
struct SequenceManifest {
  struct Entry {
    double timestamp;  // rgb timestamp of the pair
    std::string rgb_path;
    std::string depth_path;
  };
  std::vector<Entry> entries;
  PinholeIntrinsics intrinsics;
  double depth_scale = 5000.0;
};

/// One line of a TUM trajectory file.
struct TrajectoryRecord {
  double timestamp = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  static TrajectoryRecord from_pose(double t, const Pose& pose);
  Pose to_pose() const;
};

/// Parses a "timestamp filename" list (rgb.txt / depth.txt style).
std::vector<TimedFile> read_file_list(const std::string& path);

/// Greedy globally-nearest timestamp pairing: candidate pairs sorted by |dt|,
/// accepted while both endpoints are unused, pairs beyond max_dt dropped.
/// Symmetric in its two arguments by construction. Throws IoError when no
/// pair survives.
std::vector<std::pair<TimedFile, TimedFile>> associate(
    const std::vector<TimedFile>& rgb, const std::vector<TimedFile>& depth,
    double max_dt);

/// Loads rgb.txt/depth.txt of a TUM sequence directory, associates them and
/// verifies every referenced file exists.
SequenceManifest load_manifest(const std::string& dir, const RunConfig& cfg);

/// Decodes a raw RGB-D pair into a tracking frame: luma conversion, depth
/// ticks -> meters with the valid range applied, center crop, pyramid.
/// This is the one place raw sensor data becomes a Frame; the synthetic
/// pipeline funnels through it too so on-disk and in-memory runs agree.
Frame frame_from_raw(const Rgb8Image& rgb, const Gray16Image& depth_raw,
                     double timestamp, const PinholeIntrinsics& intr,
                     double depth_scale, double depth_min, double depth_max);

Frame load_frame(const SequenceManifest::Entry& entry,
                 const PinholeIntrinsics& intr, double depth_scale,
                 double depth_min, double depth_max);

/// TUM format: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
/// Round trip preserves poses to better than 1e-8.
void write_trajectory(const std::string& path,
                      const std::vector<TrajectoryRecord>& records);
std::vector<TrajectoryRecord> read_trajectory(const std::string& path);

/// ASCII PLY v1.0 with x y z and an 8-bit gray color per vertex.
struct PlyVertex {
  Eigen::Vector3f position;
  uint8_t intensity;
};
void write_ply(const std::string& path, const std::vector<PlyVertex>& vertices);

}  // namespace rgbds
