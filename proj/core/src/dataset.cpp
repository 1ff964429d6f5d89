#include "rgbds/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace rgbds {

TrajectoryRecord TrajectoryRecord::from_pose(double t, const Pose& pose) {
  TrajectoryRecord rec;
  rec.timestamp = t;
  rec.translation = pose.translation;
  rec.rotation = Eigen::Quaterniond(pose.rotation).normalized();
  if (rec.rotation.w() < 0.0) rec.rotation.coeffs() *= -1.0;
  return rec;
}

Pose TrajectoryRecord::to_pose() const {
  return Pose(rotation.normalized().toRotationMatrix(), translation);
}

std::vector<TimedFile> read_file_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file list: " + path);
  std::vector<TimedFile> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    TimedFile f;
    if (!(ss >> f.timestamp >> f.path)) {
      if (ss.eof() && f.path.empty() && line.find_first_not_of(" \t\r\n") ==
                                            std::string::npos) {
        continue;  // blank line
      }
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed entry");
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<std::pair<TimedFile, TimedFile>> associate(
    const std::vector<TimedFile>& rgb, const std::vector<TimedFile>& depth,
    double max_dt) {
  struct Candidate {
    double dt;
    size_t i, j;
  };
  std::vector<Candidate> candidates;
  // Each rgb entry only needs the depth entries within max_dt; a two-pointer
  // sweep keeps this linear-ish for sorted inputs.
  size_t lo = 0;
  for (size_t i = 0; i < rgb.size(); ++i) {
    while (lo < depth.size() && depth[lo].timestamp < rgb[i].timestamp - max_dt)
      ++lo;
    for (size_t j = lo; j < depth.size(); ++j) {
      const double dt = depth[j].timestamp - rgb[i].timestamp;
      if (dt > max_dt) break;
      candidates.push_back({std::abs(dt), i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](const Candidate& a, const Candidate& b) {
              if (a.dt != b.dt) return a.dt < b.dt;
              if (rgb[a.i].timestamp != rgb[b.i].timestamp)
                return rgb[a.i].timestamp < rgb[b.i].timestamp;
              return depth[a.j].timestamp < depth[b.j].timestamp;
            });
  std::vector<char> used_rgb(rgb.size(), 0), used_depth(depth.size(), 0);
  std::vector<std::pair<TimedFile, TimedFile>> pairs;
  for (const Candidate& c : candidates) {
    if (used_rgb[c.i] || used_depth[c.j]) continue;
    used_rgb[c.i] = used_depth[c.j] = 1;
    pairs.emplace_back(rgb[c.i], depth[c.j]);
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return a.first.timestamp < b.first.timestamp;
  });
  if (pairs.empty()) throw IoError("association produced no rgb-depth pairs");
  return pairs;
}

SequenceManifest load_manifest(const std::string& dir, const RunConfig& cfg) {
  const auto rgb = read_file_list(dir + "/rgb.txt");
  const auto depth = read_file_list(dir + "/depth.txt");
  const auto pairs = associate(rgb, depth, cfg.assoc_max_dt);

  SequenceManifest manifest;
  manifest.intrinsics.fx = cfg.cam_fx;
  manifest.intrinsics.fy = cfg.cam_fy;
  manifest.intrinsics.cx = cfg.cam_cx;
  manifest.intrinsics.cy = cfg.cam_cy;
  manifest.intrinsics.width = cfg.cam_width;
  manifest.intrinsics.height = cfg.cam_height;
  manifest.intrinsics.baseline = cfg.cam_baseline;
  manifest.intrinsics.disparity_sigma = cfg.cam_disparity_sigma;
  manifest.depth_scale = cfg.depth_scale;

  for (const auto& [r, d] : pairs) {
    SequenceManifest::Entry e;
    e.timestamp = r.timestamp;
    e.rgb_path = dir + "/" + r.path;
    e.depth_path = dir + "/" + d.path;
    if (!fs::exists(e.rgb_path)) throw IoError("missing file: " + e.rgb_path);
    if (!fs::exists(e.depth_path))
      throw IoError("missing file: " + e.depth_path);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

Frame frame_from_raw(const Rgb8Image& rgb, const Gray16Image& depth_raw,
                     double timestamp, const PinholeIntrinsics& intr,
                     double depth_scale, double depth_min, double depth_max) {
  if (rgb.width != depth_raw.width || rgb.height != depth_raw.height) {
    throw IoError("rgb/depth dimensions disagree");
  }
  GrayImage gray(rgb.width, rgb.height);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const uint8_t* px = &rgb.data[(static_cast<size_t>(y) * rgb.width + x) * 3];
      gray.at(x, y) = rgb_to_gray(px[0], px[1], px[2]);
    }
  }
  DepthImage depth(rgb.width, rgb.height);
  for (size_t i = 0; i < depth_raw.data.size(); ++i) {
    const uint16_t raw = depth_raw.data[i];
    if (raw == 0) {
      depth.data[i] = 0.0f;
      continue;
    }
    const double z = raw / depth_scale;
    depth.data[i] = (z < depth_min || z > depth_max)
                        ? 0.0f
                        : static_cast<float>(z);
  }
  PinholeIntrinsics cropped = intr;
  crop_to_multiple_of_8(gray, depth, cropped);

  Frame frame;
  frame.timestamp = timestamp;
  frame.pyramid = build_pyramid(gray, depth, cropped);
  return frame;
}

Frame load_frame(const SequenceManifest::Entry& entry,
                 const PinholeIntrinsics& intr, double depth_scale,
                 double depth_min, double depth_max) {
  const Rgb8Image rgb = read_png_rgb8(entry.rgb_path);
  const Gray16Image depth = read_png_gray16(entry.depth_path);
  return frame_from_raw(rgb, depth, entry.timestamp, intr, depth_scale,
                        depth_min, depth_max);
}

void write_trajectory(const std::string& path,
                      const std::vector<TrajectoryRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory: " + path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char line[256];
  for (const TrajectoryRecord& r : records) {
    std::snprintf(line, sizeof(line),
                  "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", r.timestamp,
                  r.translation.x(), r.translation.y(), r.translation.z(),
                  r.rotation.x(), r.rotation.y(), r.rotation.z(),
                  r.rotation.w());
    out << line;
  }
}

std::vector<TrajectoryRecord> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory: " + path);
  std::vector<TrajectoryRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ss(line);
    TrajectoryRecord r;
    double qx, qy, qz, qw;
    if (!(ss >> r.timestamp >> r.translation.x() >> r.translation.y() >>
          r.translation.z() >> qx >> qy >> qz >> qw)) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": malformed trajectory line");
    }
    r.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    if (std::abs(r.rotation.norm() - 1.0) > 1e-3) {
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": quaternion is not unit length");
    }
    r.rotation.normalize();
    records.push_back(r);
  }
  return records;
}

void write_ply(const std::string& path,
               const std::vector<PlyVertex>& vertices) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ply: " + path);
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  char line[160];
  for (const PlyVertex& v : vertices) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %d %d %d\n",
                  v.position.x(), v.position.y(), v.position.z(), v.intensity,
                  v.intensity, v.intensity);
    out << line;
  }
}

}  // namespace rgbds
