#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rgbds/dataset.hpp"
#include "rgbds/geometry.hpp"
#include "rgbds/image.hpp"
#include "rgbds/png_io.hpp"

namespace rgbds {

/// Procedural surface intensity in [0, 255], evaluated in the rectangle's
/// local (u, v) meters. Deterministic in (seed, u, v).
struct Texture {
  enum class Kind { kConstant, kChecker, kNoise };
  Kind kind = Kind::kConstant;
  double base = 128.0;       // mean intensity
  double amplitude = 80.0;   // contrast around the mean
  double scale = 0.25;       // feature size in meters
  uint32_t seed = 1;

  double value(double u, double v) const;
};

/// Textured rectangle: origin corner plus two orthogonal edge vectors.
struct Rect {
  Eigen::Vector3d origin;
  Eigen::Vector3d edge_u;
  Eigen::Vector3d edge_v;
  Texture texture;
};

/// Appends the six faces of an axis-aligned box.
void add_box(std::vector<Rect>& rects, const Eigen::Vector3d& center,
             const Eigen::Vector3d& half_extent, const Texture& texture);

struct CameraPath {
  enum class Kind {
    kStatic,
    kTranslation,   // start -> start + delta, fixed orientation
    kRotation,      // fixed position, pan about the camera y axis
    kCircle,        // 3/4 arc with look-at, does not revisit the start
    kLoop,          // full revolution with look-at, returns to the start
  };
  Kind kind = Kind::kStatic;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();  // translation paths
  double total_angle = 0.0;                         // rotation paths, radians
  double radius = 0.3;                              // circle/loop, meters
  Eigen::Vector3d look_at = Eigen::Vector3d(0, 0, 2.5);

  /// Camera-to-world pose of frame i out of n.
  Pose pose_at(int i, int n) const;
};

/// Sensor corruption applied to the ideal render. Depth noise goes through
/// the disparity domain (d = f b / z + noise) so its error grows
/// quadratically with depth like the real sensor.
struct NoiseModel {
  double intensity_sigma = 0.0;  // gray levels
  double disparity_sigma = 0.0;  // pixels
  double dropout_prob = 0.0;     // chance a depth pixel reads invalid
};

struct SceneSpec {
  std::string name;
  std::vector<Rect> surfaces;
  CameraPath path;
  int frame_count = 100;
  double fps = 30.0;
  PinholeIntrinsics intrinsics;
  NoiseModel noise;
  double depth_min = 0.3;
  double depth_max = 7.0;
  double depth_scale = 5000.0;
  uint64_t seed = 1;
};

/// One rendered frame in the exact representation a sensor recording would
/// have on disk: quantized 8-bit color and 16-bit depth ticks. Running from
/// these or from their PNG round trip is bit-identical.
struct RawRender {
  double timestamp = 0.0;
  Pose gt_pose;          // camera to world
  Rgb8Image rgb;
  Gray16Image depth;     // ticks, 0 invalid (dropout or out of range)
};

/// Renders frame i of the spec by ray casting. Throws std::runtime_error for
/// degenerate specs: a surface closer than 5 cm (camera inside geometry) or
/// less than 30% of pixels hitting any surface.
RawRender render_frame(const SceneSpec& spec, int i);

/// Noise-free analytic depth of frame i (ray-intersection distance along the
/// optical axis), unquantized and without range limits. The oracle for
/// mapping accuracy checks.
DepthImage render_analytic_depth(const SceneSpec& spec, int i);

Frame frame_from_render(const RawRender& raw, const SceneSpec& spec);

/// Writes the sequence as a TUM-format directory (rgb/, depth/, rgb.txt,
/// depth.txt, groundtruth.txt).
void render_sequence_to_dir(const SceneSpec& spec, const std::string& dir);

/// The four canonical test scenes:
///   a  textured and structured (floor, walls, box)
///   b  textured single plane: no usable structure
///   c  textureless corridor: rich structure, no texture
///   d  near structure plus content beyond the depth range (12 m and 15 m)
SceneSpec make_scene(const std::string& name);
std::vector<SceneSpec> make_standard_scenes();

}  // namespace rgbds
