#include "rgbds/renderer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;

namespace rgbds {

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(uint32_t seed, int64_t ix, int64_t iy) {
  const uint64_t h = mix64((static_cast<uint64_t>(ix) * 0x632be59bd9b4e019ULL) ^
                           (static_cast<uint64_t>(iy) << 32) ^ seed);
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Smooth value noise in [-1, 1].
double value_noise(uint32_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int64_t ix = static_cast<int64_t>(fx);
  const int64_t iy = static_cast<int64_t>(fy);
  const double tx = fade(x - fx);
  const double ty = fade(y - fy);
  const double v00 = lattice_value(seed, ix, iy);
  const double v10 = lattice_value(seed, ix + 1, iy);
  const double v01 = lattice_value(seed, ix, iy + 1);
  const double v11 = lattice_value(seed, ix + 1, iy + 1);
  const double a = v00 + (v10 - v00) * tx;
  const double b = v01 + (v11 - v01) * tx;
  return 2.0 * (a + (b - a) * ty) - 1.0;
}

}  // namespace

double Texture::value(double u, double v) const {
  double out = base;
  switch (kind) {
    case Kind::kConstant:
      break;
    case Kind::kChecker: {
      const int64_t cu = static_cast<int64_t>(std::floor(u / scale));
      const int64_t cv = static_cast<int64_t>(std::floor(v / scale));
      out = base + (((cu + cv) & 1) != 0 ? amplitude : -amplitude) * 0.5;
      break;
    }
    case Kind::kNoise: {
      const double n0 = value_noise(seed, u / scale, v / scale);
      const double n1 = value_noise(seed + 77u, 2.0 * u / scale + 13.7,
                                    2.0 * v / scale + 5.3);
      out = base + amplitude * (0.7 * n0 + 0.3 * n1);
      break;
    }
  }
  return std::clamp(out, 0.0, 255.0);
}

void add_box(std::vector<Rect>& rects, const Eigen::Vector3d& c,
             const Eigen::Vector3d& h, const Texture& texture) {
  using V = Eigen::Vector3d;
  // face at -z and +z
  rects.push_back({c + V(-h.x(), -h.y(), -h.z()), V(2 * h.x(), 0, 0),
                   V(0, 2 * h.y(), 0), texture});
  rects.push_back({c + V(-h.x(), -h.y(), h.z()), V(2 * h.x(), 0, 0),
                   V(0, 2 * h.y(), 0), texture});
  // face at -x and +x
  rects.push_back({c + V(-h.x(), -h.y(), -h.z()), V(0, 0, 2 * h.z()),
                   V(0, 2 * h.y(), 0), texture});
  rects.push_back({c + V(h.x(), -h.y(), -h.z()), V(0, 0, 2 * h.z()),
                   V(0, 2 * h.y(), 0), texture});
  // face at -y and +y
  rects.push_back({c + V(-h.x(), -h.y(), -h.z()), V(2 * h.x(), 0, 0),
                   V(0, 0, 2 * h.z()), texture});
  rects.push_back({c + V(-h.x(), h.y(), -h.z()), V(2 * h.x(), 0, 0),
                   V(0, 0, 2 * h.z()), texture});
}

namespace {

Pose look_at_pose(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d up(0, -1, 0);  // camera y points down, world y is up here
  Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right).normalized();
  Eigen::Matrix3d rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = forward;
  return Pose(rot, eye);
}

}  // namespace

Pose CameraPath::pose_at(int i, int n) const {
  const double s = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
  switch (kind) {
    case Kind::kStatic:
      return Pose(Eigen::Matrix3d::Identity(), start);
    case Kind::kTranslation:
      return Pose(Eigen::Matrix3d::Identity(), start + s * delta);
    case Kind::kRotation: {
      const double a = s * total_angle;
      return Pose(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY())
                      .toRotationMatrix(),
                  start);
    }
    case Kind::kCircle:
    case Kind::kLoop: {
      const double span = kind == Kind::kLoop ? 2.0 * M_PI : 1.5 * M_PI;
      const double theta = s * span;
      const Eigen::Vector3d eye =
          start + Eigen::Vector3d(radius * std::sin(theta), 0.0,
                                  radius * (1.0 - std::cos(theta)));
      return look_at_pose(eye, look_at);
    }
  }
  return Pose();
}

namespace {

struct Hit {
  double depth;   // along camera z
  double u, v;    // local surface coordinates, meters
  const Rect* rect;
};

// Nearest ray-rectangle intersection; ray given in world coordinates.
std::optional<Hit> cast_ray(const std::vector<Rect>& rects,
                            const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir_world,
                            double dir_z_cam) {
  std::optional<Hit> best;
  for (const Rect& r : rects) {
    const Eigen::Vector3d n = r.edge_u.cross(r.edge_v);
    const double denom = n.dot(dir_world);
    if (std::abs(denom) < 1e-12) continue;
    const double t = n.dot(r.origin - origin) / denom;
    if (t <= 1e-9) continue;
    const Eigen::Vector3d p = origin + t * dir_world - r.origin;
    const double uu = p.dot(r.edge_u) / r.edge_u.squaredNorm();
    const double vv = p.dot(r.edge_v) / r.edge_v.squaredNorm();
    if (uu < 0.0 || uu > 1.0 || vv < 0.0 || vv > 1.0) continue;
    const double depth = t * dir_z_cam;  // z component in the camera frame
    if (!best || depth < best->depth) {
      best = Hit{depth, uu * r.edge_u.norm(), vv * r.edge_v.norm(), &r};
    }
  }
  return best;
}

}  // namespace

RawRender render_frame(const SceneSpec& spec, int i) {
  const PinholeIntrinsics& intr = spec.intrinsics;
  RawRender out;
  out.timestamp = i / spec.fps;
  out.gt_pose = spec.path.pose_at(i, spec.frame_count);
  out.rgb.width = intr.width;
  out.rgb.height = intr.height;
  out.rgb.data.resize(static_cast<size_t>(intr.width) * intr.height * 3);
  out.depth.width = intr.width;
  out.depth.height = intr.height;
  out.depth.data.resize(static_cast<size_t>(intr.width) * intr.height);

  std::mt19937_64 rng(mix64(spec.seed ^ (0xABCDull + 31ull * i)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const Eigen::Matrix3d& R = out.gt_pose.rotation;
  const Eigen::Vector3d& c = out.gt_pose.translation;
  const double fb = intr.fx * intr.baseline;

  size_t hits = 0;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Eigen::Vector3d dir_cam((x - intr.cx) / intr.fx,
                                    (y - intr.cy) / intr.fy, 1.0);
      const Eigen::Vector3d dir_world = R * dir_cam;
      const auto hit = cast_ray(spec.surfaces, c, dir_world, 1.0);

      double intensity = 0.0;
      double z = 0.0;
      if (hit) {
        ++hits;
        if (hit->depth < 0.05) {
          throw std::runtime_error(
              "degenerate scene: camera inside geometry at frame " +
              std::to_string(i));
        }
        intensity = hit->rect->texture.value(hit->u, hit->v);
        z = hit->depth;
      }
      if (spec.noise.intensity_sigma > 0.0) {
        intensity += spec.noise.intensity_sigma * gauss(rng);
      }
      const uint8_t gray8 = static_cast<uint8_t>(
          std::lround(std::clamp(intensity, 0.0, 255.0)));
      uint8_t* px = &out.rgb.data[(static_cast<size_t>(y) * intr.width + x) * 3];
      px[0] = px[1] = px[2] = gray8;

      uint16_t ticks = 0;
      if (z > 0.0) {
        double zn = z;
        if (spec.noise.disparity_sigma > 0.0) {
          const double d = fb / z + spec.noise.disparity_sigma * gauss(rng);
          zn = d > 1e-9 ? fb / d : 0.0;
        }
        if (spec.noise.dropout_prob > 0.0 && uni(rng) < spec.noise.dropout_prob) {
          zn = 0.0;
        }
        if (zn >= spec.depth_min && zn <= spec.depth_max) {
          const long t16 = std::lround(zn * spec.depth_scale);
          ticks = static_cast<uint16_t>(std::clamp<long>(t16, 0, 65535));
        }
      }
      out.depth.data[static_cast<size_t>(y) * intr.width + x] = ticks;
    }
  }
  const double coverage =
      static_cast<double>(hits) / (static_cast<double>(intr.width) * intr.height);
  if (coverage < 0.30) {
    throw std::runtime_error("degenerate scene: frame " + std::to_string(i) +
                             " views only " + std::to_string(coverage * 100.0) +
                             "% of any surface");
  }
  return out;
}

DepthImage render_analytic_depth(const SceneSpec& spec, int i) {
  const PinholeIntrinsics& intr = spec.intrinsics;
  const Pose pose = spec.path.pose_at(i, spec.frame_count);
  DepthImage depth(intr.width, intr.height, 0.0f);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Eigen::Vector3d dir_cam((x - intr.cx) / intr.fx,
                                    (y - intr.cy) / intr.fy, 1.0);
      const auto hit = cast_ray(spec.surfaces, pose.translation,
                                pose.rotation * dir_cam, 1.0);
      if (hit) depth.at(x, y) = static_cast<float>(hit->depth);
    }
  }
  return depth;
}

Frame frame_from_render(const RawRender& raw, const SceneSpec& spec) {
  return frame_from_raw(raw.rgb, raw.depth, raw.timestamp, spec.intrinsics,
                        spec.depth_scale, spec.depth_min, spec.depth_max);
}

void render_sequence_to_dir(const SceneSpec& spec, const std::string& dir) {
  fs::create_directories(dir + "/rgb");
  fs::create_directories(dir + "/depth");
  std::ofstream rgb_list(dir + "/rgb.txt");
  std::ofstream depth_list(dir + "/depth.txt");
  if (!rgb_list || !depth_list) {
    throw IoError("cannot write sequence lists under " + dir);
  }
  rgb_list << "# timestamp filename\n";
  depth_list << "# timestamp filename\n";

  std::vector<TrajectoryRecord> gt;
  char name[64];
  for (int i = 0; i < spec.frame_count; ++i) {
    const RawRender raw = render_frame(spec, i);
    std::snprintf(name, sizeof(name), "%010.6f.png", raw.timestamp);
    write_png_rgb8(dir + "/rgb/" + name, raw.rgb);
    write_png_gray16(dir + "/depth/" + name, raw.depth);
    char ts[32];
    std::snprintf(ts, sizeof(ts), "%.6f", raw.timestamp);
    rgb_list << ts << " rgb/" << name << "\n";
    depth_list << ts << " depth/" << name << "\n";
    gt.push_back(TrajectoryRecord::from_pose(raw.timestamp, raw.gt_pose));
  }
  write_trajectory(dir + "/groundtruth.txt", gt);
}

SceneSpec make_scene(const std::string& name) {
  SceneSpec spec;
  spec.name = name;
  spec.seed = 1;
  spec.frame_count = 100;

  // Band-limited noise textures: step edges (checkers) would give every
  // Canny point the same interpolation-bias phase and skew the alignment.
  Texture fine_noise{Texture::Kind::kNoise, 130.0, 90.0, 0.18, 11};
  Texture coarse_noise{Texture::Kind::kNoise, 120.0, 85.0, 0.35, 23};
  Texture mid_noise{Texture::Kind::kNoise, 125.0, 95.0, 0.26, 5};
  Texture flat{Texture::Kind::kConstant, 120.0, 0.0, 1.0, 0};

  using V = Eigen::Vector3d;
  if (name == "a") {
    // Textured and structured: floor, back wall, angled side wall, box.
    spec.surfaces.push_back({V(-4, -1.0, 0.5), V(8, 0, 0), V(0, 0, 7),
                             coarse_noise});                       // floor
    spec.surfaces.push_back({V(-4, -1.0, 4.0), V(8, 0, 0), V(0, 5, 0),
                             fine_noise});                         // back wall
    spec.surfaces.push_back({V(-2.2, -1.0, 0.5), V(1.2, 0, 3.6), V(0, 5, 0),
                             mid_noise});                          // side wall
    add_box(spec.surfaces, V(0.5, -0.55, 2.2), V(0.35, 0.45, 0.35),
            fine_noise);
    spec.path.kind = CameraPath::Kind::kCircle;
    spec.path.radius = 0.3;
    spec.path.look_at = V(0, 0, 2.8);
  } else if (name == "b") {
    // Structure-less: one big textured plane, fronto-parallel.
    spec.surfaces.push_back({V(-5, -4, 2.5), V(10, 0, 0), V(0, 8, 0),
                             fine_noise});
    spec.path.kind = CameraPath::Kind::kTranslation;
    spec.path.delta = V(0.5, 0.0, 0.0);  // in-plane dolly
  } else if (name == "c") {
    // Texture-less corridor: every surface the same constant intensity.
    spec.surfaces.push_back({V(-1.0, -0.8, 0.2), V(0, 0, 6), V(0, 1.6, 0),
                             flat});  // left wall
    spec.surfaces.push_back({V(1.0, -0.8, 0.2), V(0, 0, 6), V(0, 1.6, 0),
                             flat});  // right wall
    spec.surfaces.push_back({V(-1.0, -0.8, 0.2), V(2, 0, 0), V(0, 0, 6),
                             flat});  // floor
    spec.surfaces.push_back({V(-1.0, 0.8, 0.2), V(2, 0, 0), V(0, 0, 6),
                             flat});  // ceiling
    spec.surfaces.push_back({V(-1.0, -0.8, 6.2), V(2, 0, 0), V(0, 1.6, 0),
                             flat});  // end wall
    spec.path.kind = CameraPath::Kind::kTranslation;
    spec.path.start = V(0, 0, 0.8);
    spec.path.delta = V(0.15, 0.0, 0.6);
  } else if (name == "d") {
    // Near structure plus content far beyond the sensor range. Distant
    // textures are coarse so their image-space features stay wider than the
    // epipolar search's first-pass sample spacing.
    Texture far_noise{Texture::Kind::kNoise, 128.0, 90.0, 0.8, 31};
    Texture backdrop_noise{Texture::Kind::kNoise, 118.0, 80.0, 1.1, 37};
    spec.surfaces.push_back({V(-4, -1.0, 0.5), V(8, 0, 0), V(0, 0, 15),
                             coarse_noise});  // long floor
    add_box(spec.surfaces, V(-0.6, -0.5, 2.0), V(0.35, 0.5, 0.35),
            mid_noise);
    spec.surfaces.push_back({V(-6, -1.0, 12.0), V(12, 0, 0), V(0, 7, 0),
                             far_noise});  // wall at 12 m: beyond range
    spec.surfaces.push_back({V(-8, -1.0, 15.0), V(16, 0, 0), V(0, 9, 0),
                             backdrop_noise});  // backdrop at 15 m
    spec.path.kind = CameraPath::Kind::kTranslation;
    spec.path.delta = V(0.45, 0.0, 0.0);
  } else if (name == "loop") {
    // Scene (a) geometry on a closed orbit that revisits the first view.
    spec = make_scene("a");
    spec.name = "loop";
    spec.path.kind = CameraPath::Kind::kLoop;
    spec.frame_count = 160;
  } else {
    throw std::invalid_argument("unknown scene: " + name);
  }
  return spec;
}

std::vector<SceneSpec> make_standard_scenes() {
  return {make_scene("a"), make_scene("b"), make_scene("c"), make_scene("d")};
}

}  // namespace rgbds
