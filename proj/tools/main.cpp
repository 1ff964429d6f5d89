// Batch front-end: track (visual odometry only), slam (full pipeline),
// ablate (residual-configuration matrix), render (synthetic sequences),
// evaluate (ATE between two trajectory files).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rgbds/evaluation.hpp"
#include "rgbds/pose_graph.hpp"
#include "rgbds/renderer.hpp"
#include "rgbds/system.hpp"

namespace fs = std::filesystem;
using namespace rgbds;

namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string dataset;
  std::string scene;
  std::string output = "out";
  std::string mode;
  int frames = -1;
  unsigned long seed = 0;
  bool seed_set = false;
  bool deterministic = false;
  bool verbose = false;
  double noise_intensity = -1.0;
  double noise_disparity = -1.0;
  double noise_dropout = -1.0;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool needs_input) {
  cmd->add_option("--config", opt.config_file, "key = value config file");
  cmd->add_option("--set", opt.overrides, "config override key=value")
      ->take_all();
  if (needs_input) {
    cmd->add_option("--dataset", opt.dataset, "TUM-format sequence directory");
    cmd->add_option("--scene", opt.scene,
                    "synthetic scene name (a, b, c, d, loop)");
  }
  cmd->add_option("-o,--out", opt.output, "output directory");
  cmd->add_option("--mode", opt.mode,
                  "residual mode: PS PD GIDS GIDD GIDD_FULL PS_GIDD PS_GDD");
  cmd->add_option("--frames", opt.frames, "frame count for synthetic scenes");
  cmd->add_option("--seed", opt.seed, "random seed")
      ->each([&opt](const std::string&) { opt.seed_set = true; });
  cmd->add_flag("--deterministic", opt.deterministic,
                "single-threaded fixed interleaving (bit-reproducible)");
  cmd->add_flag("-v,--verbose", opt.verbose, "per-frame diagnostics on stdout");
  cmd->add_option("--noise-intensity", opt.noise_intensity,
                  "synthetic intensity noise sigma");
  cmd->add_option("--noise-disparity", opt.noise_disparity,
                  "synthetic disparity noise sigma");
  cmd->add_option("--noise-dropout", opt.noise_dropout,
                  "synthetic depth dropout probability");
}

RunConfig build_config(const CommonOptions& opt) {
  RunConfig cfg;
  if (!opt.config_file.empty()) cfg = RunConfig::from_file(opt.config_file);
  for (const std::string& kv : opt.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opt.mode.empty()) cfg.tracking_mode = opt.mode;
  if (opt.seed_set) cfg.run_seed = opt.seed;
  if (opt.deterministic) cfg.run_deterministic = true;
  if (opt.verbose) cfg.run_verbose = true;
  cfg.validate();
  return cfg;
}

SceneSpec build_scene(const CommonOptions& opt, const RunConfig& cfg) {
  SceneSpec spec = make_scene(opt.scene);
  if (opt.frames > 0) spec.frame_count = opt.frames;
  if (opt.noise_intensity >= 0.0) spec.noise.intensity_sigma = opt.noise_intensity;
  if (opt.noise_disparity >= 0.0) spec.noise.disparity_sigma = opt.noise_disparity;
  if (opt.noise_dropout >= 0.0) spec.noise.dropout_prob = opt.noise_dropout;
  spec.seed = cfg.run_seed + 1;
  spec.depth_min = cfg.depth_min;
  spec.depth_max = cfg.depth_max;
  spec.depth_scale = cfg.depth_scale;
  return spec;
}

int run_pipeline(const CommonOptions& opt, bool enable_loop) {
  RunConfig cfg = build_config(opt);
  if (!enable_loop) cfg.loop_enabled = false;
  if (opt.dataset.empty() == opt.scene.empty()) {
    throw ConfigError("exactly one of --dataset or --scene is required");
  }

  fs::create_directories(opt.output);
  cfg.write_file(opt.output + "/config.txt");

  std::unique_ptr<FrameSource> source;
  std::vector<TrajectoryRecord> gt;
  if (!opt.scene.empty()) {
    const SceneSpec spec = build_scene(opt, cfg);
    for (int i = 0; i < spec.frame_count; ++i) {
      gt.push_back(TrajectoryRecord::from_pose(
          i / spec.fps, spec.path.pose_at(i, spec.frame_count)));
    }
    source = std::make_unique<SyntheticSource>(spec);
  } else {
    source = std::make_unique<DatasetSource>(load_manifest(opt.dataset, cfg),
                                             cfg);
    const std::string gt_path = opt.dataset + "/groundtruth.txt";
    if (fs::exists(gt_path)) gt = read_trajectory(gt_path);
  }

  SlamSystem system(cfg);
  const SlamResult result = system.run(*source);

  write_trajectory(opt.output + "/trajectory.txt", result.trajectory);
  write_trajectory(opt.output + "/keyframes.txt", result.keyframe_trajectory);
  write_ply(opt.output + "/map.ply",
            map_vertices(result.map_keyframes, result.map_poses));
  write_pose_graph(opt.output + "/pose_graph.g2o", result.pose_graph);
  {
    std::ofstream diag(opt.output + "/diagnostics.jsonl");
    for (const std::string& line : result.diagnostics) {
      diag << line << "\n";
      if (cfg.run_verbose) std::cout << line << "\n";
    }
  }
  {
    std::ofstream timing(opt.output + "/timing.txt");
    timing << "frames " << result.frames_processed << "\n";
    timing << "mean_track_ms " << result.mean_track_ms << "\n";
  }

  nlohmann::json summary;
  summary["status"] = static_cast<int>(result.status);
  summary["frames"] = result.frames_processed;
  summary["keyframes"] = result.keyframes_created + 1;
  summary["reused"] = result.keyframes_reused;
  summary["loop_closures"] = result.loop_events.size();
  summary["mean_track_ms"] = result.mean_track_ms;
  if (!gt.empty() && result.trajectory.size() >= 3) {
    try {
      const AteReport ate = compute_ate(result.trajectory, gt, cfg.assoc_max_dt);
      summary["ate_rmse"] = ate.rmse;
      summary["ate_mean"] = ate.mean;
      summary["ate_matched"] = ate.matched;
    } catch (const std::exception& e) {
      summary["ate_error"] = e.what();
    }
  }
  std::ofstream(opt.output + "/result.json") << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << std::endl;
  return static_cast<int>(result.status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct RGB-D SLAM: tracking, mapping, loop closure"};
  app.require_subcommand(1);

  CommonOptions track_opt, slam_opt, ablate_opt, render_opt;
  std::vector<std::string> ablate_sequences;
  std::vector<std::string> ablate_modes = {"PS",        "PD",      "GIDS",
                                           "GIDD",      "GIDD_FULL",
                                           "PS_GIDD",   "PS_GDD"};
  int ablate_runs = 5;
  std::string eval_estimate, eval_gt;
  double eval_max_dt = 0.02;

  CLI::App* track = app.add_subcommand(
      "track", "visual odometry only (loop back-end disabled)");
  add_common(track, track_opt, true);

  CLI::App* slam = app.add_subcommand("slam", "full pipeline");
  add_common(slam, slam_opt, true);

  CLI::App* ablate =
      app.add_subcommand("ablate", "residual-configuration matrix");
  add_common(ablate, ablate_opt, false);
  ablate->add_option("--sequences", ablate_sequences,
                     "scene names and/or dataset directories")
      ->required()
      ->take_all();
  ablate->add_option("--modes", ablate_modes, "residual modes to evaluate")
      ->take_all();
  ablate->add_option("--runs", ablate_runs, "runs per cell");

  CLI::App* render =
      app.add_subcommand("render", "write a synthetic sequence to disk");
  add_common(render, render_opt, true);

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "ATE between two trajectory files");
  evaluate->add_option("estimate", eval_estimate)->required();
  evaluate->add_option("groundtruth", eval_gt)->required();
  evaluate->add_option("--max-dt", eval_max_dt, "association tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (track->parsed()) return run_pipeline(track_opt, false);
    if (slam->parsed()) return run_pipeline(slam_opt, true);
    if (render->parsed()) {
      const RunConfig cfg = build_config(render_opt);
      if (render_opt.scene.empty()) {
        throw ConfigError("render requires --scene");
      }
      const SceneSpec spec = build_scene(render_opt, cfg);
      render_sequence_to_dir(spec, render_opt.output);
      std::cout << "wrote " << spec.frame_count << " frames to "
                << render_opt.output << std::endl;
      return 0;
    }
    if (ablate->parsed()) {
      const RunConfig cfg = build_config(ablate_opt);
      fs::create_directories(ablate_opt.output);
      cfg.write_file(ablate_opt.output + "/config.txt");
      const AblationMatrix matrix =
          run_ablation(ablate_sequences, ablate_modes, ablate_runs, cfg);
      std::ofstream(ablate_opt.output + "/ablation.jsonl")
          << matrix.to_json_lines();
      const std::string table = matrix.to_table();
      std::ofstream(ablate_opt.output + "/ablation.txt") << table;
      std::cout << table;
      return 0;
    }
    if (evaluate->parsed()) {
      const AteReport ate = compute_ate(read_trajectory(eval_estimate),
                                        read_trajectory(eval_gt), eval_max_dt);
      nlohmann::json j;
      j["rmse"] = ate.rmse;
      j["mean"] = ate.mean;
      j["median"] = ate.median;
      j["max"] = ate.max;
      j["matched"] = ate.matched;
      std::cout << j.dump(2) << std::endl;
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return static_cast<int>(RunStatus::kConfigError);
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << std::endl;
    return static_cast<int>(RunStatus::kIoError);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
