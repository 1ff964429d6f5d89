#include "rgbds/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "rgbds/loop.hpp"
#include "rgbds/renderer.hpp"
#include "rgbds/system.hpp"

namespace rgbds {

AteReport compute_ate(const std::vector<TrajectoryRecord>& estimated,
                      const std::vector<TrajectoryRecord>& ground_truth,
                      double max_dt) {
  std::vector<TimedFile> est_times, gt_times;
  est_times.reserve(estimated.size());
  gt_times.reserve(ground_truth.size());
  for (size_t i = 0; i < estimated.size(); ++i) {
    est_times.push_back({estimated[i].timestamp, std::to_string(i)});
  }
  for (size_t i = 0; i < ground_truth.size(); ++i) {
    gt_times.push_back({ground_truth[i].timestamp, std::to_string(i)});
  }
  std::vector<std::pair<TimedFile, TimedFile>> pairs;
  try {
    pairs = associate(est_times, gt_times, max_dt);
  } catch (const IoError&) {
    throw std::invalid_argument("trajectories share no timestamps");
  }
  if (pairs.size() < 3) {
    throw std::invalid_argument("need at least 3 associated poses");
  }

  std::vector<Eigen::Vector3d> est_pts, gt_pts;
  est_pts.reserve(pairs.size());
  gt_pts.reserve(pairs.size());
  for (const auto& [e, g] : pairs) {
    est_pts.push_back(estimated[std::stoul(e.path)].translation);
    gt_pts.push_back(ground_truth[std::stoul(g.path)].translation);
  }

  AteReport report;
  report.matched = static_cast<int>(pairs.size());
  report.alignment = horn_align(est_pts, gt_pts);

  std::vector<double> errors;
  errors.reserve(est_pts.size());
  double sq_sum = 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < est_pts.size(); ++i) {
    const double e = (gt_pts[i] - report.alignment * est_pts[i]).norm();
    errors.push_back(e);
    sq_sum += e * e;
    sum += e;
    report.max = std::max(report.max, e);
  }
  report.rmse = std::sqrt(sq_sum / errors.size());
  report.mean = sum / errors.size();
  const size_t mid = errors.size() / 2;
  std::nth_element(errors.begin(), errors.begin() + mid, errors.end());
  report.median = errors[mid];
  return report;
}

std::string AblationMatrix::to_table() const {
  // Collect row (mode) and column (sequence) labels in first-seen order.
  std::vector<std::string> modes, sequences;
  for (const AblationCell& c : cells) {
    if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) {
      modes.push_back(c.mode);
    }
    if (std::find(sequences.begin(), sequences.end(), c.sequence) ==
        sequences.end()) {
      sequences.push_back(c.sequence);
    }
  }
  const auto cell_text = [this](const std::string& mode,
                                const std::string& seq) -> std::string {
    for (const AblationCell& c : cells) {
      if (c.mode == mode && c.sequence == seq) {
        if (!c.median) return "-";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", *c.median * 100.0);
        return buf;
      }
    }
    return "";
  };

  size_t width = 12;
  for (const std::string& s : sequences) width = std::max(width, s.size() + 2);
  std::ostringstream os;
  os << "RMSE [cm], median of runs; '-' marks failure\n";
  os << std::string(10, ' ');
  for (const std::string& s : sequences) {
    os << std::string(width - s.size(), ' ') << s;
  }
  os << "\n";
  for (const std::string& m : modes) {
    os << m << std::string(10 - std::min<size_t>(10, m.size()), ' ');
    for (const std::string& s : sequences) {
      const std::string t = cell_text(m, s);
      os << std::string(width - t.size(), ' ') << t;
    }
    os << "\n";
  }
  return os.str();
}

std::string AblationMatrix::to_json_lines() const {
  std::ostringstream os;
  for (const AblationCell& c : cells) {
    nlohmann::json j;
    j["sequence"] = c.sequence;
    j["mode"] = c.mode;
    j["runs_attempted"] = c.runs_attempted;
    j["runs_succeeded"] = c.run_rmse.size();
    j["rmse"] = c.run_rmse;
    if (c.median) {
      j["median_rmse"] = *c.median;
    } else {
      j["median_rmse"] = nullptr;
    }
    os << j.dump() << "\n";
  }
  return os.str();
}

namespace {

bool is_scene_name(const std::string& sequence) {
  return !std::filesystem::is_directory(sequence);
}

}  // namespace

AblationMatrix run_ablation(const std::vector<std::string>& sequences,
                            const std::vector<std::string>& modes, int runs,
                            const RunConfig& base_config) {
  AblationMatrix matrix;
  for (const std::string& seq : sequences) {
    // Ground truth loaded once per sequence.
    std::vector<TrajectoryRecord> gt;
    std::optional<SceneSpec> spec;
    if (is_scene_name(seq)) {
      spec = make_scene(seq);
      for (int i = 0; i < spec->frame_count; ++i) {
        gt.push_back(TrajectoryRecord::from_pose(
            i / spec->fps, spec->path.pose_at(i, spec->frame_count)));
      }
    } else {
      gt = read_trajectory(seq + "/groundtruth.txt");
    }

    for (const std::string& mode : modes) {
      AblationCell cell;
      cell.sequence = is_scene_name(seq)
                          ? seq
                          : std::filesystem::path(seq).filename().string();
      cell.mode = mode;
      cell.runs_attempted = runs;
      for (int r = 0; r < runs; ++r) {
        RunConfig cfg = base_config;
        cfg.tracking_mode = mode;
        cfg.run_seed = base_config.run_seed + static_cast<unsigned long>(r);
        try {
          SlamSystem system(cfg);
          SlamResult result;
          if (spec) {
            SyntheticSource source(*spec);
            result = system.run(source);
          } else {
            DatasetSource source(load_manifest(seq, cfg), cfg);
            result = system.run(source);
          }
          if (result.status != RunStatus::kSuccess) continue;
          const AteReport ate =
              compute_ate(result.trajectory, gt, base_config.assoc_max_dt);
          cell.run_rmse.push_back(ate.rmse);
        } catch (const std::exception&) {
          // A lost track or degenerate run is a failure for this cell.
        }
      }
      if (static_cast<int>(cell.run_rmse.size()) >= std::min(runs, 3)) {
        std::vector<double> sorted = cell.run_rmse;
        std::sort(sorted.begin(), sorted.end());
        cell.median = sorted[sorted.size() / 2];
      }
      matrix.cells.push_back(std::move(cell));
    }
  }
  return matrix;
}

}  // namespace rgbds
