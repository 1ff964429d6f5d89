#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/dataset.hpp"
#include "rgbds/geometry.hpp"

namespace rgbds {

/// Absolute trajectory error after rigid SE(3) alignment (no scale: RGB-D is
/// metric).
struct AteReport {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  Pose alignment;  // maps estimate coordinates onto the ground truth
  int matched = 0;
};

/// Associates the two trajectories by timestamp (nearest within max_dt),
/// aligns the estimate onto the ground truth by the closed-form rigid fit on
/// the translations, and reports statistics of the residual translation
/// errors. Throws std::invalid_argument with fewer than 3 associations.
AteReport compute_ate(const std::vector<TrajectoryRecord>& estimated,
                      const std::vector<TrajectoryRecord>& ground_truth,
                      double max_dt = 0.02);

/// One trajectory evaluation in the residual-configuration matrix.
struct AblationCell {
  std::string sequence;
  std::string mode;
  std::vector<double> run_rmse;   // successful runs only
  int runs_attempted = 0;
  std::optional<double> median;   // set when >= 3 runs succeeded
};

struct AblationMatrix {
  std::vector<AblationCell> cells;

  std::string to_table() const;       // aligned text table, "-" for failures
  std::string to_json_lines() const;  // one record per cell
};

/// Runs the full pipeline `runs` times per (sequence, mode) with seeds
/// base_seed, base_seed+1, ... and reports the median RMSE of the successful
/// runs (at least 3 required, otherwise the cell is a failure). Sequences are
/// synthetic scene names or dataset directories; ground truth comes from the
/// renderer or the sequence's groundtruth.txt.
AblationMatrix run_ablation(const std::vector<std::string>& sequences,
                            const std::vector<std::string>& modes, int runs,
                            const RunConfig& base_config);

}  // namespace rgbds
