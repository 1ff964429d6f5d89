#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rgbds/config.hpp"
#include "rgbds/dataset.hpp"
#include "rgbds/loop.hpp"
#include "rgbds/mapping.hpp"
#include "rgbds/pose_graph.hpp"
#include "rgbds/renderer.hpp"
#include "rgbds/tracking.hpp"

namespace rgbds {

enum class RunStatus : int {
  kSuccess = 0,
  kTrackingLost = 2,
  kConfigError = 3,
  kIoError = 4,
};

/// Ordered frame provider; implementations load lazily.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual size_t size() const = 0;
  virtual Frame frame(size_t i) = 0;
  virtual std::optional<Pose> ground_truth(size_t i) { (void)i; return std::nullopt; }
};

class DatasetSource : public FrameSource {
 public:
  DatasetSource(SequenceManifest manifest, const RunConfig& cfg);
  size_t size() const override { return manifest_.entries.size(); }
  Frame frame(size_t i) override;

 private:
  SequenceManifest manifest_;
  double depth_min_, depth_max_;
};

class SyntheticSource : public FrameSource {
 public:
  explicit SyntheticSource(SceneSpec spec) : spec_(std::move(spec)) {}
  size_t size() const override { return spec_.frame_count; }
  Frame frame(size_t i) override;
  std::optional<Pose> ground_truth(size_t i) override;
  const SceneSpec& spec() const { return spec_; }

 private:
  SceneSpec spec_;
};

struct LoopClosureEvent {
  int frame_index = 0;
  int query_id = -1;
  int match_id = -1;
  int inliers = 0;
  double cost_before = 0.0;
  double cost_after = 0.0;
  std::vector<TrajectoryRecord> keyframes_before;  // poses entering the optimization
  std::vector<TrajectoryRecord> keyframes_after;
};

struct SlamResult {
  RunStatus status = RunStatus::kSuccess;
  std::vector<TrajectoryRecord> trajectory;           // per frame
  std::vector<TrajectoryRecord> keyframe_trajectory;  // final keyframe poses
  std::vector<LoopClosureEvent> loop_events;
  int frames_processed = 0;
  int keyframes_created = 0;
  int keyframes_reused = 0;
  double mean_track_ms = 0.0;
  std::vector<std::string> diagnostics;  // one JSON record per frame

  // Final map snapshot.
  std::vector<KeyframePtr> map_keyframes;
  std::vector<Pose> map_poses;
  PoseGraph pose_graph;
};

/// Batch SLAM pipeline: tracking in the caller's thread; mapping refinement
/// and the loop back-end either inline (deterministic mode, fixed
/// interleaving: map on keyframe retirement, back-end after every keyframe
/// publication) or on two worker threads consuming the same jobs. Workers
/// communicate through immutable keyframe snapshots; poses are published
/// atomically.
class SlamSystem {
 public:
  explicit SlamSystem(const RunConfig& cfg);
  ~SlamSystem();

  SlamResult run(FrameSource& source);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// World-frame vertices of the final map: each keyframe's semi-dense points
/// and dense grid, rigidly moved with its (optimized) pose. Point clouds are
/// per keyframe and never fused across keyframes.
std::vector<PlyVertex> map_vertices(const std::vector<KeyframePtr>& keyframes,
                                    const std::vector<Pose>& poses);

}  // namespace rgbds
