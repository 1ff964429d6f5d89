#include "rgbds/system.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

#include "rgbds/place_recognition.hpp"

namespace rgbds {

DatasetSource::DatasetSource(SequenceManifest manifest, const RunConfig& cfg)
    : manifest_(std::move(manifest)),
      depth_min_(cfg.depth_min),
      depth_max_(cfg.depth_max) {}

Frame DatasetSource::frame(size_t i) {
  return load_frame(manifest_.entries[i], manifest_.intrinsics,
                    manifest_.depth_scale, depth_min_, depth_max_);
}

Frame SyntheticSource::frame(size_t i) {
  return frame_from_render(render_frame(spec_, static_cast<int>(i)), spec_);
}

std::optional<Pose> SyntheticSource::ground_truth(size_t i) {
  return spec_.path.pose_at(static_cast<int>(i), spec_.frame_count);
}

namespace {

/// Shared map: immutable keyframe snapshots plus one pose per keyframe,
/// replaced atomically.
class KeyframeStore {
 public:
  int add(KeyframePtr kf) {
    std::lock_guard lock(mu_);
    kfs_.push_back(std::move(kf));
    poses_.push_back(kfs_.back()->pose);
    return static_cast<int>(kfs_.size()) - 1;
  }
  void replace(int id, KeyframePtr kf) {
    std::lock_guard lock(mu_);
    kfs_[id] = std::move(kf);
  }
  void update_poses(const std::vector<Pose>& poses) {
    std::lock_guard lock(mu_);
    for (size_t i = 0; i < poses.size() && i < poses_.size(); ++i) {
      poses_[i] = poses[i];
    }
  }
  KeyframePtr get(int id) const {
    std::lock_guard lock(mu_);
    return kfs_[id];
  }
  Pose pose(int id) const {
    std::lock_guard lock(mu_);
    return poses_[id];
  }
  void snapshot(std::vector<KeyframePtr>& kfs, std::vector<Pose>& poses) const {
    std::lock_guard lock(mu_);
    kfs = kfs_;
    poses = poses_;
  }
  size_t size() const {
    std::lock_guard lock(mu_);
    return kfs_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<KeyframePtr> kfs_;
  std::vector<Pose> poses_;
};

struct MappingJob {
  int kf_id;
  std::vector<ViewSnapshot> views;
};

struct BackendJob {
  int kf_id;
  int frame_index;
};

/// Single-producer worker with a drainable queue. In deterministic mode the
/// queue is bypassed and jobs run inline.
template <typename Job>
class Worker {
 public:
  void start(std::function<void(Job&)> fn) {
    fn_ = std::move(fn);
    thread_ = std::thread([this] {
      std::unique_lock lock(mu_);
      for (;;) {
        cv_.wait(lock, [this] { return stop_ || !jobs_.empty(); });
        if (jobs_.empty()) {
          if (stop_) return;
          continue;
        }
        Job job = std::move(jobs_.front());
        jobs_.pop_front();
        ++active_;
        lock.unlock();
        fn_(job);
        lock.lock();
        --active_;
        cv_.notify_all();
      }
    });
  }
  void submit(Job job) {
    {
      std::lock_guard lock(mu_);
      jobs_.push_back(std::move(job));
    }
    cv_.notify_all();
  }
  void drain() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return jobs_.empty() && active_ == 0; });
  }
  void stop() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

 private:
  std::function<void(Job&)> fn_;
  std::thread thread_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Job> jobs_;
  bool stop_ = false;
  int active_ = 0;
};

}  // namespace

struct SlamSystem::Impl {
  RunConfig cfg;
  ResidualConfig rc;

  KeyframeStore store;
  PoseGraph graph;
  std::mutex graph_mu;

  Worker<MappingJob> map_worker;
  Worker<BackendJob> backend_worker;
  bool workers_started = false;

  std::mt19937_64 backend_rng;
  SlamResult* result = nullptr;  // active run
  std::vector<char> refined;    // per keyframe: refinement already ran

  explicit Impl(const RunConfig& c)
      : cfg(c),
        rc(ResidualConfig::from(c)),
        backend_rng(c.run_seed ^ 0x9e3779b97f4a7c15ULL) {}

  void run_mapping(MappingJob& job) {
    if (job.kf_id < static_cast<int>(refined.size()) && refined[job.kf_id]) {
      return;  // keyframes are refined once, at their first retirement
    }
    const KeyframePtr kf = store.get(job.kf_id);
    KeyframePtr out = refine_keyframe(*kf, job.views, cfg);
    store.replace(job.kf_id, std::move(out));
    if (job.kf_id < static_cast<int>(refined.size())) refined[job.kf_id] = 1;
  }

  void run_backend(BackendJob& job) {
    std::vector<KeyframePtr> kfs;
    std::vector<Pose> poses;
    store.snapshot(kfs, poses);
    const auto cand = detect_loop_candidate(kfs, job.kf_id, cfg);
    if (!cand) return;
    std::mt19937_64 rng(backend_rng());  // per-attempt stream, deterministic
    const LoopCandidate verified =
        verify_and_align(*cand, *kfs[job.kf_id], *kfs[cand->match_id], cfg,
                         rng);
    if (!verified.accepted) return;

    std::lock_guard lock(graph_mu);
    PoseGraphEdge edge;
    edge.from = verified.match_id;
    edge.to = verified.query_id;
    edge.measured = verified.T_query_match.inverse();
    graph.edges.push_back(edge);
    graph.nodes.clear();
    store.snapshot(kfs, poses);
    graph.nodes = poses;
    graph.fixed_node = 0;

    LoopClosureEvent event;
    event.frame_index = job.frame_index;
    event.query_id = verified.query_id;
    event.match_id = verified.match_id;
    event.inliers = verified.inliers;
    for (size_t i = 0; i < kfs.size(); ++i) {
      event.keyframes_before.push_back(
          TrajectoryRecord::from_pose(kfs[i]->timestamp, poses[i]));
    }
    const PoseGraphReport report = optimize_pose_graph(
        graph, cfg.posegraph_max_iterations, cfg.posegraph_epsilon);
    event.cost_before = report.initial_cost;
    event.cost_after = report.final_cost;
    store.update_poses(graph.nodes);
    for (size_t i = 0; i < kfs.size(); ++i) {
      event.keyframes_after.push_back(
          TrajectoryRecord::from_pose(kfs[i]->timestamp, graph.nodes[i]));
    }
    if (result) result->loop_events.push_back(std::move(event));
  }

  void dispatch_mapping(MappingJob job) {
    if (cfg.run_deterministic) {
      run_mapping(job);
    } else {
      map_worker.submit(std::move(job));
    }
  }
  void dispatch_backend(BackendJob job) {
    if (!cfg.loop_enabled) return;
    if (cfg.run_deterministic) {
      run_backend(job);
    } else {
      backend_worker.submit(std::move(job));
    }
  }
  void sync() {
    if (!cfg.run_deterministic && workers_started) {
      map_worker.drain();
      backend_worker.drain();
    }
  }
};

SlamSystem::SlamSystem(const RunConfig& cfg) : impl_(new Impl(cfg)) {
  impl_->cfg.validate();
  if (!cfg.run_deterministic) {
    impl_->map_worker.start([this](MappingJob& j) { impl_->run_mapping(j); });
    impl_->backend_worker.start(
        [this](BackendJob& j) { impl_->run_backend(j); });
    impl_->workers_started = true;
  }
}

SlamSystem::~SlamSystem() {
  if (impl_->workers_started) {
    impl_->map_worker.stop();
    impl_->backend_worker.stop();
  }
}

SlamResult SlamSystem::run(FrameSource& source) {
  Impl& im = *impl_;
  const RunConfig& cfg = im.cfg;
  SlamResult result;
  im.result = &result;
  im.refined.assign(1024, 0);

  if (source.size() == 0) throw IoError("empty frame source");

  struct RelativeRecord {
    double timestamp;
    int kf_id;
    Pose T_k_f;  // frame pose in its reference keyframe's frame
  };
  std::vector<RelativeRecord> rel_trajectory;

  // Bootstrap: the first frame becomes keyframe 0 at the world origin.
  Frame frame = source.frame(0);
  KeyframePtr kf0 = create_keyframe(0, frame, Pose::identity(), cfg);
  int ref_id = im.store.add(kf0);
  {
    std::lock_guard lock(im.graph_mu);
    im.graph.nodes.push_back(kf0->pose);
  }
  rel_trajectory.push_back({frame.timestamp, ref_id, Pose::identity()});
  im.dispatch_backend({ref_id, 0});

  KeyframePtr ref = kf0;
  Pose rel = Pose::identity();  // T_k_f of the current frame
  // Live world poses of the last two frames, for the constant-velocity prior.
  Pose world_prev = Pose::identity();
  Pose world_prev2 = Pose::identity();
  bool have_two = false;

  std::vector<ViewSnapshot> pool;
  double sigma_ph = cfg.tracking_sigma_ph_init;
  double total_ms = 0.0;

  // Seeded jitter on the first motion prior: the randomized initialization
  // the ablation protocol varies between runs.
  std::mt19937_64 jitter_rng(cfg.run_seed * 0x2545F4914F6CDD1DULL + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Twist jitter;
  jitter.omega = cfg.tracking_jitter_rot *
                 Eigen::Vector3d(gauss(jitter_rng), gauss(jitter_rng),
                                 gauss(jitter_rng));
  jitter.v = cfg.tracking_jitter_trans *
             Eigen::Vector3d(gauss(jitter_rng), gauss(jitter_rng),
                             gauss(jitter_rng));

  const size_t n = source.size();
  for (size_t i = 1; i < n; ++i) {
    frame = source.frame(i);
    const auto t0 = std::chrono::steady_clock::now();

    // Constant-velocity prediction in the reference keyframe's frame.
    Pose rel_pred = rel;
    if (have_two) {
      const Pose vel = world_prev2.inverse() * world_prev;
      const Pose world_pred = world_prev * vel;
      rel_pred = im.store.pose(ref_id).inverse() * world_pred;
    }
    if (i == 1) {
      rel_pred = rel_pred * Pose::exp(jitter);
    }

    TrackingState init;
    init.pose = ref->pose * rel_pred;
    init.gain = 1.0;
    init.brightness = 0.0;
    init.sigma_ph = sigma_ph;
    ResidualStats stats;
    const TrackingState state =
        track_frame(frame, *ref, init, im.rc, &stats);

    const auto t1 = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    total_ms += ms;

    rel = ref->pose.inverse() * state.pose;
    const Pose world = im.store.pose(ref_id) * rel;

    {
      nlohmann::json d;
      d["frame"] = i;
      d["timestamp"] = frame.timestamp;
      d["keyframe"] = ref_id;
      d["iterations"] = state.level_iterations;
      d["cost"] = stats.cost;
      d["sigma_ph"] = sigma_ph;
      d["sigma_g"] = stats.sigma_g;
      d["inlier_fraction"] = stats.inlier_fraction;
      d["residuals"] = stats.residual_count;
      d["gain"] = state.gain;
      d["brightness"] = state.brightness;
      d["ms"] = ms;
      d["lost"] = state.lost;
      result.diagnostics.push_back(d.dump());
    }

    if (state.lost) {
      result.status = RunStatus::kTrackingLost;
      break;
    }

    sigma_ph = update_sigma_ph(stats.raw_photometric, sigma_ph,
                               cfg.tracking_sigma_ph_floor);
    rel_trajectory.push_back({frame.timestamp, ref_id, rel});
    result.frames_processed = static_cast<int>(i) + 1;

    world_prev2 = world_prev;
    world_prev = world;
    have_two = true;

    // View pool for multi-view mapping: spaced snapshots, widest baselines
    // kept when full.
    {
      const double baseline = (state.pose.translation -
                               ref->pose.translation).norm();
      double nearest = 1e9;
      double weakest = 1e9;
      size_t weakest_idx = 0;
      for (size_t p = 0; p < pool.size(); ++p) {
        nearest = std::min(nearest, (pool[p].pose.translation -
                                     state.pose.translation).norm());
        const double bp =
            (pool[p].pose.translation - ref->pose.translation).norm();
        if (bp < weakest) {
          weakest = bp;
          weakest_idx = p;
        }
      }
      if (baseline >= cfg.mapping_min_baseline &&
          nearest >= cfg.mapping_min_baseline) {
        ViewSnapshot snap;
        snap.pose = state.pose;
        snap.gray = frame.pyramid.gray[frame.pyramid.finest()];
        snap.intrinsics = frame.pyramid.intrinsics[frame.pyramid.finest()];
        if (static_cast<int>(pool.size()) < cfg.mapping_max_pool) {
          pool.push_back(std::move(snap));
        } else if (baseline > weakest) {
          pool[weakest_idx] = std::move(snap);
        }
      }
    }

    const KeyframeDecision kd = should_create_keyframe(*ref, state.pose, cfg);
    if (!kd.create) continue;

    // Try to reuse an existing keyframe before creating a new one.
    std::vector<KeyframePtr> kfs;
    std::vector<Pose> poses;
    im.store.snapshot(kfs, poses);
    std::vector<int> candidates;
    if (cfg.loop_enabled && cfg.loop_reuse_enabled &&
        static_cast<int>(kfs.size()) > cfg.loop_temporal_exclusion) {
      const PlaceDescriptor place =
          compute_place_descriptor(frame.pyramid, cfg);
      std::vector<std::pair<double, int>> scored;
      for (int k = 0;
           k + cfg.loop_temporal_exclusion < static_cast<int>(kfs.size());
           ++k) {
        scored.emplace_back(place_similarity(place, kfs[k]->place), k);
      }
      std::sort(scored.begin(), scored.end(), std::greater<>());
      for (int c = 0;
           c < std::min<int>(cfg.loop_max_candidates, scored.size()); ++c) {
        candidates.push_back(scored[c].second);
      }
    }
    const ReuseDecision decision = map_reuse_decision(
        frame, world, kfs, poses, candidates, cfg);

    if (decision.action == ReuseAction::kReuse) {
      im.dispatch_mapping({ref_id, pool});  // retire the old reference
      pool.clear();
      ref_id = decision.keyframe_id;
      ref = im.store.get(ref_id);
      // Relative to the reused keyframe's optimized pose, so the world
      // estimate stays continuous across the switch.
      rel = im.store.pose(ref_id).inverse() * world;
      ++result.keyframes_reused;
      nlohmann::json d;
      d["frame"] = i;
      d["event"] = "reuse";
      d["keyframe"] = ref_id;
      d["overlap"] = kd.overlap;
      result.diagnostics.push_back(d.dump());
      continue;
    }

    // New keyframe from the current frame.
    const int new_id = static_cast<int>(kfs.size());
    KeyframePtr kf = create_keyframe(new_id, frame,
                                     im.store.pose(ref_id) * rel, cfg);
    im.store.add(kf);
    if (new_id >= static_cast<int>(im.refined.size())) {
      im.refined.resize(2 * im.refined.size(), 0);
    }
    {
      std::lock_guard lock(im.graph_mu);
      PoseGraphEdge edge;
      edge.from = ref_id;
      edge.to = new_id;
      edge.measured = rel;  // relative tracked transform
      im.graph.edges.push_back(edge);
      im.graph.nodes.push_back(kf->pose);
    }
    im.dispatch_mapping({ref_id, pool});  // retire the old reference
    pool.clear();
    im.dispatch_backend({new_id, static_cast<int>(i)});
    ++result.keyframes_created;

    nlohmann::json d;
    d["frame"] = i;
    d["event"] = "keyframe";
    d["keyframe"] = new_id;
    d["overlap"] = kd.overlap;
    result.diagnostics.push_back(d.dump());

    ref_id = new_id;
    ref = kf;
    rel = Pose::identity();
  }

  // Final retirement of the last reference, then drain the workers.
  im.dispatch_mapping({ref_id, pool});
  im.sync();

  // Export with the final (post-optimization) keyframe poses.
  im.store.snapshot(result.map_keyframes, result.map_poses);
  for (const RelativeRecord& r : rel_trajectory) {
    result.trajectory.push_back(TrajectoryRecord::from_pose(
        r.timestamp, result.map_poses[r.kf_id] * r.T_k_f));
  }
  for (size_t k = 0; k < result.map_keyframes.size(); ++k) {
    result.keyframe_trajectory.push_back(TrajectoryRecord::from_pose(
        result.map_keyframes[k]->timestamp, result.map_poses[k]));
  }
  result.mean_track_ms =
      result.frames_processed > 1 ? total_ms / (result.frames_processed - 1)
                                  : 0.0;
  {
    std::lock_guard lock(im.graph_mu);
    result.pose_graph = im.graph;
    result.pose_graph.nodes = result.map_poses;
  }
  im.result = nullptr;
  return result;
}

std::vector<PlyVertex> map_vertices(const std::vector<KeyframePtr>& keyframes,
                                    const std::vector<Pose>& poses) {
  std::vector<PlyVertex> vertices;
  for (size_t k = 0; k < keyframes.size(); ++k) {
    const Keyframe& kf = *keyframes[k];
    const Pose& T_w_k = poses[k];
    const int finest = kf.pyramid.finest();
    const GrayImage& gray = kf.pyramid.gray[finest];
    for (const MapPoint& mp : kf.photometric[finest]) {
      PlyVertex v;
      v.position = (T_w_k * mp.p_cam).cast<float>();
      v.intensity = static_cast<uint8_t>(
          std::clamp(mp.intensity, 0.0, 255.0));
      vertices.push_back(v);
    }
    for (const GridPoint& gp : kf.grid[finest]) {
      PlyVertex v;
      v.position = (T_w_k * gp.p_cam).cast<float>();
      v.intensity = static_cast<uint8_t>(std::clamp(
          gray.at(static_cast<int>(gp.px.x()), static_cast<int>(gp.px.y())),
          0.0f, 255.0f));
      vertices.push_back(v);
    }
  }
  return vertices;
}

}  // namespace rgbds
