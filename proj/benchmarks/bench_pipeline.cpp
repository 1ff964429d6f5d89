#include <benchmark/benchmark.h>

#include "rgbds/mapping.hpp"
#include "rgbds/renderer.hpp"
#include "rgbds/system.hpp"
#include "rgbds/tracking.hpp"

namespace {

using namespace rgbds;

struct TrackingFixture {
  RunConfig cfg;
  SceneSpec spec;
  Frame kf_frame, cur_frame;
  Pose cur_gt;
  KeyframePtr kf;

  explicit TrackingFixture(const std::string& mode) {
    cfg.tracking_mode = mode;
    cfg.run_deterministic = true;
    spec = make_scene("a");
    spec.frame_count = 40;
    spec.noise.intensity_sigma = 2.0;
    spec.noise.disparity_sigma = 0.5;
    const RawRender r0 = render_frame(spec, 0);
    const RawRender r1 = render_frame(spec, 1);
    kf_frame = frame_from_render(r0, spec);
    cur_frame = frame_from_render(r1, spec);
    cur_gt = r1.gt_pose;
    kf = create_keyframe(0, kf_frame, r0.gt_pose, cfg);
  }
};

void BM_track_frame(benchmark::State& state, const std::string& mode) {
  TrackingFixture fx(mode);
  const ResidualConfig rc = ResidualConfig::from(fx.cfg);
  for (auto _ : state) {
    TrackingState init;
    init.pose = fx.kf->pose;  // no motion prior: worst-case iterations
    init.sigma_ph = fx.cfg.tracking_sigma_ph_init;
    TrackingState out = track_frame(fx.cur_frame, *fx.kf, init, rc);
    benchmark::DoNotOptimize(out);
  }
}

void BM_pyramid(benchmark::State& state) {
  const SceneSpec spec = make_scene("a");
  const RawRender raw = render_frame(spec, 0);
  for (auto _ : state) {
    Frame f = frame_from_render(raw, spec);
    benchmark::DoNotOptimize(f);
  }
}

void BM_keyframe_creation(benchmark::State& state) {
  TrackingFixture fx("PS_GIDD");
  for (auto _ : state) {
    KeyframePtr kf = create_keyframe(0, fx.kf_frame, Pose::identity(), fx.cfg);
    benchmark::DoNotOptimize(kf);
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_track_frame, ps, std::string("PS"))
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_track_frame, gidd, std::string("GIDD"))
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_track_frame, ps_gidd, std::string("PS_GIDD"))
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_pyramid)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_keyframe_creation)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
