#include <benchmark/benchmark.h>

#include "splattrack/pipeline.hpp"
#include "splattrack/renderer.hpp"
#include "splattrack/synthetic.hpp"

namespace {

using namespace splattrack;

SyntheticSequence make_sequence(int frames) {
  ScriptParams params;
  params.kind = ScriptKind::Sinusoidal;
  params.frames = frames;
  return generate(params, 7);
}

SceneState make_state(const SyntheticSequence& seq) {
  PipelineConfig config;
  config.iterations_first = 50;  // enough to shape a realistic scene
  return initialize(seq.frames[0], config);
}

void BM_RenderForward(benchmark::State& state) {
  const SyntheticSequence seq = make_sequence(2);
  const SceneState scene = make_state(seq);
  for (auto _ : state) {
    RenderOutput out =
        render(scene.scene, seq.frames[0].camera, scene.config.render);
    benchmark::DoNotOptimize(out.color.data.data());
  }
  state.counters["gaussians"] = static_cast<double>(scene.scene.size());
}
BENCHMARK(BM_RenderForward)->Unit(benchmark::kMillisecond);

void BM_RenderAdjoint(benchmark::State& state) {
  const SyntheticSequence seq = make_sequence(2);
  const SceneState scene = make_state(seq);
  const Camera& cam = seq.frames[0].camera;
  const RenderOutput out = render(scene.scene, cam, scene.config.render);
  ImageD grad_color(out.width(), out.height(), 3, 1.0);
  ImageD grad_depth(out.width(), out.height(), 1, 1.0);
  for (auto _ : state) {
    ParamGradients g = render_adjoint(scene.scene, cam, out, grad_color,
                                      grad_depth, ImageD{},
                                      scene.config.render);
    benchmark::DoNotOptimize(g.positions.data());
  }
  state.counters["gaussians"] = static_cast<double>(scene.scene.size());
}
BENCHMARK(BM_RenderAdjoint)->Unit(benchmark::kMillisecond);

void BM_FitFrame(benchmark::State& state) {
  const SyntheticSequence seq = make_sequence(3);
  const SceneState base = make_state(seq);
  for (auto _ : state) {
    SceneState s = base;
    fit_frame(s, seq.frames[1]);
    benchmark::DoNotOptimize(s.scene.positions.data());
  }
  state.counters["gaussians"] = static_cast<double>(base.scene.size());
}
BENCHMARK(BM_FitFrame)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
