// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria marked with their pinned tolerances.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "splattrack/app.hpp"
#include "splattrack/energy.hpp"
#include "splattrack/metrics.hpp"
#include "splattrack/pipeline.hpp"
#include "splattrack/renderer.hpp"
#include "splattrack/synthetic.hpp"

using namespace splattrack;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------- shared --

Camera grad_camera() {
  Camera cam;
  cam.fx = 14.4;
  cam.fy = 14.4;
  cam.cx = 7.5;
  cam.cy = 7.5;
  cam.width = 16;
  cam.height = 16;
  return cam;
}

GaussianSet random_scene(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> pos(-0.25, 0.25);
  std::uniform_real_distribution<double> depth(0.8, 1.6);
  std::uniform_real_distribution<double> scale(0.03, 0.12);
  std::uniform_real_distribution<double> color(0.1, 0.9);
  std::uniform_real_distribution<double> op(0.3, 0.9);
  std::normal_distribution<double> n(0.0, 1.0);
  GaussianSet scene;
  for (int i = 0; i < count; ++i) {
    Quat q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    scene.push_back(Vec3(pos(rng), pos(rng), depth(rng)),
                    Vec3(scale(rng), scale(rng), scale(rng)), q,
                    Vec3(color(rng), color(rng), color(rng)), op(rng));
  }
  return scene;
}

Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

Vec3 random_vec(std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  return Vec3(n(rng), n(rng), n(rng));
}

struct EvalRun {
  TrackSet tracks;
  std::vector<Trajectory> pred, gt;
  MetricsReport report;
  SceneState final_state;
};

EvalRun run_script(const SyntheticSequence& seq, const AppConfig& config) {
  std::vector<Query> queries;
  for (const GroundTruthTrack& t : seq.tracks)
    queries.push_back(Query{0, false, t.pixels[0], Vec3::Zero()});
  TrackingRun run = run_tracking(seq.frames, queries, config);
  EvalRun out{std::move(run.tracks), {}, {}, {}, std::move(run.state)};
  out.pred = to_trajectories(out.tracks, seq.frames.size());
  out.gt = gt_trajectories(seq.tracks);
  out.report = compute_metrics(
      out.pred, out.gt, survival_threshold_for_width(seq.params.width));
  return out;
}

// ------------------------------------------------------------- criteria --

// 20 random scenes, every parameter gradient vs central differences,
// 1e-4 relative / 1e-7 absolute, under 2 minutes.
bool renderer_gradients(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(42);
  const Camera cam = grad_camera();
  RenderSettings settings;
  settings.alpha_min = 1e-12;
  settings.transmittance_min = 1e-12;

  int checked = 0, failed = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> count(1, 10);
    const GaussianSet scene = random_scene(rng, count(rng));

    ImageD gc(16, 16, 3), gd(16, 16, 1), go(16, 16, 1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : gc.data) v = n(rng);
    for (double& v : gd.data) v = n(rng);
    for (double& v : go.data) v = n(rng);

    auto loss = [&](const GaussianSet& s) {
      const RenderOutput out = render(s, cam, settings);
      double l = 0.0;
      for (size_t i = 0; i < out.color.data.size(); ++i)
        l += out.color.data[i] * gc.data[i];
      for (size_t i = 0; i < out.depth.data.size(); ++i)
        l += out.depth.data[i] * gd.data[i];
      for (size_t i = 0; i < out.opacity.data.size(); ++i)
        l += out.opacity.data[i] * go.data[i];
      return l;
    };

    const RenderOutput out = render(scene, cam, settings);
    const ParamGradients g = render_adjoint(scene, cam, out, gc, gd, go,
                                            settings);
    const double h = 1e-6;
    auto check = [&](double analytic, auto&& mutate) {
      GaussianSet plus = scene, minus = scene;
      mutate(plus, h);
      mutate(minus, -h);
      const double fd = (loss(plus) - loss(minus)) / (2 * h);
      const double err = std::abs(analytic - fd);
      const double rel =
          err / std::max({std::abs(analytic), std::abs(fd), 1e-30});
      ++checked;
      if (err > 1e-7 && rel > 1e-4) {
        ++failed;
        worst = std::max(worst, rel);
      }
    };

    for (size_t i = 0; i < scene.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        check(g.positions[i][k],
              [&](GaussianSet& s, double d) { s.positions[i][k] += d; });
        check(g.scales[i][k],
              [&](GaussianSet& s, double d) { s.scales[i][k] += d; });
        check(g.colors[i][k],
              [&](GaussianSet& s, double d) { s.colors[i][k] += d; });
      }
      for (int k = 0; k < 4; ++k)
        check(g.orientations[i][k],
              [&](GaussianSet& s, double d) { s.orientations[i][k] += d; });
      check(g.opacities[i],
            [&](GaussianSet& s, double d) { s.opacities[i] += d; });
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d gradient entries, %d outside tolerance, %.1f s", checked,
                failed, secs);
  detail = buf;
  return failed == 0 && secs < 120.0;
}

// 100 random trials per invariance, 1e-10 absolute.
bool energy_invariances(std::string& detail) {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  Camera cam = grad_camera();
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 8;
    std::vector<Vec3> canonical, prev, warped;
    std::vector<Quat> prev_q, warped_q;
    for (int i = 0; i < k; ++i) {
      canonical.push_back(random_vec(rng, 0.5));
      prev.push_back(canonical.back() + random_vec(rng, 0.1));
      prev_q.push_back(random_unit_quat(rng));
    }
    const auto nb = anchor_neighbors(canonical, 4);

    const Vec3 t = random_vec(rng, 2.0);
    warped.clear();
    for (const Vec3& p : prev) warped.push_back(p + t);
    worst = std::max(worst, std::abs(rigid_loc_energy(canonical, prev, warped,
                                                      nb, 1.5, 4)));

    std::vector<Vec3> translated;
    for (const Vec3& c : canonical) translated.push_back(c + t);
    worst = std::max(
        worst, std::abs(iso_energy(canonical, translated, nb, 1.5, 4)));

    const Quat g = random_unit_quat(rng);
    warped_q.clear();
    for (const Quat& q : prev_q) warped_q.push_back(quat_multiply(q, g));
    worst = std::max(worst, std::abs(rigid_rot_energy(canonical, prev_q,
                                                      warped_q, nb, 1.5, 4)));

    ControlPointSet cps;
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 6; ++i) {
      cps.positions.push_back(
          Vec3(0.5 * u(rng), 0.5 * u(rng), 1.0 + u(rng)));
      cps.translation_offsets.push_back(random_vec(rng, 0.2));
      cps.orientation_offsets.push_back(Quat::Zero());
      cps.anchors.push_back(i);
    }
    worst = std::max(worst, std::abs(visible_energy(cps, cam)));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "worst residual %.3e", worst);
  detail = buf;
  return worst < 1e-10;
}

// Closed-form flow initialization vs a first-order oracle (1e-5) and exact
// uniform-translation recovery (1e-10).
bool flow_least_squares(std::string& detail) {
  const int side = 10;  // M = 100 samples
  auto make_state = [&](const std::vector<Vec3>& cp_pos, double gamma) {
    SceneState state;
    state.config.flow_samples = side * side;
    Camera cam;
    cam.fx = cam.fy = 0.9 * side;
    cam.cx = cam.cy = (side - 1) / 2.0;
    cam.width = cam.height = side;
    Frame prev;
    prev.camera = cam;
    prev.rgb = ImageD(side, side, 3, 0.5);
    prev.depth = ImageD(side, side, 1, 1.0);
    state.prev_frame = prev;
    ControlPointSet cps;
    for (size_t j = 0; j < cp_pos.size(); ++j) {
      cps.positions.push_back(cp_pos[j]);
      cps.translation_offsets.push_back(Vec3::Zero());
      cps.orientation_offsets.push_back(Quat::Zero());
      cps.anchors.push_back(static_cast<int32_t>(j));
    }
    cps.bandwidth = gamma;
    state.cps = cps;
    state.rng.seed(1);
    return state;
  };

  double worst_oracle = 0.0, worst_uniform = 0.0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-0.4, 0.4);

  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> kd(1, 5);
    const int k = kd(rng);
    std::vector<Vec3> cp_pos;
    for (int j = 0; j < k; ++j)
      cp_pos.emplace_back(u(rng), u(rng), 1.0 + 0.3 * u(rng));
    SceneState state = make_state(cp_pos, 8.0);
    const Camera& cam = state.prev_frame.camera;

    Frame cur = state.prev_frame;
    cur.depth = ImageD(side, side, 1);
    cur.flow = ImageD(side, side, 2, 0.0);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        cur.depth(x, y) = 1.0 + 0.05 * std::sin(0.7 * x) * std::cos(0.5 * y);

    Eigen::MatrixXd a(side * side, k), targets(side * side, 3);
    std::vector<double> w;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const Vec3 xw = backproject(Vec2(x, y), state.prev_frame.depth, cam);
        kernel_weights(xw, state.cps, w);
        for (int c = 0; c < k; ++c) a(y * side + x, c) = w[c];
        targets.row(y * side + x) =
            (backproject_depth(Vec2(x, y), cur.depth(x, y), cam) - xw)
                .transpose();
      }

    init_offsets_from_flow(state, cur);

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k, 3);
    const double lr = 0.9 / (a.transpose() * a).norm();
    for (int it = 0; it < 500000; ++it) {
      const Eigen::MatrixXd grad =
          2.0 * a.transpose() * (a * d - targets) + 2e-8 * d;
      d -= lr * grad;
      if (grad.norm() < 1e-12) break;
    }
    for (int j = 0; j < k; ++j)
      worst_oracle = std::max(
          worst_oracle,
          (state.cps.translation_offsets[j] - d.row(j).transpose()).norm());
  }

  {
    SceneState state = make_state(
        {Vec3(-0.2, 0, 1), Vec3(0.2, 0.1, 1), Vec3(0, -0.1, 1.1)}, 2.0);
    const Camera& cam = state.prev_frame.camera;
    const Vec3 delta(0.02, -0.01, 0.0);
    Frame cur = state.prev_frame;
    cur.flow = ImageD(side, side, 2);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        (*cur.flow)(x, y, 0) = cam.fx * delta.x();
        (*cur.flow)(x, y, 1) = cam.fy * delta.y();
      }
    init_offsets_from_flow(state, cur);
    for (const Vec3& o : state.cps.translation_offsets)
      worst_uniform = std::max(worst_uniform, (o - delta).norm());
  }

  char buf[128];
  std::snprintf(buf, sizeof(buf), "oracle gap %.2e, uniform gap %.2e",
                worst_oracle, worst_uniform);
  detail = buf;
  return worst_oracle < 1e-5 && worst_uniform < 1e-10;
}

// 64x64 static sequence, 20 frames: drift MTE < 0.5 px, delta_avg > 95,
// survival = 100, under 10 minutes.
bool static_regression(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  ScriptParams p;
  p.kind = ScriptKind::Static;
  p.frames = 20;
  const SyntheticSequence seq = generate(p, 7);
  const EvalRun run = run_script(seq, AppConfig{});

  // Drift: deviation of every prediction from its own first frame.
  std::vector<Trajectory> anchor = run.pred;
  for (size_t i = 0; i < anchor.size(); ++i) {
    for (size_t f = 0; f < anchor[i].pixels.size(); ++f) {
      anchor[i].pixels[f] = run.pred[i].pixels[0];
      anchor[i].visible[f] = run.gt[i].visible[f];
    }
  }
  const double drift = mte(run.pred, anchor);
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "drift %.3f px, delta_avg %.1f%%, survival %.1f%%, %.0f s",
                drift, run.report.delta_avg, run.report.survival, secs);
  detail = buf;
  return drift < 0.5 && run.report.delta_avg > 95.0 &&
         run.report.survival == 100.0 && secs < 600.0;
}

MetricsReport sinusoidal_metrics(const AppConfig& config, int frames) {
  ScriptParams p;
  p.kind = ScriptKind::Sinusoidal;
  p.frames = frames;
  const SyntheticSequence seq = generate(p, 7);
  return run_script(seq, config).report;
}

// Sinusoidal bump (2% amplitude), 50 frames, exact flow: MTE < 2 px,
// survival > 95%.
bool deformation_regression(std::string& detail, double& full_mte) {
  const MetricsReport r = sinusoidal_metrics(AppConfig{}, 50);
  full_mte = r.mte;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "mte %.3f px, survival %.1f%%", r.mte,
                r.survival);
  detail = buf;
  return r.mte < 2.0 && r.survival > 95.0;
}

// Occluder covering tracked points for 20 of 50 frames: post-occlusion
// error back under 4 px, survival on visible frames = 100%.
bool occlusion_regression(std::string& detail) {
  ScriptParams p;
  p.kind = ScriptKind::Occluder;
  p.frames = 50;
  p.occlusion_start = 15;
  p.occlusion_end = 35;
  const SyntheticSequence seq = generate(p, 7);
  const EvalRun run = run_script(seq, AppConfig{});

  double worst_post = 0.0;
  bool any_occluded = false;
  for (size_t i = 0; i < run.gt.size(); ++i) {
    bool occluded = false;
    for (int f = p.occlusion_start; f < p.occlusion_end; ++f)
      occluded = occluded || !run.gt[i].visible[f];
    if (!occluded) continue;
    any_occluded = true;
    // Error once the occluder is gone, at the end of the sequence.
    const size_t last = run.gt[i].pixels.size() - 1;
    worst_post = std::max(
        worst_post, (run.pred[i].pixels[last] - run.gt[i].pixels[last]).norm());
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "post-occlusion error %.3f px, survival %.1f%%", worst_post,
                run.report.survival);
  detail = buf;
  return any_occluded && worst_post < 4.0 && run.report.survival == 100.0;
}

// Pan script: the pixels gaining Gaussians are exactly those with rendered
// opacity below the extension threshold beforehand.
bool extension_correctness(std::string& detail) {
  ScriptParams p;
  p.kind = ScriptKind::Pan;
  p.frames = 8;
  const SyntheticSequence seq = generate(p, 7);
  AppConfig config;
  SceneState state = initialize(seq.frames[0], config.pipeline);

  size_t checked_pixels = 0;
  for (size_t f = 1; f < seq.frames.size(); ++f) {
    const Frame& frame = seq.frames[f];
    const RenderOutput pre =
        render(state.scene, frame.camera, state.config.render);
    std::set<std::pair<int, int>> expected;
    for (int y = 0; y < frame.height(); ++y)
      for (int x = 0; x < frame.width(); ++x)
        if (frame.depth_valid(x, y) && !frame.masked(x, y) &&
            pre.opacity(x, y) < config.pipeline.extend_opacity_threshold)
          expected.insert({x, y});

    SceneState probe = state;
    const ExtensionResult res = extend_canonical(probe, frame);
    const std::set<std::pair<int, int>> added(res.added_pixels.begin(),
                                              res.added_pixels.end());
    if (added != expected) {
      detail = "added set mismatch at frame " + std::to_string(f);
      return false;
    }
    checked_pixels += expected.size();
    fit_frame(state, frame);
  }
  detail = std::to_string(checked_pixels) + " extension pixels matched";
  return checked_pixels > 0;
}

// Disabling E_iso, E_visible or flow each gives MTE >= the full method.
bool ablation_directions(std::string& detail, double full_mte) {
  const int frames = 50;
  AppConfig no_iso;
  no_iso.pipeline.weights.iso = 0.0;
  AppConfig no_visible;
  no_visible.pipeline.weights.visible = 0.0;
  AppConfig no_flow;
  no_flow.pipeline.use_flow = false;

  const double mte_no_iso = sinusoidal_metrics(no_iso, frames).mte;
  const double mte_no_visible = sinusoidal_metrics(no_visible, frames).mte;
  const double mte_no_flow = sinusoidal_metrics(no_flow, frames).mte;

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "full %.3f | no-iso %.3f | no-visible %.3f | no-flow %.3f",
                full_mte, mte_no_iso, mte_no_visible, mte_no_flow);
  detail = buf;
  return mte_no_iso >= full_mte && mte_no_visible >= full_mte &&
         mte_no_flow >= full_mte;
}

// Same seed, config and inputs: byte-identical trajectory CSVs.
bool determinism(std::string& detail) {
  ScriptParams p;
  p.kind = ScriptKind::Static;
  p.frames = 10;
  p.width = 32;
  p.height = 32;
  const SyntheticSequence seq = generate(p, 7);

  std::vector<Query> queries;
  for (int i = 0; i < 4; ++i)
    queries.push_back(Query{0, false, seq.tracks[i].pixels[0], Vec3::Zero()});

  const fs::path dir =
      fs::temp_directory_path() /
      ("splattrack_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  std::string csv[2];
  for (int r = 0; r < 2; ++r) {
    const TrackingRun run = run_tracking(seq.frames, queries, AppConfig{});
    const std::string path = (dir / ("t" + std::to_string(r) + ".csv")).string();
    write_trajectories_csv(path, run.tracks);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    csv[r] = ss.str();
  }
  fs::remove_all(dir);

  size_t rows = 0;
  for (char c : csv[0])
    if (c == '\n') ++rows;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu data rows, byte-identical: %s",
                rows - 1, csv[0] == csv[1] ? "yes" : "no");
  detail = buf;
  return csv[0] == csv[1] && rows - 1 == 4 * 10;
}

// 64x64, <= 2000 Gaussians, 100 iterations/frame in < 5 s/frame.
bool throughput(std::string& detail) {
  ScriptParams p;
  p.kind = ScriptKind::Sinusoidal;
  p.frames = 4;
  const SyntheticSequence seq = generate(p, 7);
  SceneState state = initialize(seq.frames[0], AppConfig{}.pipeline);

  double worst = 0.0;
  for (size_t f = 1; f < seq.frames.size(); ++f) {
    const auto t0 = std::chrono::steady_clock::now();
    fit_frame(state, seq.frames[f]);
    worst = std::max(worst, seconds_since(t0));
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu gaussians, worst frame %.2f s",
                state.scene.size(), worst);
  detail = buf;
  return state.scene.size() <= 2000 && worst < 5.0;
}

}  // namespace

int main() {
  int failures = 0;
  double full_mte = 0.0;
  auto report = [&](int id, const char* name, bool ok,
                    const std::string& detail) {
    std::printf("%s  %2d  %-28s %s\n", ok ? "PASS" : "FAIL", id, name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  };

  auto guard = [&](int id, const char* name, auto&& fn) {
    std::string detail;
    bool ok = false;
    try {
      ok = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    report(id, name, ok, detail);
  };

  guard(1, "renderer gradient suite", renderer_gradients);
  guard(2, "energy invariance suite", energy_invariances);
  guard(3, "flow least-squares init", flow_least_squares);
  guard(4, "static-scene regression", static_regression);
  guard(5, "deformation regression",
        [&](std::string& d) { return deformation_regression(d, full_mte); });
  guard(6, "occlusion regression", occlusion_regression);
  guard(7, "extension correctness", extension_correctness);
  guard(8, "ablation directions",
        [&](std::string& d) { return ablation_directions(d, full_mte); });
  guard(9, "determinism", determinism);
  guard(10, "throughput sanity", throughput);

  if (failures) std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
