#include "splattrack/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <Eigen/Dense>

namespace splattrack {

namespace {

// Nearest-neighbor distance for each position via a uniform grid.
std::vector<double> nearest_distances(const std::vector<Vec3>& pts) {
  const size_t n = pts.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;

  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  const double cell = std::max(diag / std::cbrt(static_cast<double>(n)), 1e-12);
  auto key = [&](const Vec3& p) {
    return std::array<int, 3>{static_cast<int>((p.x() - lo.x()) / cell),
                              static_cast<int>((p.y() - lo.y()) / cell),
                              static_cast<int>((p.z() - lo.z()) / cell)};
  };
  struct KeyHash {
    size_t operator()(const std::array<int, 3>& k) const {
      return std::hash<long long>()(
          (static_cast<long long>(k[0]) * 73856093LL) ^
          (static_cast<long long>(k[1]) * 19349663LL) ^
          (static_cast<long long>(k[2]) * 83492791LL));
    }
  };
  std::unordered_map<std::array<int, 3>, std::vector<int32_t>, KeyHash> grid;
  for (size_t i = 0; i < n; ++i) grid[key(pts[i])].push_back(static_cast<int32_t>(i));

  for (size_t i = 0; i < n; ++i) {
    const auto k0 = key(pts[i]);
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 1; ring < 1 << 20; ++ring) {
      const int r = ring - 1;
      for (int dx = -r; dx <= r; ++dx) {
        for (int dy = -r; dy <= r; ++dy) {
          for (int dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) {
              continue;
            }
            auto it = grid.find({k0[0] + dx, k0[1] + dy, k0[2] + dz});
            if (it == grid.end()) continue;
            for (int32_t j : it->second) {
              if (static_cast<size_t>(j) == i) continue;
              best = std::min(best, (pts[i] - pts[j]).squaredNorm());
            }
          }
        }
      }
      // A hit in ring r is only guaranteed nearest once the next ring
      // cannot contain anything closer.
      if (std::isfinite(best) && std::sqrt(best) <= r * cell) break;
    }
    out[i] = std::sqrt(best);
  }
  return out;
}

double bbox_diagonal(const std::vector<Vec3>& pts) {
  if (pts.empty()) return 1.0;
  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double d = (hi - lo).norm();
  return d > 0.0 ? d : 1.0;
}

int32_t nearest_gaussian(const GaussianSet& scene, const Vec3& x) {
  int32_t best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < scene.size(); ++i) {
    const double d = (scene.positions[i] - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int32_t>(i);
    }
  }
  return best;
}

// Runs Adam iterations against the current frame and marks which Gaussians
// ever saw a nonzero gradient.
void optimize_frame(SceneState& state, const Frame& frame, int iterations,
                    bool internal_energy, std::vector<uint8_t>& touched) {
  const PipelineConfig& cfg = state.config;
  touched.assign(state.scene.size(), 0);

  std::vector<double> modulation;
  if (cfg.use_modulation) {
    modulation.resize(state.scene.size());
    for (size_t i = 0; i < state.scene.size(); ++i) {
      modulation[i] = modulation_factor(state.scene.update_counts[i],
                                        cfg.modulation);
    }
  }

  const AnchorState* anchors = internal_energy ? &state.anchor_state : nullptr;
  ControlPointSet no_cps;
  ControlPointSet& cps = internal_energy ? state.cps : no_cps;

  for (int it = 0; it < iterations; ++it) {
    EnergyResult res = total_energy_and_gradients(
        state.scene, cps, frame, anchors, cfg.weights, cfg.render);
    for (size_t i = 0; i < state.scene.size(); ++i) {
      if (!touched[i] && (!res.scene_grads.positions[i].isZero() ||
                          !res.scene_grads.scales[i].isZero() ||
                          !res.scene_grads.orientations[i].isZero() ||
                          !res.scene_grads.colors[i].isZero() ||
                          res.scene_grads.opacities[i] != 0.0)) {
        touched[i] = 1;
      }
    }
    state.adam.step(state.scene, cps, res.scene_grads, res.cp_grads,
                    modulation, state.scene_extent, cfg.optimizer);
    state.last_energy = res.breakdown;
  }
}

void cache_committed_view(SceneState& state, const Frame& frame) {
  RenderOutput out = render(state.scene, frame.camera, state.config.render);
  state.prev_opacity = std::move(out.opacity);
  state.prev_frame = frame;
}

}  // namespace

SceneState initialize(const Frame& frame, const PipelineConfig& config) {
  SceneState state;
  state.config = config;
  state.rng.seed(config.seed);

  const int stride = std::max(1, config.stride);
  GaussianSet& scene = state.scene;
  for (int y = 0; y < frame.height(); y += stride) {
    for (int x = 0; x < frame.width(); x += stride) {
      if (frame.masked(x, y) || !frame.depth_valid(x, y)) continue;
      const Vec3 mu = backproject(Vec2(x, y), frame.depth, frame.camera);
      const Vec3 color(frame.rgb(x, y, 0), frame.rgb(x, y, 1),
                       frame.rgb(x, y, 2));
      scene.push_back(mu, Vec3::Ones(), identity_quat(), color, 0.9);
    }
  }
  if (scene.empty()) {
    throw ContractViolation("initialize: first frame has no usable pixels");
  }

  const auto nn = nearest_distances(scene.positions);
  for (size_t i = 0; i < scene.size(); ++i) {
    const double s = std::max(nn[i], 1e-6);
    scene.scales[i] = Vec3::Constant(s);
  }
  state.scene_extent = bbox_diagonal(scene.positions);
  state.adam = AdamState(scene.size(), 0);

  std::vector<uint8_t> touched;
  optimize_frame(state, frame, config.iterations_first,
                 /*internal_energy=*/false, touched);
  for (size_t i = 0; i < scene.size(); ++i) {
    if (touched[i]) ++scene.update_counts[i];
  }

  resample_control_points(state);
  cache_committed_view(state, frame);
  state.frame_index = 1;
  return state;
}

ExtensionResult extend_canonical(SceneState& state, const Frame& frame) {
  ExtensionResult result;
  RenderOutput pre = render(state.scene, frame.camera, state.config.render);
  result.pre_extension_opacity = pre.opacity;

  const double threshold = state.config.extend_opacity_threshold;
  std::vector<Vec3> new_positions;
  std::vector<Vec3> new_colors;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (frame.masked(x, y) || !frame.depth_valid(x, y)) continue;
      if (result.pre_extension_opacity(x, y) >= threshold) continue;
      new_positions.push_back(backproject(Vec2(x, y), frame.depth, frame.camera));
      new_colors.push_back(
          Vec3(frame.rgb(x, y, 0), frame.rgb(x, y, 1), frame.rgb(x, y, 2)));
      result.added_pixels.emplace_back(x, y);
    }
  }
  if (new_positions.empty()) return result;

  for (size_t j = 0; j < new_positions.size(); ++j) {
    const int32_t nearest = nearest_gaussian(state.scene, new_positions[j]);
    const double dist = (state.scene.positions[nearest] - new_positions[j]).norm();
    state.scene.push_back(new_positions[j], Vec3::Constant(std::max(dist, 1e-6)),
                          identity_quat(), new_colors[j], 0.9);
  }
  state.adam.resize_gaussians(state.scene.size());
  state.scene_extent = bbox_diagonal(state.scene.positions);
  return result;
}

void resample_control_points(SceneState& state) {
  const size_t g = state.scene.size();
  const size_t k = std::max<size_t>(
      1, g / static_cast<size_t>(std::max(1, state.config.k_frac)));

  // Partial Fisher-Yates draw of k indices without replacement.
  std::vector<int32_t> indices(g);
  std::iota(indices.begin(), indices.end(), 0);
  for (size_t j = 0; j < k; ++j) {
    std::uniform_int_distribution<size_t> dist(j, g - 1);
    std::swap(indices[j], indices[dist(state.rng)]);
  }
  indices.resize(k);

  ControlPointSet cps;
  cps.anchors = indices;
  cps.positions.resize(k);
  cps.translation_offsets.assign(k, Vec3::Zero());
  cps.orientation_offsets.assign(k, Quat::Zero());
  for (size_t j = 0; j < k; ++j) {
    cps.positions[j] = state.scene.positions[indices[j]];
  }
  cps.bandwidth = state.config.gamma > 0.0
                      ? state.config.gamma
                      : default_bandwidth(cps.positions);
  state.cps = std::move(cps);
  state.adam.reset_control_points(k);

  AnchorState& anchors = state.anchor_state;
  anchors.prev_positions.resize(k);
  anchors.prev_orientations.resize(k);
  for (size_t j = 0; j < k; ++j) {
    // Committed canonical state doubles as the previous frame's warped state.
    anchors.prev_positions[j] = state.scene.positions[indices[j]];
    anchors.prev_orientations[j] = state.scene.orientations[indices[j]];
  }
  anchors.neighbors = anchor_neighbors(state.cps.positions,
                                       state.config.weights.neighbor_count);
}

void init_offsets_from_flow(SceneState& state, const Frame& frame) {
  if (!frame.flow) return;
  const Frame& prev = state.prev_frame;
  const ImageD& flow = *frame.flow;
  const size_t k = state.cps.size();

  struct Sample {
    Vec3 x;
    Vec3 v;
  };
  std::vector<Sample> eligible;
  for (int y = 0; y < prev.height(); ++y) {
    for (int x = 0; x < prev.width(); ++x) {
      if (prev.masked(x, y) || !prev.depth_valid(x, y)) continue;
      if (!state.prev_opacity.empty() && state.prev_opacity(x, y) < 0.5) {
        continue;
      }
      const double tx = x + flow(x, y, 0);
      const double ty = y + flow(x, y, 1);
      const int txi = static_cast<int>(std::lround(tx));
      const int tyi = static_cast<int>(std::lround(ty));
      if (txi < 0 || txi >= frame.width() || tyi < 0 || tyi >= frame.height()) {
        continue;
      }
      if (frame.masked(txi, tyi) || !frame.depth_valid(txi, tyi)) continue;
      Sample s;
      s.x = backproject(Vec2(x, y), prev.depth, prev.camera);
      s.v = backproject_depth(Vec2(tx, ty), frame.depth(txi, tyi),
                              frame.camera) -
            s.x;
      eligible.push_back(s);
    }
  }
  if (eligible.empty()) {
    std::cerr << "warning: flow init found no eligible pixels at frame "
              << state.frame_index << "; offsets stay zero\n";
    return;
  }

  const size_t m =
      std::min<size_t>(eligible.size(), std::max(1, state.config.flow_samples));
  std::vector<size_t> pick(eligible.size());
  std::iota(pick.begin(), pick.end(), 0);
  for (size_t j = 0; j < m; ++j) {
    std::uniform_int_distribution<size_t> dist(j, eligible.size() - 1);
    std::swap(pick[j], pick[dist(state.rng)]);
  }

  // Normal equations (A^T A + eps I) d = A^T v with A the row-stochastic
  // kernel weight matrix of Eq-style field evaluation at the sample points.
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd atv = Eigen::MatrixXd::Zero(k, 3);
  std::vector<double> w;
  for (size_t j = 0; j < m; ++j) {
    const Sample& s = eligible[pick[j]];
    if (!kernel_weights(s.x, state.cps, w)) continue;
    Eigen::Map<const Eigen::VectorXd> row(w.data(), k);
    ata.noalias() += row * row.transpose();
    atv.noalias() += row * s.v.transpose();
  }
  ata.diagonal().array() += 1e-8;
  const Eigen::MatrixXd sol = ata.ldlt().solve(atv);
  for (size_t j = 0; j < k; ++j) {
    state.cps.translation_offsets[j] = sol.row(j).transpose();
  }
}

void fit_frame(SceneState& state, const Frame& frame) {
  SceneState backup = state;
  try {
    extend_canonical(state, frame);
    resample_control_points(state);
    if (state.config.use_flow && frame.flow) {
      init_offsets_from_flow(state, frame);
    }

    std::vector<uint8_t> touched;
    optimize_frame(state, frame, state.config.iterations,
                   /*internal_energy=*/true, touched);

    // Commit: the warped state becomes the canonical scene and the offsets
    // reset, re-anchoring the deformation at every frame.
    state.scene = warp(state.scene, state.cps);
    state.cps.zero_offsets();
    for (size_t i = 0; i < state.scene.size(); ++i) {
      if (touched[i]) ++state.scene.update_counts[i];
    }

    cache_committed_view(state, frame);
    ++state.frame_index;
  } catch (...) {
    state = std::move(backup);
    throw;
  }
}

TrackedPoint bind_query_3d(const SceneState& state, const Vec3& point) {
  TrackedPoint tp;
  tp.birth_frame = state.frame_index - 1;
  tp.gaussian = nearest_gaussian(state.scene, point);
  return tp;
}

TrackedPoint bind_query_2d(const SceneState& state, const Frame& frame,
                           const Vec2& pixel) {
  TrackedPoint tp;
  tp.birth_frame = state.frame_index - 1;
  const int px = static_cast<int>(std::lround(pixel.x()));
  const int py = static_cast<int>(std::lround(pixel.y()));
  if (px < 0 || px >= frame.width() || py < 0 || py >= frame.height() ||
      !frame.depth_valid(px, py)) {
    tp.gaussian = -1;  // dead at birth
    return tp;
  }
  const Vec3 x = backproject(pixel, frame.depth, frame.camera);
  tp.gaussian = nearest_gaussian(state.scene, x);
  return tp;
}

void update_tracks(const SceneState& state, const Camera& cam,
                   TrackSet& tracks) {
  for (TrackedPoint& tp : tracks.points) {
    if (tp.gaussian < 0) continue;
    const Vec3& mu = state.scene.positions[tp.gaussian];
    const Projection proj = project_point(mu, cam);
    tp.positions_3d.push_back(mu);
    tp.pixels.push_back(proj.valid ? proj.pixel : Vec2(-1, -1));
    const bool vis = proj.valid && proj.pixel.x() >= 0.0 &&
                     proj.pixel.x() <= cam.width - 1 &&
                     proj.pixel.y() >= 0.0 && proj.pixel.y() <= cam.height - 1;
    tp.visible.push_back(vis ? 1 : 0);
  }
}

}  // namespace splattrack
