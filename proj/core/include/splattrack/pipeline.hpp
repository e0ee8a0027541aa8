#pragma once

#include <random>

#include "splattrack/energy.hpp"
#include "splattrack/optimizer.hpp"

namespace splattrack {

struct PipelineConfig {
  uint64_t seed = 7;
  int stride = 2;               // first-frame pixel subsampling
  int iterations_first = 1000;  // first-frame fit
  int iterations = 100;         // per subsequent frame
  int k_frac = 64;              // K = max(1, G / k_frac)
  double extend_opacity_threshold = 0.95;
  int flow_samples = 4096;  // M
  bool use_flow = true;
  bool use_modulation = true;
  // gamma < 0 selects the density-based default.
  double gamma = -1.0;
  EnergyWeights weights;
  OptimizerSettings optimizer;
  ModulationParams modulation;
  RenderSettings render;
};

struct SceneState {
  GaussianSet scene;  // canonical; warped state is committed after each fit
  ControlPointSet cps;
  AnchorState anchor_state;
  AdamState adam;
  int frame_index = 0;
  double scene_extent = 1.0;
  Frame prev_frame;
  ImageD prev_opacity;  // committed-scene coverage at the previous pose
  std::mt19937_64 rng;
  PipelineConfig config;
  EnergyBreakdown last_energy;
};

struct TrackedPoint {
  int birth_frame = 0;
  int32_t gaussian = -1;  // bound Gaussian, -1 = dead at birth
  std::vector<Vec3> positions_3d;
  std::vector<Vec2> pixels;
  std::vector<uint8_t> visible;
};

struct TrackSet {
  std::vector<TrackedPoint> points;
};

struct ExtensionResult {
  std::vector<std::pair<int, int>> added_pixels;
  ImageD pre_extension_opacity;
};

/// Builds the canonical scene from the first frame and fits it with the
/// external energy only. Throws when no pixel is usable.
SceneState initialize(const Frame& frame, const PipelineConfig& config);

/// Adds a Gaussian at every unmasked valid-depth pixel whose rendered
/// coverage falls below the opacity threshold.
ExtensionResult extend_canonical(SceneState& state, const Frame& frame);

/// Draws K anchors without replacement and zeroes the offsets; refreshes
/// the kernel bandwidth, neighbor sets and the previous-warped cache.
void resample_control_points(SceneState& state);

/// Closed-form least-squares fit of the translation offsets to flow-derived
/// 3D motion targets. No-op (warning case) when no sample is eligible.
void init_offsets_from_flow(SceneState& state, const Frame& frame);

/// One full online step: extend, resample, flow-init, optimize, commit.
/// On error the state is left unchanged and the exception propagates.
void fit_frame(SceneState& state, const Frame& frame);

/// Binds a 2D query (pixel at the current frame) to its nearest Gaussian.
TrackedPoint bind_query_2d(const SceneState& state, const Frame& frame,
                           const Vec2& pixel);
TrackedPoint bind_query_3d(const SceneState& state, const Vec3& point);

/// Appends the current frame's position/projection to every live track.
void update_tracks(const SceneState& state, const Camera& cam,
                   TrackSet& tracks);

}  // namespace splattrack
