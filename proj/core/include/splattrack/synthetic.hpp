#pragma once

#include <string>
#include <vector>

#include "splattrack/types.hpp"

namespace splattrack {

enum class ScriptKind { Static, Sinusoidal, Pan, Occluder };

ScriptKind parse_script(const std::string& name);
std::string script_name(ScriptKind kind);

struct ScriptParams {
  ScriptKind kind = ScriptKind::Static;
  int width = 64;
  int height = 64;
  int frames = 20;
  double surface_extent = 2.0;  // side length of the deforming sheet
  double surface_depth = 1.0;   // distance from the initial camera
  /// Deformation amplitude as a fraction of the surface extent.
  double amplitude_fraction = 0.02;
  double period_frames = 25.0;
  double pan_total = 0.25;  // total lateral camera travel (world units)
  int occlusion_start = 15;
  int occlusion_end = 35;  // exclusive
  int mesh_resolution = 128;
  int query_grid = 3;  // query points per axis
  bool with_flow = true;
};

struct GroundTruthTrack {
  Vec2 material;  // (a, b) coordinates on the sheet
  std::vector<Vec3> positions_3d;
  std::vector<Vec2> pixels;
  std::vector<uint8_t> visible;
};

struct SyntheticSequence {
  ScriptParams params;
  std::vector<Frame> frames;
  std::vector<GroundTruthTrack> tracks;
  /// Per-frame (a, b) material coordinates of every covered pixel
  /// (channels = 2, NaN where uncovered); kept for consistency tests.
  std::vector<ImageD> material_maps;
};

/// Renders the scripted deforming sheet with exact depth, flow, masks and
/// point trajectories. Throws on a degenerate script.
SyntheticSequence generate(const ScriptParams& params, uint64_t seed);

}  // namespace splattrack
