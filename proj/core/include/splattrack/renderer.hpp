#pragma once

#include "splattrack/geometry.hpp"
#include "splattrack/types.hpp"

namespace splattrack {

struct RenderSettings {
  /// Per-pixel contributions with alpha below this are dropped; it also
  /// bounds the screen-space footprint radius.
  double alpha_min = 1e-4;
  /// Front-to-back blending stops once transmittance falls below this.
  double transmittance_min = 1e-4;
  /// Screen-space low-pass added to the diagonal of the 2D covariance (px^2).
  double screen_blur = 0.3;
  double near_plane = kNearPlane;
  /// Alpha is clamped to this ceiling to keep 1/(1-alpha) bounded.
  double alpha_max = 0.999;
  int tile_size = 16;
};

/// One per-pixel compositing record kept for the adjoint pass.
struct SplatRecord {
  int32_t gaussian = 0;
  double alpha = 0.0;
};

struct RenderOutput {
  ImageD color;    // W x H x 3
  ImageD depth;    // W x H, alpha-composited camera z
  ImageD opacity;  // W x H, 1 - final transmittance
  // Flattened per-pixel compositing lists in front-to-back order.
  std::vector<SplatRecord> records;
  std::vector<uint32_t> record_offsets;  // size W*H+1

  int width() const { return color.width; }
  int height() const { return color.height; }
};

struct ParamGradients {
  std::vector<Vec3> positions;
  std::vector<Vec3> scales;
  std::vector<Quat> orientations;
  std::vector<Vec3> colors;
  std::vector<double> opacities;

  explicit ParamGradients(size_t n = 0) { resize(n); }
  void resize(size_t n) {
    positions.assign(n, Vec3::Zero());
    scales.assign(n, Vec3::Zero());
    orientations.assign(n, Quat::Zero());
    colors.assign(n, Vec3::Zero());
    opacities.assign(n, 0.0);
  }
  size_t size() const { return positions.size(); }
  void add(const ParamGradients& other);
  bool all_finite() const;
};

/// Forward EWA splatting of color, depth and opacity images.
/// Throws ContractViolation on an empty scene.
RenderOutput render(const GaussianSet& scene, const Camera& cam,
                    const RenderSettings& settings = {});

/// Exact reverse-mode derivative of the compositing executed by render().
/// grad_color is W x H x 3, grad_depth and grad_opacity are W x H; either
/// of the scalar images may be empty (treated as zero).
ParamGradients render_adjoint(const GaussianSet& scene, const Camera& cam,
                              const RenderOutput& out, const ImageD& grad_color,
                              const ImageD& grad_depth,
                              const ImageD& grad_opacity,
                              const RenderSettings& settings = {});

}  // namespace splattrack
