#pragma once

#include "splattrack/renderer.hpp"
#include "splattrack/types.hpp"

namespace splattrack {

/// Sparse control points parameterizing the translation and orientation
/// warp fields.
struct ControlPointSet {
  std::vector<Vec3> positions;            // p_k
  std::vector<Vec3> translation_offsets;  // delta mu_k
  std::vector<Quat> orientation_offsets;  // delta q_k (raw increments)
  std::vector<int32_t> anchors;           // indices into the GaussianSet
  double bandwidth = 1.0;                 // gamma > 0

  size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void zero_offsets() {
    std::fill(translation_offsets.begin(), translation_offsets.end(),
              Vec3::Zero());
    std::fill(orientation_offsets.begin(), orientation_offsets.end(),
              Quat::Zero());
  }
};

struct ControlPointGradients {
  std::vector<Vec3> translation_offsets;
  std::vector<Quat> orientation_offsets;

  explicit ControlPointGradients(size_t k = 0) { resize(k); }
  void resize(size_t k) {
    translation_offsets.assign(k, Vec3::Zero());
    orientation_offsets.assign(k, Quat::Zero());
  }
  size_t size() const { return translation_offsets.size(); }
};

/// w(x1, x2) = exp(-gamma |x1 - x2|^2)
inline double deformation_kernel(const Vec3& x1, const Vec3& x2,
                                 double gamma) {
  return std::exp(-gamma * (x1 - x2).squaredNorm());
}

/// Normalized kernel weights of all control points at location x. Returns
/// false (all-zero weights) when the total weight underflows below 1e-30.
bool kernel_weights(const Vec3& x, const ControlPointSet& cps,
                    std::vector<double>& weights);

/// Weighted-average translation field; zero at degenerate far points.
Vec3 translation_field(const Vec3& x, const ControlPointSet& cps);

/// Weighted-average orientation increment field.
Quat orientation_field(const Vec3& x, const ControlPointSet& cps);

/// Warped copy: mu' = mu + field(mu), q' = normalize(q + field(mu)); scales,
/// colors, opacities copied. Throws when q + dq degenerates (norm < 1e-8).
GaussianSet warp(const GaussianSet& scene, const ControlPointSet& cps);

/// Reverse-mode pass through warp(): converts cotangents with respect to
/// warped positions/orientations into cotangents for the canonical scene
/// and the control-point offsets. grads_warped gives dL/dmu' and dL/dq';
/// its scale/color/opacity entries pass through untouched.
void warp_backward(const GaussianSet& scene, const ControlPointSet& cps,
                   const std::vector<Vec3>& grad_warped_positions,
                   const std::vector<Quat>& grad_warped_orientations,
                   ParamGradients& scene_grads, ControlPointGradients& cp_grads);

/// gamma = 1 / (2 h^2) with h the median nearest-anchor distance; falls back
/// to 1 for a single control point.
double default_bandwidth(const std::vector<Vec3>& anchor_positions);

}  // namespace splattrack
