#pragma once

#include "splattrack/deformation.hpp"
#include "splattrack/renderer.hpp"
#include "splattrack/types.hpp"

namespace splattrack {

struct EnergyWeights {
  double image = 1.0;      // lambda_1
  double depth = 0.1;      // lambda_2
  double rigid_loc = 1.0;  // lambda_3
  double rigid_rot = 1.0;  // lambda_4
  double iso = 1.0;        // independent isometry weight
  double visible = 1.0;    // lambda_5
  int neighbor_count = 4;  // anchors per neighborhood
  /// Depth residuals are compared only where rendered opacity exceeds this.
  double depth_coverage_threshold = 0.5;
};

struct EnergyBreakdown {
  double image = 0, depth = 0;
  double rigid_loc = 0, rigid_rot = 0, iso = 0, visible = 0;
  double total = 0;
};

/// Warped anchor state cached from the previous frame for Eqs. of the
/// rigidity terms, plus the neighbor structure of the current anchor set.
struct AnchorState {
  std::vector<Vec3> prev_positions;     // warped positions at t-1
  std::vector<Quat> prev_orientations;  // warped orientations at t-1
  std::vector<std::vector<int32_t>> neighbors;  // indices into the anchor set
  std::vector<std::vector<double>> pair_weights_cache;  // unused slot for callers
};

/// n nearest neighbors (by Euclidean distance, ties by index) among the
/// anchor positions; self excluded.
std::vector<std::vector<int32_t>> anchor_neighbors(
    const std::vector<Vec3>& positions, int n);

struct ExternalEnergy {
  double image = 0, depth = 0;
  ImageD grad_color;  // dE/d(rendered color)
  ImageD grad_depth;  // dE/d(rendered depth)
};

/// Photometric + depth MSE over valid pixels. Throws when no pixel is
/// usable for the image term.
ExternalEnergy external_energy(const Frame& frame, const RenderOutput& rendered,
                               const EnergyWeights& weights);

/// Individual internal terms; "canonical" refers to the unwarped anchor
/// positions used both for kernel weights and the isometry reference.
/// Gradient outputs may be null. Gradients are of the *unweighted* term.
double rigid_loc_energy(const std::vector<Vec3>& canonical,
                        const std::vector<Vec3>& prev_warped,
                        const std::vector<Vec3>& warped,
                        const std::vector<std::vector<int32_t>>& neighbors,
                        double gamma, int n,
                        std::vector<Vec3>* grad_warped = nullptr,
                        std::vector<Vec3>* grad_canonical = nullptr);

double rigid_rot_energy(const std::vector<Vec3>& canonical,
                        const std::vector<Quat>& prev_warped_q,
                        const std::vector<Quat>& warped_q,
                        const std::vector<std::vector<int32_t>>& neighbors,
                        double gamma, int n,
                        std::vector<Quat>* grad_warped_q = nullptr,
                        std::vector<Vec3>* grad_canonical = nullptr);

double iso_energy(const std::vector<Vec3>& canonical,
                  const std::vector<Vec3>& warped,
                  const std::vector<std::vector<int32_t>>& neighbors,
                  double gamma, int n,
                  std::vector<Vec3>* grad_warped = nullptr,
                  std::vector<Vec3>* grad_canonical = nullptr);

/// Mean squared translation offset over control points that fall outside
/// the frustum; zero when everything is visible.
double visible_energy(const ControlPointSet& cps, const Camera& cam,
                      std::vector<Vec3>* grad_offsets = nullptr,
                      double near_plane = kNearPlane);

struct EnergyResult {
  EnergyBreakdown breakdown;
  ParamGradients scene_grads;
  ControlPointGradients cp_grads;
  RenderOutput rendered;  // forward render of the warped scene
};

/// Full objective: warps the scene, renders it, evaluates the external and
/// internal terms and chains all gradients back to the canonical Gaussian
/// parameters and the control-point offsets. Pass anchor_state = nullptr on
/// the first frame (rigidity terms skipped).
EnergyResult total_energy_and_gradients(const GaussianSet& scene,
                                        const ControlPointSet& cps,
                                        const Frame& frame,
                                        const AnchorState* anchor_state,
                                        const EnergyWeights& weights,
                                        const RenderSettings& settings = {});

}  // namespace splattrack
