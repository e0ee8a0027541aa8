#pragma once

#include "splattrack/deformation.hpp"
#include "splattrack/renderer.hpp"
#include "splattrack/types.hpp"

namespace splattrack {

struct ModulationParams {
  double c1 = 0.01;
  double c2 = 1.0;
};

/// rho = 2 (1 - sigmoid(c1 v - c2)); strictly decreasing in v.
double modulation_factor(int update_count, const ModulationParams& mp);

struct OptimizerSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Per-group learning rates. position_lr is multiplied by the scene extent.
  double position_lr = 1.6e-4;
  double scale_lr = 5e-3;
  double orientation_lr = 1e-3;
  double color_lr = 2.5e-3;
  double opacity_lr = 5e-2;
  double offset_lr = 1e-3;
  bool optimize_opacity = true;
  double min_scale = 1e-6;
};

/// Adam moment buffers for every parameter group in the model.
class AdamState {
 public:
  AdamState() = default;
  AdamState(size_t gaussians, size_t control_points);

  void resize_gaussians(size_t n);     // preserves existing moments
  void reset_control_points(size_t k); // moments restart on resampling
  int step_count() const { return step_; }

  /// One modulated Adam update. modulation holds rho_i per Gaussian (empty
  /// means no modulation). Control-point gradients are never modulated.
  /// Throws on NaN gradients, naming the parameter group. Quaternions are
  /// renormalized and scales clamped after the update.
  void step(GaussianSet& scene, ControlPointSet& cps,
            const ParamGradients& scene_grads,
            const ControlPointGradients& cp_grads,
            const std::vector<double>& modulation, double scene_extent,
            const OptimizerSettings& settings);

 private:
  struct Moments {
    std::vector<double> m, v;
    void resize(size_t n) { m.resize(n, 0.0); v.resize(n, 0.0); }
    void assign(size_t n) { m.assign(n, 0.0); v.assign(n, 0.0); }
  };
  // Gaussian-owned groups (3, 3, 4, 3, 1 scalars per Gaussian).
  Moments positions_, scales_, orientations_, colors_, opacities_;
  // Control-point groups (3 + 4 scalars per point).
  Moments offsets_, rot_offsets_;
  int step_ = 0;
};

}  // namespace splattrack
