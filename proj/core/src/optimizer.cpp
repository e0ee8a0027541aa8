#include "splattrack/optimizer.hpp"

#include <cmath>
#include <string>

namespace splattrack {

double modulation_factor(int update_count, const ModulationParams& mp) {
  const double x = mp.c1 * update_count - mp.c2;
  return 2.0 * (1.0 - 1.0 / (1.0 + std::exp(-x)));
}

AdamState::AdamState(size_t gaussians, size_t control_points) {
  resize_gaussians(gaussians);
  reset_control_points(control_points);
}

void AdamState::resize_gaussians(size_t n) {
  positions_.resize(3 * n);
  scales_.resize(3 * n);
  orientations_.resize(4 * n);
  colors_.resize(3 * n);
  opacities_.resize(n);
}

void AdamState::reset_control_points(size_t k) {
  offsets_.assign(3 * k);
  rot_offsets_.assign(4 * k);
}

namespace {

struct AdamScalars {
  double lr, beta1, beta2, epsilon, bias1, bias2;
};

inline double adam_update(double grad, double& m, double& v,
                          const AdamScalars& s) {
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad * grad;
  const double m_hat = m / s.bias1;
  const double v_hat = v / s.bias2;
  return -s.lr * m_hat / (std::sqrt(v_hat) + s.epsilon);
}

void check_finite(double grad, const char* group) {
  if (std::isnan(grad)) {
    throw ContractViolation(std::string("optimizer step: NaN gradient in "
                                        "parameter group '") +
                            group + "'");
  }
}

}  // namespace

void AdamState::step(GaussianSet& scene, ControlPointSet& cps,
                     const ParamGradients& scene_grads,
                     const ControlPointGradients& cp_grads,
                     const std::vector<double>& modulation,
                     double scene_extent, const OptimizerSettings& st) {
  ++step_;
  const double bias1 = 1.0 - std::pow(st.beta1, step_);
  const double bias2 = 1.0 - std::pow(st.beta2, step_);
  auto scalars = [&](double lr) {
    return AdamScalars{lr, st.beta1, st.beta2, st.epsilon, bias1, bias2};
  };

  const size_t n = scene.size();
  const AdamScalars pos_s = scalars(st.position_lr * scene_extent);
  const AdamScalars scale_s = scalars(st.scale_lr);
  const AdamScalars quat_s = scalars(st.orientation_lr);
  const AdamScalars color_s = scalars(st.color_lr);
  const AdamScalars opacity_s = scalars(st.opacity_lr);

  for (size_t i = 0; i < n; ++i) {
    const double rho = modulation.empty() ? 1.0 : modulation[i];
    if (rho == 0.0) {
      // Fully frozen Gaussian: moments decay, parameters stay bit-identical.
      for (int d = 0; d < 3; ++d) {
        positions_.m[3 * i + d] *= st.beta1;
        positions_.v[3 * i + d] *= st.beta2;
        scales_.m[3 * i + d] *= st.beta1;
        scales_.v[3 * i + d] *= st.beta2;
        colors_.m[3 * i + d] *= st.beta1;
        colors_.v[3 * i + d] *= st.beta2;
      }
      for (int d = 0; d < 4; ++d) {
        orientations_.m[4 * i + d] *= st.beta1;
        orientations_.v[4 * i + d] *= st.beta2;
      }
      opacities_.m[i] *= st.beta1;
      opacities_.v[i] *= st.beta2;
      continue;
    }
    for (int d = 0; d < 3; ++d) {
      double g = scene_grads.positions[i][d];
      check_finite(g, "positions");
      scene.positions[i][d] += adam_update(rho * g, positions_.m[3 * i + d],
                                           positions_.v[3 * i + d], pos_s);

      g = scene_grads.scales[i][d];
      check_finite(g, "scales");
      scene.scales[i][d] += adam_update(rho * g, scales_.m[3 * i + d],
                                        scales_.v[3 * i + d], scale_s);

      g = scene_grads.colors[i][d];
      check_finite(g, "colors");
      scene.colors[i][d] += adam_update(rho * g, colors_.m[3 * i + d],
                                        colors_.v[3 * i + d], color_s);
    }
    for (int d = 0; d < 4; ++d) {
      const double g = scene_grads.orientations[i][d];
      check_finite(g, "orientations");
      scene.orientations[i][d] += adam_update(
          rho * g, orientations_.m[4 * i + d], orientations_.v[4 * i + d],
          quat_s);
    }
    if (st.optimize_opacity) {
      const double g = scene_grads.opacities[i];
      check_finite(g, "opacities");
      scene.opacities[i] +=
          adam_update(rho * g, opacities_.m[i], opacities_.v[i], opacity_s);
      scene.opacities[i] = std::clamp(scene.opacities[i], 1e-4, 0.999);
    }

    scene.orientations[i].normalize();
    scene.scales[i] = scene.scales[i].cwiseMax(st.min_scale);
  }

  const AdamScalars offset_s = scalars(st.offset_lr);
  for (size_t k = 0; k < cps.size(); ++k) {
    for (int d = 0; d < 3; ++d) {
      const double g = cp_grads.translation_offsets[k][d];
      check_finite(g, "translation_offsets");
      cps.translation_offsets[k][d] +=
          adam_update(g, offsets_.m[3 * k + d], offsets_.v[3 * k + d],
                      offset_s);
    }
    for (int d = 0; d < 4; ++d) {
      const double g = cp_grads.orientation_offsets[k][d];
      check_finite(g, "orientation_offsets");
      cps.orientation_offsets[k][d] +=
          adam_update(g, rot_offsets_.m[4 * k + d], rot_offsets_.v[4 * k + d],
                      offset_s);
    }
  }
}

}  // namespace splattrack
