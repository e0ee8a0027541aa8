#include "splattrack/deformation.hpp"

#include <algorithm>
#include <cmath>

namespace splattrack {

bool kernel_weights(const Vec3& x, const ControlPointSet& cps,
                    std::vector<double>& weights) {
  const size_t k = cps.size();
  weights.resize(k);
  double total = 0.0;
  for (size_t j = 0; j < k; ++j) {
    weights[j] = deformation_kernel(x, cps.positions[j], cps.bandwidth);
    total += weights[j];
  }
  if (total < 1e-30) {
    std::fill(weights.begin(), weights.end(), 0.0);
    return false;
  }
  const double inv = 1.0 / total;
  for (double& w : weights) w *= inv;
  return true;
}

Vec3 translation_field(const Vec3& x, const ControlPointSet& cps) {
  std::vector<double> w;
  if (!kernel_weights(x, cps, w)) return Vec3::Zero();
  Vec3 out = Vec3::Zero();
  for (size_t j = 0; j < cps.size(); ++j) {
    out += w[j] * cps.translation_offsets[j];
  }
  return out;
}

Quat orientation_field(const Vec3& x, const ControlPointSet& cps) {
  std::vector<double> w;
  if (!kernel_weights(x, cps, w)) return Quat::Zero();
  Quat out = Quat::Zero();
  for (size_t j = 0; j < cps.size(); ++j) {
    out += w[j] * cps.orientation_offsets[j];
  }
  return out;
}

GaussianSet warp(const GaussianSet& scene, const ControlPointSet& cps) {
  GaussianSet out = scene;
  std::vector<double> w;
  for (size_t i = 0; i < scene.size(); ++i) {
    const Vec3& mu = scene.positions[i];
    if (!kernel_weights(mu, cps, w)) continue;
    Vec3 dmu = Vec3::Zero();
    Quat dq = Quat::Zero();
    for (size_t j = 0; j < cps.size(); ++j) {
      dmu += w[j] * cps.translation_offsets[j];
      dq += w[j] * cps.orientation_offsets[j];
    }
    out.positions[i] = mu + dmu;
    Quat q_sum = scene.orientations[i] + dq;
    const double norm = q_sum.norm();
    if (norm < 1e-8) {
      throw ContractViolation("warp: degenerate quaternion for Gaussian " +
                              std::to_string(i));
    }
    out.orientations[i] = q_sum / norm;
  }
  return out;
}

void warp_backward(const GaussianSet& scene, const ControlPointSet& cps,
                   const std::vector<Vec3>& grad_warped_positions,
                   const std::vector<Quat>& grad_warped_orientations,
                   ParamGradients& scene_grads,
                   ControlPointGradients& cp_grads) {
  std::vector<double> w;
  for (size_t i = 0; i < scene.size(); ++i) {
    const Vec3 g_mu = grad_warped_positions[i];
    const Quat g_qp = grad_warped_orientations[i];
    if (g_mu.isZero() && g_qp.isZero()) continue;

    const Vec3& mu = scene.positions[i];
    const bool live = kernel_weights(mu, cps, w);
    if (!live) {
      // Degenerate far point: the warp left this Gaussian untouched.
      scene_grads.positions[i] += g_mu;
      scene_grads.orientations[i] += g_qp;
      continue;
    }

    Vec3 dmu = Vec3::Zero();
    Quat dq = Quat::Zero();
    for (size_t j = 0; j < cps.size(); ++j) {
      dmu += w[j] * cps.translation_offsets[j];
      dq += w[j] * cps.orientation_offsets[j];
    }
    const Quat q_sum = scene.orientations[i] + dq;
    const Quat g_qsum = normalize_backward<4>(q_sum, g_qp);

    scene_grads.positions[i] += g_mu;
    scene_grads.orientations[i] += g_qsum;
    for (size_t j = 0; j < cps.size(); ++j) {
      if (w[j] == 0.0) continue;
      cp_grads.translation_offsets[j] += w[j] * g_mu;
      cp_grads.orientation_offsets[j] += w[j] * g_qsum;
    }

    // The normalized weights also depend on mu:
    // d(field)/dx = sum_j (offset_j - field) grad_w_j^T / total, with
    // grad w_j = -2 gamma (x - p_j) w_j (unnormalized); after
    // normalization the correction term collapses into (offset_j - field).
    Vec3 extra = Vec3::Zero();
    for (size_t j = 0; j < cps.size(); ++j) {
      if (w[j] == 0.0) continue;
      const Vec3 grad_wj = -2.0 * cps.bandwidth * (mu - cps.positions[j]);
      const double response = (cps.translation_offsets[j] - dmu).dot(g_mu) +
                              (cps.orientation_offsets[j] - dq).dot(g_qsum);
      extra += w[j] * response * grad_wj;
    }
    scene_grads.positions[i] += extra;
  }
}

double default_bandwidth(const std::vector<Vec3>& anchors) {
  if (anchors.size() < 2) return 1.0;
  std::vector<double> nearest(anchors.size());
  for (size_t i = 0; i < anchors.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < anchors.size(); ++j) {
      if (j == i) continue;
      best = std::min(best, (anchors[i] - anchors[j]).squaredNorm());
    }
    nearest[i] = std::sqrt(best);
  }
  std::nth_element(nearest.begin(), nearest.begin() + nearest.size() / 2,
                   nearest.end());
  const double h = nearest[nearest.size() / 2];
  if (h <= 0.0) return 1.0;
  return 1.0 / (2.0 * h * h);
}

}  // namespace splattrack
