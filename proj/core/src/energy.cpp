#include "splattrack/energy.hpp"

#include <algorithm>
#include <cmath>

namespace splattrack {

std::vector<std::vector<int32_t>> anchor_neighbors(
    const std::vector<Vec3>& positions, int n) {
  const size_t k = positions.size();
  std::vector<std::vector<int32_t>> result(k);
  std::vector<std::pair<double, int32_t>> dists;
  for (size_t i = 0; i < k; ++i) {
    dists.clear();
    for (size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      dists.emplace_back((positions[i] - positions[j]).squaredNorm(),
                         static_cast<int32_t>(j));
    }
    const size_t take = std::min<size_t>(n, dists.size());
    std::partial_sort(dists.begin(), dists.begin() + take, dists.end());
    for (size_t t = 0; t < take; ++t) result[i].push_back(dists[t].second);
  }
  return result;
}

ExternalEnergy external_energy(const Frame& frame, const RenderOutput& rendered,
                               const EnergyWeights& weights) {
  const int w = frame.width(), h = frame.height();
  if (rendered.width() != w || rendered.height() != h) {
    throw ContractViolation("external_energy: frame/render shape mismatch");
  }

  ExternalEnergy out;
  out.grad_color = ImageD(w, h, 3);
  out.grad_depth = ImageD(w, h, 1);

  // Image term: per-channel MSE over unmasked pixels.
  size_t n_img = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (frame.masked(x, y)) continue;
      ++n_img;
    }
  }
  if (n_img == 0) {
    throw ContractViolation("external_energy: no valid pixels in frame");
  }

  size_t n_depth = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (frame.masked(x, y)) continue;
      if (frame.depth_valid(x, y) &&
          rendered.opacity(x, y) >= weights.depth_coverage_threshold) {
        ++n_depth;
      }
    }
  }

  const double img_norm = 1.0 / (3.0 * static_cast<double>(n_img));
  const double depth_norm =
      n_depth > 0 ? 1.0 / static_cast<double>(n_depth) : 0.0;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (frame.masked(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double r = rendered.color(x, y, c) - frame.rgb(x, y, c);
        out.image += r * r * img_norm;
        out.grad_color(x, y, c) = weights.image * 2.0 * r * img_norm;
      }
      if (frame.depth_valid(x, y) &&
          rendered.opacity(x, y) >= weights.depth_coverage_threshold) {
        const double r = rendered.depth(x, y) - frame.depth(x, y);
        out.depth += r * r * depth_norm;
        out.grad_depth(x, y) = weights.depth * 2.0 * r * depth_norm;
      }
    }
  }
  return out;
}

double rigid_loc_energy(const std::vector<Vec3>& canonical,
                        const std::vector<Vec3>& prev_warped,
                        const std::vector<Vec3>& warped,
                        const std::vector<std::vector<int32_t>>& neighbors,
                        double gamma, int n, std::vector<Vec3>* grad_warped,
                        std::vector<Vec3>* grad_canonical) {
  const size_t k = canonical.size();
  if (k == 0) return 0.0;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(k));
  double energy = 0.0;
  for (size_t i = 0; i < k; ++i) {
    for (int32_t j : neighbors[i]) {
      const double w = deformation_kernel(canonical[i], canonical[j], gamma);
      const Vec3 r = (prev_warped[j] - prev_warped[i]) - (warped[j] - warped[i]);
      const double r2 = r.squaredNorm();
      energy += w * r2;
      if (grad_warped) {
        (*grad_warped)[j] += norm * w * -2.0 * r;
        (*grad_warped)[i] += norm * w * 2.0 * r;
      }
      if (grad_canonical) {
        const Vec3 gw = -2.0 * gamma * (canonical[i] - canonical[j]) * w;
        (*grad_canonical)[i] += norm * r2 * gw;
        (*grad_canonical)[j] -= norm * r2 * gw;
      }
    }
  }
  return energy * norm;
}

double rigid_rot_energy(const std::vector<Vec3>& canonical,
                        const std::vector<Quat>& prev_warped_q,
                        const std::vector<Quat>& warped_q,
                        const std::vector<std::vector<int32_t>>& neighbors,
                        double gamma, int n, std::vector<Quat>* grad_warped_q,
                        std::vector<Vec3>* grad_canonical) {
  const size_t k = canonical.size();
  if (k == 0) return 0.0;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(k));
  double energy = 0.0;
  for (size_t i = 0; i < k; ++i) {
    for (int32_t j : neighbors[i]) {
      const double w = deformation_kernel(canonical[i], canonical[j], gamma);
      // Relative quaternions q'_j q'_i^-1; orientations are unit, so the
      // inverse is the conjugate.
      const Quat rel_prev =
          quat_multiply(prev_warped_q[j], quat_conjugate(prev_warped_q[i]));
      const Quat rel_cur =
          quat_multiply(warped_q[j], quat_conjugate(warped_q[i]));
      const Quat r = rel_prev - rel_cur;
      const double r2 = r.squaredNorm();
      energy += w * r2;
      if (grad_warped_q) {
        // rel_cur = R(conj(q_i)) q_j = L(q_j) C q_i with C = conj matrix.
        const Mat4 d_qj = quat_right_matrix(quat_conjugate(warped_q[i]));
        Mat4 d_qi = quat_left_matrix(warped_q[j]);
        d_qi.col(1) *= -1.0;
        d_qi.col(2) *= -1.0;
        d_qi.col(3) *= -1.0;
        (*grad_warped_q)[j] += norm * w * -2.0 * (d_qj.transpose() * r);
        (*grad_warped_q)[i] += norm * w * -2.0 * (d_qi.transpose() * r);
      }
      if (grad_canonical) {
        const Vec3 gw = -2.0 * gamma * (canonical[i] - canonical[j]) * w;
        (*grad_canonical)[i] += norm * r2 * gw;
        (*grad_canonical)[j] -= norm * r2 * gw;
      }
    }
  }
  return energy * norm;
}

double iso_energy(const std::vector<Vec3>& canonical,
                  const std::vector<Vec3>& warped,
                  const std::vector<std::vector<int32_t>>& neighbors,
                  double gamma, int n, std::vector<Vec3>* grad_warped,
                  std::vector<Vec3>* grad_canonical) {
  const size_t k = canonical.size();
  if (k == 0) return 0.0;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(k));
  double energy = 0.0;
  for (size_t i = 0; i < k; ++i) {
    for (int32_t j : neighbors[i]) {
      const double w = deformation_kernel(canonical[i], canonical[j], gamma);
      const Vec3 d0 = canonical[j] - canonical[i];
      const Vec3 d1 = warped[j] - warped[i];
      const double diff = d0.squaredNorm() - d1.squaredNorm();
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      energy += w * std::abs(diff);
      if (grad_warped) {
        (*grad_warped)[j] += norm * w * sign * -2.0 * d1;
        (*grad_warped)[i] += norm * w * sign * 2.0 * d1;
      }
      if (grad_canonical) {
        (*grad_canonical)[j] += norm * w * sign * 2.0 * d0;
        (*grad_canonical)[i] += norm * w * sign * -2.0 * d0;
        const Vec3 gw = -2.0 * gamma * (canonical[i] - canonical[j]) * w;
        (*grad_canonical)[i] += norm * std::abs(diff) * gw;
        (*grad_canonical)[j] -= norm * std::abs(diff) * gw;
      }
    }
  }
  return energy * norm;
}

double visible_energy(const ControlPointSet& cps, const Camera& cam,
                      std::vector<Vec3>* grad_offsets, double near_plane) {
  const size_t k = cps.size();
  if (k == 0) return 0.0;
  std::vector<bool> invisible(k, false);
  size_t n_invisible = 0;
  for (size_t j = 0; j < k; ++j) {
    const Vec3 xc = cam.to_camera(cps.positions[j]);
    bool vis = xc.z() > near_plane;
    if (vis) {
      const double u = cam.fx * xc.x() / xc.z() + cam.cx;
      const double v = cam.fy * xc.y() / xc.z() + cam.cy;
      vis = u >= 0.0 && u <= cam.width - 1 && v >= 0.0 && v <= cam.height - 1;
    }
    invisible[j] = !vis;
    if (!vis) ++n_invisible;
  }
  if (n_invisible == 0) return 0.0;
  const double norm = 1.0 / static_cast<double>(n_invisible);
  double energy = 0.0;
  for (size_t j = 0; j < k; ++j) {
    if (!invisible[j]) continue;
    energy += cps.translation_offsets[j].squaredNorm() * norm;
    if (grad_offsets) {
      (*grad_offsets)[j] += 2.0 * norm * cps.translation_offsets[j];
    }
  }
  return energy;
}

EnergyResult total_energy_and_gradients(const GaussianSet& scene,
                                        const ControlPointSet& cps,
                                        const Frame& frame,
                                        const AnchorState* anchor_state,
                                        const EnergyWeights& weights,
                                        const RenderSettings& settings) {
  EnergyResult result;
  const size_t g = scene.size();
  result.scene_grads.resize(g);
  result.cp_grads.resize(cps.size());

  GaussianSet warped = cps.empty() ? scene : warp(scene, cps);
  result.rendered = render(warped, frame.camera, settings);

  ExternalEnergy ext = external_energy(frame, result.rendered, weights);
  result.breakdown.image = ext.image;
  result.breakdown.depth = ext.depth;

  ParamGradients warped_grads =
      render_adjoint(warped, frame.camera, result.rendered, ext.grad_color,
                     ext.grad_depth, ImageD{}, settings);

  // Scales, colors and opacities pass through the warp untouched.
  result.scene_grads.scales = std::move(warped_grads.scales);
  result.scene_grads.colors = std::move(warped_grads.colors);
  result.scene_grads.opacities = std::move(warped_grads.opacities);

  std::vector<Vec3> grad_warped_pos = std::move(warped_grads.positions);
  std::vector<Quat> grad_warped_q = std::move(warped_grads.orientations);

  if (anchor_state != nullptr && !cps.empty()) {
    const size_t k = cps.size();
    std::vector<Vec3> canonical(k), warped_pos(k);
    std::vector<Quat> warped_quat(k);
    for (size_t j = 0; j < k; ++j) {
      canonical[j] = scene.positions[cps.anchors[j]];
      warped_pos[j] = warped.positions[cps.anchors[j]];
      warped_quat[j] = warped.orientations[cps.anchors[j]];
    }
    const int n = weights.neighbor_count;
    const double gamma = cps.bandwidth;

    std::vector<Vec3> g_warped(k, Vec3::Zero());
    std::vector<Vec3> g_canon(k, Vec3::Zero());
    std::vector<Quat> g_warped_q(k, Quat::Zero());

    result.breakdown.rigid_loc = rigid_loc_energy(
        canonical, anchor_state->prev_positions, warped_pos,
        anchor_state->neighbors, gamma, n,
        weights.rigid_loc != 0.0 ? &g_warped : nullptr,
        weights.rigid_loc != 0.0 ? &g_canon : nullptr);
    for (size_t j = 0; j < k; ++j) {
      grad_warped_pos[cps.anchors[j]] += weights.rigid_loc * g_warped[j];
      result.scene_grads.positions[cps.anchors[j]] +=
          weights.rigid_loc * g_canon[j];
      g_warped[j].setZero();
      g_canon[j].setZero();
    }

    result.breakdown.rigid_rot = rigid_rot_energy(
        canonical, anchor_state->prev_orientations, warped_quat,
        anchor_state->neighbors, gamma, n,
        weights.rigid_rot != 0.0 ? &g_warped_q : nullptr,
        weights.rigid_rot != 0.0 ? &g_canon : nullptr);
    for (size_t j = 0; j < k; ++j) {
      grad_warped_q[cps.anchors[j]] += weights.rigid_rot * g_warped_q[j];
      result.scene_grads.positions[cps.anchors[j]] +=
          weights.rigid_rot * g_canon[j];
      g_canon[j].setZero();
    }

    result.breakdown.iso =
        iso_energy(canonical, warped_pos, anchor_state->neighbors, gamma, n,
                   weights.iso != 0.0 ? &g_warped : nullptr,
                   weights.iso != 0.0 ? &g_canon : nullptr);
    for (size_t j = 0; j < k; ++j) {
      grad_warped_pos[cps.anchors[j]] += weights.iso * g_warped[j];
      result.scene_grads.positions[cps.anchors[j]] += weights.iso * g_canon[j];
    }

    std::vector<Vec3> g_vis(k, Vec3::Zero());
    result.breakdown.visible = visible_energy(
        cps, frame.camera, weights.visible != 0.0 ? &g_vis : nullptr,
        settings.near_plane);
    for (size_t j = 0; j < k; ++j) {
      result.cp_grads.translation_offsets[j] += weights.visible * g_vis[j];
    }
  }

  if (!cps.empty()) {
    warp_backward(scene, cps, grad_warped_pos, grad_warped_q,
                  result.scene_grads, result.cp_grads);
  } else {
    for (size_t i = 0; i < g; ++i) {
      result.scene_grads.positions[i] += grad_warped_pos[i];
      result.scene_grads.orientations[i] += grad_warped_q[i];
    }
  }

  result.breakdown.total =
      weights.image * result.breakdown.image +
      weights.depth * result.breakdown.depth +
      weights.rigid_loc * result.breakdown.rigid_loc +
      weights.rigid_rot * result.breakdown.rigid_rot +
      weights.iso * result.breakdown.iso +
      weights.visible * result.breakdown.visible;
  return result;
}

}  // namespace splattrack
