#include "splattrack/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splattrack {

namespace {

// Screen-space footprint of one Gaussian after EWA projection.
struct GaussGeom {
  bool valid = false;
  Vec2 center = Vec2::Zero();  // projected mean, pixels
  double z = 0.0;              // camera-space depth of the mean
  double conic_a = 0, conic_b = 0, conic_c = 0;  // inverse 2D covariance
  double qmax = 0;             // Mahalanobis^2 cutoff from alpha_min
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

GaussGeom project_gaussian(const GaussianSet& scene, size_t i,
                           const Camera& cam, const RenderSettings& st) {
  GaussGeom g;
  const double opacity = scene.opacities[i];
  if (opacity <= st.alpha_min) return g;

  Vec3 t = cam.to_camera(scene.positions[i]);
  if (t.z() <= st.near_plane) return g;

  const double inv_z = 1.0 / t.z();
  g.center = Vec2(cam.fx * t.x() * inv_z + cam.cx,
                  cam.fy * t.y() * inv_z + cam.cy);
  g.z = t.z();

  Mat3 rot = rotation_matrix(scene.orientations[i].normalized());
  Mat3 sigma =
      rot * scene.scales[i].array().square().matrix().asDiagonal() *
      rot.transpose();
  Mat3 m = cam.rotation * sigma * cam.rotation.transpose();

  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * inv_z, 0, -cam.fx * t.x() * inv_z * inv_z,
         0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;
  Mat2 cov2d = jac * m * jac.transpose();
  cov2d(0, 0) += st.screen_blur;
  cov2d(1, 1) += st.screen_blur;

  const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
  if (det <= 0.0) return g;
  const double inv_det = 1.0 / det;
  g.conic_a = cov2d(1, 1) * inv_det;
  g.conic_b = -cov2d(0, 1) * inv_det;
  g.conic_c = cov2d(0, 0) * inv_det;

  g.qmax = 2.0 * std::log(opacity / st.alpha_min);
  const double rx = std::sqrt(g.qmax * cov2d(0, 0));
  const double ry = std::sqrt(g.qmax * cov2d(1, 1));
  g.x0 = std::max(0, static_cast<int>(std::ceil(g.center.x() - rx)));
  g.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(g.center.x() + rx)));
  g.y0 = std::max(0, static_cast<int>(std::ceil(g.center.y() - ry)));
  g.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(g.center.y() + ry)));
  if (g.x0 > g.x1 || g.y0 > g.y1) return g;

  g.valid = true;
  return g;
}

std::vector<GaussGeom> project_all(const GaussianSet& scene, const Camera& cam,
                                   const RenderSettings& st) {
  std::vector<GaussGeom> geoms(scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    geoms[i] = project_gaussian(scene, i, cam, st);
  }
  return geoms;
}

// Depth order: camera z ascending, ties broken by index.
std::vector<int32_t> sorted_order(const std::vector<GaussGeom>& geoms) {
  std::vector<int32_t> order;
  order.reserve(geoms.size());
  for (size_t i = 0; i < geoms.size(); ++i) {
    if (geoms[i].valid) order.push_back(static_cast<int32_t>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    return geoms[a].z < geoms[b].z;
  });
  return order;
}

inline double splat_alpha(const GaussGeom& g, double opacity, double px,
                          double py, const RenderSettings& st, double* gauss) {
  const double dx = px - g.center.x();
  const double dy = py - g.center.y();
  const double q =
      g.conic_a * dx * dx + 2.0 * g.conic_b * dx * dy + g.conic_c * dy * dy;
  if (q > g.qmax) return -1.0;
  const double e = std::exp(-0.5 * q);
  if (gauss) *gauss = e;
  const double alpha = opacity * e;
  if (alpha < st.alpha_min) return -1.0;
  return std::min(alpha, st.alpha_max);
}

}  // namespace

void ParamGradients::add(const ParamGradients& other) {
  for (size_t i = 0; i < size(); ++i) {
    positions[i] += other.positions[i];
    scales[i] += other.scales[i];
    orientations[i] += other.orientations[i];
    colors[i] += other.colors[i];
    opacities[i] += other.opacities[i];
  }
}

bool ParamGradients::all_finite() const {
  for (size_t i = 0; i < size(); ++i) {
    if (!positions[i].allFinite() || !scales[i].allFinite() ||
        !orientations[i].allFinite() || !colors[i].allFinite() ||
        !std::isfinite(opacities[i]))
      return false;
  }
  return true;
}

RenderOutput render(const GaussianSet& scene, const Camera& cam,
                    const RenderSettings& st) {
  if (scene.empty()) throw ContractViolation("render: empty scene");

  const int w = cam.width, h = cam.height;
  RenderOutput out;
  out.color = ImageD(w, h, 3);
  out.depth = ImageD(w, h, 1);
  out.opacity = ImageD(w, h, 1);

  auto geoms = project_all(scene, cam, st);
  auto order = sorted_order(geoms);

  std::vector<std::vector<SplatRecord>> pixel_records(
      static_cast<size_t>(w) * h);

  const int ts = st.tile_size;
  const int tiles_x = (w + ts - 1) / ts;
  const int tiles_y = (h + ts - 1) / ts;

  // Tiles write disjoint pixel regions; this loop is parallelizable as long
  // as the per-tile work stays independent (it does).
  std::vector<int32_t> tile_list;
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const int px0 = tx * ts, px1 = std::min(w, px0 + ts) - 1;
      const int py0 = ty * ts, py1 = std::min(h, py0 + ts) - 1;
      tile_list.clear();
      for (int32_t idx : order) {
        const GaussGeom& g = geoms[idx];
        if (g.x0 <= px1 && g.x1 >= px0 && g.y0 <= py1 && g.y1 >= py0) {
          tile_list.push_back(idx);
        }
      }
      if (tile_list.empty()) continue;

      for (int py = py0; py <= py1; ++py) {
        for (int px = px0; px <= px1; ++px) {
          double transmittance = 1.0;
          Vec3 color = Vec3::Zero();
          double depth = 0.0;
          auto& records = pixel_records[static_cast<size_t>(py) * w + px];
          for (int32_t idx : tile_list) {
            const GaussGeom& g = geoms[idx];
            if (px < g.x0 || px > g.x1 || py < g.y0 || py > g.y1) continue;
            const double alpha =
                splat_alpha(g, scene.opacities[idx], px, py, st, nullptr);
            if (alpha < 0.0) continue;
            records.push_back({idx, alpha});
            const double weight = alpha * transmittance;
            color += weight * scene.colors[idx];
            depth += weight * g.z;
            transmittance *= 1.0 - alpha;
            if (transmittance < st.transmittance_min) break;
          }
          out.color(px, py, 0) = color.x();
          out.color(px, py, 1) = color.y();
          out.color(px, py, 2) = color.z();
          out.depth(px, py) = depth;
          out.opacity(px, py) = 1.0 - transmittance;
        }
      }
    }
  }

  out.record_offsets.resize(static_cast<size_t>(w) * h + 1);
  out.record_offsets[0] = 0;
  size_t total = 0;
  for (size_t p = 0; p < pixel_records.size(); ++p) {
    total += pixel_records[p].size();
    out.record_offsets[p + 1] = static_cast<uint32_t>(total);
  }
  out.records.reserve(total);
  for (auto& pr : pixel_records) {
    out.records.insert(out.records.end(), pr.begin(), pr.end());
  }
  return out;
}

ParamGradients render_adjoint(const GaussianSet& scene, const Camera& cam,
                              const RenderOutput& out, const ImageD& grad_color,
                              const ImageD& grad_depth,
                              const ImageD& grad_opacity,
                              const RenderSettings& st) {
  const int w = cam.width, h = cam.height;
  if (out.width() != w || out.height() != h) {
    throw ContractViolation("render_adjoint: output/camera shape mismatch");
  }
  if (!grad_color.empty() &&
      (grad_color.width != w || grad_color.height != h || grad_color.channels != 3)) {
    throw ContractViolation("render_adjoint: grad_color shape mismatch");
  }
  if (!grad_depth.empty() && (grad_depth.width != w || grad_depth.height != h)) {
    throw ContractViolation("render_adjoint: grad_depth shape mismatch");
  }
  if (!grad_opacity.empty() &&
      (grad_opacity.width != w || grad_opacity.height != h)) {
    throw ContractViolation("render_adjoint: grad_opacity shape mismatch");
  }

  const size_t n = scene.size();
  ParamGradients grads(n);

  auto geoms = project_all(scene, cam, st);

  // Screen-space accumulators per Gaussian.
  std::vector<Vec2> d_center(n, Vec2::Zero());
  std::vector<Vec3> d_conic(n, Vec3::Zero());  // (a, b, c)
  std::vector<double> d_z(n, 0.0);

  std::vector<double> t_prefix;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const size_t p = static_cast<size_t>(py) * w + px;
      const uint32_t begin = out.record_offsets[p];
      const uint32_t end = out.record_offsets[p + 1];
      if (begin == end) continue;

      Vec3 gc = Vec3::Zero();
      if (!grad_color.empty()) {
        gc = Vec3(grad_color(px, py, 0), grad_color(px, py, 1),
                  grad_color(px, py, 2));
      }
      const double gd = grad_depth.empty() ? 0.0 : grad_depth(px, py);
      const double go = grad_opacity.empty() ? 0.0 : grad_opacity(px, py);
      if (gc.isZero() && gd == 0.0 && go == 0.0) continue;

      const uint32_t count = end - begin;
      t_prefix.resize(count);
      double transmittance = 1.0;
      for (uint32_t k = 0; k < count; ++k) {
        t_prefix[k] = transmittance;
        transmittance *= 1.0 - out.records[begin + k].alpha;
      }

      // Back-to-front: suffix holds the loss sensitivity of everything
      // composited behind the current record.
      double suffix = 0.0;
      for (uint32_t k = count; k-- > 0;) {
        const SplatRecord& rec = out.records[begin + k];
        const int32_t idx = rec.gaussian;
        const GaussGeom& g = geoms[idx];
        const double response =
            gc.dot(scene.colors[idx]) + gd * g.z + go;
        const double weight = rec.alpha * t_prefix[k];

        grads.colors[idx] += gc * weight;
        d_z[idx] += gd * weight;

        const double d_alpha =
            t_prefix[k] * response - suffix / (1.0 - rec.alpha);
        suffix += weight * response;

        // alpha = min(opacity * gauss, alpha_max); clamped alphas carry no
        // gradient.
        if (rec.alpha >= st.alpha_max) continue;
        const double gauss = rec.alpha / scene.opacities[idx];
        grads.opacities[idx] += d_alpha * gauss;

        const double d_gauss = d_alpha * scene.opacities[idx];
        const double d_q = -0.5 * gauss * d_gauss;
        const double dx = px - g.center.x();
        const double dy = py - g.center.y();
        // q = a dx^2 + 2 b dx dy + c dy^2, delta = pixel - center.
        d_center[idx] -=
            d_q * Vec2(2.0 * (g.conic_a * dx + g.conic_b * dy),
                       2.0 * (g.conic_b * dx + g.conic_c * dy));
        d_conic[idx] += d_q * Vec3(dx * dx, 2.0 * dx * dy, dy * dy);
      }
    }
  }

  // Chain the screen-space accumulators back to Gaussian parameters.
  for (size_t i = 0; i < n; ++i) {
    if (!geoms[i].valid) continue;
    const GaussGeom& g = geoms[i];
    if (d_center[i].isZero() && d_conic[i].isZero() && d_z[i] == 0.0 &&
        grads.opacities[i] == 0.0 && grads.colors[i].isZero()) {
      continue;
    }

    const Vec3 t = cam.to_camera(scene.positions[i]);
    const double inv_z = 1.0 / t.z();
    const Quat q_raw = scene.orientations[i];
    const Mat3 rot = rotation_matrix(q_raw.normalized());
    const Vec3& s = scene.scales[i];
    const Mat3 sigma =
        rot * s.array().square().matrix().asDiagonal() * rot.transpose();
    const Mat3 m = cam.rotation * sigma * cam.rotation.transpose();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx * inv_z, 0, -cam.fx * t.x() * inv_z * inv_z,
           0, cam.fy * inv_z, -cam.fy * t.y() * inv_z * inv_z;
    Mat2 cov2d = jac * m * jac.transpose();
    cov2d(0, 0) += st.screen_blur;
    cov2d(1, 1) += st.screen_blur;

    // conic = cov2d^-1; d(cov2d) = -conic * d(conic) * conic.
    Mat2 conic;
    conic << g.conic_a, g.conic_b, g.conic_b, g.conic_c;
    Mat2 d_conic_mat;
    d_conic_mat << d_conic[i][0], 0.5 * d_conic[i][1],
                   0.5 * d_conic[i][1], d_conic[i][2];
    Mat2 d_cov2d = -conic * d_conic_mat * conic;

    // cov2d = J M J^T + blur I.
    Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov2d * jac * m;
    Mat3 d_m = jac.transpose() * d_cov2d * jac;
    Mat3 d_sigma = cam.rotation.transpose() * d_m * cam.rotation;

    // Sigma = R diag(s^2) R^T.
    Mat3 d_rot =
        2.0 * d_sigma * rot * s.array().square().matrix().asDiagonal();
    Mat3 rt_ds_r = rot.transpose() * d_sigma * rot;
    grads.scales[i] += 2.0 * s.cwiseProduct(rt_ds_r.diagonal());
    grads.orientations[i] += rotation_backward(q_raw, d_rot);

    // Projection of the mean and the Jacobian both depend on t.
    Vec3 d_t = Vec3::Zero();
    d_t.x() += d_center[i].x() * cam.fx * inv_z;
    d_t.y() += d_center[i].y() * cam.fy * inv_z;
    d_t.z() += -d_center[i].x() * cam.fx * t.x() * inv_z * inv_z -
               d_center[i].y() * cam.fy * t.y() * inv_z * inv_z;
    d_t.z() += d_z[i];
    const double inv_z2 = inv_z * inv_z;
    const double inv_z3 = inv_z2 * inv_z;
    d_t.x() += d_jac(0, 2) * (-cam.fx * inv_z2);
    d_t.y() += d_jac(1, 2) * (-cam.fy * inv_z2);
    d_t.z() += d_jac(0, 0) * (-cam.fx * inv_z2) +
               d_jac(1, 1) * (-cam.fy * inv_z2) +
               d_jac(0, 2) * (2.0 * cam.fx * t.x() * inv_z3) +
               d_jac(1, 2) * (2.0 * cam.fy * t.y() * inv_z3);

    grads.positions[i] += cam.rotation.transpose() * d_t;
  }

  return grads;
}

}  // namespace splattrack
