#include "splattrack/geometry.hpp"

#include <cmath>
#include <string>

namespace splattrack {

Mat3 rotation_matrix(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 covariance_from(const Quat& q, const Vec3& s) {
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw ContractViolation("covariance_from: quaternion norm " +
                            std::to_string(q.norm()) + " is not unit");
  }
  if (!(s.array() > 0.0).all()) {
    throw ContractViolation("covariance_from: non-positive scale");
  }
  Mat3 r = rotation_matrix(q);
  return r * s.array().square().matrix().asDiagonal() * r.transpose();
}

Projection project_point(const Vec3& x_world, const Camera& cam) {
  Vec3 xc = cam.to_camera(x_world);
  Projection p;
  p.depth = xc.z();
  if (xc.z() <= kNearPlane) return p;
  p.pixel = Vec2(cam.fx * xc.x() / xc.z() + cam.cx,
                 cam.fy * xc.y() / xc.z() + cam.cy);
  p.valid = true;
  return p;
}

Vec3 backproject_depth(const Vec2& pixel, double depth, const Camera& cam) {
  Vec3 xc((pixel.x() - cam.cx) / cam.fx * depth,
          (pixel.y() - cam.cy) / cam.fy * depth, depth);
  return cam.to_world(xc);
}

Vec3 backproject(const Vec2& pixel, const ImageD& depth, const Camera& cam) {
  int px = static_cast<int>(std::lround(pixel.x()));
  int py = static_cast<int>(std::lround(pixel.y()));
  if (px < 0 || px >= depth.width || py < 0 || py >= depth.height) {
    throw ContractViolation("backproject: pixel outside image");
  }
  double d = depth(px, py);
  if (!std::isfinite(d) || d <= 0.0) {
    throw ContractViolation("backproject: invalid depth at pixel (" +
                            std::to_string(px) + ", " + std::to_string(py) +
                            ")");
  }
  return backproject_depth(pixel, d, cam);
}

Quat quat_multiply(const Quat& q, const Quat& p) {
  return Quat(q[0] * p[0] - q[1] * p[1] - q[2] * p[2] - q[3] * p[3],
              q[0] * p[1] + q[1] * p[0] + q[2] * p[3] - q[3] * p[2],
              q[0] * p[2] - q[1] * p[3] + q[2] * p[0] + q[3] * p[1],
              q[0] * p[3] + q[1] * p[2] - q[2] * p[1] + q[3] * p[0]);
}

Quat quat_conjugate(const Quat& q) { return Quat(q[0], -q[1], -q[2], -q[3]); }

Mat4 quat_left_matrix(const Quat& q) {
  Mat4 m;
  m << q[0], -q[1], -q[2], -q[3],
       q[1],  q[0], -q[3],  q[2],
       q[2],  q[3],  q[0], -q[1],
       q[3], -q[2],  q[1],  q[0];
  return m;
}

Mat4 quat_right_matrix(const Quat& p) {
  Mat4 m;
  m << p[0], -p[1], -p[2], -p[3],
       p[1],  p[0],  p[3], -p[2],
       p[2], -p[3],  p[0],  p[1],
       p[3],  p[2], -p[1],  p[0];
  return m;
}

Quat rotation_backward(const Quat& q_raw, const Mat3& g) {
  Quat qn = q_raw.normalized();
  const double w = qn[0], x = qn[1], y = qn[2], z = qn[3];
  // dR/dw, dR/dx, dR/dy, dR/dz contracted against the cotangent g.
  Quat grad_qn;
  grad_qn[0] = 2 * (-z * (g(0, 1) - g(1, 0)) + y * (g(0, 2) - g(2, 0)) -
                    x * (g(1, 2) - g(2, 1)));
  grad_qn[1] = 2 * (y * (g(0, 1) + g(1, 0)) + z * (g(0, 2) + g(2, 0)) -
                    w * (g(1, 2) - g(2, 1)) - 2 * x * (g(1, 1) + g(2, 2)));
  grad_qn[2] = 2 * (x * (g(0, 1) + g(1, 0)) + w * (g(0, 2) - g(2, 0)) +
                    z * (g(1, 2) + g(2, 1)) - 2 * y * (g(0, 0) + g(2, 2)));
  grad_qn[3] = 2 * (-w * (g(0, 1) - g(1, 0)) + x * (g(0, 2) + g(2, 0)) +
                    y * (g(1, 2) + g(2, 1)) - 2 * z * (g(0, 0) + g(1, 1)));
  return normalize_backward<4>(q_raw, grad_qn);
}

}  // namespace splattrack
