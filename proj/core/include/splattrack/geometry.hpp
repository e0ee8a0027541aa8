#pragma once

#include "splattrack/types.hpp"

namespace splattrack {

inline constexpr double kNearPlane = 1e-3;

/// Rotation matrix of a quaternion (w, x, y, z). Expects unit norm.
Mat3 rotation_matrix(const Quat& q);

/// Sigma = R(q) diag(s)^2 R(q)^T. Throws ContractViolation if |q| is not
/// unit within 1e-6 or any scale component is <= 0.
Mat3 covariance_from(const Quat& q, const Vec3& s);

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;  // camera-space z
  bool valid = false;  // false when behind the near plane
};

Projection project_point(const Vec3& x_world, const Camera& cam);

/// Inverse of project_point at integer pixel (u, v) using the frame depth
/// map. Throws ContractViolation when the depth there is invalid.
Vec3 backproject(const Vec2& pixel, const ImageD& depth, const Camera& cam);

/// Backprojection with an explicit depth value (no map lookup).
Vec3 backproject_depth(const Vec2& pixel, double depth, const Camera& cam);

/// Hamilton product q * p in (w, x, y, z) convention.
Quat quat_multiply(const Quat& q, const Quat& p);
Quat quat_conjugate(const Quat& q);

/// 4x4 matrix L with q*p = L(q) p.
Mat4 quat_left_matrix(const Quat& q);
/// 4x4 matrix R with q*p = R(p) q.
Mat4 quat_right_matrix(const Quat& p);

/// Derivative of the normalized vector: d(v/|v|)/dv applied to a cotangent.
/// Works for any dimension; used for quaternion renormalization chains.
template <int N>
Eigen::Matrix<double, N, 1> normalize_backward(
    const Eigen::Matrix<double, N, 1>& v,
    const Eigen::Matrix<double, N, 1>& grad_normalized) {
  double n = v.norm();
  Eigen::Matrix<double, N, 1> vn = v / n;
  return (grad_normalized - vn * vn.dot(grad_normalized)) / n;
}

/// dL/dq (raw, pre-normalization) from dL/dR where R = rotation_matrix(q/|q|).
Quat rotation_backward(const Quat& q_raw, const Mat3& grad_rotation);

}  // namespace splattrack
