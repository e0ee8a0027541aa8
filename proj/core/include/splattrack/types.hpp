#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace splattrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Quaternions are stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

/// Dense row-major raster with C channels per pixel.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  T& operator()(int x, int y, int ch = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + ch];
  }
  const T& operator()(int x, int y, int ch = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + ch];
  }
  bool empty() const { return data.empty(); }
  size_t size() const { return data.size(); }
};

using ImageD = Raster<double>;
using MaskImage = Raster<uint8_t>;

/// Structure-of-arrays storage for the canonical scene.
struct GaussianSet {
  std::vector<Vec3> positions;
  std::vector<Vec3> scales;
  std::vector<Quat> orientations;  // unit quaternions
  std::vector<Vec3> colors;        // RGB in [0,1]
  std::vector<double> opacities;   // base opacity in (0,1]
  std::vector<int> update_counts;
  std::vector<int> labels;         // semantic class hook, -1 = unset

  size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void push_back(const Vec3& mu, const Vec3& s, const Quat& q, const Vec3& c,
                 double opacity, int label = -1) {
    positions.push_back(mu);
    scales.push_back(s);
    orientations.push_back(q);
    colors.push_back(c);
    opacities.push_back(opacity);
    update_counts.push_back(0);
    labels.push_back(label);
  }

  void reserve(size_t n) {
    positions.reserve(n);
    scales.reserve(n);
    orientations.reserve(n);
    colors.reserve(n);
    opacities.reserve(n);
    update_counts.reserve(n);
    labels.reserve(n);
  }
};

/// Rigid world-to-camera transform plus pinhole intrinsics.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3 rotation = Mat3::Identity();   // world -> camera
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& x_world) const {
    return rotation * x_world + translation;
  }
  Vec3 to_world(const Vec3& x_cam) const {
    return rotation.transpose() * (x_cam - translation);
  }
};

struct Frame {
  ImageD rgb;            // W x H x 3 in [0,1]
  ImageD depth;          // W x H, meters; NaN or <= 0 invalid
  Camera camera;
  std::optional<MaskImage> mask;  // nonzero = instrument pixel
  std::optional<ImageD> flow;     // W x H x 2, pixels, previous frame -> this frame

  int width() const { return rgb.width; }
  int height() const { return rgb.height; }

  bool masked(int x, int y) const { return mask && (*mask)(x, y) != 0; }
  bool depth_valid(int x, int y) const {
    double d = depth(x, y);
    return std::isfinite(d) && d > 0.0;
  }
};

struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace splattrack
