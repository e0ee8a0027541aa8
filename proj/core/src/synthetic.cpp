#include "splattrack/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "splattrack/geometry.hpp"

namespace splattrack {

ScriptKind parse_script(const std::string& name) {
  if (name == "static") return ScriptKind::Static;
  if (name == "sinusoidal") return ScriptKind::Sinusoidal;
  if (name == "pan") return ScriptKind::Pan;
  if (name == "occluder") return ScriptKind::Occluder;
  throw ContractViolation("unknown synthetic script '" + name + "'");
}

std::string script_name(ScriptKind kind) {
  switch (kind) {
    case ScriptKind::Static: return "static";
    case ScriptKind::Sinusoidal: return "sinusoidal";
    case ScriptKind::Pan: return "pan";
    case ScriptKind::Occluder: return "occluder";
  }
  return "unknown";
}

namespace {

constexpr double kOccluderHalfSize = 0.12;
constexpr double kOccluderDepthFraction = 0.5;
constexpr double kOccluderGray = 0.5;

// Smooth procedural texture: random sinusoid mixture per channel.
struct Texture {
  struct Wave {
    double fa, fb, phase, amp;
  };
  std::array<std::vector<Wave>, 3> waves;

  static Texture make(std::mt19937_64& rng) {
    Texture tex;
    std::uniform_real_distribution<double> freq(1.0, 9.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> amp(0.05, 0.2);
    for (auto& channel : tex.waves) {
      channel.resize(6);
      for (auto& w : channel) {
        w = {freq(rng), freq(rng), phase(rng), amp(rng)};
      }
    }
    return tex;
  }

  Vec3 sample(double a, double b) const {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
      double v = 0.5;
      for (const auto& w : waves[ch]) {
        v += w.amp * std::sin(2.0 * M_PI * (w.fa * a + w.fb * b) + w.phase);
      }
      c[ch] = std::clamp(v, 0.02, 0.98);
    }
    return c;
  }
};

inline double quantize8(double v) { return std::round(v * 255.0) / 255.0; }
inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct SheetModel {
  ScriptParams params;
  Texture texture;

  Vec3 surface(double a, double b, int t) const {
    const double e = params.surface_extent;
    Vec3 x((a - 0.5) * e, (b - 0.5) * e, params.surface_depth);
    if (params.kind == ScriptKind::Sinusoidal) {
      const double amp = params.amplitude_fraction * e;
      const double bump = std::exp(-(((a - 0.5) * (a - 0.5)) +
                                     ((b - 0.5) * (b - 0.5))) /
                                   (2.0 * 0.2 * 0.2));
      const double phase = std::sin(2.0 * M_PI * t / params.period_frames);
      static const Vec3 dir = Vec3(1.0, 0.6, 0.5).normalized();
      x += amp * phase * bump * dir;
    }
    return x;
  }

  Camera camera(int t) const {
    Camera cam;
    cam.width = params.width;
    cam.height = params.height;
    cam.fx = cam.fy = 0.9 * params.width;
    cam.cx = (params.width - 1) / 2.0;
    cam.cy = (params.height - 1) / 2.0;
    double pan = 0.0;
    if (params.kind == ScriptKind::Pan && params.frames > 1) {
      pan = params.pan_total * t / (params.frames - 1.0);
    }
    cam.translation = Vec3(-pan, 0.0, 0.0);
    return cam;
  }

  bool occluder_active(int t) const {
    return params.kind == ScriptKind::Occluder && t >= params.occlusion_start &&
           t < params.occlusion_end;
  }

  double occluder_depth() const {
    return kOccluderDepthFraction * params.surface_depth;
  }

  // True when the camera ray through screen point u is blocked by the quad.
  bool occluded(const Vec2& u, const Camera& cam, int t) const {
    if (!occluder_active(t)) return false;
    const Vec3 p = backproject_depth(u, occluder_depth(), cam);
    return std::abs(p.x()) <= kOccluderHalfSize &&
           std::abs(p.y()) <= kOccluderHalfSize;
  }
};

// Newton refinement of material coordinates so that the surface point
// projects exactly onto the pixel center.
bool refine_material(const SheetModel& model, const Camera& cam, int t,
                     double px, double py, double& a, double& b) {
  for (int it = 0; it < 12; ++it) {
    const Projection p0 = project_point(model.surface(a, b, t), cam);
    if (!p0.valid) return false;
    const Vec2 f = p0.pixel - Vec2(px, py);
    if (f.norm() < 1e-11) return true;
    const double h = 1e-7;
    const Projection pa = project_point(model.surface(a + h, b, t), cam);
    const Projection pb = project_point(model.surface(a, b + h, t), cam);
    if (!pa.valid || !pb.valid) return false;
    Mat2 jac;
    jac.col(0) = (pa.pixel - p0.pixel) / h;
    jac.col(1) = (pb.pixel - p0.pixel) / h;
    const Vec2 step = jac.fullPivLu().solve(f);
    a -= step.x();
    b -= step.y();
    if (a < -0.2 || a > 1.2 || b < -0.2 || b > 1.2) return false;
  }
  return false;
}

// Scanline rasterization of the sheet mesh; fills the material map with
// perspective-correct (a, b) and leaves NaN where nothing covers the pixel.
void rasterize_sheet(const SheetModel& model, const Camera& cam, int t,
                     ImageD& material, ImageD& zbuffer) {
  const int m = model.params.mesh_resolution;
  const int w = cam.width, h = cam.height;
  material = ImageD(w, h, 2, std::nan(""));
  zbuffer = ImageD(w, h, 1, std::numeric_limits<double>::infinity());

  const int verts = m + 1;
  std::vector<Vec2> uv(static_cast<size_t>(verts) * verts);
  std::vector<double> depth(uv.size());
  std::vector<bool> valid(uv.size());
  for (int j = 0; j < verts; ++j) {
    for (int i = 0; i < verts; ++i) {
      const double a = static_cast<double>(i) / m;
      const double b = static_cast<double>(j) / m;
      const Projection p = project_point(model.surface(a, b, t), cam);
      const size_t idx = static_cast<size_t>(j) * verts + i;
      uv[idx] = p.pixel;
      depth[idx] = p.depth;
      valid[idx] = p.valid;
    }
  }

  auto raster_triangle = [&](size_t i0, size_t i1, size_t i2,
                             const Vec2& ab0, const Vec2& ab1, const Vec2& ab2) {
    if (!valid[i0] || !valid[i1] || !valid[i2]) return;
    const Vec2 &p0 = uv[i0], &p1 = uv[i1], &p2 = uv[i2];
    const double area = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                        (p2.x() - p0.x()) * (p1.y() - p0.y());
    if (std::abs(area) < 1e-14) return;
    const int x0 = std::max(0, static_cast<int>(std::ceil(
                                   std::min({p0.x(), p1.x(), p2.x()}))));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(
                                       std::max({p0.x(), p1.x(), p2.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(
                                   std::min({p0.y(), p1.y(), p2.y()}))));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(
                                       std::max({p0.y(), p1.y(), p2.y()}))));
    const double inv_area = 1.0 / area;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double w1 = ((x - p0.x()) * (p2.y() - p0.y()) -
                           (p2.x() - p0.x()) * (y - p0.y())) * inv_area;
        const double w2 = ((p1.x() - p0.x()) * (y - p0.y()) -
                           (x - p0.x()) * (p1.y() - p0.y())) * inv_area;
        const double w0 = 1.0 - w1 - w2;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
        // Perspective-correct interpolation via 1/z weighting.
        const double iz =
            w0 / depth[i0] + w1 / depth[i1] + w2 / depth[i2];
        const double z = 1.0 / iz;
        if (z >= zbuffer(x, y)) continue;
        zbuffer(x, y) = z;
        const double a = (w0 * ab0.x() / depth[i0] + w1 * ab1.x() / depth[i1] +
                          w2 * ab2.x() / depth[i2]) * z;
        const double b = (w0 * ab0.y() / depth[i0] + w1 * ab1.y() / depth[i1] +
                          w2 * ab2.y() / depth[i2]) * z;
        material(x, y, 0) = a;
        material(x, y, 1) = b;
      }
    }
  };

  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const size_t v00 = static_cast<size_t>(j) * verts + i;
      const size_t v10 = v00 + 1;
      const size_t v01 = v00 + verts;
      const size_t v11 = v01 + 1;
      const Vec2 ab00(static_cast<double>(i) / m, static_cast<double>(j) / m);
      const Vec2 ab10(static_cast<double>(i + 1) / m, static_cast<double>(j) / m);
      const Vec2 ab01(static_cast<double>(i) / m, static_cast<double>(j + 1) / m);
      const Vec2 ab11(static_cast<double>(i + 1) / m,
                      static_cast<double>(j + 1) / m);
      raster_triangle(v00, v10, v11, ab00, ab10, ab11);
      raster_triangle(v00, v11, v01, ab00, ab11, ab01);
    }
  }
}

}  // namespace

SyntheticSequence generate(const ScriptParams& params, uint64_t seed) {
  if (params.surface_extent <= 0.0 || params.width <= 0 || params.height <= 0 ||
      params.frames <= 0 || params.mesh_resolution < 2) {
    throw ContractViolation("generate: degenerate synthetic script");
  }

  std::mt19937_64 rng(seed);
  SheetModel model{params, Texture::make(rng)};

  SyntheticSequence seq;
  seq.params = params;
  seq.frames.reserve(params.frames);
  seq.material_maps.reserve(params.frames);

  // Query material points on a grid strictly inside the sheet.
  for (int j = 0; j < params.query_grid; ++j) {
    for (int i = 0; i < params.query_grid; ++i) {
      GroundTruthTrack track;
      const double lo = 0.3, hi = 0.7;
      track.material =
          Vec2(params.query_grid == 1 ? 0.5
                                      : lo + (hi - lo) * i / (params.query_grid - 1),
               params.query_grid == 1 ? 0.5
                                      : lo + (hi - lo) * j / (params.query_grid - 1));
      seq.tracks.push_back(track);
    }
  }

  ImageD prev_material;
  for (int t = 0; t < params.frames; ++t) {
    const Camera cam = model.camera(t);
    ImageD material, zbuffer;
    rasterize_sheet(model, cam, t, material, zbuffer);

    Frame frame;
    frame.camera = cam;
    frame.rgb = ImageD(params.width, params.height, 3);
    frame.depth = ImageD(params.width, params.height, 1, std::nan(""));
    const bool occluder = model.occluder_active(t);
    if (params.kind == ScriptKind::Occluder) {
      frame.mask = MaskImage(params.width, params.height, 1, 0);
    }
    if (params.with_flow && t > 0) {
      frame.flow = ImageD(params.width, params.height, 2, 0.0);
    }

    for (int y = 0; y < params.height; ++y) {
      for (int x = 0; x < params.width; ++x) {
        double a = material(x, y, 0);
        double b = material(x, y, 1);
        if (std::isfinite(a) &&
            refine_material(model, cam, t, x, y, a, b)) {
          material(x, y, 0) = a;
          material(x, y, 1) = b;
        } else {
          a = material(x, y, 0);
          b = material(x, y, 1);
        }
        if (std::isfinite(a)) {
          const Vec3 xs = model.surface(a, b, t);
          frame.depth(x, y) = to_f32(cam.to_camera(xs).z());
          const Vec3 c = model.texture.sample(a, b);
          for (int ch = 0; ch < 3; ++ch) {
            frame.rgb(x, y, ch) = quantize8(c[ch]);
          }
        }
        if (occluder && model.occluded(Vec2(x, y), cam, t)) {
          (*frame.mask)(x, y) = 1;
          frame.depth(x, y) = to_f32(model.occluder_depth());
          for (int ch = 0; ch < 3; ++ch) {
            frame.rgb(x, y, ch) = quantize8(kOccluderGray);
          }
        }
        if (frame.flow && !prev_material.empty()) {
          const double pa = prev_material(x, y, 0);
          const double pb = prev_material(x, y, 1);
          if (std::isfinite(pa) && (!frame.mask || (*frame.mask)(x, y) == 0)) {
            const Projection p =
                project_point(model.surface(pa, pb, t), cam);
            if (p.valid) {
              (*frame.flow)(x, y, 0) = to_f32(p.pixel.x() - x);
              (*frame.flow)(x, y, 1) = to_f32(p.pixel.y() - y);
            }
          }
        }
      }
    }

    for (GroundTruthTrack& track : seq.tracks) {
      const Vec3 xs = model.surface(track.material.x(), track.material.y(), t);
      const Projection p = project_point(xs, cam);
      track.positions_3d.push_back(xs);
      track.pixels.push_back(p.valid ? p.pixel : Vec2(-1, -1));
      bool vis = p.valid && p.pixel.x() >= 0 && p.pixel.x() <= cam.width - 1 &&
                 p.pixel.y() >= 0 && p.pixel.y() <= cam.height - 1;
      if (vis && occluder && model.occluded(p.pixel, cam, t)) vis = false;
      track.visible.push_back(vis ? 1 : 0);
    }

    prev_material = material;
    seq.material_maps.push_back(std::move(material));
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace splattrack
