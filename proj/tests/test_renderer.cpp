#include <doctest.h>

#include <random>

#include "splattrack/renderer.hpp"

using namespace splattrack;

namespace {

Camera small_camera(int w = 16, int h = 16) {
  Camera cam;
  cam.fx = 0.9 * w;
  cam.fy = 0.9 * w;
  cam.cx = (w - 1) / 2.0;
  cam.cy = (h - 1) / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

GaussianSet random_scene(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> pos(-0.25, 0.25);
  std::uniform_real_distribution<double> depth(0.8, 1.6);
  std::uniform_real_distribution<double> scale(0.03, 0.12);
  std::uniform_real_distribution<double> color(0.1, 0.9);
  std::uniform_real_distribution<double> op(0.3, 0.9);
  std::normal_distribution<double> n(0.0, 1.0);
  GaussianSet scene;
  for (int i = 0; i < count; ++i) {
    Quat q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    scene.push_back(Vec3(pos(rng), pos(rng), depth(rng)),
                    Vec3(scale(rng), scale(rng), scale(rng)), q,
                    Vec3(color(rng), color(rng), color(rng)), op(rng));
  }
  return scene;
}

/// Settings with the footprint and blending cutoffs pushed far out so the
/// rendered images are smooth in the parameters (finite differences need
/// continuity).
RenderSettings smooth_settings() {
  RenderSettings s;
  s.alpha_min = 1e-12;
  s.transmittance_min = 1e-12;
  return s;
}

struct Cotangents {
  ImageD color, depth, opacity;
};

Cotangents random_cotangents(std::mt19937_64& rng, int w, int h) {
  std::normal_distribution<double> n(0.0, 1.0);
  Cotangents c{ImageD(w, h, 3), ImageD(w, h, 1), ImageD(w, h, 1)};
  for (double& v : c.color.data) v = n(rng);
  for (double& v : c.depth.data) v = n(rng);
  for (double& v : c.opacity.data) v = n(rng);
  return c;
}

double loss(const GaussianSet& scene, const Camera& cam,
            const RenderSettings& settings, const Cotangents& ct) {
  const RenderOutput out = render(scene, cam, settings);
  double l = 0.0;
  for (size_t i = 0; i < out.color.data.size(); ++i)
    l += out.color.data[i] * ct.color.data[i];
  for (size_t i = 0; i < out.depth.data.size(); ++i)
    l += out.depth.data[i] * ct.depth.data[i];
  for (size_t i = 0; i < out.opacity.data.size(); ++i)
    l += out.opacity.data[i] * ct.opacity.data[i];
  return l;
}

bool grad_close(double analytic, double fd, double rel_tol, double abs_floor) {
  const double err = std::abs(analytic - fd);
  return err <= abs_floor + rel_tol * std::max(std::abs(analytic), std::abs(fd));
}

/// Central-difference check of every parameter of every Gaussian against the
/// adjoint pass. Returns the number of failed entries.
int check_scene_gradients(std::mt19937_64& rng, const GaussianSet& scene,
                          const Camera& cam, double rel_tol = 1e-4,
                          double abs_floor = 1e-7) {
  const RenderSettings settings = smooth_settings();
  const Cotangents ct = random_cotangents(rng, cam.width, cam.height);
  const RenderOutput out = render(scene, cam, settings);
  const ParamGradients g =
      render_adjoint(scene, cam, out, ct.color, ct.depth, ct.opacity, settings);
  REQUIRE(g.all_finite());

  int failures = 0;
  const double h = 1e-6;
  auto fd_check = [&](double analytic, auto&& mutate) {
    GaussianSet plus = scene, minus = scene;
    mutate(plus, h);
    mutate(minus, -h);
    const double fd =
        (loss(plus, cam, settings, ct) - loss(minus, cam, settings, ct)) /
        (2 * h);
    if (!grad_close(analytic, fd, rel_tol, abs_floor)) {
      ++failures;
      MESSAGE("analytic=" << analytic << " fd=" << fd);
    }
  };

  for (size_t i = 0; i < scene.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      fd_check(g.positions[i][k],
               [&](GaussianSet& s, double d) { s.positions[i][k] += d; });
      fd_check(g.scales[i][k],
               [&](GaussianSet& s, double d) { s.scales[i][k] += d; });
      fd_check(g.colors[i][k],
               [&](GaussianSet& s, double d) { s.colors[i][k] += d; });
    }
    for (int k = 0; k < 4; ++k)
      fd_check(g.orientations[i][k],
               [&](GaussianSet& s, double d) { s.orientations[i][k] += d; });
    fd_check(g.opacities[i],
             [&](GaussianSet& s, double d) { s.opacities[i] += d; });
  }
  return failures;
}

}  // namespace

TEST_CASE("rendering an empty scene throws") {
  CHECK_THROWS_AS(render(GaussianSet{}, small_camera()), ContractViolation);
}

TEST_CASE("single gaussian renders its color at the center pixel") {
  Camera cam = small_camera(17, 17);
  GaussianSet scene;
  scene.push_back(Vec3(0, 0, 1.0), Vec3(0.3, 0.3, 0.3), identity_quat(),
                  Vec3(0.2, 0.5, 0.8), 0.95);
  const RenderOutput out = render(scene, cam);
  const int cx = 8, cy = 8;
  const double a = out.opacity(cx, cy);
  CHECK(a > 0.9);
  CHECK(out.color(cx, cy, 0) == doctest::Approx(0.2 * a).epsilon(1e-9));
  CHECK(out.color(cx, cy, 1) == doctest::Approx(0.5 * a).epsilon(1e-9));
  CHECK(out.color(cx, cy, 2) == doctest::Approx(0.8 * a).epsilon(1e-9));
  CHECK(out.depth(cx, cy) == doctest::Approx(1.0 * a).epsilon(1e-9));
}

TEST_CASE("opacity image stays within [0, 1] and records are consistent") {
  std::mt19937_64 rng(5);
  const Camera cam = small_camera();
  const GaussianSet scene = random_scene(rng, 10);
  const RenderOutput out = render(scene, cam);
  REQUIRE(out.record_offsets.size() ==
          static_cast<size_t>(cam.width) * cam.height + 1);
  CHECK(out.record_offsets.back() == out.records.size());
  for (size_t i = 1; i < out.record_offsets.size(); ++i)
    CHECK(out.record_offsets[i] >= out.record_offsets[i - 1]);
  for (double v : out.opacity.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (const SplatRecord& r : out.records) {
    CHECK(r.alpha > 0.0);
    CHECK(r.gaussian >= 0);
    CHECK(r.gaussian < static_cast<int32_t>(scene.size()));
  }
}

TEST_CASE("nearer opaque gaussian occludes a farther one") {
  Camera cam = small_camera(17, 17);
  GaussianSet scene;
  scene.push_back(Vec3(0, 0, 2.0), Vec3(0.6, 0.6, 0.6), identity_quat(),
                  Vec3(1, 0, 0), 0.99);
  scene.push_back(Vec3(0, 0, 1.0), Vec3(0.3, 0.3, 0.3), identity_quat(),
                  Vec3(0, 1, 0), 0.99);
  const RenderOutput out = render(scene, cam);
  CHECK(out.color(8, 8, 1) > 5.0 * out.color(8, 8, 0));
  CHECK(out.depth(8, 8) < 1.2);
}

TEST_CASE("compositing matches a direct per-pixel evaluation") {
  // Re-derives the color integral from the stored records: the image must
  // equal sum_i c_i a_i prod_j<i (1 - a_j).
  std::mt19937_64 rng(11);
  const Camera cam = small_camera();
  const GaussianSet scene = random_scene(rng, 8);
  const RenderOutput out = render(scene, cam);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Vec3 color = Vec3::Zero();
      double t = 1.0;
      const size_t begin = out.record_offsets[y * cam.width + x];
      const size_t end = out.record_offsets[y * cam.width + x + 1];
      for (size_t r = begin; r < end; ++r) {
        const SplatRecord& rec = out.records[r];
        color += scene.colors[rec.gaussian] * rec.alpha * t;
        t *= 1.0 - rec.alpha;
      }
      for (int ch = 0; ch < 3; ++ch)
        CHECK(out.color(x, y, ch) == doctest::Approx(color[ch]).epsilon(1e-12));
      CHECK(out.opacity(x, y) == doctest::Approx(1.0 - t).epsilon(1e-12));
    }
}

TEST_CASE("behind-camera gaussians contribute nothing") {
  Camera cam = small_camera();
  GaussianSet scene;
  scene.push_back(Vec3(0, 0, -1.0), Vec3(0.3, 0.3, 0.3), identity_quat(),
                  Vec3(1, 1, 1), 0.9);
  scene.push_back(Vec3(0, 0, 1.0), Vec3(0.1, 0.1, 0.1), identity_quat(),
                  Vec3(0.5, 0.5, 0.5), 0.9);
  const RenderOutput out = render(scene, cam);
  for (const SplatRecord& r : out.records) CHECK(r.gaussian == 1);
}

TEST_CASE("analytic gradients match finite differences on random scenes") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> count(1, 10);
  int total_failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianSet scene = random_scene(rng, count(rng));
    total_failures += check_scene_gradients(rng, scene, small_camera());
  }
  CHECK(total_failures == 0);
}

TEST_CASE("adjoint rejects mismatched cotangent shapes") {
  std::mt19937_64 rng(3);
  const Camera cam = small_camera();
  const GaussianSet scene = random_scene(rng, 3);
  const RenderOutput out = render(scene, cam);
  ImageD bad(cam.width + 1, cam.height, 3);
  CHECK_THROWS_AS(render_adjoint(scene, cam, out, bad, ImageD{}, ImageD{}),
                  ContractViolation);
}
