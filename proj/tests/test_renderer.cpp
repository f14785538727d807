#include <doctest.h>

#include <cmath>

#include "tns/renderer.hpp"

using namespace tns;
using Eigen::VectorXd;

TEST_SUITE("renderer") {

TEST_CASE("deterministic sampling hits bin midpoints") {
  geom::Ray ray;
  ray.t_near = 0.0;
  ray.t_far = 4.0;
  VectorXd t = render::sample_ray(ray, 4, nullptr, false);
  VectorXd expected(4);
  expected << 0.5, 1.5, 2.5, 3.5;
  CHECK((t - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(render::sample_ray(ray, 1, nullptr, false), std::invalid_argument);
}

TEST_CASE("stratified sampling stays in bins and is seeded") {
  geom::Ray ray;
  ray.t_near = 0.6;
  ray.t_far = 3.0;
  Rng a(42), b(42);
  VectorXd ta = render::sample_ray(ray, 32, &a, true);
  VectorXd tb = render::sample_ray(ray, 32, &b, true);
  CHECK((ta - tb).cwiseAbs().maxCoeff() == 0.0);
  const double w = (ray.t_far - ray.t_near) / 32;
  for (int i = 0; i < 32; ++i) {
    CHECK(ta[i] >= ray.t_near + i * w);
    CHECK(ta[i] < ray.t_near + (i + 1) * w);
    if (i > 0) CHECK(ta[i] > ta[i - 1]);
  }
}

TEST_CASE("transparency from sdf") {
  CHECK(render::transparency_from_sdf(0.0, 50.0) == doctest::Approx(0.5).epsilon(1e-12));
  for (double f : {-0.8, -0.01, 0.3, 2.0}) {
    const double sum =
        render::transparency_from_sdf(f, 20.0) + render::transparency_from_sdf(-f, 20.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(render::transparency_from_sdf(1.0, 200.0) > 0.999);
  CHECK(render::transparency_from_sdf(-1.0, 200.0) < 0.001);
  CHECK_THROWS_AS(render::transparency_from_sdf(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("weights are clamped forward differences") {
  VectorXd T(3);
  T << 1.0, 0.6, 0.1;
  VectorXd w = render::weights_from_transparency(T);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));

  T << 0.5, 0.8, 0.2;  // non-monotone: negative difference clamps to 0
  w = render::weights_from_transparency(T);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("zero-crossing depth interpolates linearly") {
  VectorXd t(2), f(2);
  t << 1.0, 2.0;
  f << 0.5, -0.5;
  auto z = render::zero_crossing_depth(t, f);
  REQUIRE(z.has_value());
  CHECK(*z == doctest::Approx(1.5).epsilon(1e-12));

  VectorXd t3(3), f3(3);
  t3 << 0.0, 1.0, 2.0;
  f3 << 1.0, 0.2, -0.2;
  z = render::zero_crossing_depth(t3, f3);
  REQUIRE(z.has_value());
  CHECK(*z == doctest::Approx(1.5).epsilon(1e-12));

  f3 << 1.0, 0.5, 0.1;
  CHECK(!render::zero_crossing_depth(t3, f3).has_value());
  CHECK_THROWS_AS(render::zero_crossing_depth(t3, f), std::invalid_argument);
}

TEST_CASE("plane transparency concentrates weight at the surface") {
  // f(t) = 1.5 - t along the ray: a wall at t = 1.5.
  const double s = 200.0;
  const int n = 256;
  VectorXd t(n), T(n);
  for (int i = 0; i < n; ++i) {
    t[i] = (i + 0.5) * 3.0 / n;
    T[i] = render::transparency_from_sdf(1.5 - t[i], s);
  }
  VectorXd w = render::weights_from_transparency(T);
  int argmax = 0;
  w.maxCoeff(&argmax);
  CHECK(std::abs(0.5 * (t[argmax] + t[argmax + 1]) - 1.5) < 3.0 / n);
}

TEST_CASE("opaque plane accumulates nearly all weight") {
  const double s = 200.0;
  const int n = 128;
  VectorXd T(n);
  double acc = 0;
  for (int i = 0; i < n; ++i)
    T[i] = render::transparency_from_sdf(1.5 - (i + 0.5) * 3.0 / n, s);
  VectorXd w = render::weights_from_transparency(T);
  acc = w.sum();
  CHECK(acc >= 0.99);
  CHECK(acc <= 1.0 + 1e-12);

  // Constant radiance c0: the rendered color is exactly c0 * acc.
  Eigen::Vector3d c0(0.2, 0.6, 0.9);
  Eigen::Vector3d chat = Eigen::Vector3d::Zero();
  for (int i = 0; i + 1 < n; ++i) chat += w[i] * c0;
  CHECK((chat - c0 * acc).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("free-space ray accumulates almost nothing") {
  const int n = 64;
  VectorXd T(n);
  for (int i = 0; i < n; ++i) T[i] = render::transparency_from_sdf(1.0, 20.0);
  CHECK(render::weights_from_transparency(T).sum() < 0.05);
}

TEST_CASE("importance resample keeps ordering and originals") {
  VectorXd t(4), w(3);
  t << 0.0, 1.0, 2.0, 3.0;
  w << 0.0, 1.0, 0.0;
  Rng rng(5);
  VectorXd out = render::importance_resample(t, w, 4, &rng);
  CHECK(out.size() >= t.size());
  for (Eigen::Index i = 1; i < out.size(); ++i) CHECK(out[i] > out[i - 1]);
  int extra_in_hot_bin = 0;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (out[i] > 1.0 && out[i] < 2.0) ++extra_in_hot_bin;
  CHECK(extra_in_hot_bin == 4);  // all redrawn samples land in the weighted bin

  VectorXd wz = VectorXd::Zero(3);
  CHECK(render::importance_resample(t, wz, 4, &rng).size() == t.size());
}

TEST_CASE("render_ray on the freshly initialized sphere field") {
  auto model = field::FieldModel<float>::create(field::ArchitectureConfig{}, 3);
  geom::Ray ray;
  ray.origin = Eigen::Vector3d(0, 0, -2);
  ray.direction = Eigen::Vector3d(0, 0, 1);
  ray.t_near = 0.6;
  ray.t_far = 3.0;
  render::RenderConfig cfg;
  cfg.stratified = false;
  auto [samples, out] = render::render_ray(model, ray, cfg);
  REQUIRE(out.depth_zero_crossing.has_value());
  CHECK(*out.depth_zero_crossing == doctest::Approx(1.5).epsilon(0.08));
  CHECK(out.acc > 0.5);
  CHECK(out.color.minCoeff() >= 0.0);
  CHECK(out.color.maxCoeff() <= 1.0);
  CHECK(out.grad_norms.size() == cfg.n_samples);
  // Eikonal residuals should already be small under geometric init, except
  // near t = 2 where the ray crosses the field's central gradient kink.
  const Eigen::VectorXd t = render::sample_ray(ray, cfg.n_samples, nullptr, false);
  for (int i = 0; i < cfg.n_samples; ++i)
    if (std::abs(t[i] - 2.0) > 0.3) CHECK(std::abs(out.grad_norms[i] - 1.0) < 0.5);
}

}  // TEST_SUITE
