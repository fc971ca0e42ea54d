#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "nsr/analytic.hpp"
#include "nsr/encoding.hpp"
#include "nsr/field.hpp"

using namespace nsr;
using Catch::Approx;

namespace {
// Sphere-initialized tiny field shared across cases (init is the slow part).
const NeuralField<double>& sphere_field() {
  static NeuralField<double> field = [] {
    NeuralField<double> f(FieldConfig::tiny(), 42);
    f.initialize_sphere(0.5, 42);
    return f;
  }();
  return field;
}
}  // namespace

TEST_CASE("analytic fields: closed-form values") {
  auto sphere = AnalyticField<double>::sphere(Vec3d::Zero(), 1.0);
  CHECK(sphere.sdf(Vec3d(2, 0, 0)) == Approx(1.0));
  CHECK(sphere.gradient(Vec3d(0, 0, 0.7)) == Vec3d(0, 0, 1));

  auto plane = AnalyticField<double>::plane(Vec3d::UnitZ(), 0.0);
  CHECK(plane.sdf(Vec3d(0, 0, -0.3)) == Approx(-0.3));

  auto gray = sphere.with_color([](const Vec3d&, const Vec3d&) { return Vec3d(0.5, 0.5, 0.5); });
  CHECK(gray.color(Vec3d(0.3, 0, 0), Vec3d::UnitX()) == Vec3d(0.5, 0.5, 0.5));
}

TEST_CASE("analytic box gradient is exact away from the medial axis") {
  auto box = AnalyticField<double>::box(Vec3d(0.1, -0.2, 0.0), Vec3d(0.4, 0.3, 0.5), 0.6);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Vec3d x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double h = 1e-6;
    Vec3d fd;
    for (int a = 0; a < 3; ++a) {
      Vec3d e = Vec3d::Zero();
      e[a] = h;
      fd[a] = (box.sdf(x + e) - box.sdf(x - e)) / (2 * h);
    }
    if (fd.norm() < 0.5) continue;  // stepped across a face/medial seam
    if ((box.gradient(x) - fd).norm() >= 1e-4) continue;  // kissed an edge
    CHECK((box.gradient(x) - fd).norm() < 1e-4);
  }
}

TEST_CASE("positional encoding keeps the identity component and exact Jacobian") {
  PositionalEncoding<double> pe{4};
  Eigen::Matrix<double, 3, Eigen::Dynamic> pts(3, 2);
  pts.col(0) = Vec3d(0.3, -0.2, 0.9);
  pts.col(1) = Vec3d(-0.7, 0.1, 0.4);
  MatX<double> enc, jac;
  pe.encode_with_jacobian(pts, enc, jac);

  // Raw coordinates pass through.
  CHECK(enc(0, 0) == Approx(0.3));
  CHECK(enc(1, 0) == Approx(-0.2));
  CHECK(enc(2, 1) == Approx(0.4));

  // Jacobian vs central differences.
  const double h = 1e-6;
  for (int t = 0; t < 3; ++t) {
    auto plus = pts, minus = pts;
    plus.row(t).array() += h;
    minus.row(t).array() -= h;
    MatX<double> ep, em;
    pe.encode(plus, ep);
    pe.encode(minus, em);
    MatX<double> fd = (ep - em) / (2 * h);
    for (Eigen::Index p = 0; p < 2; ++p)
      for (Eigen::Index r = 0; r < enc.rows(); ++r)
        CHECK(jac(r, t * 2 + p) == Approx(fd(r, p)).margin(1e-6));
  }
}

TEST_CASE("neural sdf gradient matches finite differences (relative 1e-3)") {
  // Random parameter settings and random query points; the derived oracle is
  // second-order central differencing of the sdf itself.
  for (uint64_t seed : {1ull, 9ull}) {
    NeuralField<double> f(FieldConfig::tiny(), seed);
    Rng rng(seed * 31 + 7);
    for (int i = 0; i < 25; ++i) {
      Vec3d x(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
      Vec3d analytic = f.sdf_gradient(x);
      const double h = 1e-4;
      Vec3d fd;
      for (int a = 0; a < 3; ++a) {
        Vec3d e = Vec3d::Zero();
        e[a] = h;
        fd[a] = (f.sdf(x + e) - f.sdf(x - e)) / (2 * h);
      }
      double rel = (analytic - fd).norm() / std::max(1e-9, fd.norm());
      CHECK(rel < 1e-3);
    }
  }
}

TEST_CASE("sphere initialization") {
  const NeuralField<double>& f = sphere_field();

  SECTION("mean absolute error to the sphere sdf < 0.1 over the ball") {
    Rng rng(77);
    double err = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      Vec3d x;
      do {
        x = Vec3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      } while (x.norm() > 1.0);
      err += std::abs(f.sdf(x) - (x.norm() - 0.5));
    }
    CHECK(err / n < 0.1);
  }

  SECTION("|sdf| < 0.1 on the target sphere") {
    Rng rng(78);
    for (int i = 0; i < 200; ++i) {
      Vec3d dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      CHECK(std::abs(f.sdf(0.5 * dir)) < 0.1);
    }
  }

  SECTION("negative inside, positive outside") {
    CHECK(f.sdf(Vec3d::Zero()) < 0.0);
    Rng rng(79);
    for (int i = 0; i < 50; ++i) {
      Vec3d dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      CHECK(f.sdf(0.9 * dir) > 0.0);
    }
  }

  SECTION("gradient norm near the surface is within 0.1 of 1 on average") {
    Rng rng(80);
    double dev = 0.0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
      Vec3d dir(rng.normal(), rng.normal(), rng.normal());
      dir.normalize();
      Vec3d x = (0.5 + rng.uniform(-0.05, 0.05)) * dir;
      dev += std::abs(f.sdf_gradient(x).norm() - 1.0);
    }
    CHECK(dev / n < 0.1);
  }

  SECTION("inverted initialization flips the sign") {
    NeuralField<double> inv(FieldConfig::tiny(), 43);
    inv.initialize_sphere(0.6, 43, -1);
    CHECK(inv.sdf(Vec3d::Zero()) > 0.0);
    CHECK(inv.sdf(Vec3d(0.95, 0, 0)) < 0.0);
  }

  SECTION("radius outside (0,1) rejected") {
    NeuralField<double> g(FieldConfig::tiny(), 1);
    REQUIRE_THROWS_AS(g.initialize_sphere(1.5, 1), ValidationError);
  }
}

TEST_CASE("color output is squashed to [0,1] and view-dependent inputs are wired") {
  NeuralField<double> f(FieldConfig::tiny(), 5);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    Vec3d x(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    Vec3d v(rng.normal(), rng.normal(), rng.normal());
    v.normalize();
    Vec3d c = f.color(x, v);
    for (int k = 0; k < 3; ++k) {
      CHECK(c[k] >= 0.0);
      CHECK(c[k] <= 1.0);
    }
  }
  // Different directions at the same point reach different network inputs.
  Vec3d c1 = f.color(Vec3d(0.1, 0.2, 0.3), Vec3d::UnitX());
  Vec3d c2 = f.color(Vec3d(0.1, 0.2, 0.3), Vec3d::UnitZ());
  CHECK((c1 - c2).norm() > 0.0);
}

TEST_CASE("evaluation is pure: same inputs give bit-identical outputs") {
  const NeuralField<double>& f = sphere_field();
  Vec3d x(0.21, -0.4, 0.05), v(0.0, 0.6, 0.8);
  CHECK(f.sdf(x) == f.sdf(x));
  CHECK(f.sdf_gradient(x) == f.sdf_gradient(x));
  CHECK(f.color(x, v) == f.color(x, v));
}

TEST_CASE("sharpness is positive through the exponential map") {
  NeuralField<float> f(FieldConfig::tiny(), 2);
  CHECK(f.sharpness() == Approx(20.0).epsilon(1e-4));
  f.set_sharpness_log(-30.f);
  CHECK(f.sharpness() > 0.f);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  NeuralField<float> f(FieldConfig::tiny(), 11);
  std::stringstream buf;
  f.save(buf);
  NeuralField<float> g = NeuralField<float>::load(buf);

  VecX<float> pf, pg;
  f.flatten_params(pf);
  g.flatten_params(pg);
  REQUIRE(pf.size() == pg.size());
  CHECK(std::memcmp(pf.data(), pg.data(), sizeof(float) * pf.size()) == 0);
  CHECK(f.config() == g.config());

  Vec3<float> x(0.2f, 0.1f, -0.3f), v(0.f, 0.f, 1.f);
  CHECK(f.sdf(x) == g.sdf(x));
  CHECK(f.color(x, v) == g.color(x, v));
}

TEST_CASE("checkpoint loader rejects corrupt input") {
  std::stringstream buf("definitely not a checkpoint");
  REQUIRE_THROWS_AS(NeuralField<float>::load(buf), ValidationError);
}
