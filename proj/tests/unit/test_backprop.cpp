#include <catch2/catch_amalgamated.hpp>

#include "nsr/field.hpp"

using namespace nsr;
using Catch::Approx;

namespace {

// Scalar probe loss touching every adjoint the training path uses:
// L = a . sdf + (B : grad) + (D : color). The feature path is exercised
// implicitly because color consumes the features.
struct Probe {
  VecX<double> a;
  MatX<double> B, D;

  static Probe make(int P, uint64_t seed) {
    Rng rng(seed);
    Probe p;
    p.a.resize(P);
    p.B.resize(3, P);
    p.D.resize(3, P);
    for (Eigen::Index i = 0; i < p.a.size(); ++i) p.a[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < p.B.size(); ++i) p.B.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < p.D.size(); ++i) p.D.data()[i] = rng.uniform(-1, 1);
    return p;
  }

  double eval(NeuralField<double>& f, const Eigen::Matrix<double, 3, Eigen::Dynamic>& pts,
              const Eigen::Matrix<double, 3, Eigen::Dynamic>& dirs) const {
    NeuralField<double>::Tape tape;
    f.forward_train(pts, dirs, tape);
    return a.dot(tape.sdf) + (B.array() * tape.grad.array()).sum() +
           (D.array() * tape.color.array()).sum();
  }
};

}  // namespace

TEST_CASE("joint value+tangent backward matches finite differences") {
  FieldConfig cfg = FieldConfig::tiny();
  cfg.geom_hidden_layers = 3;
  cfg.geom_width = 24;
  cfg.color_hidden_layers = 2;
  cfg.color_width = 20;
  cfg.feature_dim = 12;
  NeuralField<double> f(cfg, 17);

  const int P = 5;
  Rng rng(99);
  Eigen::Matrix<double, 3, Eigen::Dynamic> pts(3, P), dirs(3, P);
  for (int i = 0; i < P; ++i) {
    pts.col(i) = Vec3d(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7));
    Vec3d d(rng.normal(), rng.normal(), rng.normal());
    dirs.col(i) = d.normalized();
  }
  Probe probe = Probe::make(P, 7);

  NeuralField<double>::Tape tape;
  f.forward_train(pts, dirs, tape);
  NeuralField<double>::Grads grads;
  grads.init_like(f);
  f.backward_train(tape, probe.a, probe.B, probe.D, grads);
  VecX<double> analytic;
  f.flatten_grads(grads, analytic);

  VecX<double> params;
  f.flatten_params(params);
  // Gradient magnitudes span orders of magnitude; the relative error floor
  // keeps near-zero entries from amplifying finite-difference noise.
  const double scale = analytic.cwiseAbs().maxCoeff();
  Rng pick(3);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    Eigen::Index idx = static_cast<Eigen::Index>(pick.uniform_index(params.size() - 1));
    VecX<double> pp = params;
    pp[idx] += h;
    f.set_params(pp);
    double up = probe.eval(f, pts, dirs);
    pp[idx] -= 2 * h;
    f.set_params(pp);
    double down = probe.eval(f, pts, dirs);
    f.set_params(params);
    double fd = (up - down) / (2 * h);
    double rel = std::abs(analytic[idx] - fd) / std::max(1e-5 * scale, std::abs(fd));
    INFO("param " << idx << " fd " << fd << " analytic " << analytic[idx]);
    CHECK(rel < 1e-4);
    ++checked;
  }
  CHECK(checked > 30);
}
