#pragma once

#include <cstdint>
#include <cstring>

#include "nsr/core.hpp"

namespace nsr {

// Adam on a flat parameter vector.
template <typename Real>
struct Adam {
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  VecX<Real> m;
  VecX<Real> v;
  int64_t step = 0;

  void reset(Eigen::Index n) {
    m = VecX<Real>::Zero(n);
    v = VecX<Real>::Zero(n);
    step = 0;
  }

  void update(VecX<Real>& params, const VecX<Real>& grad, Real lr) {
    if (m.size() != params.size()) reset(params.size());
    ++step;
    m = beta1 * m + (Real(1) - beta1) * grad;
    v = beta2 * v + (Real(1) - beta2) * grad.cwiseProduct(grad);
    Real c1 = Real(1) - std::pow(beta1, Real(step));
    Real c2 = Real(1) - std::pow(beta2, Real(step));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

// Warm-up then cosine decay to a 5% floor.
template <typename Real>
Real lr_schedule(Real base_lr, int64_t step, int64_t warmup, int64_t total) {
  Real lr = base_lr;
  if (warmup > 0 && step < warmup) return lr * Real(step + 1) / Real(warmup);
  if (total <= warmup) return lr;
  Real t = Real(step - warmup) / Real(total - warmup);
  t = t < Real(0) ? Real(0) : (t > Real(1) ? Real(1) : t);
  Real cosine = (std::cos(pi<Real>() * t) + Real(1)) / Real(2);
  return lr * (Real(0.05) + Real(0.95) * cosine);
}

}  // namespace nsr
