#pragma once

#include <vector>

#include "nsr/core.hpp"
#include "nsr/rng.hpp"

namespace nsr {

// Plain fully connected net. Hidden activation is chosen per net (softplus
// for geometry so spatial gradients stay smooth, relu for color); the output
// layer is linear and any squashing happens at the call site.
template <typename Real>
struct Mlp {
  enum class Hidden { Softplus, Relu };

  std::vector<MatX<Real>> W;  // layer k: dims[k+1] x dims[k]
  std::vector<VecX<Real>> b;
  std::vector<int> dims;
  Hidden hidden = Hidden::Softplus;
  Real beta = Real(100);  // softplus sharpness

  int layer_count() const { return static_cast<int>(W.size()); }

  void init(const std::vector<int>& layer_dims, Hidden act, Rng& rng, Real out_gain = Real(0.1)) {
    dims = layer_dims;
    hidden = act;
    W.clear();
    b.clear();
    for (size_t k = 0; k + 1 < dims.size(); ++k) {
      Real scale = std::sqrt(Real(2) / Real(dims[k]));
      if (k + 2 == dims.size()) scale *= out_gain;
      MatX<Real> w(dims[k + 1], dims[k]);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * Real(rng.normal());
      W.push_back(std::move(w));
      b.push_back(VecX<Real>::Zero(dims[k + 1]));
    }
  }

  size_t param_count() const {
    size_t n = 0;
    for (size_t k = 0; k < W.size(); ++k) n += W[k].size() + b[k].size();
    return n;
  }

  void softplus_inplace(MatX<Real>& z) const {
    // log(1 + exp(beta z)) / beta, linear tail for large arguments
    z = z.unaryExpr([this](Real v) {
      Real bz = beta * v;
      if (bz > Real(20)) return v;
      return std::log1p(std::exp(bz)) / beta;
    });
  }

  MatX<Real> sigmoid_beta(const MatX<Real>& z) const {
    return z.unaryExpr([this](Real v) {
      Real bz = beta * v;
      if (bz > Real(0)) {
        Real e = std::exp(-bz);
        return Real(1) / (Real(1) + e);
      }
      Real e = std::exp(bz);
      return e / (Real(1) + e);
    });
  }

  void activate(MatX<Real>& z) const {
    if (hidden == Hidden::Softplus)
      softplus_inplace(z);
    else
      z = z.cwiseMax(Real(0));
  }

  // Derivative of the hidden activation at pre-activation z.
  MatX<Real> activation_prime(const MatX<Real>& z) const {
    if (hidden == Hidden::Softplus) return sigmoid_beta(z);
    return z.unaryExpr([](Real v) { return v > Real(0) ? Real(1) : Real(0); });
  }

  // Value-only forward. Returns the linear output (no squashing).
  MatX<Real> forward(const MatX<Real>& input) const {
    MatX<Real> a = input;
    for (int k = 0; k < layer_count(); ++k) {
      MatX<Real> z = (W[k] * a).colwise() + b[k];
      if (k + 1 < layer_count()) activate(z);
      a = std::move(z);
    }
    return a;
  }

  struct Tape {
    std::vector<MatX<Real>> A;  // A[0] = input, A[k] = activation after layer k
    std::vector<MatX<Real>> Z;  // Z[k] = pre-activation of layer k (k >= 1), Z[0] unused
  };

  MatX<Real> forward_tape(const MatX<Real>& input, Tape& tape) const {
    tape.A.assign(layer_count() + 1, {});
    tape.Z.assign(layer_count() + 1, {});
    tape.A[0] = input;
    for (int k = 0; k < layer_count(); ++k) {
      tape.Z[k + 1] = (W[k] * tape.A[k]).colwise() + b[k];
      tape.A[k + 1] = tape.Z[k + 1];
      if (k + 1 < layer_count()) activate(tape.A[k + 1]);
    }
    return tape.A[layer_count()];
  }

  struct Grads {
    std::vector<MatX<Real>> W;
    std::vector<VecX<Real>> b;

    void init_like(const Mlp& m) {
      W.clear();
      b.clear();
      for (size_t k = 0; k < m.W.size(); ++k) {
        W.push_back(MatX<Real>::Zero(m.W[k].rows(), m.W[k].cols()));
        b.push_back(VecX<Real>::Zero(m.b[k].size()));
      }
    }

    void add(const Grads& other) {
      for (size_t k = 0; k < W.size(); ++k) {
        W[k] += other.W[k];
        b[k] += other.b[k];
      }
    }

    void clear() {
      for (auto& w : W) w.setZero();
      for (auto& v : b) v.setZero();
    }
  };

  // Standard reverse pass from an adjoint on the linear output.
  // Returns the adjoint on the input.
  MatX<Real> backward(const Tape& tape, MatX<Real> out_bar, Grads& grads) const {
    MatX<Real> a_bar = std::move(out_bar);
    for (int k = layer_count() - 1; k >= 0; --k) {
      MatX<Real> z_bar = (k + 1 < layer_count())
                             ? MatX<Real>(activation_prime(tape.Z[k + 1]).cwiseProduct(a_bar))
                             : std::move(a_bar);
      grads.W[k].noalias() += z_bar * tape.A[k].transpose();
      grads.b[k] += z_bar.rowwise().sum();
      a_bar.noalias() = W[k].transpose() * z_bar;
    }
    return a_bar;
  }
};

}  // namespace nsr
