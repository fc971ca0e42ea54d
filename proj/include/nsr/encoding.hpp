#pragma once

#include "nsr/core.hpp"

namespace nsr {

// Frequency encoding gamma(x) = [x, sin(2^k x), cos(2^k x)]_{k<K}, applied
// per coordinate. The identity component is always present so frequency 0
// passes the raw coordinate through.
template <typename Real>
struct PositionalEncoding {
  int octaves = 6;

  int output_dim(int input_dim = 3) const { return input_dim * (1 + 2 * octaves); }

  // Column p of `out` encodes column p of `pts` (3 x P).
  void encode(const Eigen::Matrix<Real, 3, Eigen::Dynamic>& pts,
              MatX<Real>& out) const {
    const Eigen::Index P = pts.cols();
    out.resize(output_dim(), P);
    out.template topRows<3>() = pts;
    Real freq = 1;
    for (int k = 0; k < octaves; ++k) {
      auto scaled = (pts * freq).array();
      out.middleRows(3 + 6 * k, 3) = scaled.sin().matrix();
      out.middleRows(3 + 6 * k + 3, 3) = scaled.cos().matrix();
      freq *= 2;
    }
  }

  // Jacobian wrt the input point, packed as [J_x | J_y | J_z] (D x 3P):
  // block t column p holds d(encode)/d x_t at point p. The Jacobian is
  // sparse (each encoded row depends on exactly one coordinate).
  void encode_with_jacobian(const Eigen::Matrix<Real, 3, Eigen::Dynamic>& pts,
                            MatX<Real>& out, MatX<Real>& jac) const {
    const Eigen::Index P = pts.cols();
    encode(pts, out);
    jac.setZero(output_dim(), 3 * P);
    for (int t = 0; t < 3; ++t) {
      auto block = jac.middleCols(t * P, P);
      block.row(t).setOnes();
      Real freq = 1;
      for (int k = 0; k < octaves; ++k) {
        // d sin(f x)/dx = f cos(f x), d cos(f x)/dx = -f sin(f x)
        block.row(3 + 6 * k + t) = freq * out.row(3 + 6 * k + 3 + t);
        block.row(3 + 6 * k + 3 + t) = -freq * out.row(3 + 6 * k + t);
        freq *= 2;
      }
    }
  }
};

}  // namespace nsr
