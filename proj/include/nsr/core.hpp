#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nsr {

template <typename Real>
using Vec3 = Eigen::Matrix<Real, 3, 1>;
template <typename Real>
using Vec2 = Eigen::Matrix<Real, 2, 1>;
template <typename Real>
using Mat3 = Eigen::Matrix<Real, 3, 3>;
template <typename Real>
using Mat4 = Eigen::Matrix<Real, 4, 4>;
template <typename Real>
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using Vec3d = Vec3<double>;
using Vec3f = Vec3<float>;
using Vec2d = Vec2<double>;
using Mat3d = Mat3<double>;
using Mat4d = Mat4<double>;

// Input/contract violations (bad files, bad arguments). CLI exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures while running (I/O, numerical blow-up). CLI exit code 3.
struct RuntimeError : std::runtime_error {
  explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename Real>
constexpr Real pi() {
  return Real(3.14159265358979323846L);
}

template <typename Real>
inline Real deg_to_rad(Real d) {
  return d * pi<Real>() / Real(180);
}

template <typename Real>
inline Real rad_to_deg(Real r) {
  return r * Real(180) / pi<Real>();
}

template <typename Real>
inline Real clamp01(Real v) {
  return v < Real(0) ? Real(0) : (v > Real(1) ? Real(1) : v);
}

// Uniform scale followed by translation: x' = scale * x + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Vec3d translation = Vec3d::Zero();

  Vec3d apply(const Vec3d& x) const { return scale * x + translation; }
  Vec3d apply_inverse(const Vec3d& x) const { return (x - translation) / scale; }
  SimilarityTransform inverse() const { return {1.0 / scale, -translation / scale}; }
  bool is_identity(double tol = 1e-12) const {
    return std::abs(scale - 1.0) <= tol && translation.norm() <= tol;
  }
};

}  // namespace nsr
