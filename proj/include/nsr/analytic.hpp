#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <utility>

#include "nsr/core.hpp"

namespace nsr {

template <typename Real>
using Mat3X = Eigen::Matrix<Real, 3, Eigen::Dynamic>;

// Closed-form SDF field with exact gradients. Used as the render/test oracle
// and as the geometry behind synthetic scenes. Satisfies the same Field
// interface the renderer expects from the neural field.
template <typename Real = double>
class AnalyticField {
 public:
  using Scalar = Real;
  using V3 = Vec3<Real>;
  using SdfFn = std::function<Real(const V3&)>;
  using GradFn = std::function<V3(const V3&)>;
  using ColorFn = std::function<V3(const V3&, const V3&)>;

  AnalyticField() = default;
  AnalyticField(SdfFn sdf, GradFn grad, ColorFn color)
      : sdf_(std::move(sdf)), grad_(std::move(grad)), color_(std::move(color)) {}

  static AnalyticField sphere(const V3& center, Real radius) {
    return AnalyticField(
        [=](const V3& x) { return (x - center).norm() - radius; },
        [=](const V3& x) {
          V3 d = x - center;
          Real n = d.norm();
          return n > Real(1e-12) ? V3(d / n) : V3(V3::UnitZ());
        },
        gray_color());
  }

  // Half-space below the plane n.x = offset is solid (sdf = n.x - offset).
  static AnalyticField plane(const V3& normal, Real offset) {
    V3 n = normal.normalized();
    return AnalyticField(
        [=](const V3& x) { return n.dot(x) - offset; },
        [=](const V3&) { return n; },
        gray_color());
  }

  // Solid axis-aligned box, optionally rotated by yaw about +z.
  static AnalyticField box(const V3& center, const V3& half_extents, Real yaw = Real(0)) {
    Mat3<Real> rot = Mat3<Real>::Identity();
    if (yaw != Real(0)) {
      Real c = std::cos(yaw), s = std::sin(yaw);
      rot << c, -s, 0, s, c, 0, 0, 0, 1;
    }
    Mat3<Real> rot_t = rot.transpose();
    auto local_sdf = [=](const V3& p) {
      V3 q = p.cwiseAbs() - half_extents;
      V3 qp = q.cwiseMax(Real(0));
      Real outside = qp.norm();
      Real inside = std::min(q.maxCoeff(), Real(0));
      return outside + inside;
    };
    auto local_grad = [=](const V3& p) {
      V3 q = p.cwiseAbs() - half_extents;
      V3 sign(p.x() >= 0 ? Real(1) : Real(-1), p.y() >= 0 ? Real(1) : Real(-1),
              p.z() >= 0 ? Real(1) : Real(-1));
      V3 qp = q.cwiseMax(Real(0));
      Real outside = qp.norm();
      if (outside > Real(1e-12)) return V3(sign.cwiseProduct(qp / outside));
      // Inside: gradient points out of the nearest face.
      int axis;
      q.maxCoeff(&axis);
      V3 g = V3::Zero();
      g[axis] = sign[axis];
      return g;
    };
    return AnalyticField(
        [=](const V3& x) { return local_sdf(rot_t * (x - center)); },
        [=](const V3& x) { return V3(rot * local_grad(rot_t * (x - center))); },
        gray_color());
  }

  // Room interior: solid everywhere outside the box (walls, floor, ceiling
  // form the zero set, normals point into the room).
  static AnalyticField room(const V3& center, const V3& half_extents) {
    AnalyticField b = box(center, half_extents);
    auto bs = b.sdf_;
    auto bg = b.grad_;
    return AnalyticField([=](const V3& x) { return -bs(x); },
                         [=](const V3& x) { return V3(-bg(x)); }, gray_color());
  }

  static AnalyticField union_of(AnalyticField a, AnalyticField b) {
    auto as = a.sdf_, bsdf = b.sdf_;
    auto ag = a.grad_, bg = b.grad_;
    return AnalyticField(
        [=](const V3& x) { return std::min(as(x), bsdf(x)); },
        [=](const V3& x) { return as(x) <= bsdf(x) ? ag(x) : bg(x); }, gray_color());
  }

  // f'(x) = k * f(x); gradients scale accordingly (no longer unit).
  static AnalyticField scaled(AnalyticField a, Real k) {
    auto as = a.sdf_;
    auto ag = a.grad_;
    return AnalyticField([=](const V3& x) { return k * as(x); },
                         [=](const V3& x) { return V3(k * ag(x)); }, a.color_);
  }

  AnalyticField with_color(ColorFn c) const {
    AnalyticField f = *this;
    f.color_ = std::move(c);
    return f;
  }

  AnalyticField with_sharpness(Real s) const {
    AnalyticField f = *this;
    f.sharpness_ = s;
    return f;
  }

  Real sdf(const V3& x) const { return sdf_(x); }
  V3 gradient(const V3& x) const { return grad_(x); }
  V3 color(const V3& x, const V3& v) const {
    V3 c = color_(x, v);
    return V3(clamp01(c.x()), clamp01(c.y()), clamp01(c.z()));
  }
  Real sharpness() const { return sharpness_; }

  // Batch interface shared with the neural field.
  void eval_sdf(const Mat3X<Real>& pts, VecX<Real>& out) const {
    out.resize(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) out[i] = sdf_(pts.col(i));
  }

  void eval_render(const Mat3X<Real>& pts, const Mat3X<Real>& dirs, VecX<Real>& sdf_out,
                   Mat3X<Real>& grad_out, Mat3X<Real>& color_out) const {
    sdf_out.resize(pts.cols());
    grad_out.resize(3, pts.cols());
    color_out.resize(3, pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      V3 x = pts.col(i);
      sdf_out[i] = sdf_(x);
      grad_out.col(i) = grad_(x);
      color_out.col(i) = color(x, dirs.col(i));
    }
  }

 private:
  static ColorFn gray_color() {
    return [](const V3&, const V3&) { return V3(Real(0.5), Real(0.5), Real(0.5)); };
  }

  SdfFn sdf_;
  GradFn grad_;
  ColorFn color_;
  Real sharpness_ = Real(64);
};

// Sphere-trace then bisect to the first zero crossing along [near, far].
// Returns the hit distance, or nullopt if the ray never enters the surface.
template <typename Real>
std::optional<Real> raycast(const AnalyticField<Real>& field, const Vec3<Real>& origin,
                            const Vec3<Real>& dir, Real near, Real far, Real tol = Real(1e-8)) {
  Real d = near;
  Real f_prev = field.sdf(origin + d * dir);
  if (f_prev <= Real(0)) return d;  // already inside
  const Real min_step = Real(1e-4);
  while (d < far) {
    Real step = std::max(f_prev * Real(0.9), min_step);
    Real d_next = std::min(d + step, far);
    Real f_next = field.sdf(origin + d_next * dir);
    if (f_next <= Real(0)) {
      // Bisect the bracketing interval [d, d_next].
      Real lo = d, hi = d_next;
      for (int it = 0; it < 80 && hi - lo > tol; ++it) {
        Real mid = (lo + hi) / 2;
        if (field.sdf(origin + mid * dir) <= Real(0))
          hi = mid;
        else
          lo = mid;
      }
      return (lo + hi) / 2;
    }
    if (d_next >= far) break;
    d = d_next;
    f_prev = f_next;
  }
  return std::nullopt;
}

}  // namespace nsr
