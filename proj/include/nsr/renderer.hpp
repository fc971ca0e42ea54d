#pragma once

#include <algorithm>
#include <limits>
#include <utility>
#include <vector>

#include "nsr/camera.hpp"
#include "nsr/core.hpp"
#include "nsr/rng.hpp"

namespace nsr {

struct SampleConfig {
  int n_coarse = 64;
  int n_upsample_rounds = 4;
  double upsample_s_base = 64.0;  // sharpness used for importance weights, doubled per round

  int per_round() const { return std::max(1, n_coarse / 4); }
  int total_samples() const { return n_coarse + n_upsample_rounds * per_round(); }

  static SampleConfig full() { return {64, 4, 64.0}; }
  static SampleConfig tiny() { return {32, 2, 64.0}; }
};

template <typename Real>
struct RaySamples {
  VecX<Real> depths;  // strictly increasing, inside (near, far)

  Eigen::Index count() const { return depths.size(); }
};

// log sigmoid(x), stable on both tails.
template <typename Real>
inline Real log_logistic_cdf(Real x) {
  if (x < Real(0)) return x - std::log1p(std::exp(x));
  return -std::log1p(std::exp(-x));
}

// Discrete opacity per section from consecutive SDF samples:
// alpha_i = max((Phi(s f_i) - Phi(s f_{i+1})) / Phi(s f_i), 0),
// computed as 1 - Phi_{i+1}/Phi_i in log space so deeply-inside sections do
// not underflow.
template <typename Real>
VecX<Real> alphas_from_sdf(const VecX<Real>& sdf, Real s) {
  if (sdf.size() < 2) throw ValidationError("alphas_from_sdf: need at least 2 sdf values");
  VecX<Real> alphas(sdf.size() - 1);
  for (Eigen::Index i = 0; i + 1 < sdf.size(); ++i) {
    Real ratio = std::exp(log_logistic_cdf(s * sdf[i + 1]) - log_logistic_cdf(s * sdf[i]));
    Real a = Real(1) - ratio;
    alphas[i] = a < Real(0) ? Real(0) : (a > Real(1) ? Real(1) : a);
  }
  return alphas;
}

template <typename Real>
struct CompositeWeights {
  VecX<Real> transmittance;  // T_i = prod_{j<i} (1 - alpha_j), T_0 = 1
  VecX<Real> weights;        // w_i = T_i * alpha_i
  Real weight_sum = 0;
};

template <typename Real>
CompositeWeights<Real> compute_weights(const VecX<Real>& alphas) {
  CompositeWeights<Real> out;
  out.transmittance.resize(alphas.size());
  out.weights.resize(alphas.size());
  Real t = 1;
  for (Eigen::Index i = 0; i < alphas.size(); ++i) {
    out.transmittance[i] = t;
    out.weights[i] = t * alphas[i];
    t *= Real(1) - alphas[i];
  }
  out.weight_sum = out.weights.sum();
  return out;
}

// Plain weighted accumulation (Eq. form: sum_i w_i value_i).
template <typename Real, typename Derived>
auto composite(const VecX<Real>& weights, const Eigen::MatrixBase<Derived>& values) {
  return (values * weights).eval();
}

// Reverse pass of compute_weights: adjoint on w -> adjoint on alpha.
template <typename Real>
VecX<Real> weights_backward(const VecX<Real>& alphas, const CompositeWeights<Real>& cw,
                            const VecX<Real>& w_bar) {
  VecX<Real> alpha_bar(alphas.size());
  Real t_bar_next = 0;  // adjoint on T_{k+1}
  for (Eigen::Index k = alphas.size() - 1; k >= 0; --k) {
    alpha_bar[k] = cw.transmittance[k] * w_bar[k] - t_bar_next * cw.transmittance[k];
    t_bar_next = alphas[k] * w_bar[k] + t_bar_next * (Real(1) - alphas[k]);
  }
  return alpha_bar;
}

// Reverse pass of alphas_from_sdf. Accumulates into sdf_bar and s_bar.
template <typename Real>
void alphas_backward(const VecX<Real>& sdf, Real s, const VecX<Real>& alpha_bar,
                     VecX<Real>& sdf_bar, Real& s_bar) {
  for (Eigen::Index i = 0; i + 1 < sdf.size(); ++i) {
    Real a = s * sdf[i];
    Real b = s * sdf[i + 1];
    Real ratio = std::exp(log_logistic_cdf(b) - log_logistic_cdf(a));
    if (Real(1) - ratio <= Real(0)) continue;  // clamped section, zero gradient
    // d alpha/d b = -ratio * sigmoid(-b); d alpha/d a = ratio * sigmoid(-a)
    Real sig_na = Real(1) / (Real(1) + std::exp(a));
    Real sig_nb = Real(1) / (Real(1) + std::exp(b));
    Real da = ratio * sig_na;
    Real db = -ratio * sig_nb;
    sdf_bar[i] += alpha_bar[i] * da * s;
    sdf_bar[i + 1] += alpha_bar[i] * db * s;
    s_bar += alpha_bar[i] * (da * sdf[i] + db * sdf[i + 1]);
  }
}

// Stratified coarse samples followed by importance-sampling rounds that
// concentrate samples around the current zero crossing.
template <class Field>
RaySamples<typename Field::Scalar> sample_ray(const Field& field, const Ray& ray,
                                              const SampleConfig& cfg, Rng& rng) {
  using Real = typename Field::Scalar;
  if (!(ray.near < ray.far)) throw ValidationError("sample_ray: need near < far");
  const int n0 = cfg.n_coarse;
  std::vector<Real> depths;
  depths.reserve(cfg.total_samples());
  const Real near = Real(ray.near), far = Real(ray.far);
  for (int i = 0; i < n0; ++i) {
    Real u = Real(rng.uniform());
    depths.push_back(near + (far - near) * (Real(i) + u) / Real(n0));
  }
  std::sort(depths.begin(), depths.end());

  VecX<Real> sdf;
  Eigen::Matrix<Real, 3, Eigen::Dynamic> pts;
  auto eval_at = [&](const std::vector<Real>& ds, VecX<Real>& out) {
    pts.resize(3, static_cast<Eigen::Index>(ds.size()));
    for (size_t i = 0; i < ds.size(); ++i)
      pts.col(static_cast<Eigen::Index>(i)) = (ray.origin + double(ds[i]) * ray.direction).template cast<Real>();
    field.eval_sdf(pts, out);
  };
  eval_at(depths, sdf);

  const int n_up = cfg.per_round();
  double s_up = cfg.upsample_s_base;
  for (int round = 0; round < cfg.n_upsample_rounds; ++round, s_up *= 2.0) {
    VecX<Real> alphas = alphas_from_sdf(sdf, Real(s_up));
    CompositeWeights<Real> cw = compute_weights(alphas);
    std::vector<Real> fresh(n_up);
    if (cw.weight_sum < Real(1e-6)) {
      for (int j = 0; j < n_up; ++j)
        fresh[j] = near + (far - near) * (Real(j) + Real(rng.uniform())) / Real(n_up);
    } else {
      // Inverse CDF over the piecewise-constant weight histogram.
      Eigen::Index k = 0;
      Real cum = cw.weights[0];
      for (int j = 0; j < n_up; ++j) {
        Real q = cw.weight_sum * (Real(j) + Real(rng.uniform())) / Real(n_up);
        while (q > cum && k + 1 < alphas.size()) cum += cw.weights[++k];
        Real w = cw.weights[k];
        Real frac = w > Real(0) ? (q - (cum - w)) / w : Real(0.5);
        frac = frac < Real(0) ? Real(0) : (frac > Real(1) ? Real(1) : frac);
        fresh[j] = depths[k] + frac * (depths[k + 1] - depths[k]);
      }
    }
    VecX<Real> fresh_sdf;
    eval_at(fresh, fresh_sdf);
    // Merge keeping depths sorted and strictly increasing (exact duplicates
    // are nudged up so the sample count stays fixed).
    std::vector<std::pair<Real, Real>> merged;
    merged.reserve(depths.size() + fresh.size());
    for (size_t i = 0; i < depths.size(); ++i) merged.push_back({depths[i], sdf[i]});
    for (size_t i = 0; i < fresh.size(); ++i) merged.push_back({fresh[i], fresh_sdf[i]});
    std::sort(merged.begin(), merged.end());
    depths.clear();
    VecX<Real> new_sdf(static_cast<Eigen::Index>(merged.size()));
    Eigen::Index n = 0;
    for (const auto& [d, f] : merged) {
      Real dd = d;
      if (!depths.empty() && !(dd > depths.back()))
        dd = std::nextafter(depths.back(), std::numeric_limits<Real>::max());
      depths.push_back(dd);
      new_sdf[n++] = f;
    }
    sdf = new_sdf.head(n);
  }

  RaySamples<Real> out;
  out.depths = Eigen::Map<VecX<Real>>(depths.data(), static_cast<Eigen::Index>(depths.size()));
  return out;
}

template <typename Real>
struct RenderOutput {
  Vec3<Real> color = Vec3<Real>::Zero();
  Vec3<Real> normal_raw = Vec3<Real>::Zero();   // accumulated, used by the prior loss
  Vec3<Real> normal_unit = Vec3<Real>::Zero();  // normalized, used for evaluation
  Real depth = 0;
  Real weight_sum = 0;
  VecX<Real> weights;        // per-section T_i * alpha_i
  VecX<Real> sample_depths;  // section depths matching `weights`
  bool degenerate = false;   // nothing accumulated along the ray
};

// Renders one pixel with values taken at section left endpoints; alpha_i is
// built from the sdf at the section's two endpoints.
template <class Field>
RenderOutput<typename Field::Scalar> render_pixel(const Field& field, const Ray& ray,
                                                  const SampleConfig& cfg, Rng& rng) {
  using Real = typename Field::Scalar;
  RaySamples<Real> samples = sample_ray(field, ray, cfg, rng);
  const Eigen::Index n = samples.count();

  Eigen::Matrix<Real, 3, Eigen::Dynamic> pts(3, n), dirs(3, n);
  Vec3<Real> dir = ray.direction.template cast<Real>();
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.col(i) = (ray.origin + double(samples.depths[i]) * ray.direction).template cast<Real>();
    dirs.col(i) = dir;
  }
  VecX<Real> sdf;
  Eigen::Matrix<Real, 3, Eigen::Dynamic> grad, color;
  field.eval_render(pts, dirs, sdf, grad, color);

  VecX<Real> alphas = alphas_from_sdf(sdf, field.sharpness());
  CompositeWeights<Real> cw = compute_weights(alphas);

  RenderOutput<Real> out;
  out.weights = cw.weights;
  out.weight_sum = cw.weight_sum;
  const Eigen::Index n_sec = alphas.size();
  out.sample_depths = samples.depths.head(n_sec);
  out.color = composite(cw.weights, color.leftCols(n_sec));
  out.normal_raw = composite(cw.weights, grad.leftCols(n_sec));
  out.depth = cw.weights.dot(samples.depths.head(n_sec));
  out.degenerate = out.weight_sum < Real(1e-3);
  Real nn = out.normal_raw.norm();
  out.normal_unit = nn > Real(1e-9) ? Vec3<Real>(out.normal_raw / nn) : Vec3<Real>::Zero();
  return out;
}

// Batched sampler: same per-ray stream layout as sample_ray (stratified
// draws, then one draw per fresh sample per round), but field evaluations are
// batched across the rays of the group. Depth count is held constant per ray;
// exact duplicates after a merge are nudged up to stay strictly increasing.
template <class Field>
MatX<typename Field::Scalar> sample_rays_batched(const Field& field, const std::vector<Ray>& rays,
                                                 const SampleConfig& cfg,
                                                 const std::vector<Rng>& ray_rngs_in) {
  using Real = typename Field::Scalar;
  const int m = static_cast<int>(rays.size());
  const int n0 = cfg.n_coarse;
  std::vector<Rng> rngs = ray_rngs_in;

  MatX<Real> depths(n0, m);
  for (int r = 0; r < m; ++r) {
    const Real near = Real(rays[r].near), far = Real(rays[r].far);
    for (int i = 0; i < n0; ++i)
      depths(i, r) = near + (far - near) * (Real(i) + Real(rngs[r].uniform())) / Real(n0);
    std::sort(depths.col(r).data(), depths.col(r).data() + n0);
  }

  Eigen::Matrix<Real, 3, Eigen::Dynamic> pts;
  auto eval_depths = [&](const MatX<Real>& d, VecX<Real>& out_flat) {
    const Eigen::Index k = d.rows();
    pts.resize(3, k * m);
    for (int r = 0; r < m; ++r)
      for (Eigen::Index i = 0; i < k; ++i)
        pts.col(r * k + i) =
            (rays[r].origin + double(d(i, r)) * rays[r].direction).template cast<Real>();
    field.eval_sdf(pts, out_flat);
  };

  VecX<Real> sdf_flat;
  eval_depths(depths, sdf_flat);
  MatX<Real> sdf = Eigen::Map<MatX<Real>>(sdf_flat.data(), n0, m);

  const int n_up = cfg.per_round();
  double s_up = cfg.upsample_s_base;
  for (int round = 0; round < cfg.n_upsample_rounds; ++round, s_up *= 2.0) {
    const Eigen::Index n_cur = depths.rows();
    MatX<Real> fresh(n_up, m);
    for (int r = 0; r < m; ++r) {
      VecX<Real> col_sdf = sdf.col(r);
      VecX<Real> alphas = alphas_from_sdf(col_sdf, Real(s_up));
      CompositeWeights<Real> cw = compute_weights(alphas);
      const Real near = Real(rays[r].near), far = Real(rays[r].far);
      if (cw.weight_sum < Real(1e-6)) {
        for (int j = 0; j < n_up; ++j)
          fresh(j, r) = near + (far - near) * (Real(j) + Real(rngs[r].uniform())) / Real(n_up);
      } else {
        Eigen::Index k = 0;
        Real cum = cw.weights[0];
        for (int j = 0; j < n_up; ++j) {
          Real q = cw.weight_sum * (Real(j) + Real(rngs[r].uniform())) / Real(n_up);
          while (q > cum && k + 1 < alphas.size()) cum += cw.weights[++k];
          Real w = cw.weights[k];
          Real frac = w > Real(0) ? (q - (cum - w)) / w : Real(0.5);
          frac = frac < Real(0) ? Real(0) : (frac > Real(1) ? Real(1) : frac);
          fresh(j, r) = depths(k, r) + frac * (depths(k + 1, r) - depths(k, r));
        }
      }
    }
    VecX<Real> fresh_flat;
    eval_depths(fresh, fresh_flat);
    MatX<Real> fresh_sdf = Eigen::Map<MatX<Real>>(fresh_flat.data(), n_up, m);

    MatX<Real> nd(n_cur + n_up, m), ns(n_cur + n_up, m);
    std::vector<std::pair<Real, Real>> merged(n_cur + n_up);
    for (int r = 0; r < m; ++r) {
      for (Eigen::Index i = 0; i < n_cur; ++i) merged[i] = {depths(i, r), sdf(i, r)};
      for (int i = 0; i < n_up; ++i) merged[n_cur + i] = {fresh(i, r), fresh_sdf(i, r)};
      std::sort(merged.begin(), merged.end());
      for (size_t i = 0; i < merged.size(); ++i) {
        Real d = merged[i].first;
        if (i > 0 && !(d > nd(i - 1, r)))
          d = std::nextafter(nd(i - 1, r), std::numeric_limits<Real>::max());
        nd(static_cast<Eigen::Index>(i), r) = d;
        ns(static_cast<Eigen::Index>(i), r) = merged[i].second;
      }
    }
    depths = std::move(nd);
    sdf = std::move(ns);
  }
  return depths;
}

// Batch entry point: one RenderOutput per ray, field evaluations batched in
// fixed-size groups. Per-ray RNG streams match render_pixel's.
template <class Field>
std::vector<RenderOutput<typename Field::Scalar>> render_batch(const Field& field,
                                                               const std::vector<Ray>& rays,
                                                               const SampleConfig& cfg,
                                                               uint64_t seed) {
  using Real = typename Field::Scalar;
  std::vector<RenderOutput<Real>> out(rays.size());
  const int group = 64;
  for (size_t base = 0; base < rays.size(); base += group) {
    const int m = static_cast<int>(std::min(rays.size() - base, static_cast<size_t>(group)));
    std::vector<Ray> sub(rays.begin() + base, rays.begin() + base + m);
    std::vector<Rng> rngs;
    for (int r = 0; r < m; ++r) rngs.push_back(Rng::stream(seed, "render", base + r));
    MatX<Real> depths = sample_rays_batched(field, sub, cfg, rngs);
    const Eigen::Index n = depths.rows();

    Eigen::Matrix<Real, 3, Eigen::Dynamic> pts(3, n * m), dirs(3, n * m);
    for (int r = 0; r < m; ++r) {
      Vec3<Real> dir = sub[r].direction.template cast<Real>();
      for (Eigen::Index i = 0; i < n; ++i) {
        pts.col(r * n + i) =
            (sub[r].origin + double(depths(i, r)) * sub[r].direction).template cast<Real>();
        dirs.col(r * n + i) = dir;
      }
    }
    VecX<Real> sdf;
    Eigen::Matrix<Real, 3, Eigen::Dynamic> grad, color;
    field.eval_render(pts, dirs, sdf, grad, color);

    for (int r = 0; r < m; ++r) {
      VecX<Real> ray_sdf = sdf.segment(r * n, n);
      VecX<Real> alphas = alphas_from_sdf(ray_sdf, field.sharpness());
      CompositeWeights<Real> cw = compute_weights(alphas);
      RenderOutput<Real>& o = out[base + r];
      const Eigen::Index n_sec = alphas.size();
      o.weights = cw.weights;
      o.weight_sum = cw.weight_sum;
      o.sample_depths = depths.col(r).head(n_sec);
      o.color = composite(cw.weights, color.middleCols(r * n, n_sec));
      o.normal_raw = composite(cw.weights, grad.middleCols(r * n, n_sec));
      o.depth = cw.weights.dot(depths.col(r).head(n_sec));
      o.degenerate = o.weight_sum < Real(1e-3);
      Real nn = o.normal_raw.norm();
      o.normal_unit = nn > Real(1e-9) ? Vec3<Real>(o.normal_raw / nn) : Vec3<Real>::Zero();
    }
  }
  return out;
}

}  // namespace nsr
