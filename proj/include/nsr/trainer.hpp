#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nsr/config.hpp"
#include "nsr/core.hpp"
#include "nsr/field.hpp"
#include "nsr/geocheck.hpp"
#include "nsr/losses.hpp"
#include "nsr/optim.hpp"
#include "nsr/renderer.hpp"
#include "nsr/rng.hpp"
#include "nsr/scene.hpp"

namespace nsr {

struct TrainConfig {
  std::string preset = "tiny";
  FieldConfig field = FieldConfig::tiny();
  SampleConfig sampling = SampleConfig::tiny();
  int rays_per_batch = 256;
  int64_t phase_one_iters = 1200;
  int64_t total_iters = 3000;
  double lambda_color = 1.0;
  double lambda_prior = 1.0;
  double lambda_eikonal = 0.1;
  double lr = 5e-4;
  int64_t lr_warmup = 200;
  double grad_clip = 10.0;
  GeoCheckParams geo;
  bool geo_check = true;
  uint64_t seed = 1;
  double sphere_init_radius = 0.5;
  int sphere_init_sign = +1;
  int sphere_init_steps = 500;
  int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  int64_t log_every = 10;
  int holdout_stride = 0;  // every k-th view excluded from training, 0: none
  int workers = 0;         // 0: hardware concurrency (NSR_WORKERS overrides)

  void validate() const {
    if (!(phase_one_iters < total_iters))
      throw ValidationError("config: phase_one_iters must be < total_iters");
    if (lambda_color < 0 || lambda_prior < 0 || lambda_eikonal < 0)
      throw ValidationError("config: loss weights must be >= 0");
    if (rays_per_batch < 1 || sampling.n_coarse < 1)
      throw ValidationError("config: rays_per_batch and samples per ray must be >= 1");
    if (!(sphere_init_radius > 0.0 && sphere_init_radius < 1.0))
      throw ValidationError("config: sphere_init_radius must be in (0, 1)");
    if (sphere_init_sign != 1 && sphere_init_sign != -1)
      throw ValidationError("config: sphere_init_sign must be +1 or -1");
  }

  static TrainConfig from_kv(const KeyValueConfig& kv) {
    TrainConfig c;
    c.preset = kv.get_string("preset", "tiny");
    if (c.preset == "full") {
      c.field = FieldConfig::full();
      c.sampling = SampleConfig::full();
      c.rays_per_batch = 512;
      c.phase_one_iters = 60000;
      c.total_iters = 160000;
    } else if (c.preset == "tiny") {
      c.field = FieldConfig::tiny();
      c.sampling = SampleConfig::tiny();
    } else {
      throw ValidationError("config: unknown preset '" + c.preset + "'");
    }
    c.field.pe_position_octaves = static_cast<int>(kv.get_int("pe_position", c.field.pe_position_octaves));
    c.field.pe_direction_octaves = static_cast<int>(kv.get_int("pe_direction", c.field.pe_direction_octaves));
    c.field.s_init = kv.get_double("s_init", c.field.s_init);
    c.sampling.n_coarse = static_cast<int>(kv.get_int("n_coarse", c.sampling.n_coarse));
    c.sampling.n_upsample_rounds =
        static_cast<int>(kv.get_int("n_upsample_rounds", c.sampling.n_upsample_rounds));
    c.rays_per_batch = static_cast<int>(kv.get_int("rays_per_batch", c.rays_per_batch));
    c.phase_one_iters = kv.get_int("phase_one_iters", c.phase_one_iters);
    c.total_iters = kv.get_int("total_iters", c.total_iters);
    c.lambda_color = kv.get_double("lambda_color", c.lambda_color);
    c.lambda_prior = kv.get_double("lambda_prior", c.lambda_prior);
    c.lambda_eikonal = kv.get_double("lambda_eikonal", c.lambda_eikonal);
    c.lr = kv.get_double("lr", c.lr);
    c.lr_warmup = kv.get_int("lr_warmup", c.lr_warmup);
    c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
    c.geo.patch_size = static_cast<int>(kv.get_int("geo_patch_size", c.geo.patch_size));
    c.geo.eps_per_neighbor = kv.get_double("geo_eps", c.geo.eps_per_neighbor);
    c.geo.variance_floor = kv.get_double("geo_variance_floor", c.geo.variance_floor);
    c.geo.neighbor_count = static_cast<int>(kv.get_int("geo_neighbors", c.geo.neighbor_count));
    c.geo_check = kv.get_bool("geo_check", c.geo_check);
    c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int64_t>(c.seed)));
    c.sphere_init_radius = kv.get_double("sphere_init_radius", c.sphere_init_radius);
    c.sphere_init_sign = static_cast<int>(kv.get_int("sphere_init_sign", c.sphere_init_sign));
    c.sphere_init_steps = static_cast<int>(kv.get_int("sphere_init_steps", c.sphere_init_steps));
    c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
    c.log_every = kv.get_int("log_every", c.log_every);
    c.holdout_stride = static_cast<int>(kv.get_int("holdout_stride", c.holdout_stride));
    c.workers = static_cast<int>(kv.get_int("workers", c.workers));
    c.validate();
    return c;
  }

  KeyValueConfig to_kv() const {
    KeyValueConfig kv;
    kv.set("preset", preset);
    kv.set("pe_position", std::to_string(field.pe_position_octaves));
    kv.set("pe_direction", std::to_string(field.pe_direction_octaves));
    kv.set("s_init", std::to_string(field.s_init));
    kv.set("n_coarse", std::to_string(sampling.n_coarse));
    kv.set("n_upsample_rounds", std::to_string(sampling.n_upsample_rounds));
    kv.set("rays_per_batch", std::to_string(rays_per_batch));
    kv.set("phase_one_iters", std::to_string(phase_one_iters));
    kv.set("total_iters", std::to_string(total_iters));
    kv.set("lambda_color", std::to_string(lambda_color));
    kv.set("lambda_prior", std::to_string(lambda_prior));
    kv.set("lambda_eikonal", std::to_string(lambda_eikonal));
    kv.set("lr", std::to_string(lr));
    kv.set("lr_warmup", std::to_string(lr_warmup));
    kv.set("grad_clip", std::to_string(grad_clip));
    kv.set("geo_patch_size", std::to_string(geo.patch_size));
    kv.set("geo_eps", std::to_string(geo.eps_per_neighbor));
    kv.set("geo_variance_floor", std::to_string(geo.variance_floor));
    kv.set("geo_neighbors", std::to_string(geo.neighbor_count));
    kv.set("geo_check", geo_check ? "1" : "0");
    kv.set("seed", std::to_string(seed));
    kv.set("sphere_init_radius", std::to_string(sphere_init_radius));
    kv.set("sphere_init_sign", std::to_string(sphere_init_sign));
    kv.set("sphere_init_steps", std::to_string(sphere_init_steps));
    kv.set("checkpoint_every", std::to_string(checkpoint_every));
    kv.set("log_every", std::to_string(log_every));
    kv.set("holdout_stride", std::to_string(holdout_stride));
    kv.set("workers", std::to_string(workers));
    return kv;
  }
};

inline bool is_holdout_view(int view_index, int stride) {
  return stride > 0 && (view_index + 1) % stride == 0;
}

inline int effective_workers(int configured) {
  if (const char* env = std::getenv("NSR_WORKERS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  if (configured > 0) return configured;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  return hw > 0 ? hw : 1;
}

template <typename Real>
struct TrainState {
  NeuralField<Real> field;
  Adam<Real> optimizer;
  PriorMask mask;
  int64_t iteration = 0;
};

struct StepStats {
  int64_t step = 0;
  double total = 0, color = 0, prior = 0, eikonal = 0;
  size_t rejected = 0;
  double sharpness = 0;
};

// Uniform sampling table over all valid pixels of the training views.
struct PixelTable {
  struct Entry {
    int view;
    uint16_t x, y;
  };
  std::vector<Entry> pixels;

  static PixelTable build(const Scene& scene, int holdout_stride) {
    PixelTable t;
    for (int v = 0; v < static_cast<int>(scene.views.size()); ++v) {
      if (is_holdout_view(v, holdout_stride)) continue;
      const CameraView& view = scene.views[v];
      for (int y = 0; y < view.height(); ++y)
        for (int x = 0; x < view.width(); ++x)
          if (view.valid_mask.empty() || view.valid_mask.at(x, y))
            t.pixels.push_back({v, static_cast<uint16_t>(x), static_cast<uint16_t>(y)});
    }
    if (t.pixels.empty()) throw ValidationError("trainer: scene has no valid training pixels");
    return t;
  }
};

namespace detail {

template <typename Real>
struct ChunkOutput {
  typename NeuralField<Real>::Grads grads;
  double color_sum = 0, prior_sum = 0, eikonal_sum = 0;
  struct MaskUpdate {
    int view, x, y, indicator;
  };
  std::vector<MaskUpdate> mask_updates;
};

template <typename Real>
struct RayRecord {
  int view, x, y;
  Ray ray;
  Vec3<Real> ref_color;
  Vec3<Real> prior_normal;
};

}  // namespace detail

// One optimization step: sample m pixels uniformly, render them (chunked
// across workers), in phase two run the geometric check on the detached
// renders and gate the prior loss, then apply a single Adam update. Chunk
// results are reduced in chunk order, so the step is deterministic for a
// given seed regardless of worker count.
template <typename Real>
StepStats train_step(TrainState<Real>& state, const Scene& scene, const PixelTable& table,
                     const std::vector<std::vector<int>>& neighbors, const TrainConfig& cfg,
                     const std::string& diagnostic_dir = "") {
  const int64_t step = state.iteration;
  const int m = cfg.rays_per_batch;
  const int n = cfg.sampling.total_samples();
  const bool phase_two = step >= cfg.phase_one_iters;
  const bool run_check = phase_two && cfg.geo_check && cfg.lambda_prior > 0.0;
  const Real s_value = state.field.sharpness();

  // Draw the batch.
  Rng pix_rng = Rng::stream(cfg.seed, "pixel_sampling", static_cast<uint64_t>(step));
  std::vector<detail::RayRecord<Real>> rays(m);
  for (int k = 0; k < m; ++k) {
    const auto& e = table.pixels[pix_rng.uniform_index(table.pixels.size())];
    const CameraView& view = scene.views[e.view];
    detail::RayRecord<Real>& r = rays[k];
    r.view = e.view;
    r.x = e.x;
    r.y = e.y;
    r.ray = pixel_ray(view, Vec2d(e.x + 0.5, e.y + 0.5));
    r.ref_color = view.image.pixel3(e.x, e.y).template cast<Real>();
    r.prior_normal = view.prior_normals.pixel3(e.x, e.y).template cast<Real>();
  }

  constexpr int kChunk = 64;
  const int n_chunks = (m + kChunk - 1) / kChunk;
  std::vector<detail::ChunkOutput<Real>> outputs(n_chunks);

  auto process_chunk = [&](int ci) {
    detail::ChunkOutput<Real>& out = outputs[ci];
    out.grads.init_like(state.field);
    const int begin = ci * kChunk;
    const int mc = std::min(kChunk, m - begin);

    std::vector<Ray> chunk_rays(mc);
    std::vector<Rng> rngs;
    rngs.reserve(mc);
    for (int r = 0; r < mc; ++r) {
      chunk_rays[r] = rays[begin + r].ray;
      rngs.push_back(Rng::stream(cfg.seed, "ray_sampling",
                                 static_cast<uint64_t>(step) * static_cast<uint64_t>(m) + begin + r));
    }
    MatX<Real> depths = sample_rays_batched(state.field, chunk_rays, cfg.sampling, rngs);

    const Eigen::Index P = static_cast<Eigen::Index>(n) * mc;
    Eigen::Matrix<Real, 3, Eigen::Dynamic> pts(3, P), dirs(3, P);
    for (int r = 0; r < mc; ++r) {
      Vec3<Real> dir = chunk_rays[r].direction.template cast<Real>();
      for (int i = 0; i < n; ++i) {
        pts.col(static_cast<Eigen::Index>(r) * n + i) =
            (chunk_rays[r].origin + double(depths(i, r)) * chunk_rays[r].direction)
                .template cast<Real>();
        dirs.col(static_cast<Eigen::Index>(r) * n + i) = dir;
      }
    }

    typename NeuralField<Real>::Tape tape;
    state.field.forward_train(pts, dirs, tape);

    // Composite per ray.
    Eigen::Matrix<Real, 3, Eigen::Dynamic> rendered_color(3, mc), rendered_ncam(3, mc),
        ref_color(3, mc), prior(3, mc);
    std::vector<VecX<Real>> ray_alphas(mc);
    std::vector<CompositeWeights<Real>> ray_weights(mc);
    VecX<double> omega(mc);
    std::vector<Vec3<Real>> normal_raw_world(mc);

    for (int r = 0; r < mc; ++r) {
      const detail::RayRecord<Real>& rec = rays[begin + r];
      VecX<Real> ray_sdf = tape.sdf.segment(static_cast<Eigen::Index>(r) * n, n);
      ray_alphas[r] = alphas_from_sdf(ray_sdf, s_value);
      ray_weights[r] = compute_weights(ray_alphas[r]);
      const Eigen::Index n_sec = ray_alphas[r].size();
      const auto cols = [&](const auto& mat) { return mat.middleCols(static_cast<Eigen::Index>(r) * n, n_sec); };
      rendered_color.col(r) = composite(ray_weights[r].weights, cols(tape.color));
      normal_raw_world[r] = composite(ray_weights[r].weights, cols(tape.grad));
      const Mat3d& R = scene.views[rec.view].R;
      rendered_ncam.col(r) = (R.cast<Real>() * normal_raw_world[r]);
      ref_color.col(r) = rec.ref_color;
      prior.col(r) = rec.prior_normal;

      double om = 1.0;
      if (run_check) {
        if (state.mask.state(rec.view, rec.x, rec.y) == PriorState::Rejected) {
          om = 0.0;
        } else {
          Real d_hat = ray_weights[r].weights.dot(depths.col(r).head(n_sec));
          IndicatorDetail det = evaluate_indicator(
              scene, rec.view, rec.x, rec.y, normal_raw_world[r].template cast<double>(),
              static_cast<double>(d_hat), neighbors[rec.view], cfg.geo);
          if (det.result == Indicator::Accept) {
            om = 1.0;
            out.mask_updates.push_back({rec.view, rec.x, rec.y, 1});
          } else if (det.result == Indicator::Reject) {
            om = 0.0;
            out.mask_updates.push_back({rec.view, rec.x, rec.y, 0});
          }  // untestable: keep the prior, no state change
        }
      }
      omega[r] = om;
    }

    out.color_sum = loss_color(rendered_color, ref_color) * mc;
    out.prior_sum = loss_prior(rendered_ncam, prior, omega) * mc;
    out.eikonal_sum = loss_eikonal(tape.grad) * static_cast<double>(P);

    // Adjoint seeds.
    VecX<Real> sdf_bar = VecX<Real>::Zero(P);
    Eigen::Matrix<Real, 3, Eigen::Dynamic> grad_bar(3, P), color_bar(3, P);
    grad_bar.setZero();
    color_bar.setZero();
    Real s_bar = 0;

    const Real k_eik = Real(cfg.lambda_eikonal) / (Real(n) * Real(m));
    if (cfg.lambda_eikonal > 0.0) {
      for (Eigen::Index p = 0; p < P; ++p) {
        Real gn = tape.grad.col(p).norm();
        if (gn > Real(1e-12)) grad_bar.col(p) += k_eik * Real(2) * (gn - Real(1)) * tape.grad.col(p) / gn;
      }
    }

    auto sign3 = [](const Vec3<Real>& v) {
      return Vec3<Real>(v.x() > 0 ? Real(1) : (v.x() < 0 ? Real(-1) : Real(0)),
                        v.y() > 0 ? Real(1) : (v.y() < 0 ? Real(-1) : Real(0)),
                        v.z() > 0 ? Real(1) : (v.z() < 0 ? Real(-1) : Real(0)));
    };

    for (int r = 0; r < mc; ++r) {
      const detail::RayRecord<Real>& rec = rays[begin + r];
      const Eigen::Index base_col = static_cast<Eigen::Index>(r) * n;
      const Eigen::Index n_sec = ray_alphas[r].size();

      Vec3<Real> c_bar = Real(cfg.lambda_color / m) *
                         sign3(Vec3<Real>(rendered_color.col(r) - ref_color.col(r)));
      Vec3<Real> n_bar = Vec3<Real>::Zero();
      if (cfg.lambda_prior > 0.0 && omega[r] > 0.0) {
        const Mat3d& R = scene.views[rec.view].R;
        Vec3<Real> diff_sign = sign3(Vec3<Real>(prior.col(r) - rendered_ncam.col(r)));
        n_bar = -Real(cfg.lambda_prior * omega[r] / m) * (R.cast<Real>().transpose() * diff_sign);
      }

      VecX<Real> w_bar(n_sec);
      for (Eigen::Index i = 0; i < n_sec; ++i) {
        w_bar[i] = c_bar.dot(tape.color.col(base_col + i)) + n_bar.dot(tape.grad.col(base_col + i));
        color_bar.col(base_col + i) += ray_weights[r].weights[i] * c_bar;
        grad_bar.col(base_col + i) += ray_weights[r].weights[i] * n_bar;
      }
      VecX<Real> alpha_bar = weights_backward(ray_alphas[r], ray_weights[r], w_bar);
      VecX<Real> ray_sdf = tape.sdf.segment(base_col, n);
      VecX<Real> ray_sdf_bar = VecX<Real>::Zero(n);
      alphas_backward(ray_sdf, s_value, alpha_bar, ray_sdf_bar, s_bar);
      sdf_bar.segment(base_col, n) += ray_sdf_bar;
    }

    state.field.backward_train(tape, sdf_bar, grad_bar, color_bar, out.grads);
    out.grads.s_log += s_bar * s_value;  // s = exp(u)
  };

  const int workers = std::min(effective_workers(cfg.workers), n_chunks);
  if (workers <= 1) {
    for (int ci = 0; ci < n_chunks; ++ci) process_chunk(ci);
  } else {
    std::atomic<int> next(0);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (int ci = next.fetch_add(1); ci < n_chunks; ci = next.fetch_add(1)) process_chunk(ci);
      });
    for (auto& th : pool) th.join();
  }

  // Deterministic reduction in chunk order.
  StepStats stats;
  stats.step = step;
  typename NeuralField<Real>::Grads total_grads;
  total_grads.init_like(state.field);
  double color_sum = 0, prior_sum = 0, eik_sum = 0;
  for (int ci = 0; ci < n_chunks; ++ci) {
    total_grads.add(outputs[ci].grads);
    color_sum += outputs[ci].color_sum;
    prior_sum += outputs[ci].prior_sum;
    eik_sum += outputs[ci].eikonal_sum;
  }
  stats.color = color_sum / m;
  stats.prior = prior_sum / m;
  stats.eikonal = eik_sum / (static_cast<double>(n) * m);
  stats.total = cfg.lambda_color * stats.color + cfg.lambda_prior * stats.prior +
                cfg.lambda_eikonal * stats.eikonal;

  if (!std::isfinite(stats.total)) {
    if (!diagnostic_dir.empty()) {
      std::ofstream dump(diagnostic_dir + "/diverged_step_" + std::to_string(step) + ".txt");
      dump << "step " << step << " L " << stats.total << " L_c " << stats.color << " L_p "
           << stats.prior << " L_eik " << stats.eikonal << " s " << s_value << "\n";
      for (const auto& r : rays) dump << r.view << " " << r.x << " " << r.y << "\n";
    }
    throw RuntimeError("trainer: non-finite loss at step " + std::to_string(step));
  }

  VecX<Real> params, grad;
  state.field.flatten_params(params);
  state.field.flatten_grads(total_grads, grad);
  if (cfg.grad_clip > 0.0) {
    double gn = grad.template cast<double>().norm();
    if (gn > cfg.grad_clip) grad *= Real(cfg.grad_clip / gn);
  }
  Real lr = lr_schedule(Real(cfg.lr), step, cfg.lr_warmup, cfg.total_iters);
  state.optimizer.update(params, grad, lr);
  state.field.set_params(params);

  for (int ci = 0; ci < n_chunks; ++ci)
    for (const auto& u : outputs[ci].mask_updates) state.mask.update(u.view, u.x, u.y, u.indicator);

  stats.rejected = state.mask.count(PriorState::Rejected);
  stats.sharpness = static_cast<double>(state.field.sharpness());
  ++state.iteration;
  return stats;
}

// ---- checkpoints (field + optimizer + prior mask + iteration + transform) ----

template <typename Real>
void save_checkpoint(const std::string& path, const TrainState<Real>& state,
                     const SimilarityTransform& to_normalized, const std::string& config_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint: " + path);
  out.write("NSRCKPT1", 8);
  int64_t iter = state.iteration;
  out.write(reinterpret_cast<const char*>(&iter), sizeof(iter));
  double xf[4] = {to_normalized.scale, to_normalized.translation.x(), to_normalized.translation.y(),
                  to_normalized.translation.z()};
  out.write(reinterpret_cast<const char*>(xf), sizeof(xf));
  uint64_t cfg_len = config_text.size();
  out.write(reinterpret_cast<const char*>(&cfg_len), sizeof(cfg_len));
  out.write(config_text.data(), static_cast<std::streamsize>(cfg_len));
  state.field.save(out);
  uint64_t n = static_cast<uint64_t>(state.optimizer.m.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(state.optimizer.m.data()), sizeof(Real) * n);
  out.write(reinterpret_cast<const char*>(state.optimizer.v.data()), sizeof(Real) * n);
  int64_t adam_step = state.optimizer.step;
  out.write(reinterpret_cast<const char*>(&adam_step), sizeof(adam_step));
  state.mask.save(out);
  if (!out) throw RuntimeError("short write: " + path);
}

template <typename Real>
struct LoadedCheckpoint {
  TrainState<Real> state;
  SimilarityTransform to_normalized;
  std::string config_text;
};

template <typename Real>
LoadedCheckpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "NSRCKPT1", 8) != 0)
    throw ValidationError("checkpoint: bad magic in " + path);
  LoadedCheckpoint<Real> out;
  int64_t iter = 0;
  in.read(reinterpret_cast<char*>(&iter), sizeof(iter));
  double xf[4];
  in.read(reinterpret_cast<char*>(xf), sizeof(xf));
  out.to_normalized.scale = xf[0];
  out.to_normalized.translation = Vec3d(xf[1], xf[2], xf[3]);
  uint64_t cfg_len = 0;
  in.read(reinterpret_cast<char*>(&cfg_len), sizeof(cfg_len));
  if (!in || cfg_len > (1u << 24)) throw ValidationError("checkpoint: corrupt header in " + path);
  out.config_text.resize(cfg_len);
  in.read(out.config_text.data(), static_cast<std::streamsize>(cfg_len));
  out.state.field = NeuralField<Real>::load(in);
  out.state.iteration = iter;
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != out.state.field.param_count())
    throw ValidationError("checkpoint: optimizer state size mismatch in " + path);
  out.state.optimizer.m.resize(static_cast<Eigen::Index>(n));
  out.state.optimizer.v.resize(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(out.state.optimizer.m.data()), sizeof(Real) * n);
  in.read(reinterpret_cast<char*>(out.state.optimizer.v.data()), sizeof(Real) * n);
  int64_t adam_step = 0;
  in.read(reinterpret_cast<char*>(&adam_step), sizeof(adam_step));
  out.state.optimizer.step = adam_step;
  out.state.mask = PriorMask::load(in);
  if (!in) throw ValidationError("checkpoint: truncated file " + path);
  return out;
}

template <typename Real>
struct TrainResult {
  TrainState<Real> state;
  SimilarityTransform to_normalized;
  std::string final_checkpoint;
};

// Full training run. The scene is taken by value and normalized into the
// unit sphere; checkpoints and the scalar CSV log land in out_dir.
template <typename Real>
TrainResult<Real> train(Scene scene, const TrainConfig& cfg, const std::string& out_dir,
                        std::optional<LoadedCheckpoint<Real>> resume = std::nullopt,
                        const std::function<void(const StepStats&)>& on_step = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  SimilarityTransform xf = normalize_scene(scene);

  TrainState<Real> state;
  if (resume) {
    state = std::move(resume->state);
    xf = resume->to_normalized;
  } else {
    state.field = NeuralField<Real>(cfg.field, cfg.seed);
    state.field.initialize_sphere(Real(cfg.sphere_init_radius), cfg.seed, cfg.sphere_init_sign,
                                  cfg.sphere_init_steps);
    state.mask = PriorMask::for_scene(scene);
  }

  PixelTable table = PixelTable::build(scene, cfg.holdout_stride);
  std::vector<int> holdouts;
  for (int v = 0; v < static_cast<int>(scene.views.size()); ++v)
    if (is_holdout_view(v, cfg.holdout_stride)) holdouts.push_back(v);
  std::vector<std::vector<int>> neighbors(scene.views.size());
  if (scene.views.size() > static_cast<size_t>(cfg.geo.neighbor_count))
    for (int v = 0; v < static_cast<int>(scene.views.size()); ++v) {
      if (is_holdout_view(v, cfg.holdout_stride)) continue;
      neighbors[v] = select_neighbor_views(scene, v, cfg.geo.neighbor_count, &holdouts);
    }

  const std::string cfg_text = cfg.to_kv().to_text();
  const std::string log_path = out_dir + "/log.csv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::out);
  if (!log) throw RuntimeError("cannot write log: " + log_path);
  if (!resume) log << "step,L,L_c,L_p,L_eik,rejected,s\n";

  char row[256];
  while (state.iteration < cfg.total_iters) {
    StepStats stats = train_step(state, scene, table, neighbors, cfg, out_dir);
    if (stats.step % cfg.log_every == 0 || stats.step + 1 == cfg.total_iters) {
      std::snprintf(row, sizeof(row), "%lld,%.9g,%.9g,%.9g,%.9g,%zu,%.9g\n",
                    static_cast<long long>(stats.step), stats.total, stats.color, stats.prior,
                    stats.eikonal, stats.rejected, stats.sharpness);
      log << row;
      log.flush();
    }
    if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 &&
        state.iteration < cfg.total_iters) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%06lld.nsrc",
                    static_cast<long long>(state.iteration));
      save_checkpoint(out_dir + name, state, xf, cfg_text);
    }
    if (on_step) on_step(stats);
  }

  TrainResult<Real> result;
  result.to_normalized = xf;
  result.final_checkpoint = out_dir + "/checkpoint_final.nsrc";
  save_checkpoint(result.final_checkpoint, state, xf, cfg_text);
  result.state = std::move(state);
  return result;
}

}  // namespace nsr
