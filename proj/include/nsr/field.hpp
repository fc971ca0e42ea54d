#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nsr/core.hpp"
#include "nsr/encoding.hpp"
#include "nsr/mlp.hpp"
#include "nsr/optim.hpp"
#include "nsr/rng.hpp"

namespace nsr {

struct FieldConfig {
  int pe_position_octaves = 6;
  int pe_direction_octaves = 4;
  int geom_hidden_layers = 8;
  int geom_width = 256;
  int color_hidden_layers = 6;
  int color_width = 256;
  int feature_dim = 256;
  double softplus_beta = 100.0;
  double s_init = 20.0;  // initial logistic sharpness

  static FieldConfig full() { return FieldConfig{}; }

  static FieldConfig tiny() {
    FieldConfig c;
    c.geom_hidden_layers = 4;
    c.geom_width = 64;
    c.color_hidden_layers = 3;
    c.color_width = 64;
    c.feature_dim = 64;
    return c;
  }

  static FieldConfig preset(const std::string& name) {
    if (name == "full") return full();
    if (name == "tiny") return tiny();
    throw ValidationError("unknown field preset '" + name + "'");
  }

  bool operator==(const FieldConfig&) const = default;
};

// SDF + view-dependent color network in the NeuS arrangement: the geometry
// net maps an encoded position to (sdf, feature); the color net maps
// (position, encoded direction, sdf spatial gradient, feature) to RGB.
// Spatial gradients are exact (forward-mode tangents through the net), and
// the training path backpropagates through both the value and the tangent
// computation, so losses on rendered normals and the Eikonal term reach the
// parameters exactly.
template <typename Real>
class NeuralField {
 public:
  using Scalar = Real;
  using M3X = Eigen::Matrix<Real, 3, Eigen::Dynamic>;

  NeuralField() = default;

  NeuralField(const FieldConfig& cfg, uint64_t seed) : cfg_(cfg) {
    pe_pos_.octaves = cfg.pe_position_octaves;
    pe_dir_.octaves = cfg.pe_direction_octaves;

    std::vector<int> gdims;
    gdims.push_back(pe_pos_.output_dim());
    for (int i = 0; i < cfg.geom_hidden_layers; ++i) gdims.push_back(cfg.geom_width);
    gdims.push_back(1 + cfg.feature_dim);

    std::vector<int> cdims;
    cdims.push_back(3 + pe_dir_.output_dim() + 3 + cfg.feature_dim);
    for (int i = 0; i < cfg.color_hidden_layers; ++i) cdims.push_back(cfg.color_width);
    cdims.push_back(3);

    Rng g = Rng::stream(seed, "field_init_geometry");
    Rng c = Rng::stream(seed, "field_init_color");
    geom_.beta = Real(cfg.softplus_beta);
    geom_.init(gdims, Mlp<Real>::Hidden::Softplus, g, Real(0.5));
    color_.init(cdims, Mlp<Real>::Hidden::Relu, c, Real(0.5));
    s_log_ = std::log(Real(cfg.s_init));
  }

  const FieldConfig& config() const { return cfg_; }
  Real sharpness() const { return std::exp(s_log_); }
  Real sharpness_log() const { return s_log_; }
  void set_sharpness_log(Real v) { s_log_ = v; }

  // ---- inference ----

  void eval_sdf(const M3X& pts, VecX<Real>& out) const {
    MatX<Real> enc;
    pe_pos_.encode(pts, enc);
    MatX<Real> o = geom_.forward(enc);
    out = o.row(0).transpose();
  }

  Real sdf(const Vec3<Real>& x) const {
    M3X p(3, 1);
    p.col(0) = x;
    VecX<Real> v;
    eval_sdf(p, v);
    return v[0];
  }

  Vec3<Real> sdf_gradient(const Vec3<Real>& x) const {
    M3X p(3, 1);
    p.col(0) = x;
    VecX<Real> sdf_v;
    M3X grad;
    MatX<Real> feat;
    forward_geometry(p, sdf_v, grad, feat, nullptr);
    return grad.col(0);
  }

  Vec3<Real> color(const Vec3<Real>& x, const Vec3<Real>& v) const {
    M3X p(3, 1), d(3, 1);
    p.col(0) = x;
    d.col(0) = v;
    VecX<Real> sdf_v;
    M3X grad, col;
    eval_render(p, d, sdf_v, grad, col);
    return col.col(0);
  }

  // Batched inference used by the renderer.
  void eval_render(const M3X& pts, const M3X& dirs, VecX<Real>& sdf_out, M3X& grad_out,
                   M3X& color_out) const {
    MatX<Real> feat;
    forward_geometry(pts, sdf_out, grad_out, feat, nullptr);
    MatX<Real> cin = assemble_color_input(pts, dirs, grad_out, feat);
    MatX<Real> logits = color_.forward(cin);
    color_out = sigmoid(logits);
  }

  // ---- training path ----

  struct Tape {
    M3X pts;
    M3X dirs;
    VecX<Real> sdf;
    M3X grad;
    MatX<Real> feat;       // F x P
    MatX<Real> color;      // 3 x P, after sigmoid
    // geometry internals
    MatX<Real> enc, enc_jac;           // A[0], packed JA[0]
    std::vector<MatX<Real>> Z, A;      // hidden layers, index 0..L-1
    std::vector<MatX<Real>> JZ, JA;    // packed w x 3P
    // color internals
    typename Mlp<Real>::Tape ctape;
    MatX<Real> color_logits;
  };

  // Forward that retains everything needed for the joint backward pass.
  void forward_train(const M3X& pts, const M3X& dirs, Tape& tape) const {
    tape.pts = pts;
    tape.dirs = dirs;
    forward_geometry_tape(pts, tape);
    MatX<Real> cin = assemble_color_input(pts, dirs, tape.grad, tape.feat);
    tape.color_logits = color_.forward_tape(cin, tape.ctape);
    tape.color = sigmoid(tape.color_logits);
  }

  struct Grads {
    typename Mlp<Real>::Grads geom;
    typename Mlp<Real>::Grads color;
    Real s_log = 0;

    void init_like(const NeuralField& f) {
      geom.init_like(f.geom_);
      color.init_like(f.color_);
      s_log = 0;
    }
    void add(const Grads& o) {
      geom.add(o.geom);
      color.add(o.color);
      s_log += o.s_log;
    }
    void clear() {
      geom.clear();
      color.clear();
      s_log = 0;
    }
  };

  // Joint reverse pass. Adjoints: sdf_bar (per point), grad_bar (3 x P),
  // color_bar (3 x P, wrt post-sigmoid color), feat contributions flow
  // internally. s adjoint is accumulated by the renderer into grads.s_log.
  void backward_train(const Tape& tape, const VecX<Real>& sdf_bar, const M3X& grad_bar,
                      const MatX<Real>& color_bar, Grads& grads) const {
    const Eigen::Index P = tape.pts.cols();
    const int F = cfg_.feature_dim;

    // Color net backward: d sigmoid = c (1 - c).
    MatX<Real> logits_bar =
        tape.color.cwiseProduct(MatX<Real>::Ones(3, P) - tape.color).cwiseProduct(color_bar);
    MatX<Real> cin_bar = color_.backward(tape.ctape, std::move(logits_bar), grads.color);

    // Slice the color-input adjoint: [x (3); pe_dir; grad (3); feature (F)].
    const int grad_row = 3 + pe_dir_.output_dim();
    M3X grad_bar_total = grad_bar + M3X(cin_bar.middleRows(grad_row, 3));
    MatX<Real> feat_bar = cin_bar.bottomRows(F);

    backward_geometry(tape, sdf_bar, grad_bar_total, feat_bar, grads);
  }

  // ---- parameter plumbing ----

  size_t param_count() const { return geom_.param_count() + color_.param_count() + 1; }

  void flatten_params(VecX<Real>& out) const {
    out.resize(param_count());
    Eigen::Index at = 0;
    auto put_mlp = [&](const Mlp<Real>& m) {
      for (size_t k = 0; k < m.W.size(); ++k) {
        std::memcpy(out.data() + at, m.W[k].data(), sizeof(Real) * m.W[k].size());
        at += m.W[k].size();
        std::memcpy(out.data() + at, m.b[k].data(), sizeof(Real) * m.b[k].size());
        at += m.b[k].size();
      }
    };
    put_mlp(geom_);
    put_mlp(color_);
    out[at++] = s_log_;
  }

  void set_params(const VecX<Real>& in) {
    if (static_cast<size_t>(in.size()) != param_count())
      throw ValidationError("field: parameter vector size mismatch");
    Eigen::Index at = 0;
    auto take_mlp = [&](Mlp<Real>& m) {
      for (size_t k = 0; k < m.W.size(); ++k) {
        std::memcpy(m.W[k].data(), in.data() + at, sizeof(Real) * m.W[k].size());
        at += m.W[k].size();
        std::memcpy(m.b[k].data(), in.data() + at, sizeof(Real) * m.b[k].size());
        at += m.b[k].size();
      }
    };
    take_mlp(geom_);
    take_mlp(color_);
    s_log_ = in[at++];
  }

  void flatten_grads(const Grads& g, VecX<Real>& out) const {
    out.resize(param_count());
    Eigen::Index at = 0;
    auto put = [&](const typename Mlp<Real>::Grads& mg) {
      for (size_t k = 0; k < mg.W.size(); ++k) {
        std::memcpy(out.data() + at, mg.W[k].data(), sizeof(Real) * mg.W[k].size());
        at += mg.W[k].size();
        std::memcpy(out.data() + at, mg.b[k].data(), sizeof(Real) * mg.b[k].size());
        at += mg.b[k].size();
      }
    };
    put(g.geom);
    put(g.color);
    out[at++] = g.s_log;
  }

  bool params_finite() const {
    for (const auto& w : geom_.W)
      if (!w.allFinite()) return false;
    for (const auto& w : color_.W)
      if (!w.allFinite()) return false;
    return std::isfinite(s_log_);
  }

  // Sphere initialization: geometric weight init so the net starts close to
  // sign*(|x| - radius) with near-unit gradients (raw-coordinate first-layer
  // columns active, encoded-frequency columns zeroed, final sdf row biased to
  // the radius), followed by a short seeded value-fit polish with shell
  // oversampling around the target radius. sign=-1 flips inside/outside
  // (used for room scenes where cameras must start in free space).
  void initialize_sphere(Real radius, uint64_t seed, int sign = +1, int polish_steps = 250) {
    if (!(radius > Real(0) && radius < Real(1)))
      throw ValidationError("initialize_sphere: radius must be in (0, 1)");

    Rng rng = Rng::stream(seed, "sphere_geometric_init");
    const int L = cfg_.geom_hidden_layers;
    for (int k = 0; k < L; ++k) {
      const Real std = std::sqrt(Real(2)) / std::sqrt(Real(geom_.W[k].rows()));
      for (Eigen::Index i = 0; i < geom_.W[k].size(); ++i)
        geom_.W[k].data()[i] = std * Real(rng.normal());
      if (k == 0) geom_.W[k].rightCols(geom_.W[k].cols() - 3).setZero();
      geom_.b[k].setZero();
    }
    const Real mean = Real(sign) * std::sqrt(pi<Real>()) / std::sqrt(Real(geom_.W[L].cols()));
    for (Eigen::Index i = 0; i < geom_.W[L].size(); ++i)
      geom_.W[L].data()[i] = mean + Real(1e-4) * Real(rng.normal());
    geom_.b[L].setZero();
    geom_.b[L][0] = -Real(sign) * radius;

    Adam<Real> opt;
    const int batch = 512;
    for (int it = 0; it < polish_steps; ++it) {
      Rng prng = Rng::stream(seed, "sphere_init", static_cast<uint64_t>(it));
      M3X pts(3, batch);
      for (int i = 0; i < batch; ++i) {
        Vec3<Real> p;
        if (i % 2 == 0) {
          do {
            p = Vec3<Real>(Real(prng.uniform(-1.1, 1.1)), Real(prng.uniform(-1.1, 1.1)),
                           Real(prng.uniform(-1.1, 1.1)));
          } while (p.norm() > Real(1.1));
        } else {
          Vec3<Real> dir(Real(prng.normal()), Real(prng.normal()), Real(prng.normal()));
          Real dn = dir.norm();
          dir = dn > Real(1e-9) ? Vec3<Real>(dir / dn) : Vec3<Real>::UnitZ();
          Real r = radius + Real(0.15) * Real(prng.normal());
          p = std::min(std::max(r, Real(0.01)), Real(1.09)) * dir;
        }
        pts.col(i) = p;
      }
      MatX<Real> enc;
      pe_pos_.encode(pts, enc);
      typename Mlp<Real>::Tape tape;
      MatX<Real> out = geom_.forward_tape(enc, tape);
      MatX<Real> out_bar = MatX<Real>::Zero(out.rows(), out.cols());
      for (int i = 0; i < batch; ++i) {
        Real target = Real(sign) * (pts.col(i).norm() - radius);
        out_bar(0, i) = Real(2) * (out(0, i) - target) / Real(batch);
      }
      typename Mlp<Real>::Grads grads;
      grads.init_like(geom_);
      geom_.backward(tape, std::move(out_bar), grads);

      VecX<Real> flat_p(geom_param_count()), flat_g(geom_param_count());
      flatten_mlp(geom_, flat_p);
      flatten_mlp_grads(grads, flat_g);
      Real lr = lr_schedule(Real(2e-4), it, 20, polish_steps);
      opt.update(flat_p, flat_g, lr);
      unflatten_mlp(geom_, flat_p);
    }
  }

  // ---- checkpoint I/O (bit-exact) ----

  static constexpr uint32_t kFormatVersion = 1;

  void save(std::ostream& out) const {
    out.write("NSRFIELD", 8);
    write_u32(out, kFormatVersion);
    write_u32(out, sizeof(Real));
    int32_t ints[7] = {cfg_.pe_position_octaves, cfg_.pe_direction_octaves, cfg_.geom_hidden_layers,
                       cfg_.geom_width, cfg_.color_hidden_layers, cfg_.color_width, cfg_.feature_dim};
    out.write(reinterpret_cast<const char*>(ints), sizeof(ints));
    double dbl[2] = {cfg_.softplus_beta, cfg_.s_init};
    out.write(reinterpret_cast<const char*>(dbl), sizeof(dbl));
    VecX<Real> flat;
    flatten_params(flat);
    uint64_t n = static_cast<uint64_t>(flat.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(flat.data()), sizeof(Real) * flat.size());
    if (!out) throw RuntimeError("field: short write while saving checkpoint");
  }

  static NeuralField load(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "NSRFIELD", 8) != 0)
      throw ValidationError("field checkpoint: bad magic");
    uint32_t version = read_u32(in);
    if (version != kFormatVersion) throw ValidationError("field checkpoint: unsupported version");
    uint32_t real_size = read_u32(in);
    if (real_size != sizeof(Real)) throw ValidationError("field checkpoint: scalar width mismatch");
    int32_t ints[7];
    in.read(reinterpret_cast<char*>(ints), sizeof(ints));
    double dbl[2];
    in.read(reinterpret_cast<char*>(dbl), sizeof(dbl));
    if (!in) throw ValidationError("field checkpoint: truncated header");
    FieldConfig cfg;
    cfg.pe_position_octaves = ints[0];
    cfg.pe_direction_octaves = ints[1];
    cfg.geom_hidden_layers = ints[2];
    cfg.geom_width = ints[3];
    cfg.color_hidden_layers = ints[4];
    cfg.color_width = ints[5];
    cfg.feature_dim = ints[6];
    cfg.softplus_beta = dbl[0];
    cfg.s_init = dbl[1];
    NeuralField f(cfg, 0);
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != f.param_count()) throw ValidationError("field checkpoint: parameter count mismatch");
    VecX<Real> flat(static_cast<Eigen::Index>(n));
    in.read(reinterpret_cast<char*>(flat.data()), sizeof(Real) * n);
    if (!in) throw ValidationError("field checkpoint: truncated parameters");
    f.set_params(flat);
    if (!f.params_finite()) throw ValidationError("field checkpoint: non-finite parameters");
    return f;
  }

 private:
  static MatX<Real> sigmoid(const MatX<Real>& z) {
    return z.unaryExpr([](Real v) {
      if (v > Real(0)) return Real(1) / (Real(1) + std::exp(-v));
      Real e = std::exp(v);
      return e / (Real(1) + e);
    });
  }

  MatX<Real> assemble_color_input(const M3X& pts, const M3X& dirs, const M3X& grad,
                                  const MatX<Real>& feat) const {
    const Eigen::Index P = pts.cols();
    MatX<Real> denc;
    pe_dir_.encode(dirs, denc);
    MatX<Real> cin(3 + denc.rows() + 3 + feat.rows(), P);
    cin.template topRows<3>() = pts;
    cin.middleRows(3, denc.rows()) = denc;
    cin.middleRows(3 + denc.rows(), 3) = grad;
    cin.bottomRows(feat.rows()) = feat;
    return cin;
  }

  // Dual-number forward through the geometry net: values plus the three
  // input-tangent columns packed as [J_x | J_y | J_z]. If `tape` is null only
  // the outputs are produced.
  void forward_geometry(const M3X& pts, VecX<Real>& sdf_out, M3X& grad_out, MatX<Real>& feat_out,
                        Tape* tape) const {
    const Eigen::Index P = pts.cols();
    MatX<Real> enc, jac;
    pe_pos_.encode_with_jacobian(pts, enc, jac);
    if (tape) {
      tape->enc = enc;
      tape->enc_jac = jac;
      tape->Z.assign(cfg_.geom_hidden_layers, {});
      tape->A.assign(cfg_.geom_hidden_layers, {});
      tape->JZ.assign(cfg_.geom_hidden_layers, {});
      tape->JA.assign(cfg_.geom_hidden_layers, {});
    }
    MatX<Real> a = std::move(enc);
    MatX<Real> ja = std::move(jac);
    for (int k = 0; k < cfg_.geom_hidden_layers; ++k) {
      MatX<Real> z = (geom_.W[k] * a).colwise() + geom_.b[k];
      MatX<Real> jz = geom_.W[k] * ja;
      MatX<Real> s = geom_.sigmoid_beta(z);
      MatX<Real> act = z;
      geom_.softplus_inplace(act);
      MatX<Real> jact(jz.rows(), jz.cols());
      for (int t = 0; t < 3; ++t)
        jact.middleCols(t * P, P) = s.cwiseProduct(jz.middleCols(t * P, P));
      if (tape) {
        tape->Z[k] = z;
        tape->A[k] = act;
        tape->JZ[k] = jz;
        tape->JA[k] = jact;
      }
      a = std::move(act);
      ja = std::move(jact);
    }
    const int L = cfg_.geom_hidden_layers;
    MatX<Real> out = (geom_.W[L] * a).colwise() + geom_.b[L];
    MatX<Real> jout = geom_.W[L].row(0) * ja;  // 1 x 3P
    sdf_out = out.row(0).transpose();
    feat_out = out.bottomRows(cfg_.feature_dim);
    grad_out.resize(3, P);
    for (int t = 0; t < 3; ++t) grad_out.row(t) = jout.middleCols(t * P, P);
    if (tape) {
      tape->sdf = sdf_out;
      tape->grad = grad_out;
      tape->feat = feat_out;
    }
  }

  void forward_geometry_tape(const M3X& pts, Tape& tape) const {
    VecX<Real> sdf_out;
    M3X grad_out;
    MatX<Real> feat_out;
    forward_geometry(pts, sdf_out, grad_out, feat_out, &tape);
  }

  void backward_geometry(const Tape& tape, const VecX<Real>& sdf_bar, const M3X& grad_bar,
                         const MatX<Real>& feat_bar, Grads& grads) const {
    const Eigen::Index P = tape.pts.cols();
    const int L = cfg_.geom_hidden_layers;
    const MatX<Real>& a_last = L > 0 ? tape.A[L - 1] : tape.enc;
    const MatX<Real>& ja_last = L > 0 ? tape.JA[L - 1] : tape.enc_jac;

    // Output layer: rows [sdf; feature], tangent only through the sdf row.
    MatX<Real> zout_bar(1 + cfg_.feature_dim, P);
    zout_bar.row(0) = sdf_bar.transpose();
    zout_bar.bottomRows(cfg_.feature_dim) = feat_bar;
    MatX<Real> gpacked(1, 3 * P);
    for (int t = 0; t < 3; ++t) gpacked.middleCols(t * P, P) = grad_bar.row(t);

    grads.geom.W[L].noalias() += zout_bar * a_last.transpose();
    grads.geom.W[L].row(0).noalias() += gpacked * ja_last.transpose();
    grads.geom.b[L] += zout_bar.rowwise().sum();

    MatX<Real> a_bar = geom_.W[L].transpose() * zout_bar;
    MatX<Real> ja_bar = geom_.W[L].row(0).transpose() * gpacked;  // w x 3P

    for (int k = L - 1; k >= 0; --k) {
      const MatX<Real>& z = tape.Z[k];
      const MatX<Real>& jz = tape.JZ[k];
      MatX<Real> s = geom_.sigmoid_beta(z);
      MatX<Real> sp = Real(geom_.beta) * s.cwiseProduct(MatX<Real>::Ones(s.rows(), s.cols()) - s);

      MatX<Real> mixed = MatX<Real>::Zero(s.rows(), P);
      for (int t = 0; t < 3; ++t)
        mixed += ja_bar.middleCols(t * P, P).cwiseProduct(jz.middleCols(t * P, P));
      MatX<Real> z_bar = s.cwiseProduct(a_bar) + sp.cwiseProduct(mixed);
      MatX<Real> jz_bar(ja_bar.rows(), ja_bar.cols());
      for (int t = 0; t < 3; ++t)
        jz_bar.middleCols(t * P, P) = s.cwiseProduct(ja_bar.middleCols(t * P, P));

      const MatX<Real>& a_prev = k > 0 ? tape.A[k - 1] : tape.enc;
      const MatX<Real>& ja_prev = k > 0 ? tape.JA[k - 1] : tape.enc_jac;
      grads.geom.W[k].noalias() += z_bar * a_prev.transpose();
      grads.geom.W[k].noalias() += jz_bar * ja_prev.transpose();
      grads.geom.b[k] += z_bar.rowwise().sum();

      if (k > 0) {
        a_bar.noalias() = geom_.W[k].transpose() * z_bar;
        ja_bar.noalias() = geom_.W[k].transpose() * jz_bar;
      }
    }
  }

  size_t geom_param_count() const { return geom_.param_count(); }

  static void flatten_mlp(const Mlp<Real>& m, VecX<Real>& out) {
    Eigen::Index at = 0;
    for (size_t k = 0; k < m.W.size(); ++k) {
      std::memcpy(out.data() + at, m.W[k].data(), sizeof(Real) * m.W[k].size());
      at += m.W[k].size();
      std::memcpy(out.data() + at, m.b[k].data(), sizeof(Real) * m.b[k].size());
      at += m.b[k].size();
    }
  }

  static void flatten_mlp_grads(const typename Mlp<Real>::Grads& g, VecX<Real>& out) {
    Eigen::Index at = 0;
    for (size_t k = 0; k < g.W.size(); ++k) {
      std::memcpy(out.data() + at, g.W[k].data(), sizeof(Real) * g.W[k].size());
      at += g.W[k].size();
      std::memcpy(out.data() + at, g.b[k].data(), sizeof(Real) * g.b[k].size());
      at += g.b[k].size();
    }
  }

  static void unflatten_mlp(Mlp<Real>& m, const VecX<Real>& in) {
    Eigen::Index at = 0;
    for (size_t k = 0; k < m.W.size(); ++k) {
      std::memcpy(m.W[k].data(), in.data() + at, sizeof(Real) * m.W[k].size());
      at += m.W[k].size();
      std::memcpy(m.b[k].data(), in.data() + at, sizeof(Real) * m.b[k].size());
      at += m.b[k].size();
    }
  }

  static void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }

  FieldConfig cfg_;
  PositionalEncoding<Real> pe_pos_;
  PositionalEncoding<Real> pe_dir_;
  Mlp<Real> geom_;
  Mlp<Real> color_;
  Real s_log_ = Real(3);
};

}  // namespace nsr
