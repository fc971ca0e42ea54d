#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "nsr/camera.hpp"
#include "nsr/core.hpp"
#include "nsr/image_io.hpp"
#include "nsr/scene.hpp"

namespace nsr {

// Local 3D plane attached to a pixel of the reference view, in the reference
// camera frame: {p | p.n = d * (v.n)}. v is the unit viewing direction of the
// pixel, d the rendered distance along it, n the rendered normal.
struct PlaneHypothesis {
  Vec3d normal = -Vec3d::UnitZ();
  double distance = 1.0;
  Vec3d view_dir = Vec3d::UnitZ();

  bool degenerate(double tol = 1e-4) const {
    return std::abs(view_dir.dot(normal)) < tol || !(distance > 0.0) || !std::isfinite(distance);
  }
};

// Plane-induced homography mapping homogeneous pixels of view_i to view_j.
// With the relative pose x_j = R_ji x_i + t_ji (R_ji = R_j R_i^T,
// t_ji = t_j - R_ji t_i) and the plane p.n = rho in the reference frame:
//   H = K_j (R_ji + t_ji n^T / rho) K_i^{-1}.
inline Mat3d homography(const CameraView& view_i, const CameraView& view_j,
                        const PlaneHypothesis& hyp) {
  if (hyp.degenerate())
    throw ValidationError("homography: plane is (near) parallel to the viewing ray");
  Mat3d r_ji = view_j.R * view_i.R.transpose();
  Vec3d t_ji = view_j.t - r_ji * view_i.t;
  double rho = hyp.distance * hyp.view_dir.dot(hyp.normal);
  Mat3d mid = r_ji + (t_ji * hyp.normal.transpose()) / rho;
  return view_j.K * mid * view_i.K.inverse();
}

enum class NccStatus { Ok, OutOfBounds, LowVariance };

struct NccResult {
  NccStatus status = NccStatus::OutOfBounds;
  double score = 0.0;
};

struct GeoCheckParams {
  int patch_size = 11;
  double eps_per_neighbor = 0.6;   // indicator threshold per valid neighbor
  double variance_floor = 1e-3;    // minimum patch standard deviation
  int neighbor_count = 2;
};

// Zero-mean NCC between the reference patch around `center` (pixel
// coordinates, +0.5 = pixel center) and its homography warp into view_j,
// on luminance with bilinear sampling. The neighbor is unusable when the
// warped footprint leaves the image or either patch is near constant.
inline NccResult ncc(const CameraView& view_i, const CameraView& view_j, const Vec2d& center,
                     int patch_size, const Mat3d& H, double variance_floor = 1e-3) {
  const int half = patch_size / 2;
  const int n = patch_size * patch_size;
  std::vector<double> ref(n), warped(n);
  const Image& li = view_i.luminance;
  const Image& lj = view_j.luminance;

  int at = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx, ++at) {
      double x = center.x() + dx;
      double y = center.y() + dy;
      if (!li.in_bounds(x - 0.5, y - 0.5)) return {NccStatus::OutOfBounds, 0.0};
      Vec3d q = H * Vec3d(x, y, 1.0);
      if (std::abs(q.z()) < 1e-12) return {NccStatus::OutOfBounds, 0.0};
      double wx = q.x() / q.z();
      double wy = q.y() / q.z();
      if (q.z() < 0.0 || !lj.in_bounds(wx - 0.5, wy - 0.5)) return {NccStatus::OutOfBounds, 0.0};
      ref[at] = li.sample_bilinear(x - 0.5, y - 0.5);
      warped[at] = lj.sample_bilinear(wx - 0.5, wy - 0.5);
    }

  double mean_r = 0.0, mean_w = 0.0;
  for (int i = 0; i < n; ++i) {
    mean_r += ref[i];
    mean_w += warped[i];
  }
  mean_r /= n;
  mean_w /= n;
  double rr = 0.0, ww = 0.0, rw = 0.0;
  for (int i = 0; i < n; ++i) {
    double a = ref[i] - mean_r;
    double b = warped[i] - mean_w;
    rr += a * a;
    ww += b * b;
    rw += a * b;
  }
  if (std::sqrt(rr / n) < variance_floor || std::sqrt(ww / n) < variance_floor)
    return {NccStatus::LowVariance, 0.0};
  double score = rw / std::sqrt(rr * ww);
  return {NccStatus::Ok, std::clamp(score, -1.0, 1.0)};
}

enum class Indicator { Reject = 0, Accept = 1, Untestable = 2 };

struct IndicatorDetail {
  Indicator result = Indicator::Untestable;
  int valid_neighbors = 0;
  std::vector<NccResult> per_neighbor;
};

// Multi-view consistency of the rendered geometry at pixel (px, py) of view_i.
// The rendered world normal and ray distance define the plane hypothesis; the
// NCC scores over the valid neighbors are summed against a threshold that
// scales with the number of valid neighbors. A pixel with no usable neighbor
// is untestable and keeps its prior.
inline IndicatorDetail evaluate_indicator(const Scene& scene, int view_index, int px, int py,
                                          const Vec3d& rendered_normal_world, double rendered_depth,
                                          const std::vector<int>& neighbors,
                                          const GeoCheckParams& params) {
  IndicatorDetail out;
  const CameraView& view = scene.views[view_index];
  Vec2d q(px + 0.5, py + 0.5);

  double nn = rendered_normal_world.norm();
  if (nn < 1e-9 || !std::isfinite(nn) || !std::isfinite(rendered_depth)) {
    out.result = Indicator::Reject;  // nothing coherent was rendered here
    return out;
  }
  PlaneHypothesis hyp;
  hyp.normal = (view.R * rendered_normal_world) / nn;
  hyp.view_dir = view.pixel_direction_camera(q);
  hyp.distance = rendered_depth;
  if (hyp.degenerate()) {
    out.result = Indicator::Reject;
    return out;
  }

  double score_sum = 0.0;
  for (int j : neighbors) {
    Mat3d H = homography(view, scene.views[j], hyp);
    NccResult r = ncc(view, scene.views[j], q, params.patch_size, H, params.variance_floor);
    out.per_neighbor.push_back(r);
    if (r.status == NccStatus::Ok) {
      ++out.valid_neighbors;
      score_sum += r.score;
    }
  }
  if (out.valid_neighbors == 0) {
    out.result = Indicator::Untestable;
    return out;
  }
  out.result = score_sum >= params.eps_per_neighbor * out.valid_neighbors ? Indicator::Accept
                                                                          : Indicator::Reject;
  return out;
}

// Per-view, per-pixel persistent accept/reject state for normal priors.
// Rejection is absorbing: once a prior is judged unfaithful it never
// supervises again.
enum class PriorState : uint8_t { Untested = 0, Accepted = 1, Rejected = 2 };

class PriorMask {
 public:
  PriorMask() = default;

  void init(const std::vector<std::pair<int, int>>& view_sizes) {
    views_.clear();
    for (auto [w, h] : view_sizes) views_.emplace_back(w, h, static_cast<uint8_t>(PriorState::Untested));
  }

  static PriorMask for_scene(const Scene& scene) {
    PriorMask m;
    std::vector<std::pair<int, int>> sizes;
    for (const auto& v : scene.views) sizes.push_back({v.width(), v.height()});
    m.init(sizes);
    return m;
  }

  size_t view_count() const { return views_.size(); }

  PriorState state(int view, int x, int y) const {
    return static_cast<PriorState>(views_[view].at(x, y));
  }

  // indicator 0 rejects (absorbing), indicator 1 accepts unless already
  // rejected. Re-accepting a rejected pixel is a silent no-op by contract.
  void update(int view, int x, int y, int indicator) {
    uint8_t& s = views_[view].at(x, y);
    if (s == static_cast<uint8_t>(PriorState::Rejected)) return;
    s = static_cast<uint8_t>(indicator ? PriorState::Accepted : PriorState::Rejected);
  }

  size_t count(PriorState s) const {
    size_t n = 0;
    for (const auto& v : views_) n += v.count(static_cast<uint8_t>(s));
    return n;
  }

  size_t count_in_view(int view, PriorState s) const {
    return views_[view].count(static_cast<uint8_t>(s));
  }

  const ByteImage& view_states(int view) const { return views_[view]; }

  // Debug image: untested gray, accepted white, rejected black.
  Image to_image(int view) const {
    const ByteImage& b = views_[view];
    Image img(b.width(), b.height(), 3);
    for (int y = 0; y < b.height(); ++y)
      for (int x = 0; x < b.width(); ++x) {
        float v = 0.5f;
        if (b.at(x, y) == static_cast<uint8_t>(PriorState::Accepted)) v = 1.0f;
        if (b.at(x, y) == static_cast<uint8_t>(PriorState::Rejected)) v = 0.0f;
        img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = v;
      }
    return img;
  }

  void save(std::ostream& out) const {
    uint32_t n = static_cast<uint32_t>(views_.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& v : views_) {
      uint32_t wh[2] = {static_cast<uint32_t>(v.width()), static_cast<uint32_t>(v.height())};
      out.write(reinterpret_cast<const char*>(wh), sizeof(wh));
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<size_t>(v.width()) * v.height());
    }
  }

  static PriorMask load(std::istream& in) {
    PriorMask m;
    uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n > 1u << 20) throw ValidationError("prior mask: corrupt header");
    for (uint32_t i = 0; i < n; ++i) {
      uint32_t wh[2];
      in.read(reinterpret_cast<char*>(wh), sizeof(wh));
      if (!in) throw ValidationError("prior mask: truncated");
      ByteImage img(static_cast<int>(wh[0]), static_cast<int>(wh[1]));
      in.read(reinterpret_cast<char*>(img.data()), static_cast<size_t>(wh[0]) * wh[1]);
      if (!in) throw ValidationError("prior mask: truncated");
      m.views_.push_back(std::move(img));
    }
    return m;
  }

 private:
  std::vector<ByteImage> views_;
};

}  // namespace nsr
