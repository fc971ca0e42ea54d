#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "nsr/core.hpp"
#include "nsr/image.hpp"
#include "nsr/mesh.hpp"
#include "nsr/rng.hpp"

namespace nsr {

// Closest point on triangle (a, b, c) to p (Ericson, Real-Time Collision
// Detection, 5.1.5).
inline Vec3d closest_point_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b,
                                       const Vec3d& c) {
  Vec3d ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  Vec3d bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  Vec3d cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Median-split AABB tree over triangles for exact point-to-surface distance.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriMesh& mesh) : mesh_(&mesh) {
    const size_t nf = mesh.faces.size();
    if (nf == 0) return;
    order_.resize(nf);
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.resize(nf);
    for (size_t i = 0; i < nf; ++i) {
      const auto& f = mesh.faces[i];
      centroids_[i] = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    }
    nodes_.reserve(2 * nf / kLeafSize + 2);
    build(0, nf);
  }

  // Unsigned distance from p to the surface.
  double distance(const Vec3d& p) const {
    if (nodes_.empty()) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    query(0, p, best);
    return std::sqrt(best);
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    Vec3d lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range in order_
  };

  int build(size_t begin, size_t end) {
    Node node;
    node.lo = Vec3d::Constant(std::numeric_limits<double>::max());
    node.hi = Vec3d::Constant(std::numeric_limits<double>::lowest());
    for (size_t i = begin; i < end; ++i) {
      const auto& f = mesh_->faces[order_[i]];
      for (int k = 0; k < 3; ++k) {
        node.lo = node.lo.cwiseMin(mesh_->vertices[f[k]]);
        node.hi = node.hi.cwiseMax(mesh_->vertices[f[k]]);
      }
    }
    int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes_[index].begin = static_cast<int>(begin);
      nodes_[index].end = static_cast<int>(end);
      return index;
    }
    Vec3d extent = node.hi - node.lo;
    int axis;
    extent.maxCoeff(&axis);
    size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](size_t a, size_t b) { return centroids_[a][axis] < centroids_[b][axis]; });
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  double box_dist2(const Node& n, const Vec3d& p) const {
    Vec3d d = (n.lo - p).cwiseMax(0.0).cwiseMax(p - n.hi);
    return d.squaredNorm();
  }

  void query(int node_index, const Vec3d& p, double& best) const {
    const Node& node = nodes_[node_index];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& f = mesh_->faces[order_[i]];
        Vec3d q = closest_point_on_triangle(p, mesh_->vertices[f[0]], mesh_->vertices[f[1]],
                                            mesh_->vertices[f[2]]);
        best = std::min(best, (q - p).squaredNorm());
      }
      return;
    }
    double dl = box_dist2(nodes_[node.left], p);
    double dr = box_dist2(nodes_[node.right], p);
    int first = dl <= dr ? node.left : node.right;
    int second = dl <= dr ? node.right : node.left;
    if (std::min(dl, dr) < best) query(first, p, best);
    if (std::max(dl, dr) < best) query(second, p, best);
  }

  const TriMesh* mesh_;
  std::vector<size_t> order_;
  std::vector<Vec3d> centroids_;
  std::vector<Node> nodes_;
};

inline uint64_t mesh_content_hash(const TriMesh& mesh) {
  uint64_t h = 0x9e3779b97f4a7c15ull;
  auto mix = [&h](const void* data, size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) h = (h ^ p[i]) * 0x100000001b3ull;
  };
  for (const auto& v : mesh.vertices) mix(v.data(), sizeof(double) * 3);
  for (const auto& f : mesh.faces) mix(f.data(), sizeof(int) * 3);
  return h;
}

// Area-uniform surface samples. The stream is derived from the mesh content,
// so the same mesh yields the same samples whichever argument slot it sits in.
inline std::vector<Vec3d> sample_mesh_surface(const TriMesh& mesh, int n_samples, uint64_t seed) {
  std::vector<Vec3d> out;
  if (mesh.faces.empty() || n_samples <= 0) return out;
  std::vector<double> cum(mesh.faces.size());
  double total = 0.0;
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    total += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                       .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]])
                       .norm();
    cum[i] = total;
  }
  if (total <= 0.0) return out;
  Rng rng = Rng::stream(Rng::hash_combine(seed, mesh_content_hash(mesh)), "mesh_samples");
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    double pick = rng.uniform() * total;
    size_t idx = std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
    idx = std::min(idx, mesh.faces.size() - 1);
    const auto& f = mesh.faces[idx];
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    double u = 1.0 - r1, v = r1 * (1.0 - r2), w = r1 * r2;
    out.push_back(u * mesh.vertices[f[0]] + v * mesh.vertices[f[1]] + w * mesh.vertices[f[2]]);
  }
  return out;
}

// 3D geometry metrics in the NeuralRecon style: mean pred->gt / gt->pred
// distances and precision/recall/F-score at threshold tau.
struct GeometryReport {
  double accu = std::numeric_limits<double>::infinity();
  double comp = std::numeric_limits<double>::infinity();
  double prec = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  double tau = 0.05;
  int n_samples = 0;

  static double fscore_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }
};

inline GeometryReport eval_mesh(const TriMesh& pred, const TriMesh& gt, double tau, int n_samples,
                                uint64_t seed) {
  GeometryReport report;
  report.tau = tau;
  report.n_samples = n_samples;
  if (pred.empty() || gt.empty()) return report;  // degenerate: inf distances, zero scores

  TriangleBvh pred_tree(pred);
  TriangleBvh gt_tree(gt);
  std::vector<Vec3d> pred_pts = sample_mesh_surface(pred, n_samples, seed);
  std::vector<Vec3d> gt_pts = sample_mesh_surface(gt, n_samples, seed);
  if (pred_pts.empty() || gt_pts.empty()) return report;

  double accu = 0.0, comp = 0.0;
  int prec_hits = 0, recall_hits = 0;
  for (const Vec3d& p : pred_pts) {
    double d = gt_tree.distance(p);
    accu += d;
    prec_hits += d < tau;
  }
  for (const Vec3d& p : gt_pts) {
    double d = pred_tree.distance(p);
    comp += d;
    recall_hits += d < tau;
  }
  report.accu = accu / pred_pts.size();
  report.comp = comp / gt_pts.size();
  report.prec = static_cast<double>(prec_hits) / pred_pts.size();
  report.recall = static_cast<double>(recall_hits) / gt_pts.size();
  report.fscore = GeometryReport::fscore_of(report.prec, report.recall);
  return report;
}

// Angular normal metrics over valid pixels, in degrees.
struct NormalReport {
  double mean = 0.0;
  double median = 0.0;
  double rmse = 0.0;
  double pct_1125 = 0.0;
  double pct_225 = 0.0;
  double pct_30 = 0.0;
  size_t n_pixels = 0;
};

inline NormalReport eval_normals(const std::vector<Image>& pred,
                                 const std::vector<Image>& gt,
                                 const std::vector<ByteImage>& valid) {
  if (pred.size() != gt.size() || (!valid.empty() && valid.size() != pred.size()))
    throw ValidationError("eval_normals: mismatched map counts");
  std::vector<double> angles;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].width() != gt[i].width() || pred[i].height() != gt[i].height())
      throw ValidationError("eval_normals: map resolution mismatch");
    for (int y = 0; y < pred[i].height(); ++y)
      for (int x = 0; x < pred[i].width(); ++x) {
        if (!valid.empty() && valid[i].at(x, y) == 0) continue;
        Vec3d a = pred[i].pixel3(x, y).cast<double>();
        Vec3d b = gt[i].pixel3(x, y).cast<double>();
        double na = a.norm(), nb = b.norm();
        if (na < 1e-9 || nb < 1e-9) continue;
        double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
        angles.push_back(rad_to_deg(std::acos(c)));
      }
  }
  if (angles.empty()) throw ValidationError("eval_normals: no valid pixels");
  NormalReport r;
  r.n_pixels = angles.size();
  double sum = 0.0, sq = 0.0;
  size_t c1 = 0, c2 = 0, c3 = 0;
  for (double a : angles) {
    sum += a;
    sq += a * a;
    c1 += a < 11.25;
    c2 += a < 22.5;
    c3 += a < 30.0;
  }
  r.mean = sum / angles.size();
  r.rmse = std::sqrt(sq / angles.size());
  std::vector<double> sorted = angles;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  r.median = sorted[sorted.size() / 2];
  r.pct_1125 = 100.0 * c1 / angles.size();
  r.pct_225 = 100.0 * c2 / angles.size();
  r.pct_30 = 100.0 * c3 / angles.size();
  return r;
}

// 10 log10(1 / MSE) for images in [0,1]; +inf for identical images.
inline double psnr(const Image& rendered, const Image& reference) {
  if (rendered.width() != reference.width() || rendered.height() != reference.height() ||
      rendered.channels() != reference.channels())
    throw ValidationError("psnr: image shape mismatch");
  double mse = 0.0;
  const size_t n = rendered.size();
  for (size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(rendered.data()[i]) - reference.data()[i];
    mse += d * d;
  }
  mse /= n;
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// --- report output; column names follow the usual evaluation tables ---

inline void write_geometry_report_csv(const std::string& path, const GeometryReport& r) {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot write report: " + path);
  f << "Accu.,Comp.,Prec.,Recall,F-score,tau,n_samples\n";
  f << r.accu << "," << r.comp << "," << r.prec << "," << r.recall << "," << r.fscore << ","
    << r.tau << "," << r.n_samples << "\n";
}

inline void write_normal_report_csv(const std::string& path, const NormalReport& r) {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot write report: " + path);
  f << "Mean,Median,RMSE,11.25°,22.5°,30°,n_pixels\n";
  f << r.mean << "," << r.median << "," << r.rmse << "," << r.pct_1125 << "," << r.pct_225 << ","
    << r.pct_30 << "," << r.n_pixels << "\n";
}

inline std::string format_geometry_report(const GeometryReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "Accu. %.4f  Comp. %.4f  Prec. %.4f  Recall %.4f  F-score %.4f  (tau=%.4g, n=%d)",
                r.accu, r.comp, r.prec, r.recall, r.fscore, r.tau, r.n_samples);
  return buf;
}

inline std::string format_normal_report(const NormalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "Mean %.2f  Median %.2f  RMSE %.2f  11.25° %.1f  22.5° %.1f  30° %.1f  (n=%zu)",
                r.mean, r.median, r.rmse, r.pct_1125, r.pct_225, r.pct_30, r.n_pixels);
  return buf;
}

}  // namespace nsr
