#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <unordered_map>
#include <vector>

#include "nsr/core.hpp"
#include "nsr/mesh.hpp"

namespace nsr {

// Extracts the zero level set of the field over a regular grid inside
// [lo, hi], then maps vertices back to original scene units with the inverse
// of `to_normalized`. Each cell is split into six tetrahedra and crossings
// are linearly interpolated along edges, so extracted vertices satisfy
// |sdf| < cell size. Returns an empty mesh when the field never changes sign.
// Grid planes are evaluated by parallel workers in bounded batches; assembly
// is single-threaded and planes are freed once their slab is done.
template <class Field>
TriMesh extract_mesh(const Field& field, int resolution, const Vec3d& lo, const Vec3d& hi,
                     const SimilarityTransform& to_normalized = {}, int workers = 0) {
  using Real = typename Field::Scalar;
  if (resolution < 16) throw ValidationError("extract_mesh: resolution must be >= 16");
  if (resolution > 1024)
    throw ValidationError("extract_mesh: resolution > 1024 would exhaust memory; "
                          "evaluate in chunks at a lower resolution instead");
  if (!((hi.array() > lo.array()).all())) throw ValidationError("extract_mesh: empty bounds");
  if (lo.norm() > 2.0 || hi.norm() > 2.0)
    throw ValidationError("extract_mesh: bounds leave the normalized scene domain");

  const int n = resolution + 1;
  const Vec3d cell = (hi - lo) / resolution;
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, 16));

  auto eval_plane = [&](int iz, VecX<Real>& out) {
    Eigen::Matrix<Real, 3, Eigen::Dynamic> pts(3, static_cast<Eigen::Index>(n) * n);
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix)
        pts.col(static_cast<Eigen::Index>(iy) * n + ix) =
            Vec3d(lo.x() + ix * cell.x(), lo.y() + iy * cell.y(), lo.z() + iz * cell.z())
                .template cast<Real>();
    field.eval_sdf(pts, out);
  };

  TriMesh mesh;
  std::unordered_map<uint64_t, int> edge_vertices;
  auto corner_id = [n](int ix, int iy, int iz) {
    return static_cast<uint64_t>(ix) + static_cast<uint64_t>(n) * (iy + static_cast<uint64_t>(n) * iz);
  };
  auto edge_key = [](uint64_t a, uint64_t b) {
    if (a > b) std::swap(a, b);
    return (a << 32) | b;  // corner ids fit 32 bits for resolution <= 1024
  };

  struct Corner {
    uint64_t id;
    Vec3d pos;
    double value;
  };
  auto edge_point = [&](const Corner& a, const Corner& b) {
    uint64_t key = edge_key(a.id, b.id);
    auto it = edge_vertices.find(key);
    if (it != edge_vertices.end()) return it->second;
    double t = a.value / (a.value - b.value);
    t = std::clamp(t, 0.0, 1.0);
    int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(a.pos + t * (b.pos - a.pos));
    edge_vertices.emplace(key, idx);
    return idx;
  };

  // Six-tetrahedron split of the hexahedron (0..3 bottom ring, 4..7 top ring).
  static const int kTets[6][4] = {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6},
                                  {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}};
  auto polygonize_tet = [&](const Corner c[4]) {
    bool inside[4];
    int n_in = 0;
    for (int i = 0; i < 4; ++i) {
      inside[i] = c[i].value < 0.0;
      n_in += inside[i];
    }
    if (n_in == 0 || n_in == 4) return;
    int in_idx[4], out_idx[4], ni = 0, no = 0;
    for (int i = 0; i < 4; ++i) (inside[i] ? in_idx[ni++] : out_idx[no++]) = i;
    if (n_in == 1) {
      mesh.faces.push_back({edge_point(c[in_idx[0]], c[out_idx[0]]),
                            edge_point(c[in_idx[0]], c[out_idx[1]]),
                            edge_point(c[in_idx[0]], c[out_idx[2]])});
    } else if (n_in == 3) {
      mesh.faces.push_back({edge_point(c[in_idx[0]], c[out_idx[0]]),
                            edge_point(c[in_idx[1]], c[out_idx[0]]),
                            edge_point(c[in_idx[2]], c[out_idx[0]])});
    } else {
      int a = edge_point(c[in_idx[0]], c[out_idx[0]]);
      int b = edge_point(c[in_idx[0]], c[out_idx[1]]);
      int d = edge_point(c[in_idx[1]], c[out_idx[0]]);
      int e = edge_point(c[in_idx[1]], c[out_idx[1]]);
      mesh.faces.push_back({a, b, d});
      mesh.faces.push_back({b, e, d});
    }
  };

  auto assemble_slab = [&](int iz, const VecX<Real>& bottom, const VecX<Real>& top) {
    auto value_at = [&](int cx, int cy, int cz) {
      const VecX<Real>& plane = (cz == iz) ? bottom : top;
      return static_cast<double>(plane[static_cast<Eigen::Index>(cy) * n + cx]);
    };
    for (int iy = 0; iy + 1 < n; ++iy)
      for (int ix = 0; ix + 1 < n; ++ix) {
        Corner corners[8];
        int k = 0;
        bool any_neg = false, any_pos = false;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++k) {
              int cx = ix + dx, cy = iy + dy, cz = iz + dz;
              double v = value_at(cx, cy, cz);
              corners[k] = {corner_id(cx, cy, cz),
                            Vec3d(lo.x() + cx * cell.x(), lo.y() + cy * cell.y(),
                                  lo.z() + cz * cell.z()),
                            v};
              (v < 0 ? any_neg : any_pos) = true;
            }
        if (!any_neg || !any_pos) continue;
        const Corner hex[8] = {corners[0], corners[1], corners[3], corners[2],
                               corners[4], corners[5], corners[7], corners[6]};
        for (const auto& tet : kTets) {
          const Corner tc[4] = {hex[tet[0]], hex[tet[1]], hex[tet[2]], hex[tet[3]]};
          polygonize_tet(tc);
        }
      }
  };

  const int group = std::max(2 * workers, 4);
  std::vector<VecX<Real>> planes(n);
  int assembled = 0;  // cubes between planes `assembled` and `assembled + 1` come next
  for (int base = 0; base < n; base += group) {
    const int end = std::min(base + group, n);
    std::atomic<int> next(base);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (int iz = next.fetch_add(1); iz < end; iz = next.fetch_add(1)) eval_plane(iz, planes[iz]);
      });
    for (auto& th : pool) th.join();
    while (assembled + 1 < end) {
      assemble_slab(assembled, planes[assembled], planes[assembled + 1]);
      planes[assembled].resize(0);
      ++assembled;
    }
  }

  SimilarityTransform from_norm = to_normalized.inverse();
  for (auto& v : mesh.vertices) v = from_norm.apply(v);
  mesh.validate();
  return mesh;
}

}  // namespace nsr
