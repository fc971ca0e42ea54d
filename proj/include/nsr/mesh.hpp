#pragma once

#include <array>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nsr/core.hpp"

namespace nsr {

struct TriMesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3d> normals;  // optional, per vertex

  bool empty() const { return faces.empty(); }

  void bounds(Vec3d& lo, Vec3d& hi) const {
    lo = Vec3d::Constant(std::numeric_limits<double>::max());
    hi = Vec3d::Constant(std::numeric_limits<double>::lowest());
    for (const auto& v : vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    if (vertices.empty()) lo = hi = Vec3d::Zero();
  }

  double area() const {
    double a = 0.0;
    for (const auto& f : faces)
      a += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
    return a;
  }

  void validate() const {
    for (const auto& f : faces)
      for (int k = 0; k < 3; ++k)
        if (f[k] < 0 || f[k] >= static_cast<int>(vertices.size()))
          throw ValidationError("mesh face index out of range");
    for (const auto& v : vertices)
      if (!v.allFinite()) throw ValidationError("mesh has non-finite vertices");
  }
};

inline void write_obj(const std::string& path, const TriMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot write mesh: " + path);
  f.precision(9);
  for (const auto& v : mesh.vertices) f << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& n : mesh.normals) f << "vn " << n.x() << " " << n.y() << " " << n.z() << "\n";
  bool with_normals = mesh.normals.size() == mesh.vertices.size();
  for (const auto& face : mesh.faces) {
    if (with_normals)
      f << "f " << face[0] + 1 << "//" << face[0] + 1 << " " << face[1] + 1 << "//" << face[1] + 1
        << " " << face[2] + 1 << "//" << face[2] + 1 << "\n";
    else
      f << "f " << face[0] + 1 << " " << face[1] + 1 << " " << face[2] + 1 << "\n";
  }
  if (!f) throw RuntimeError("short write: " + path);
}

inline TriMesh read_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open mesh: " + path);
  TriMesh mesh;
  std::string line;
  auto face_index = [&](const std::string& tok) {
    // "v", "v/vt", "v//vn", "v/vt/vn"; negative indices count from the end.
    int v = std::stoi(tok.substr(0, tok.find('/')));
    if (v < 0) v = static_cast<int>(mesh.vertices.size()) + v + 1;
    if (v <= 0) throw ValidationError("obj: bad face index in " + path);
    return v - 1;
  };
  while (std::getline(f, line)) {
    std::istringstream in(line);
    std::string tag;
    if (!(in >> tag)) continue;
    if (tag == "v") {
      Vec3d v;
      if (!(in >> v.x() >> v.y() >> v.z())) throw ValidationError("obj: bad vertex in " + path);
      mesh.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3d n;
      if (in >> n.x() >> n.y() >> n.z()) mesh.normals.push_back(n);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (in >> tok) idx.push_back(face_index(tok));
      if (idx.size() < 3) throw ValidationError("obj: face with fewer than 3 vertices in " + path);
      for (size_t k = 2; k < idx.size(); ++k)  // fan-triangulate polygons
        mesh.faces.push_back({idx[0], idx[static_cast<int>(k) - 1], idx[static_cast<int>(k)]});
    }
  }
  mesh.validate();
  return mesh;
}

// Removes faces whose vertices all lie outside the axis-aligned region, then
// drops unreferenced vertices.
inline TriMesh crop_mesh(const TriMesh& mesh, const Vec3d& lo, const Vec3d& hi) {
  auto inside = [&](const Vec3d& p) {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  };
  TriMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  for (const auto& f : mesh.faces) {
    if (!inside(mesh.vertices[f[0]]) && !inside(mesh.vertices[f[1]]) && !inside(mesh.vertices[f[2]]))
      continue;
    std::array<int, 3> nf{};
    for (int k = 0; k < 3; ++k) {
      int& m = remap[f[k]];
      if (m < 0) {
        m = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[f[k]]);
        if (mesh.normals.size() == mesh.vertices.size()) out.normals.push_back(mesh.normals[f[k]]);
      }
      nf[k] = m;
    }
    out.faces.push_back(nf);
  }
  return out;
}

}  // namespace nsr
