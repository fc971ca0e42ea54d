#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nsr/analytic.hpp"
#include "nsr/camera.hpp"
#include "nsr/config.hpp"
#include "nsr/core.hpp"
#include "nsr/image_io.hpp"
#include "nsr/mesh.hpp"

namespace nsr {

namespace fs = std::filesystem;

struct Scene {
  std::vector<CameraView> views;
  Vec3d region_center = Vec3d::Zero();  // region of interest, pre/post normalization
  double region_radius = 1.0;
  std::optional<TriMesh> gt_mesh;
  std::optional<AnalyticField<double>> analytic_sdf;  // synthetic scenes only
  std::vector<ByteImage> labels;                      // per-view primitive ids, synthetic only
  std::vector<Image> gt_normals;                      // exact camera-frame normals, synthetic only
  KeyValueConfig meta;                                // contents of scene.txt, if present

  size_t view_count() const { return views.size(); }
};

namespace detail {

inline std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

// Region of interest for normalization: GT mesh bounds if available, synthetic
// room bounds if recorded, else the camera-center bounding box dilated.
inline void compute_region(Scene& scene) {
  Vec3d lo, hi;
  if (scene.meta.has("region_center_x")) {
    scene.region_center = Vec3d(scene.meta.get_double("region_center_x", 0),
                                scene.meta.get_double("region_center_y", 0),
                                scene.meta.get_double("region_center_z", 0));
    scene.region_radius = scene.meta.get_double("region_radius", 1.0);
    return;
  }
  if (scene.gt_mesh && !scene.gt_mesh->vertices.empty()) {
    scene.gt_mesh->bounds(lo, hi);
    scene.region_center = (lo + hi) / 2.0;
    scene.region_radius = (hi - lo).norm() / 2.0;
    return;
  }
  lo = Vec3d::Constant(std::numeric_limits<double>::max());
  hi = Vec3d::Constant(std::numeric_limits<double>::lowest());
  for (const auto& v : scene.views) {
    lo = lo.cwiseMin(v.center());
    hi = hi.cwiseMax(v.center());
  }
  scene.region_center = (lo + hi) / 2.0;
  // Cameras see well beyond their own hull; dilate.
  scene.region_radius = std::max(1e-6, (hi - lo).norm() / 2.0) * 2.0;
}

}  // namespace detail

// Directory layout: image/NNNNNN.ppm, pose/NNNNNN.txt (4x4 camera-to-world),
// normal/NNNNNN.fmap, optional mask/NNNNNN.fmap and label/NNNNNN.fmap,
// intrinsics.txt shared or intrinsics/NNNNNN.txt per frame, optional
// gt_mesh.obj and scene.txt metadata.
inline Scene load_scene(const std::string& directory) {
  fs::path dir(directory);
  if (!fs::is_directory(dir)) throw ValidationError("scene directory not found: " + directory);
  fs::path image_dir = dir / "image";
  if (!fs::is_directory(image_dir)) throw ValidationError("scene is missing image/ stream: " + directory);

  std::vector<std::string> frames;
  for (const auto& e : fs::directory_iterator(image_dir))
    if (e.path().extension() == ".ppm") frames.push_back(e.path().stem().string());
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw ValidationError("scene has no frames: " + directory);

  Scene scene;
  if (fs::exists(dir / "scene.txt")) scene.meta = KeyValueConfig::load((dir / "scene.txt").string());

  bool shared_intrinsics = fs::exists(dir / "intrinsics.txt");
  Mat3d shared_K = shared_intrinsics ? read_mat3_text((dir / "intrinsics.txt").string()) : Mat3d::Identity();

  for (const std::string& frame : frames) {
    CameraView view;
    fs::path pose_path = dir / "pose" / (frame + ".txt");
    fs::path normal_path = dir / "normal" / (frame + ".fmap");
    if (!fs::exists(pose_path)) throw ValidationError("frame " + frame + ": missing pose file");
    if (!fs::exists(normal_path)) throw ValidationError("frame " + frame + ": missing normal map");

    view.image = read_ppm((image_dir / (frame + ".ppm")).string());
    set_pose_from_camera_to_world(view, read_mat4_text(pose_path.string()));
    view.K = shared_intrinsics ? shared_K : read_mat3_text((dir / "intrinsics" / (frame + ".txt")).string());
    view.prior_normals = read_fmap(normal_path.string());

    fs::path mask_path = dir / "mask" / (frame + ".fmap");
    if (fs::exists(mask_path)) view.valid_mask = read_fmap_bytes(mask_path.string());

    view.validate("frame " + frame);
    view.luminance = view.image.luminance();
    scene.views.push_back(std::move(view));

    fs::path label_path = dir / "label" / (frame + ".fmap");
    if (fs::exists(label_path)) scene.labels.push_back(read_fmap_bytes(label_path.string()));
    fs::path gtn_path = dir / "gt_normal" / (frame + ".fmap");
    if (fs::exists(gtn_path)) scene.gt_normals.push_back(read_fmap(gtn_path.string()));
  }
  if (!scene.labels.empty() && scene.labels.size() != scene.views.size())
    throw ValidationError("scene has label maps for only some frames: " + directory);

  if (fs::exists(dir / "gt_mesh.obj")) scene.gt_mesh = read_obj((dir / "gt_mesh.obj").string());

  detail::compute_region(scene);
  return scene;
}

// Applies a similarity to every world-space quantity of the scene.
inline void apply_similarity(Scene& scene, const SimilarityTransform& xf) {
  for (auto& v : scene.views) {
    Vec3d c = xf.apply(v.center());
    v.t = -v.R * c;
  }
  if (scene.gt_mesh)
    for (auto& p : scene.gt_mesh->vertices) p = xf.apply(p);
  if (scene.analytic_sdf) {
    AnalyticField<double> base = *scene.analytic_sdf;
    double s = xf.scale;
    Vec3d tr = xf.translation;
    scene.analytic_sdf = AnalyticField<double>(
        [=](const Vec3d& x) { return s * base.sdf((x - tr) / s); },
        [=](const Vec3d& x) { return base.gradient((x - tr) / s); },
        [=](const Vec3d& x, const Vec3d& v) { return base.color((x - tr) / s, v); });
  }
  scene.region_center = xf.apply(scene.region_center);
  scene.region_radius *= xf.scale;
}

// Maps the region of interest (and with it all camera centers) into the unit
// sphere, leaving a small margin. Returns the applied transform so meshes can
// be mapped back to original units. Idempotent up to the margin convention.
inline SimilarityTransform normalize_scene(Scene& scene, double margin = 0.05) {
  if (scene.views.size() < 2) throw ValidationError("normalize_scene: need at least 2 views");
  bool all_coincident = true;
  for (const auto& v : scene.views)
    if ((v.center() - scene.views[0].center()).norm() > 1e-12) { all_coincident = false; break; }
  if (all_coincident) throw ValidationError("normalize_scene: all cameras coincident");

  SimilarityTransform xf;
  xf.scale = (1.0 - margin) / std::max(scene.region_radius, 1e-12);
  xf.translation = -xf.scale * scene.region_center;
  apply_similarity(scene, xf);
  return xf;
}

// Neighbor views for multi-view checks: closest camera centers first, ties
// broken by optical-axis angle; candidates with angle >= 45 degrees are used
// only if closer ones run out. `exclude` removes candidates (e.g. held-out
// views) before ranking.
inline std::vector<int> select_neighbor_views(const Scene& scene, int reference, int count,
                                              const std::vector<int>* exclude = nullptr) {
  if (count < 1) throw ValidationError("select_neighbor_views: count must be >= 1");
  if (static_cast<int>(scene.views.size()) <= count)
    throw ValidationError("select_neighbor_views: scene needs more than `count` views");
  if (reference < 0 || reference >= static_cast<int>(scene.views.size()))
    throw ValidationError("select_neighbor_views: reference index out of range");

  const CameraView& ref = scene.views[reference];
  struct Cand { int index; double dist; double angle; };
  std::vector<Cand> cands;
  for (int j = 0; j < static_cast<int>(scene.views.size()); ++j) {
    if (j == reference) continue;
    if (exclude && std::find(exclude->begin(), exclude->end(), j) != exclude->end()) continue;
    const CameraView& v = scene.views[j];
    double dist = (v.center() - ref.center()).norm();
    double cosang = std::clamp(v.optical_axis_world().dot(ref.optical_axis_world()), -1.0, 1.0);
    cands.push_back({j, dist, std::acos(cosang)});
  }
  auto by_dist = [](const Cand& a, const Cand& b) {
    return a.dist != b.dist ? a.dist < b.dist : (a.angle != b.angle ? a.angle < b.angle : a.index < b.index);
  };
  std::sort(cands.begin(), cands.end(), by_dist);

  const double max_angle = deg_to_rad(45.0);
  std::vector<int> picked;
  for (const Cand& c : cands)
    if (c.angle < max_angle && static_cast<int>(picked.size()) < count) picked.push_back(c.index);
  for (const Cand& c : cands) {
    if (static_cast<int>(picked.size()) >= count) break;
    if (std::find(picked.begin(), picked.end(), c.index) == picked.end()) picked.push_back(c.index);
  }
  if (static_cast<int>(picked.size()) < count)
    throw ValidationError("select_neighbor_views: not enough candidate views");
  return picked;
}

}  // namespace nsr
