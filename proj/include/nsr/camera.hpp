#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "nsr/core.hpp"
#include "nsr/image.hpp"

namespace nsr {

// Ray through the scene, o + d * v with d in (near, far). v is unit length.
struct Ray {
  Vec3d origin = Vec3d::Zero();
  Vec3d direction = Vec3d::UnitZ();
  double near = 0.0;
  double far = 1.0;

  Vec3d point_at(double d) const { return origin + d * direction; }
};

// One posed input image: pinhole intrinsics K, world-to-camera rotation R and
// translation t (x_cam = R * x_world + t), the RGB image, the per-pixel
// normal-prior map (camera frame, unit vectors) and a validity mask.
// Camera frame: x right, y down, z forward; visible surface normals point
// toward the camera, so their z component is negative.
struct CameraView {
  Mat3d K = Mat3d::Identity();
  Mat3d R = Mat3d::Identity();
  Vec3d t = Vec3d::Zero();
  Image image;
  Image prior_normals;
  ByteImage valid_mask;
  Image luminance;  // cached single-channel image for photometric checks

  int width() const { return image.width(); }
  int height() const { return image.height(); }

  Vec3d center() const { return -R.transpose() * t; }
  Vec3d optical_axis_world() const { return R.row(2).transpose(); }

  Vec3d world_to_camera(const Vec3d& xw) const { return R * xw + t; }
  Vec3d camera_to_world(const Vec3d& xc) const { return R.transpose() * (xc - t); }

  // Continuous pixel coordinates; the center of pixel (ix, iy) is
  // (ix + 0.5, iy + 0.5). Returns nullopt behind the camera.
  std::optional<Vec2d> project(const Vec3d& xw) const {
    Vec3d xc = world_to_camera(xw);
    if (xc.z() <= 0.0) return std::nullopt;
    Vec3d uvw = K * xc;
    return Vec2d(uvw.x() / uvw.z(), uvw.y() / uvw.z());
  }

  // Unit view direction through continuous pixel q, in the camera frame.
  Vec3d pixel_direction_camera(const Vec2d& q) const {
    Vec3d d = K.inverse() * Vec3d(q.x(), q.y(), 1.0);
    return d.normalized();
  }

  Vec3d pixel_direction_world(const Vec2d& q) const {
    return R.transpose() * pixel_direction_camera(q);
  }

  void validate(const std::string& what) const {
    Mat3d should_be_identity = R * R.transpose();
    if ((should_be_identity - Mat3d::Identity()).norm() > 1e-6 || std::abs(R.determinant() - 1.0) > 1e-6)
      throw ValidationError(what + ": rotation is not orthonormal with det +1");
    if (!(K(0, 0) > 0.0 && K(1, 1) > 0.0))
      throw ValidationError(what + ": intrinsics need positive focal lengths");
    if (!image.empty()) {
      if (!(K(0, 2) > 0.0 && K(0, 2) < image.width() && K(1, 2) > 0.0 && K(1, 2) < image.height()))
        throw ValidationError(what + ": principal point outside the image");
      if (!prior_normals.empty() &&
          (prior_normals.width() != image.width() || prior_normals.height() != image.height() ||
           prior_normals.channels() != 3))
        throw ValidationError(what + ": normal map resolution does not match the image");
      if (!valid_mask.empty() &&
          (valid_mask.width() != image.width() || valid_mask.height() != image.height()))
        throw ValidationError(what + ": valid mask resolution does not match the image");
      if (!prior_normals.empty()) {
        for (int y = 0; y < prior_normals.height(); ++y)
          for (int x = 0; x < prior_normals.width(); ++x) {
            if (!valid_mask.empty() && valid_mask.at(x, y) == 0) continue;
            double n = prior_normals.pixel3(x, y).cast<double>().norm();
            if (std::abs(n - 1.0) > 1e-4)
              throw ValidationError(what + ": prior normal at (" + std::to_string(x) + "," +
                                    std::to_string(y) + ") is not unit length");
          }
      }
    }
  }
};

// Ray through pixel q of a view, bounded by the unit-sphere domain.
// Throws if q is outside the image or the ray misses the domain sphere.
inline Ray pixel_ray(const CameraView& view, const Vec2d& q, double sphere_radius = 1.0) {
  if (q.x() < 0.0 || q.y() < 0.0 || q.x() > view.width() || q.y() > view.height())
    throw ValidationError("pixel_ray: pixel (" + std::to_string(q.x()) + "," + std::to_string(q.y()) +
                          ") outside image bounds");
  Ray ray;
  ray.origin = view.center();
  ray.direction = view.pixel_direction_world(q);

  // Intersect |o + d v| = r.
  double b = 2.0 * ray.origin.dot(ray.direction);
  double c = ray.origin.squaredNorm() - sphere_radius * sphere_radius;
  double disc = b * b - 4.0 * c;
  if (disc <= 0.0) throw ValidationError("pixel_ray: ray misses the scene domain sphere");
  double sq = std::sqrt(disc);
  double d0 = (-b - sq) / 2.0;
  double d1 = (-b + sq) / 2.0;
  if (d1 <= 0.0) throw ValidationError("pixel_ray: scene domain is behind the camera");
  ray.near = std::max(d0, 1e-3);
  ray.far = d1;
  return ray;
}

// d is distance along the pixel ray; the z-depth is its forward component.
inline double ray_depth_to_z(const CameraView& view, const Vec2d& q, double d) {
  Vec3d dir_cam = view.pixel_direction_camera(q);
  return d * dir_cam.z();
}

// --- pose text I/O: 4x4 camera-to-world, row major ---

inline Mat4d read_mat4_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open pose file: " + path);
  Mat4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(f >> m(r, c))) throw ValidationError("pose file is not a 4x4 matrix: " + path);
  return m;
}

inline void write_mat4_text(const std::string& path, const Mat4d& m) {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot write pose file: " + path);
  f.precision(17);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) f << m(r, c) << (c == 3 ? "" : " ");
    f << "\n";
  }
}

inline Mat3d read_mat3_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open intrinsics file: " + path);
  Mat3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (!(f >> m(r, c))) throw ValidationError("intrinsics file is not a 3x3 matrix: " + path);
  return m;
}

inline void write_mat3_text(const std::string& path, const Mat3d& m) {
  std::ofstream f(path);
  if (!f) throw RuntimeError("cannot write intrinsics file: " + path);
  f.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) f << m(r, c) << (c == 2 ? "" : " ");
    f << "\n";
  }
}

inline Mat4d camera_to_world_matrix(const CameraView& v) {
  Mat4d m = Mat4d::Identity();
  m.topLeftCorner<3, 3>() = v.R.transpose();
  m.topRightCorner<3, 1>() = v.center();
  return m;
}

inline void set_pose_from_camera_to_world(CameraView& v, const Mat4d& c2w) {
  Mat3d rot_c2w = c2w.topLeftCorner<3, 3>();
  Vec3d center = c2w.topRightCorner<3, 1>();
  v.R = rot_c2w.transpose();
  v.t = -v.R * center;
}

}  // namespace nsr
