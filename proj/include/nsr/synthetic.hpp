#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nsr/analytic.hpp"
#include "nsr/camera.hpp"
#include "nsr/config.hpp"
#include "nsr/core.hpp"
#include "nsr/image_io.hpp"
#include "nsr/rng.hpp"
#include "nsr/scene.hpp"

namespace nsr {

// Per-pixel primitive ids in label maps.
enum SceneLabel : uint8_t {
  kLabelNone = 0,
  kLabelWall = 1,
  kLabelFloor = 2,
  kLabelCeiling = 3,
  kLabelPillar = 4,
};

namespace detail {

// Deterministic 3D value noise in [0,1]: hashed lattice values, smoothstep
// interpolation, `octaves` doublings.
inline double value_noise(const Vec3d& p, uint64_t seed, double base_freq, int octaves) {
  auto lattice = [seed](int64_t x, int64_t y, int64_t z, uint64_t oct) {
    uint64_t h = Rng::hash_combine(seed, oct);
    h = Rng::hash_combine(h, static_cast<uint64_t>(x) * 0x8da6b343ull);
    h = Rng::hash_combine(h, static_cast<uint64_t>(y) * 0xd8163841ull);
    h = Rng::hash_combine(h, static_cast<uint64_t>(z) * 0xcb1ab31full);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
  auto fade = [](double t) { return t * t * (3.0 - 2.0 * t); };
  double sum = 0.0, amp = 1.0, amp_total = 0.0, freq = base_freq;
  for (int oct = 0; oct < octaves; ++oct) {
    Vec3d q = p * freq;
    int64_t xi = static_cast<int64_t>(std::floor(q.x()));
    int64_t yi = static_cast<int64_t>(std::floor(q.y()));
    int64_t zi = static_cast<int64_t>(std::floor(q.z()));
    double fx = fade(q.x() - xi), fy = fade(q.y() - yi), fz = fade(q.z() - zi);
    double v = 0.0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
          v += w * lattice(xi + dx, yi + dy, zi + dz, oct);
        }
    sum += amp * v;
    amp_total += amp;
    amp *= 0.55;
    freq *= 2.0;
  }
  return sum / amp_total;
}

struct TexturedPrimitive {
  AnalyticField<double> field;
  uint8_t label;  // kLabelPillar etc.; rooms resolve wall/floor/ceiling by normal
  Vec3d base_color;
  double amplitude;
};

struct SceneModel {
  std::vector<TexturedPrimitive> prims;
  uint64_t seed = 1;
  double noise_freq = 2.0;
  int noise_octaves = 4;
  bool shading = true;
  Vec3d light = Vec3d(0.35, -0.45, 0.82).normalized();

  int nearest(const Vec3d& x) const {
    int best = 0;
    double best_sdf = prims[0].field.sdf(x);
    for (int i = 1; i < static_cast<int>(prims.size()); ++i) {
      double s = prims[i].field.sdf(x);
      if (s < best_sdf) { best_sdf = s; best = i; }
    }
    return best;
  }

  double sdf(const Vec3d& x) const {
    double s = prims[0].field.sdf(x);
    for (size_t i = 1; i < prims.size(); ++i) s = std::min(s, prims[i].field.sdf(x));
    return s;
  }

  Vec3d gradient(const Vec3d& x) const { return prims[nearest(x)].field.gradient(x); }

  uint8_t label_at(const Vec3d& x) const {
    const TexturedPrimitive& p = prims[nearest(x)];
    if (p.label != kLabelWall) return p.label;
    Vec3d g = p.field.gradient(x);
    if (g.z() > 0.9) return kLabelFloor;
    if (g.z() < -0.9) return kLabelCeiling;
    return kLabelWall;
  }

  Vec3d albedo(const Vec3d& x) const {
    const TexturedPrimitive& p = prims[nearest(x)];
    Vec3d c;
    for (int ch = 0; ch < 3; ++ch) {
      double n = value_noise(x + Vec3d::Constant(17.0 * ch), seed + p.label, noise_freq, noise_octaves);
      c[ch] = clamp01(p.base_color[ch] * (1.0 + p.amplitude * (2.0 * n - 1.0)));
    }
    return c;
  }

  Vec3d shade(const Vec3d& x, const Vec3d& normal) const {
    Vec3d c = albedo(x);
    if (shading) c *= 0.65 + 0.35 * std::abs(normal.dot(light));
    return Vec3d(clamp01(c.x()), clamp01(c.y()), clamp01(c.z()));
  }

  AnalyticField<double> as_field() const {
    SceneModel copy = *this;
    return AnalyticField<double>(
        [copy](const Vec3d& x) { return copy.sdf(x); },
        [copy](const Vec3d& x) { return copy.gradient(x); },
        [copy](const Vec3d& x, const Vec3d&) {
          return copy.shade(x, copy.gradient(x).normalized());
        });
  }
};

inline Mat3d look_rotation(const Vec3d& forward, const Vec3d& world_up = Vec3d::UnitZ()) {
  // Camera frame: x right, y down, z forward.
  Vec3d z = forward.normalized();
  Vec3d x = z.cross(world_up);
  if (x.norm() < 1e-9) x = z.cross(Vec3d::UnitX());
  x.normalize();
  Vec3d y = z.cross(x);
  Mat3d R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return R;
}

inline std::vector<double> parse_pitch_list(const std::string& text) {
  std::vector<double> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stod(token));
  }
  if (out.empty()) out.push_back(0.0);
  return out;
}

}  // namespace detail

struct SyntheticScene {
  Scene scene;                   // carries gt_normals (camera frame, exact)
  std::vector<Image> gt_depths;  // distance along the pixel ray
};

// Builds a synthetic multi-view scene with analytically rendered images,
// exact ground-truth normal/depth maps, a ground-truth mesh, the analytic SDF
// oracle, and (optionally corrupted) prior normal maps.
inline SyntheticScene make_synthetic_scene(const KeyValueConfig& spec) {
  const std::string primitive = spec.get_string("primitive", "");
  if (primitive != "plane" && primitive != "box_room" && primitive != "box_room_pillar")
    throw ValidationError("make_synthetic_scene: unknown primitive '" + primitive + "'");

  const int n_views = static_cast<int>(spec.get_int("n_views", 28));
  const int width = static_cast<int>(spec.get_int("width", 80));
  const int height = static_cast<int>(spec.get_int("height", 60));
  const double focal = spec.get_double("focal", 60.0);
  const uint64_t seed = static_cast<uint64_t>(spec.get_int("seed", 1));
  if (n_views < 1 || width < 8 || height < 8 || focal <= 0)
    throw ValidationError("make_synthetic_scene: bad image/view parameters");

  detail::SceneModel model;
  model.seed = seed;
  model.noise_freq = spec.get_double("noise_scale", 2.0);
  model.noise_octaves = static_cast<int>(spec.get_int("noise_octaves", 4));
  model.shading = spec.get_bool("shading", true);

  const Vec3d room_half(spec.get_double("room_half_x", 2.0), spec.get_double("room_half_y", 2.0),
                        spec.get_double("room_half_z", 1.4));
  const double wall_amp = spec.get_double("wall_amp", 0.25);
  const double floor_amp = spec.get_double("floor_amp", 0.25);
  const double pillar_amp = spec.get_double("pillar_amp", 0.35);

  TriMesh gt_mesh;
  auto add_quad = [&gt_mesh](const Vec3d& a, const Vec3d& b, const Vec3d& c, const Vec3d& d) {
    int base = static_cast<int>(gt_mesh.vertices.size());
    gt_mesh.vertices.insert(gt_mesh.vertices.end(), {a, b, c, d});
    gt_mesh.faces.push_back({base, base + 1, base + 2});
    gt_mesh.faces.push_back({base, base + 2, base + 3});
  };

  KeyValueConfig meta;
  meta.set("synthetic", "1");
  meta.set("primitive", primitive);

  std::vector<CameraView> cameras;
  Mat3d K = Mat3d::Identity();
  K(0, 0) = K(1, 1) = focal;
  K(0, 2) = width / 2.0;
  K(1, 2) = height / 2.0;

  if (primitive == "plane") {
    // Textured ground plane, cameras on a ring above looking at the origin.
    const double extent = spec.get_double("plane_extent", 4.0);
    model.prims.push_back({AnalyticField<double>::plane(Vec3d::UnitZ(), 0.0), kLabelFloor,
                           Vec3d(0.55, 0.50, 0.45), floor_amp});
    add_quad(Vec3d(-extent, -extent, 0), Vec3d(extent, -extent, 0), Vec3d(extent, extent, 0),
             Vec3d(-extent, extent, 0));
    const double cam_h = spec.get_double("camera_height", 1.6);
    const double ring = spec.get_double("camera_ring_radius", 0.9);
    for (int i = 0; i < n_views; ++i) {
      double az = 2.0 * pi<double>() * i / n_views;
      Vec3d pos(ring * std::cos(az), ring * std::sin(az), cam_h);
      CameraView v;
      v.K = K;
      v.R = detail::look_rotation(Vec3d::Zero() - pos);
      v.t = -v.R * pos;
      cameras.push_back(v);
    }
    meta.set("region_center_x", "0");
    meta.set("region_center_y", "0");
    meta.set("region_center_z", std::to_string(0.5 * cam_h));
    meta.set("region_radius", std::to_string(std::sqrt(2.0 * 2.0 + cam_h * cam_h)));
  } else {
    // Closed room; cameras on an interior ring looking inward so opposing
    // walls, floor and ceiling are covered.
    model.prims.push_back({AnalyticField<double>::room(Vec3d::Zero(), room_half), kLabelWall,
                           Vec3d(0.75, 0.72, 0.68), wall_amp});
    const Vec3d h = room_half;
    add_quad({-h.x(), -h.y(), -h.z()}, {h.x(), -h.y(), -h.z()}, {h.x(), h.y(), -h.z()}, {-h.x(), h.y(), -h.z()});
    add_quad({-h.x(), -h.y(), h.z()}, {-h.x(), h.y(), h.z()}, {h.x(), h.y(), h.z()}, {h.x(), -h.y(), h.z()});
    add_quad({-h.x(), -h.y(), -h.z()}, {-h.x(), h.y(), -h.z()}, {-h.x(), h.y(), h.z()}, {-h.x(), -h.y(), h.z()});
    add_quad({h.x(), -h.y(), -h.z()}, {h.x(), -h.y(), h.z()}, {h.x(), h.y(), h.z()}, {h.x(), h.y(), -h.z()});
    add_quad({-h.x(), -h.y(), -h.z()}, {-h.x(), -h.y(), h.z()}, {h.x(), -h.y(), h.z()}, {h.x(), -h.y(), -h.z()});
    add_quad({-h.x(), h.y(), -h.z()}, {h.x(), h.y(), -h.z()}, {h.x(), h.y(), h.z()}, {-h.x(), h.y(), h.z()});

    if (primitive == "box_room_pillar") {
      const double px = spec.get_double("pillar_x", 0.85);
      const double py = spec.get_double("pillar_y", 0.35);
      const double pw = spec.get_double("pillar_half_width", 0.14);
      const double yaw = deg_to_rad(spec.get_double("pillar_yaw_deg", 45.0));
      model.prims.push_back({AnalyticField<double>::box(Vec3d(px, py, 0.0),
                                                        Vec3d(pw, pw, room_half.z()), yaw),
                             kLabelPillar, Vec3d(0.45, 0.25, 0.20), pillar_amp});
      // Four side rectangles of the rotated pillar.
      double c = std::cos(yaw), s = std::sin(yaw);
      auto corner = [&](double sx, double sy) {
        return Vec3d(px + c * sx * pw - s * sy * pw, py + s * sx * pw + c * sy * pw, 0.0);
      };
      Vec3d zc(0, 0, room_half.z());
      Vec3d c00 = corner(-1, -1), c10 = corner(1, -1), c11 = corner(1, 1), c01 = corner(-1, 1);
      add_quad(c00 - zc, c10 - zc, c10 + zc, c00 + zc);
      add_quad(c10 - zc, c11 - zc, c11 + zc, c10 + zc);
      add_quad(c11 - zc, c01 - zc, c01 + zc, c11 + zc);
      add_quad(c01 - zc, c00 - zc, c00 + zc, c01 + zc);

      const double hd = pw * std::sqrt(2.0) + 0.15;
      std::ostringstream pr;
      pr << px - hd << " " << py - hd << " " << -(room_half.z() - 0.25) << " " << px + hd << " "
         << py + hd << " " << room_half.z() - 0.25;
      meta.set("region_pillar", pr.str());
      const double inset = 0.4, thick = 0.3, zb = room_half.z() - 0.4;
      auto wall_region = [&](int idx, double x0, double y0, double x1, double y1) {
        std::ostringstream ws;
        ws << x0 << " " << y0 << " " << -zb << " " << x1 << " " << y1 << " " << zb;
        meta.set("region_walls_" + std::to_string(idx), ws.str());
      };
      wall_region(0, -h.x() - 0.1, -h.y() + inset, -h.x() + thick, h.y() - inset);
      wall_region(1, h.x() - thick, -h.y() + inset, h.x() + 0.1, h.y() - inset);
      wall_region(2, -h.x() + inset, -h.y() - 0.1, h.x() - inset, -h.y() + thick);
      wall_region(3, -h.x() + inset, h.y() - 0.1, h.x() - inset, h.y() + thick);
    }

    const double ring = spec.get_double("camera_ring_radius", 1.1);
    const double cam_z = spec.get_double("camera_height", 0.0);
    std::vector<double> pitches = detail::parse_pitch_list(spec.get_string("pitches", "0"));
    for (int i = 0; i < n_views; ++i) {
      double az = 2.0 * pi<double>() * i / n_views;
      double pitch = deg_to_rad(pitches[i % pitches.size()]);
      Vec3d pos(ring * std::cos(az), ring * std::sin(az), cam_z);
      Vec3d fwd_flat = (-pos + Vec3d(0, 0, cam_z)).normalized();  // inward
      Vec3d fwd = std::cos(pitch) * fwd_flat + std::sin(pitch) * Vec3d::UnitZ();
      CameraView v;
      v.K = K;
      v.R = detail::look_rotation(fwd);
      v.t = -v.R * pos;
      cameras.push_back(v);
    }
    meta.set("region_center_x", "0");
    meta.set("region_center_y", "0");
    meta.set("region_center_z", "0");
    meta.set("region_radius", std::to_string(room_half.norm()));
    meta.set("init_sign", "-1");
  }

  // Background model (everything but the pillar) for prior corruption.
  detail::SceneModel background = model;
  background.prims.clear();
  for (const auto& p : model.prims)
    if (p.label != kLabelPillar) background.prims.push_back(p);

  const std::string prior_mode = spec.get_string("prior_mode", "exact");
  if (prior_mode != "exact" && prior_mode != "background")
    throw ValidationError("make_synthetic_scene: unknown prior_mode '" + prior_mode + "'");
  const double prior_blur = spec.get_double("prior_blur_sigma", 0.0);
  // Color is box-filtered over supersample^2 subpixel rays (band-limited like
  // a real camera); geometry channels stay exact at the pixel center.
  const int supersample = static_cast<int>(spec.get_int("supersample", 2));
  if (supersample < 1 || supersample > 8)
    throw ValidationError("make_synthetic_scene: supersample must be in [1, 8]");

  SyntheticScene out;
  const double far = 6.0 * std::max({room_half.x(), room_half.y(), 2.0});
  for (auto& view : cameras) {
    view.image = Image(width, height, 3);
    Image gt_normal(width, height, 3);
    Image gt_depth(width, height, 1, -1.f);
    Image prior(width, height, 3);
    ByteImage valid(width, height, 0);
    ByteImage label(width, height, kLabelNone);
    AnalyticField<double> cast_field = model.as_field();
    AnalyticField<double> bg_field = background.as_field();

    for (int yp = 0; yp < height; ++yp)
      for (int xp = 0; xp < width; ++xp) {
        Vec2d q(xp + 0.5, yp + 0.5);
        Vec3d origin = view.center();
        Vec3d dir = view.pixel_direction_world(q);
        auto hit = raycast(cast_field, origin, dir, 1e-4, far);
        Vec3f color(0, 0, 0);
        Vec3f n_cam(0, 0, -1);
        if (hit) {
          Vec3d p = origin + *hit * dir;
          Vec3d n_world = model.gradient(p).normalized();
          Vec3d nc = view.R * n_world;
          color = model.shade(p, n_world).cast<float>();
          n_cam = nc.cast<float>();
          gt_depth.at(xp, yp) = static_cast<float>(*hit);
          valid.at(xp, yp) = 1;
          label.at(xp, yp) = model.label_at(p);
          if (supersample > 1) {
            Vec3d acc = Vec3d::Zero();
            int hits = 0;
            for (int sy = 0; sy < supersample; ++sy)
              for (int sx = 0; sx < supersample; ++sx) {
                Vec2d sq(xp + (sx + 0.5) / supersample, yp + (sy + 0.5) / supersample);
                Vec3d sdir = view.pixel_direction_world(sq);
                auto shit = raycast(cast_field, origin, sdir, 1e-4, far);
                if (!shit) continue;
                Vec3d sp = origin + *shit * sdir;
                acc += model.shade(sp, model.gradient(sp).normalized());
                ++hits;
              }
            if (hits > 0) color = (acc / hits).cast<float>();
          }
        }
        view.image.set_pixel3(xp, yp, color);
        gt_normal.set_pixel3(xp, yp, n_cam);

        Vec3f prior_n = n_cam;
        if (prior_mode == "background" && hit && label.at(xp, yp) == kLabelPillar) {
          auto bg_hit = raycast(bg_field, origin, dir, 1e-4, far);
          if (bg_hit) {
            Vec3d p = origin + *bg_hit * dir;
            prior_n = (view.R * background.gradient(p).normalized()).cast<float>();
          }
        }
        prior.set_pixel3(xp, yp, prior_n);
      }

    if (prior_blur > 0.0) {
      prior = gaussian_blur(prior, prior_blur);
      for (int yp = 0; yp < height; ++yp)
        for (int xp = 0; xp < width; ++xp) {
          Vec3f n = prior.pixel3(xp, yp);
          float len = n.norm();
          prior.set_pixel3(xp, yp, len > 1e-6f ? Vec3f(n / len) : Vec3f(0, 0, -1));
        }
    }

    view.prior_normals = prior;
    view.valid_mask = valid;
    view.luminance = view.image.luminance();
    out.scene.views.push_back(std::move(view));
    out.scene.labels.push_back(std::move(label));
    out.scene.gt_normals.push_back(std::move(gt_normal));
    out.gt_depths.push_back(std::move(gt_depth));
  }

  out.scene.meta = meta;
  out.scene.gt_mesh = gt_mesh;
  out.scene.analytic_sdf = model.as_field();
  detail::compute_region(out.scene);
  return out;
}

// Writes the documented scene directory layout.
inline void write_scene(const SyntheticScene& syn, const std::string& directory) {
  fs::path dir(directory);
  fs::create_directories(dir / "image");
  fs::create_directories(dir / "pose");
  fs::create_directories(dir / "normal");
  fs::create_directories(dir / "gt_normal");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "mask");
  fs::create_directories(dir / "label");

  const Scene& scene = syn.scene;
  for (size_t i = 0; i < scene.views.size(); ++i) {
    std::string frame = detail::frame_name(static_cast<int>(i));
    const CameraView& v = scene.views[i];
    write_ppm((dir / "image" / (frame + ".ppm")).string(), v.image);
    write_mat4_text((dir / "pose" / (frame + ".txt")).string(), camera_to_world_matrix(v));
    write_fmap((dir / "normal" / (frame + ".fmap")).string(), v.prior_normals);
    write_fmap((dir / "gt_normal" / (frame + ".fmap")).string(), scene.gt_normals[i]);
    write_fmap((dir / "depth" / (frame + ".fmap")).string(), syn.gt_depths[i]);
    write_fmap((dir / "mask" / (frame + ".fmap")).string(), v.valid_mask);
    write_fmap((dir / "label" / (frame + ".fmap")).string(), scene.labels[i]);
  }
  write_mat3_text((dir / "intrinsics.txt").string(), scene.views[0].K);
  if (scene.gt_mesh) write_obj((dir / "gt_mesh.obj").string(), *scene.gt_mesh);
  scene.meta.save((dir / "scene.txt").string());
}

}  // namespace nsr
