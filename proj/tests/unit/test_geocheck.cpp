#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "nsr/geocheck.hpp"
#include "nsr/synthetic.hpp"

using namespace nsr;
using Catch::Approx;

namespace {

Mat3d normalized_h(const Mat3d& h) {
  double pivot = h(2, 2);
  if (std::abs(pivot) < 1e-12) pivot = h.norm();
  return h / pivot;
}

// Plane scene shared by the NCC cases. Ring radius comparable to the plane
// distance gives the warp enough parallax for hypothesis errors to move
// patches by multiple pixels; texture features span a few pixels.
const SyntheticScene& plane_pair() {
  static SyntheticScene syn = [] {
    KeyValueConfig spec = testutil::plane_spec(8, 96, 72, 0.45);
    spec.set("noise_scale", "1.8");
    spec.set("camera_ring_radius", "0.9");
    spec.set("camera_height", "0.85");
    spec.set("shading", "0");
    return make_synthetic_scene(spec);
  }();
  return syn;
}

// Hypothesis for the true tangent plane under pixel q of view i.
PlaneHypothesis true_plane_hypothesis(const SyntheticScene& syn, int vi, int x, int y) {
  const CameraView& view = syn.scene.views[vi];
  PlaneHypothesis hyp;
  hyp.distance = syn.gt_depths[vi].at(x, y);
  hyp.view_dir = view.pixel_direction_camera(Vec2d(x + 0.5, y + 0.5));
  hyp.normal = syn.scene.gt_normals[vi].pixel3(x, y).cast<double>();
  return hyp;
}

}  // namespace

TEST_CASE("homography: self-mapping is the identity up to scale") {
  const SyntheticScene& syn = plane_pair();
  PlaneHypothesis hyp = true_plane_hypothesis(syn, 0, 48, 36);
  Mat3d h = homography(syn.scene.views[0], syn.scene.views[0], hyp);
  CHECK((normalized_h(h) - Mat3d::Identity()).norm() < 1e-12);
}

TEST_CASE("homography: pure rotation (equal centers) is independent of the plane") {
  CameraView a, b;
  a.K = b.K = (Mat3d() << 60, 0, 40, 0, 60, 30, 0, 0, 1).finished();
  a.R = Mat3d::Identity();
  Vec3d center(0.3, -0.2, 0.5);
  a.t = -a.R * center;
  double ang = 0.4;
  b.R = (Mat3d() << std::cos(ang), 0, std::sin(ang), 0, 1, 0, -std::sin(ang), 0, std::cos(ang)).finished();
  b.t = -b.R * center;

  PlaneHypothesis h1{Vec3d(0.2, 0.1, -1).normalized(), 1.4, Vec3d(0.05, 0.02, 1).normalized()};
  PlaneHypothesis h2{Vec3d(-0.4, 0.2, -1).normalized(), 0.6, Vec3d(-0.03, 0.04, 1).normalized()};
  Mat3d m1 = normalized_h(homography(a, b, h1));
  Mat3d m2 = normalized_h(homography(a, b, h2));
  CHECK((m1 - m2).norm() < 1e-12);
  // And equals the pure rotation conjugated by the intrinsics.
  Mat3d expected = normalized_h(b.K * (b.R * a.R.transpose()) * a.K.inverse());
  CHECK((m1 - expected).norm() < 1e-10);
}

TEST_CASE("homography maps pixels like direct 3D reprojection on the true plane") {
  // Derived oracle: lift reference pixels to the 3D plane, reproject into the
  // neighbor with the full camera model, compare against H within 1e-6 px.
  const SyntheticScene& syn = plane_pair();
  const Scene& scene = syn.scene;
  for (auto [vi, vj] : std::vector<std::pair<int, int>>{{0, 1}, {2, 5}}) {
    const CameraView& a = scene.views[vi];
    const CameraView& b = scene.views[vj];
    for (int y = 20; y < 60; y += 9)
      for (int x = 20; x < 80; x += 11) {
        if (!scene.views[vi].valid_mask.at(x, y)) continue;
        PlaneHypothesis hyp = true_plane_hypothesis(syn, vi, x, y);
        Mat3d H = homography(a, b, hyp);

        // Sample a few pixels in the patch around q.
        for (auto [dx, dy] : std::vector<std::pair<int, int>>{{0, 0}, {4, -3}, {-5, 5}}) {
          Vec2d q(x + 0.5 + dx, y + 0.5 + dy);
          // Lift: point on the hypothesis plane along the pixel ray.
          Vec3d dir_cam = a.pixel_direction_camera(q);
          double denom = dir_cam.dot(hyp.normal);
          if (std::abs(denom) < 1e-6) continue;
          double t = hyp.distance * hyp.view_dir.dot(hyp.normal) / denom;
          Vec3d p_world = a.camera_to_world(t * dir_cam);
          auto reproj = b.project(p_world);
          REQUIRE(reproj.has_value());

          Vec3d hq = H * Vec3d(q.x(), q.y(), 1.0);
          Vec2d warped(hq.x() / hq.z(), hq.y() / hq.z());
          CHECK((warped - *reproj).norm() < 1e-6);
        }
      }
  }
}

TEST_CASE("homography composition across views is the identity up to scale") {
  const SyntheticScene& syn = plane_pair();
  const CameraView& a = syn.scene.views[1];
  const CameraView& b = syn.scene.views[3];
  PlaneHypothesis hyp = true_plane_hypothesis(syn, 1, 40, 40);

  // Same 3D plane expressed in b's camera frame.
  Mat3d r_ba = b.R * a.R.transpose();
  Vec3d t_ba = b.t - r_ba * a.t;
  Vec3d p_a = hyp.distance * hyp.view_dir;  // point on the plane, frame a
  Vec3d p_b = r_ba * p_a + t_ba;
  PlaneHypothesis hyp_b;
  hyp_b.normal = r_ba * hyp.normal;
  hyp_b.distance = p_b.norm();
  hyp_b.view_dir = p_b.normalized();

  Mat3d h_ab = homography(a, b, hyp);
  Mat3d h_ba = homography(b, a, hyp_b);
  CHECK((normalized_h(h_ba * h_ab) - Mat3d::Identity()).norm() < 1e-6);
}

TEST_CASE("homography rejects degenerate planes") {
  const SyntheticScene& syn = plane_pair();
  PlaneHypothesis hyp;
  hyp.view_dir = Vec3d::UnitZ();
  hyp.normal = Vec3d::UnitX();  // parallel to the ray
  hyp.distance = 1.0;
  REQUIRE_THROWS_AS(homography(syn.scene.views[0], syn.scene.views[1], hyp), ValidationError);
}

TEST_CASE("ncc: self correlation is 1 on textured patches") {
  const SyntheticScene& syn = plane_pair();
  NccResult r = ncc(syn.scene.views[0], syn.scene.views[0], Vec2d(48.5, 36.5), 11, Mat3d::Identity());
  REQUIRE(r.status == NccStatus::Ok);
  CHECK(r.score == Approx(1.0).margin(1e-12));
}

TEST_CASE("ncc: mean-reflected copy scores -1") {
  SyntheticScene syn = plane_pair();
  CameraView negated = syn.scene.views[0];
  for (int y = 0; y < negated.luminance.height(); ++y)
    for (int x = 0; x < negated.luminance.width(); ++x)
      negated.luminance.at(x, y) = 1.0f - negated.luminance.at(x, y);
  NccResult r = ncc(syn.scene.views[0], negated, Vec2d(48.5, 36.5), 11, Mat3d::Identity());
  REQUIRE(r.status == NccStatus::Ok);
  CHECK(r.score == Approx(-1.0).margin(1e-6));
}

TEST_CASE("ncc: affine intensity changes do not move the score") {
  SyntheticScene syn = plane_pair();
  const CameraView& a = syn.scene.views[0];
  CameraView scaled = syn.scene.views[1];
  PlaneHypothesis hyp = true_plane_hypothesis(syn, 0, 40, 40);
  Mat3d h = homography(a, syn.scene.views[1], hyp);
  NccResult base = ncc(a, syn.scene.views[1], Vec2d(40.5, 40.5), 11, h);
  REQUIRE(base.status == NccStatus::Ok);

  for (double gain : {0.5, 1.7}) {
    for (double bias : {-0.1, 0.25}) {
      for (int y = 0; y < scaled.luminance.height(); ++y)
        for (int x = 0; x < scaled.luminance.width(); ++x)
          scaled.luminance.at(x, y) =
              static_cast<float>(gain * syn.scene.views[1].luminance.at(x, y) + bias);
      NccResult r = ncc(a, scaled, Vec2d(40.5, 40.5), 11, h);
      REQUIRE(r.status == NccStatus::Ok);
      CHECK(r.score == Approx(base.score).margin(1e-6));
    }
  }
}

TEST_CASE("ncc: true plane hypothesis scores high, a 30-degree tilt scores low") {
  const SyntheticScene& syn = plane_pair();
  const Scene& scene = syn.scene;
  const int neighbor = 2;
  int total = 0, bad_tested = 0;
  for (int x = 30; x < 70; x += 10)
    for (int y = 25; y < 55; y += 10) {
      PlaneHypothesis hyp = true_plane_hypothesis(syn, 0, x, y);
      Mat3d h_true = homography(scene.views[0], scene.views[neighbor], hyp);
      NccResult r_true = ncc(scene.views[0], scene.views[neighbor], Vec2d(x + 0.5, y + 0.5), 11, h_true);
      if (r_true.status != NccStatus::Ok) continue;
      ++total;
      CHECK(r_true.score > 0.99);

      PlaneHypothesis tilted = hyp;
      double c = std::cos(deg_to_rad(30.0)), s = std::sin(deg_to_rad(30.0));
      Mat3d rot = (Mat3d() << c, 0, s, 0, 1, 0, -s, 0, c).finished();
      tilted.normal = rot * hyp.normal;
      Mat3d h_bad = homography(scene.views[0], scene.views[neighbor], tilted);
      NccResult r_bad = ncc(scene.views[0], scene.views[neighbor], Vec2d(x + 0.5, y + 0.5), 11, h_bad);
      if (r_bad.status == NccStatus::Ok) {
        CHECK(r_bad.score < 0.8);
        CHECK(r_bad.score < r_true.score);
        ++bad_tested;
      }
    }
  REQUIRE(total >= 6);
  REQUIRE(bad_tested >= 4);
}

TEST_CASE("ncc: texture-less patches are invalid, warps leaving the image are invalid") {
  KeyValueConfig spec = testutil::plane_spec(4, 64, 48, 0.0);  // amplitude 0: flat albedo
  spec.set("shading", "0");
  SyntheticScene flat = make_synthetic_scene(spec);
  NccResult r = ncc(flat.scene.views[0], flat.scene.views[1], Vec2d(32.5, 24.5), 11, Mat3d::Identity());
  CHECK(r.status == NccStatus::LowVariance);

  const SyntheticScene& syn = plane_pair();
  NccResult edge = ncc(syn.scene.views[0], syn.scene.views[1], Vec2d(2.5, 2.5), 11, Mat3d::Identity());
  CHECK(edge.status == NccStatus::OutOfBounds);

  Mat3d push = Mat3d::Identity();
  push(0, 2) = 1e5;  // warp far outside the neighbor
  NccResult far = ncc(syn.scene.views[0], syn.scene.views[1], Vec2d(40.5, 40.5), 11, push);
  CHECK(far.status == NccStatus::OutOfBounds);
}

TEST_CASE("evaluate_indicator thresholds the valid-neighbor NCC sum") {
  const SyntheticScene& syn = plane_pair();
  const Scene& scene = syn.scene;
  GeoCheckParams params;
  std::vector<int> neighbors = {2, 6};

  SECTION("true geometry is accepted") {
    int accepted = 0, tested = 0;
    for (int x = 30; x < 70; x += 8) {
      PlaneHypothesis hyp = true_plane_hypothesis(syn, 0, x, 40);
      Vec3d n_world = scene.views[0].R.transpose() * hyp.normal;
      IndicatorDetail det =
          evaluate_indicator(scene, 0, x, 40, n_world, hyp.distance, neighbors, params);
      if (det.result == Indicator::Untestable) continue;
      ++tested;
      accepted += det.result == Indicator::Accept;
    }
    REQUIRE(tested >= 4);
    CHECK(accepted == tested);
  }

  SECTION("wrong depth is rejected") {
    int rejected = 0, tested = 0;
    for (int x = 30; x < 70; x += 8) {
      PlaneHypothesis hyp = true_plane_hypothesis(syn, 0, x, 40);
      Vec3d n_world = scene.views[0].R.transpose() * hyp.normal;
      IndicatorDetail det =
          evaluate_indicator(scene, 0, x, 40, n_world, hyp.distance * 1.35, neighbors, params);
      if (det.result == Indicator::Untestable) continue;
      ++tested;
      rejected += det.result == Indicator::Reject;
    }
    REQUIRE(tested >= 4);
    CHECK(rejected == tested);
  }

  SECTION("degenerate renders are rejected") {
    IndicatorDetail det =
        evaluate_indicator(scene, 0, 40, 40, Vec3d::Zero(), 1.0, neighbors, params);
    CHECK(det.result == Indicator::Reject);
    det = evaluate_indicator(scene, 0, 40, 40, Vec3d::UnitZ(),
                             std::numeric_limits<double>::quiet_NaN(), neighbors, params);
    CHECK(det.result == Indicator::Reject);
  }

  SECTION("no valid neighbor leaves the pixel untestable") {
    IndicatorDetail det = evaluate_indicator(scene, 0, 3, 3, -scene.views[0].optical_axis_world(),
                                             1.4, neighbors, params);
    CHECK(det.result == Indicator::Untestable);
  }
}

TEST_CASE("indicator threshold semantics on synthetic scores") {
  // All neighbors at 1.0 meet eps = 0.6 per neighbor; all at 0.0 do not;
  // raising eps can only turn accepts into rejects.
  auto decide = [](const std::vector<double>& scores, double eps_total, int j_total) {
    double per = eps_total / j_total;
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum >= per * static_cast<double>(scores.size()) ? 1 : 0;
  };
  CHECK(decide({1.0, 1.0}, 1.2, 2) == 1);
  CHECK(decide({0.0, 0.0}, 1.2, 2) == 0);
  CHECK(decide({1.0}, 1.2, 2) == 1);  // one invalid neighbor: its share is removed

  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> scores = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    double lo = rng.uniform(0, 1), hi = lo + rng.uniform(0, 1);
    CHECK(decide(scores, hi, 2) <= decide(scores, lo, 2));
  }
}

TEST_CASE("prior mask transitions") {
  PriorMask mask;
  mask.init({{4, 3}});

  CHECK(mask.state(0, 1, 1) == PriorState::Untested);
  mask.update(0, 1, 1, 1);
  CHECK(mask.state(0, 1, 1) == PriorState::Accepted);
  mask.update(0, 1, 1, 0);
  CHECK(mask.state(0, 1, 1) == PriorState::Rejected);
  mask.update(0, 1, 1, 1);  // rejection is absorbing
  CHECK(mask.state(0, 1, 1) == PriorState::Rejected);

  mask.update(0, 2, 2, 0);  // untested -> rejected directly
  CHECK(mask.state(0, 2, 2) == PriorState::Rejected);

  CHECK(mask.count(PriorState::Rejected) == 2);
  CHECK(mask.count(PriorState::Untested) == 10);

  SECTION("serialization round-trip") {
    std::stringstream buf;
    mask.save(buf);
    PriorMask loaded = PriorMask::load(buf);
    REQUIRE(loaded.view_count() == 1);
    CHECK(loaded.state(0, 1, 1) == PriorState::Rejected);
    CHECK(loaded.state(0, 2, 2) == PriorState::Rejected);
    CHECK(loaded.state(0, 0, 0) == PriorState::Untested);
  }

  SECTION("debug image encodes states as gray/white/black") {
    mask.update(0, 0, 0, 1);
    Image img = mask.to_image(0);
    CHECK(img.at(0, 0, 0) == 1.0f);   // accepted: white
    CHECK(img.at(1, 1, 0) == 0.0f);   // rejected: black
    CHECK(img.at(3, 0, 0) == 0.5f);   // untested: gray
  }
}
