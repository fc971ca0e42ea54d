// Command-line front end: synthetic scene generation, training, mesh
// extraction, evaluation and debug exports. Exit codes: 0 ok, 2 validation
// error, 3 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nsr/geocheck.hpp"
#include "nsr/manifest.hpp"
#include "nsr/mesher.hpp"
#include "nsr/metrics.hpp"
#include "nsr/renderer.hpp"
#include "nsr/scene.hpp"
#include "nsr/synthetic.hpp"
#include "nsr/trainer.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

// "a,b,c;d,e,f" -> list of int tuples
std::vector<std::vector<int>> parse_tuple_list(const std::string& text) {
  std::vector<std::vector<int>> out;
  std::string group;
  std::istringstream in(text);
  while (std::getline(in, group, ';'))
    if (!group.empty()) out.push_back(parse_int_list(group));
  return out;
}

nsr::Scene load_scene_normalized(const std::string& dir, const nsr::SimilarityTransform& xf) {
  nsr::Scene scene = nsr::load_scene(dir);
  nsr::apply_similarity(scene, xf);
  return scene;
}

// Renders one full view (optionally strided) and returns image + camera-frame
// normal map + rendered-anything mask.
struct ViewRender {
  nsr::Image color;
  nsr::Image normal_cam;
  nsr::ByteImage rendered;
};

ViewRender render_view(const nsr::NeuralField<Real>& field, const nsr::CameraView& view,
                       const nsr::SampleConfig& sampling, uint64_t seed, int stride = 1) {
  const int w = (view.width() + stride - 1) / stride;
  const int h = (view.height() + stride - 1) / stride;
  std::vector<nsr::Ray> rays;
  rays.reserve(static_cast<size_t>(w) * h);
  for (int y = 0; y < view.height(); y += stride)
    for (int x = 0; x < view.width(); x += stride)
      rays.push_back(nsr::pixel_ray(view, nsr::Vec2d(x + 0.5, y + 0.5)));
  auto outputs = nsr::render_batch(field, rays, sampling, seed);

  ViewRender out;
  out.color = nsr::Image(w, h, 3);
  out.normal_cam = nsr::Image(w, h, 3);
  out.rendered = nsr::ByteImage(w, h, 0);
  size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x, ++i) {
      const auto& o = outputs[i];
      out.color.set_pixel3(x, y, o.color.template cast<float>());
      nsr::Vec3d n_cam = view.R * o.normal_unit.template cast<double>();
      out.normal_cam.set_pixel3(x, y, n_cam.cast<float>());
      out.rendered.at(x, y) = o.degenerate ? 0 : 1;
    }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Adaptive normal-prior guided neural surface reconstruction"};
  app.require_subcommand(1);

  // --- make-synthetic ---
  auto* mk = app.add_subcommand("make-synthetic", "Generate a synthetic scene directory");
  std::string mk_spec, mk_out;
  int64_t mk_seed = -1;
  bool mk_overwrite = false;
  mk->add_option("--spec", mk_spec, "Scene spec (key = value file)")->required();
  mk->add_option("--out", mk_out, "Output scene directory")->required();
  mk->add_option("--seed", mk_seed, "Override the spec seed");
  mk->add_flag("--overwrite", mk_overwrite, "Replace existing outputs");
  mk->callback([&]() {
    nsr::prepare_out_dir(mk_out, mk_overwrite);
    nsr::RunManifest manifest("make-synthetic", mk_out);
    nsr::KeyValueConfig spec = nsr::KeyValueConfig::load(mk_spec);
    if (mk_seed >= 0) spec.set("seed", std::to_string(mk_seed));
    manifest.set_seed(static_cast<uint64_t>(spec.get_int("seed", 1)));
    nsr::SyntheticScene syn = nsr::make_synthetic_scene(spec);
    nsr::write_scene(syn, mk_out);
    manifest.add_output("scene", mk_out);
    manifest.set("views", std::to_string(syn.scene.views.size()));
    manifest.finalize();
    std::printf("wrote %zu views to %s\n", syn.scene.views.size(), mk_out.c_str());
  });

  // --- train ---
  auto* tr = app.add_subcommand("train", "Optimize the neural field on a scene");
  std::string tr_config, tr_scene, tr_out, tr_resume;
  int64_t tr_seed = -1;
  bool tr_overwrite = false;
  std::vector<std::string> tr_sets;
  tr->add_option("--config", tr_config, "Training config (key = value file)")->required();
  tr->add_option("--scene", tr_scene, "Scene directory")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--seed", tr_seed, "Override the config seed");
  tr->add_option("--set", tr_sets, "Config overrides key=value (repeatable)");
  tr->add_flag("--overwrite", tr_overwrite, "Replace existing outputs");
  tr->callback([&]() {
    bool resuming = !tr_resume.empty();
    if (!resuming) nsr::prepare_out_dir(tr_out, tr_overwrite);
    nsr::RunManifest manifest("train", tr_out);
    nsr::KeyValueConfig kv = nsr::KeyValueConfig::load(tr_config);
    for (const auto& s : tr_sets) kv.apply_override(s);
    if (tr_seed >= 0) kv.set("seed", std::to_string(tr_seed));
    nsr::TrainConfig cfg = nsr::TrainConfig::from_kv(kv);
    manifest.set_seed(cfg.seed);
    manifest.set_scene(tr_scene);
    cfg.to_kv().save(tr_out + "/config_snapshot.txt");

    nsr::Scene scene = nsr::load_scene(tr_scene);
    std::optional<nsr::LoadedCheckpoint<Real>> resume;
    if (resuming) resume = nsr::load_checkpoint<Real>(tr_resume);
    auto result = nsr::train<Real>(std::move(scene), cfg, tr_out, std::move(resume));
    manifest.add_output("checkpoint", result.final_checkpoint);
    manifest.add_output("log", tr_out + "/log.csv");
    manifest.finalize();
    std::printf("trained %lld iterations, checkpoint at %s\n",
                static_cast<long long>(result.state.iteration), result.final_checkpoint.c_str());
  });

  // --- extract ---
  auto* ex = app.add_subcommand("extract", "Extract the zero level set as a mesh");
  std::string ex_ckpt, ex_out_dir;
  int ex_res = 256;
  std::vector<double> ex_bounds;
  bool ex_overwrite = false;
  ex->add_option("--checkpoint", ex_ckpt, "Trainer checkpoint")->required();
  ex->add_option("--out", ex_out_dir, "Output directory (mesh.obj inside)")->required();
  ex->add_option("--resolution", ex_res, "Grid resolution (default 256)");
  ex->add_option("--bounds", ex_bounds, "World-unit box x0 y0 z0 x1 y1 z1")->expected(6);
  ex->add_flag("--overwrite", ex_overwrite, "Replace existing outputs");
  ex->callback([&]() {
    nsr::prepare_out_dir(ex_out_dir, ex_overwrite);
    nsr::RunManifest manifest("extract", ex_out_dir);
    auto ckpt = nsr::load_checkpoint<Real>(ex_ckpt);
    nsr::Vec3d lo(-0.95, -0.95, -0.95), hi(0.95, 0.95, 0.95);
    if (!ex_bounds.empty()) {
      lo = ckpt.to_normalized.apply(nsr::Vec3d(ex_bounds[0], ex_bounds[1], ex_bounds[2]));
      hi = ckpt.to_normalized.apply(nsr::Vec3d(ex_bounds[3], ex_bounds[4], ex_bounds[5]));
    }
    nsr::TriMesh mesh =
        nsr::extract_mesh(ckpt.state.field, ex_res, lo, hi, ckpt.to_normalized,
                          nsr::effective_workers(0));
    std::string mesh_path = ex_out_dir + "/mesh.obj";
    nsr::write_obj(mesh_path, mesh);
    manifest.add_output("mesh", mesh_path);
    manifest.set("vertices", std::to_string(mesh.vertices.size()));
    manifest.set("faces", std::to_string(mesh.faces.size()));
    manifest.finalize();
    std::printf("extracted %zu vertices / %zu faces to %s\n", mesh.vertices.size(),
                mesh.faces.size(), mesh_path.c_str());
  });

  // --- eval-mesh ---
  auto* em = app.add_subcommand("eval-mesh", "Geometry metrics between two meshes");
  std::string em_pred, em_gt, em_out;
  double em_tau = 0.05;
  int em_samples = 200000;
  int64_t em_seed = 1;
  bool em_overwrite = false;
  em->add_option("--pred", em_pred, "Predicted mesh (obj)")->required();
  em->add_option("--gt", em_gt, "Ground-truth mesh (obj)")->required();
  em->add_option("--out", em_out, "Output directory")->required();
  em->add_option("--tau", em_tau, "Distance threshold (scene units, default 0.05)");
  em->add_option("--samples", em_samples, "Surface samples per mesh (default 200000)");
  em->add_option("--seed", em_seed, "Sampling seed");
  em->add_flag("--overwrite", em_overwrite, "Replace existing outputs");
  em->callback([&]() {
    nsr::prepare_out_dir(em_out, em_overwrite);
    nsr::RunManifest manifest("eval-mesh", em_out);
    manifest.set_seed(static_cast<uint64_t>(em_seed));
    nsr::TriMesh pred = nsr::read_obj(em_pred);
    nsr::TriMesh gt = nsr::read_obj(em_gt);
    nsr::GeometryReport report =
        nsr::eval_mesh(pred, gt, em_tau, em_samples, static_cast<uint64_t>(em_seed));
    nsr::write_geometry_report_csv(em_out + "/geometry_report.csv", report);
    manifest.add_output("report", em_out + "/geometry_report.csv");
    manifest.finalize();
    std::printf("%s\n", nsr::format_geometry_report(report).c_str());
  });

  // --- eval-normals ---
  auto* en = app.add_subcommand("eval-normals", "Angular error of rendered normals vs GT maps");
  std::string en_ckpt, en_scene, en_out;
  int en_stride = 1;
  bool en_overwrite = false;
  en->add_option("--checkpoint", en_ckpt, "Trainer checkpoint")->required();
  en->add_option("--scene", en_scene, "Scene directory with gt_normal/ maps")->required();
  en->add_option("--out", en_out, "Output directory")->required();
  en->add_option("--stride", en_stride, "Pixel stride (default 1)");
  en->add_flag("--overwrite", en_overwrite, "Replace existing outputs");
  en->callback([&]() {
    nsr::prepare_out_dir(en_out, en_overwrite);
    nsr::RunManifest manifest("eval-normals", en_out);
    auto ckpt = nsr::load_checkpoint<Real>(en_ckpt);
    nsr::Scene scene = load_scene_normalized(en_scene, ckpt.to_normalized);
    if (scene.gt_normals.empty())
      throw nsr::ValidationError("scene has no gt_normal/ maps: " + en_scene);
    nsr::TrainConfig cfg = nsr::TrainConfig::from_kv(nsr::KeyValueConfig::parse_text(ckpt.config_text));

    std::vector<nsr::Image> pred, gt;
    std::vector<nsr::ByteImage> valid;
    for (size_t v = 0; v < scene.views.size(); ++v) {
      const nsr::CameraView& view = scene.views[v];
      ViewRender r = render_view(ckpt.state.field, view, cfg.sampling, cfg.seed, en_stride);
      nsr::Image gtv(r.color.width(), r.color.height(), 3);
      nsr::ByteImage mask(r.color.width(), r.color.height(), 0);
      for (int y = 0; y < gtv.height(); ++y)
        for (int x = 0; x < gtv.width(); ++x) {
          int sx = x * en_stride, sy = y * en_stride;
          gtv.set_pixel3(x, y, scene.gt_normals[v].pixel3(sx, sy));
          bool ok = view.valid_mask.empty() || view.valid_mask.at(sx, sy);
          mask.at(x, y) = (ok && r.rendered.at(x, y)) ? 1 : 0;
        }
      pred.push_back(std::move(r.normal_cam));
      gt.push_back(std::move(gtv));
      valid.push_back(std::move(mask));
    }
    nsr::NormalReport report = nsr::eval_normals(pred, gt, valid);
    nsr::write_normal_report_csv(en_out + "/normal_report.csv", report);
    manifest.add_output("report", en_out + "/normal_report.csv");
    manifest.finalize();
    std::printf("%s\n", nsr::format_normal_report(report).c_str());
  });

  // --- render ---
  auto* rd = app.add_subcommand("render", "Render views from a checkpoint");
  std::string rd_ckpt, rd_scene, rd_out, rd_views = "0", rd_weights_pixels;
  bool rd_overwrite = false, rd_psnr = false;
  rd->add_option("--checkpoint", rd_ckpt, "Trainer checkpoint")->required();
  rd->add_option("--scene", rd_scene, "Scene directory (poses + references)")->required();
  rd->add_option("--out", rd_out, "Output directory")->required();
  rd->add_option("--views", rd_views, "Comma-separated view indices (default 0)");
  rd->add_flag("--psnr", rd_psnr, "Write PSNR vs the scene's reference images");
  rd->add_option("--weights-pixels", rd_weights_pixels,
                 "Dump per-ray weight profiles for \"x,y;x,y\" pixels of each view");
  rd->add_flag("--overwrite", rd_overwrite, "Replace existing outputs");
  rd->callback([&]() {
    nsr::prepare_out_dir(rd_out, rd_overwrite);
    nsr::RunManifest manifest("render", rd_out);
    auto ckpt = nsr::load_checkpoint<Real>(rd_ckpt);
    nsr::Scene scene = load_scene_normalized(rd_scene, ckpt.to_normalized);
    nsr::TrainConfig cfg = nsr::TrainConfig::from_kv(nsr::KeyValueConfig::parse_text(ckpt.config_text));
    std::vector<int> views = parse_int_list(rd_views);
    std::ofstream psnr_csv;
    if (rd_psnr) {
      psnr_csv.open(rd_out + "/psnr.csv");
      psnr_csv << "view,psnr_db\n";
    }
    for (int v : views) {
      if (v < 0 || v >= static_cast<int>(scene.views.size()))
        throw nsr::ValidationError("render: view index out of range: " + std::to_string(v));
      ViewRender r = render_view(ckpt.state.field, scene.views[v], cfg.sampling, cfg.seed);
      char name[64];
      std::snprintf(name, sizeof(name), "/render_%06d.ppm", v);
      nsr::write_ppm(rd_out + name, r.color);
      if (rd_psnr) {
        double p = nsr::psnr(r.color, scene.views[v].image);
        psnr_csv << v << "," << (std::isinf(p) ? "inf" : std::to_string(p)) << "\n";
      }
      if (!rd_weights_pixels.empty()) {
        std::snprintf(name, sizeof(name), "/weights_%06d.csv", v);
        std::ofstream wcsv(rd_out + name);
        wcsv << "view,x,y,section,depth,weight\n";
        for (const auto& px : parse_tuple_list(rd_weights_pixels)) {
          if (px.size() != 2) throw nsr::ValidationError("render: --weights-pixels wants x,y pairs");
          nsr::Ray ray = nsr::pixel_ray(scene.views[v], nsr::Vec2d(px[0] + 0.5, px[1] + 0.5));
          nsr::Rng rng = nsr::Rng::stream(cfg.seed, "weight_dump", static_cast<uint64_t>(px[1]) * 65536 + px[0]);
          auto o = nsr::render_pixel(ckpt.state.field, ray, cfg.sampling, rng);
          for (Eigen::Index i = 0; i < o.weights.size(); ++i)
            wcsv << v << "," << px[0] << "," << px[1] << "," << i << "," << o.sample_depths[i]
                 << "," << o.weights[i] << "\n";
        }
      }
    }
    manifest.add_output("renders", rd_out);
    manifest.finalize();
    std::printf("rendered %zu views to %s\n", views.size(), rd_out.c_str());
  });

  // --- dump-masks ---
  auto* dm = app.add_subcommand("dump-masks", "Export prior-mask state images and NCC scores");
  std::string dm_ckpt, dm_scene, dm_out, dm_pixels;
  bool dm_overwrite = false;
  dm->add_option("--checkpoint", dm_ckpt, "Trainer checkpoint")->required();
  dm->add_option("--scene", dm_scene, "Scene directory")->required();
  dm->add_option("--out", dm_out, "Output directory")->required();
  dm->add_option("--pixels", dm_pixels, "NCC score dump for \"view,x,y;view,x,y\" pixels");
  dm->add_flag("--overwrite", dm_overwrite, "Replace existing outputs");
  dm->callback([&]() {
    nsr::prepare_out_dir(dm_out, dm_overwrite);
    nsr::RunManifest manifest("dump-masks", dm_out);
    auto ckpt = nsr::load_checkpoint<Real>(dm_ckpt);
    nsr::Scene scene = load_scene_normalized(dm_scene, ckpt.to_normalized);
    nsr::TrainConfig cfg = nsr::TrainConfig::from_kv(nsr::KeyValueConfig::parse_text(ckpt.config_text));
    if (ckpt.state.mask.view_count() != scene.views.size())
      throw nsr::ValidationError("dump-masks: checkpoint mask does not match the scene");
    for (size_t v = 0; v < scene.views.size(); ++v) {
      char name[64];
      std::snprintf(name, sizeof(name), "/mask_%06zu.ppm", v);
      nsr::write_ppm(dm_out + name, ckpt.state.mask.to_image(static_cast<int>(v)));
    }
    if (!dm_pixels.empty()) {
      std::ofstream csv(dm_out + "/ncc_scores.csv");
      csv << "view,x,y,neighbor,status,score,indicator\n";
      for (const auto& px : parse_tuple_list(dm_pixels)) {
        if (px.size() != 3) throw nsr::ValidationError("dump-masks: --pixels wants view,x,y triples");
        int v = px[0];
        nsr::Ray ray = nsr::pixel_ray(scene.views[v], nsr::Vec2d(px[1] + 0.5, px[2] + 0.5));
        nsr::Rng rng = nsr::Rng::stream(cfg.seed, "mask_dump",
                                        static_cast<uint64_t>(v) * (1u << 24) + px[2] * 65536 + px[1]);
        auto o = nsr::render_pixel(ckpt.state.field, ray, cfg.sampling, rng);
        std::vector<int> nbrs = nsr::select_neighbor_views(scene, v, cfg.geo.neighbor_count);
        nsr::IndicatorDetail det = nsr::evaluate_indicator(
            scene, v, px[1], px[2], o.normal_raw.template cast<double>().eval(),
            static_cast<double>(o.depth), nbrs, cfg.geo);
        for (size_t j = 0; j < det.per_neighbor.size(); ++j) {
          const auto& nr = det.per_neighbor[j];
          const char* status = nr.status == nsr::NccStatus::Ok
                                   ? "ok"
                                   : (nr.status == nsr::NccStatus::OutOfBounds ? "out_of_bounds"
                                                                               : "low_variance");
          csv << v << "," << px[1] << "," << px[2] << "," << nbrs[j] << "," << status << ","
              << nr.score << "," << static_cast<int>(det.result) << "\n";
        }
      }
      manifest.add_output("ncc_scores", dm_out + "/ncc_scores.csv");
    }
    manifest.add_output("masks", dm_out);
    manifest.finalize();
    std::printf("wrote %zu mask images to %s\n", scene.views.size(), dm_out.c_str());
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const nsr::ValidationError& e) {
    std::fprintf(stderr, "error code=validation message=\"%s\"\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error code=runtime message=\"%s\"\n", e.what());
    return 3;
  }
}
