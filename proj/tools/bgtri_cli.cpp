#include "bgtri/backward.hpp"
#include "bgtri/dataio.hpp"
#include "bgtri/error.hpp"
#include "bgtri/metrics.hpp"
#include "bgtri/render.hpp"
#include "bgtri/scene.hpp"
#include "bgtri/synth.hpp"
#include "bgtri/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  int threads = 1;
  fs::path out = "out";
};

struct SynthArgs {
  bgt::synth::DatasetSpec spec;
  std::string kind = "cube";
  std::string texture = "checker";
  double fov_deg = 40.0;
  fs::path dataset;
};

struct TrainArgs {
  fs::path dataset;
  bgt::InitOptions init{.count = 0};
  fs::path resume;
  std::map<std::string, std::string> overrides;
};

struct ViewArgs {
  fs::path checkpoint;
  fs::path dataset;
  std::string split = "test";
  double zoom = 1.0;
  double distance_scale = 1.0;
  bool no_blending = false;
  bool index_maps = false;
  bool ablation = false;
  int chamfer_samples = 20000;
};

struct StrokeArgs {
  fs::path checkpoint;
  double threshold = -1.0;
  int level = 3;
  fs::path output;
};

struct GradArgs {
  fs::path checkpoint;
  int count = 100;
  double eps = 1e-6;
  int size = 16;
  bool live_raster = false;
};

fs::path default_checkpoint(const Globals& g) { return g.out / "checkpoints" / "final.ckpt"; }

bgt::Vec3 scene_center(const bgt::Scene& scene) {
  bgt::Vec3 sum = bgt::Vec3::Zero();
  int n = 0;
  for (const auto& p : scene.primitives)
    for (const auto& c : p.geometry.points) {
      sum += c;
      ++n;
    }
  return n ? bgt::Vec3(sum / n) : bgt::Vec3::Zero();
}

/// Moves the camera along its line to the scene center by `scale`.
bgt::Camera scale_distance(const bgt::Camera& cam, const bgt::Vec3& center, double scale) {
  bgt::Camera out = cam;
  const bgt::Vec3 eye = center + scale * (cam.center() - center);
  out.translation = -cam.rotation * eye;
  return out;
}

std::vector<bgt::Camera> eval_cameras(const bgt::SceneDataset& data, const bgt::Scene& scene,
                                      const ViewArgs& a) {
  const bgt::Vec3 center = scene_center(scene);
  std::vector<bgt::Camera> cams;
  for (const auto& v : data.views) {
    bgt::Camera c = v.camera;
    if (a.distance_scale != 1.0) c = scale_distance(c, center, a.distance_scale);
    if (a.zoom != 1.0) c = c.zoomed(a.zoom);
    cams.push_back(c);
  }
  return cams;
}

bool reference_available(const fs::path& dataset) { return fs::exists(dataset / "scene.json"); }

/// Close-up targets cannot come from the stored images; they are re-rendered
/// from the analytic description when one is present.
std::vector<bgt::Image> eval_targets(const bgt::SceneDataset& data,
                                     const std::vector<bgt::Camera>& cams, const ViewArgs& a,
                                     const bgt::Vec3& background) {
  std::vector<bgt::Image> targets;
  const bool moved = a.zoom != 1.0 || a.distance_scale != 1.0;
  if (!moved) {
    for (const auto& v : data.views) targets.push_back(v.image);
    return targets;
  }
  if (!reference_available(a.dataset))
    throw bgt::ContractError("zoomed evaluation needs scene.json to re-render targets");
  const auto analytic = bgt::synth::load_scene_description(a.dataset);
  for (const auto& c : cams)
    targets.push_back(bgt::synth::render_reference(analytic, c, 4, background).rgb);
  return targets;
}

int run_synth(const Globals& g, SynthArgs a) {
  a.spec.shape = bgt::synth::shape_from_string(a.kind);
  a.spec.texture = bgt::synth::texture_from_string(a.texture);
  a.spec.fov_x = a.fov_deg * std::numbers::pi / 180.0;
  a.spec.seed = g.seed;
  const fs::path dir = a.dataset.empty() ? g.out / "dataset" : a.dataset;
  bgt::synth::make_dataset(dir, a.spec);
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

bgt::Scene initial_scene(const TrainArgs& a, const bgt::TrainConfig& config,
                         const bgt::SceneDataset& data) {
  if (!a.resume.empty()) return bgt::load_checkpoint(a.resume);
  bgt::InitOptions init = a.init;
  if (init.count <= 0) init.count = config.max_primitives / 2;
  init.seed = config.seed;
  return bgt::initialize_scene(data, bgt::read_points(a.dataset / "points3d.txt"), init);
}

int run_train(const Globals& g, const TrainArgs& a) {
  bgt::TrainConfig config;
  if (!g.config.empty()) bgt::load_config_file(config, g.config);
  config.seed = g.seed;
  config.threads = g.threads;
  for (const auto& [key, value] : a.overrides) bgt::set_config_value(config, key, value);
  config.validate();
  bgt::LoadOptions load;
  load.background = config.background;
  const auto data = bgt::load_dataset(a.dataset, "train", load);
  bgt::Scene scene = initial_scene(a, config, data);
  bgt::TrainHooks hooks;
  hooks.out_dir = g.out;
  hooks.on_log = [](const bgt::TrainLogRow& r) {
    std::printf("iter %d loss %.6f l2 %.6f psnr %.2f primitives %d\n", r.iteration, r.loss, r.l2,
                r.psnr, r.primitives);
    std::fflush(stdout);
  };
  const auto result = bgt::train(std::move(scene), data, config, hooks);
  std::printf("initial_l2 %.6g final_l2 %.6g primitives %zu\n", result.initial_l2,
              result.final_l2, result.scene.primitives.size());
  return 0;
}

int run_render(const Globals& g, ViewArgs a) {
  if (a.checkpoint.empty()) a.checkpoint = default_checkpoint(g);
  const bgt::Scene scene = bgt::load_checkpoint(a.checkpoint);
  bgt::LoadOptions load;
  load.background = scene.background;
  const auto data = bgt::load_dataset(a.dataset, a.split, load);
  const auto cams = eval_cameras(data, scene, a);
  const fs::path dir = g.out / "renders" / a.split;
  fs::create_directories(dir);
  bgt::RenderOptions opts;
  opts.blending = !a.no_blending;
  opts.threads = g.threads;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto pass = bgt::render(scene, cams[i], opts);
    bgt::Image out = pass.image();
    for (double& v : out.data) v = bgt::linear_to_srgb(std::clamp(v, 0.0, 1.0));
    const std::string stem = fs::path(data.views[i].name).filename().string();
    bgt::write_png(dir / (stem + ".png"), out);
    if (a.index_maps) {
      bgt::write_index_png(dir / (stem + "_id.png"), pass.buffers);
      bgt::write_boundary_csv(dir / (stem + "_boundary.csv"), pass.buffers);
    }
  }
  std::cout << "rendered " << cams.size() << " views to " << dir.string() << '\n';
  return 0;
}

json image_metrics(const bgt::Scene& scene, const std::vector<bgt::Camera>& cams,
                   const std::vector<bgt::Image>& targets, bool blending, int threads) {
  bgt::RenderOptions opts;
  opts.blending = blending;
  opts.threads = threads;
  double psnr = 0.0, ssim = 0.0, l2 = 0.0, sharp = 0.0;
  int sharp_views = 0;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto pass = bgt::render(scene, cams[i], opts);
    const bgt::Image img = pass.image();
    psnr += bgt::psnr(img, targets[i]);
    ssim += bgt::ssim(img, targets[i]);
    l2 += bgt::mse(img, targets[i]);
    std::vector<std::uint8_t> band(img.width * img.height, 0);
    for (const auto& b : pass.buffers.boundary) band[b.py * img.width + b.px] = 1;
    const bool any = std::any_of(band.begin(), band.end(), [](auto v) { return v != 0; });
    if (any) {
      sharp += bgt::edge_sharpness(img, band);
      ++sharp_views;
    }
  }
  const double n = std::max<std::size_t>(cams.size(), 1);
  return {{"psnr", psnr / n},
          {"ssim", ssim / n},
          {"l2", l2 / n},
          {"edge_sharpness", sharp_views ? sharp / sharp_views : 0.0}};
}

int run_eval(const Globals& g, ViewArgs a) {
  if (a.checkpoint.empty()) a.checkpoint = default_checkpoint(g);
  const bgt::Scene scene = bgt::load_checkpoint(a.checkpoint);
  bgt::LoadOptions load;
  load.background = scene.background;
  const auto data = bgt::load_dataset(a.dataset, a.split, load);
  const auto cams = eval_cameras(data, scene, a);
  const auto targets = eval_targets(data, cams, a, scene.background);
  json out = {{"checkpoint", a.checkpoint.string()},
              {"split", a.split},
              {"views", cams.size()},
              {"primitives", scene.primitives.size()},
              {"parameters", scene.parameter_count()},
              {"zoom", a.zoom},
              {"distance_scale", a.distance_scale}};
  out["blending"] = image_metrics(scene, cams, targets, !a.no_blending, g.threads);
  if (a.ablation) out["no_blending"] = image_metrics(scene, cams, targets, false, g.threads);
  if (reference_available(a.dataset) && a.chamfer_samples > 0) {
    const auto analytic = bgt::synth::load_scene_description(a.dataset);
    std::vector<bgt::Vec3> fitted;
    const int per = std::max(1, a.chamfer_samples / int(std::max<std::size_t>(1, scene.primitives.size())));
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      const auto pts = bgt::sample_surface_points(scene.primitives[i], per, g.seed + i);
      fitted.insert(fitted.end(), pts.begin(), pts.end());
    }
    const auto truth = bgt::synth::sample_surface(analytic, a.chamfer_samples, g.seed + 1);
    const double cd = bgt::chamfer(fitted, truth);
    out["chamfer"] = cd;
    out["chamfer_relative"] = cd / analytic.size();
  }
  fs::create_directories(g.out);
  std::ofstream f(g.out / "metrics.json");
  if (!f) throw bgt::IoError("cannot write " + (g.out / "metrics.json").string());
  f << out.dump(2) << '\n';
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_strokes(const Globals& g, StrokeArgs a) {
  if (a.checkpoint.empty()) a.checkpoint = default_checkpoint(g);
  const bgt::Scene scene = bgt::load_checkpoint(a.checkpoint);
  const double threshold =
      a.threshold >= 0.0 ? a.threshold : 10.0 * bgt::median_face_area(scene, a.level);
  const fs::path path = a.output.empty() ? g.out / "strokes.obj" : a.output;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const int segments = bgt::export_strokes(scene, threshold, path, a.level);
  std::cout << "wrote " << segments << " segments to " << path.string() << " (threshold "
            << threshold << ")\n";
  return 0;
}

int run_check_grad(const Globals& g, const GradArgs& a) {
  bgt::Scene scene;
  bgt::Camera cam;
  if (a.checkpoint.empty()) {
    std::tie(scene, cam) = bgt::gradient_check_scene(g.seed, a.size);
  } else {
    scene = bgt::load_checkpoint(a.checkpoint);
    cam = bgt::Camera::look_at(bgt::Vec3(0.0, -4.0, 3.0), scene_center(scene), bgt::Vec3::UnitZ(),
                               0.7, a.size, a.size);
  }
  bgt::Image target(a.size, a.size, 3);
  for (std::size_t i = 0; i < target.data.size(); ++i) target.data[i] = 0.5 + 0.4 * std::sin(0.7 * i);
  const bgt::LossFn loss_with_grad = [&](const bgt::Image& img, bgt::Image* grad) {
    auto r = bgt::photometric_loss(img, target, 0.2, grad != nullptr);
    if (grad) *grad = std::move(r.grad);
    return r.loss;
  };
  bgt::FdOptions fd;
  fd.eps = a.eps;
  fd.freeze_raster = !a.live_raster;
  bgt::RenderOptions opts;
  opts.threads = g.threads;
  const auto refs = bgt::sample_parameters(scene, a.count, g.seed);
  const auto entries = bgt::finite_difference_check(scene, cam, loss_with_grad, refs, fd, opts);
  fs::create_directories(g.out / "logs");
  const fs::path csv = g.out / "logs" / "check_grad.csv";
  std::ofstream f(csv);
  if (!f) throw bgt::IoError("cannot write " + csv.string());
  f << "primitive,group,index,analytic,numeric,rel_error,excluded,pass\n";
  f.precision(12);
  int checked = 0, failed = 0;
  for (const auto& e : entries) {
    const bool ok = e.excluded || bgt::fd_passes(e, fd);
    if (!e.excluded) ++checked;
    if (!ok) ++failed;
    f << e.param.primitive << ',' << bgt::to_string(e.param.group) << ',' << e.param.index << ','
      << e.analytic << ',' << e.numeric << ',' << e.rel_error << ',' << e.excluded << ',' << ok
      << '\n';
  }
  std::cout << "checked " << checked << " excluded " << entries.size() - checked << " failed "
            << failed << '\n';
  if (failed > 0)
    throw bgt::NumericError(std::to_string(failed) + " of " + std::to_string(checked) +
                            " gradients disagree with finite differences");
  return 0;
}

std::string flag_name(const std::string& key) {
  std::string out = key;
  std::replace(out.begin(), out.end(), '_', '-');
  return "--" + out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bezier Gaussian triangle reconstruction toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "Training config file (key = value lines)")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic toy dataset");
  synth->add_option("--kind", sa.kind, "cube or ball")->capture_default_str();
  synth->add_option("--texture", sa.texture, "checker or stripes")->capture_default_str();
  synth->add_option("--texels", sa.spec.texels, "Pattern cells per face")->capture_default_str();
  synth->add_option("--n-train", sa.spec.n_train, "Training views")->capture_default_str();
  synth->add_option("--n-test", sa.spec.n_test, "Test views")->capture_default_str();
  synth->add_option("--radius", sa.spec.radius, "Camera distance")->capture_default_str();
  synth->add_option("--fov", sa.fov_deg, "Horizontal field of view in degrees")
      ->capture_default_str();
  synth->add_option("--width", sa.spec.width, "Image width")->capture_default_str();
  synth->add_option("--height", sa.spec.height, "Image height")->capture_default_str();
  synth->add_option("--supersample", sa.spec.supersample, "Samples per pixel side")
      ->capture_default_str();
  synth->add_option("--points", sa.spec.point_count, "Surface samples in points3d.txt")
      ->capture_default_str();
  synth->add_flag("--closeup", sa.spec.closeup, "Place test views at 40% of the distance");
  synth->add_option("--dataset", sa.dataset, "Dataset directory (default <out>/dataset)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit a scene to a dataset");
  train->add_option("--dataset", ta.dataset, "Dataset directory")->required();
  train->add_option("--init", ta.init.kind, "points or cube")->capture_default_str();
  train->add_option("--init-count", ta.init.count, "Initial primitives (default half the cap)");
  train->add_option("--init-coverage", ta.init.coverage,
                    "Initial triangle area over the estimated surface area")
      ->capture_default_str();
  train->add_option("--init-footprint", ta.init.footprint_px,
                    "Initial sub-primitive scale in pixels")
      ->capture_default_str();
  train->add_flag("--init-fit-orientation", ta.init.fit_orientation,
                  "Orient point triangles along the fitted local plane");
  train->add_option("--resume", ta.resume, "Start from a checkpoint");
  const bgt::TrainConfig defaults;
  for (const auto& key : bgt::config_keys()) {
    if (key == "seed" || key == "threads") continue;
    train->add_option_function<std::string>(
        flag_name(key), [&ta, key](const std::string& v) { ta.overrides[key] = v; },
        "Config " + key + " (default " + bgt::get_config_value(defaults, key) + ")");
  }

  ViewArgs ra;
  auto* render = app.add_subcommand("render", "Render dataset cameras from a checkpoint");
  ViewArgs ea;
  auto* eval = app.add_subcommand("eval", "Write metrics.json for a checkpoint");
  for (auto [cmd, args] : {std::pair{render, &ra}, std::pair{eval, &ea}}) {
    cmd->add_option("--checkpoint", args->checkpoint,
                    "Checkpoint (default <out>/checkpoints/final.ckpt)");
    cmd->add_option("--dataset", args->dataset, "Dataset directory")->required();
    cmd->add_option("--split", args->split, "Manifest split")->capture_default_str();
    cmd->add_option("--zoom", args->zoom, "Focal length multiplier")->capture_default_str();
    cmd->add_option("--distance-scale", args->distance_scale,
                    "Camera distance multiplier toward the scene center")
        ->capture_default_str();
    cmd->add_flag("--no-blending", args->no_blending, "Disable the boundary blending term");
  }
  render->add_flag("--index-maps", ra.index_maps, "Also write index maps and boundary CSVs");
  eval->add_flag("--ablation", ea.ablation, "Also report metrics without boundary blending");
  eval->add_option("--chamfer-samples", ea.chamfer_samples,
                   "Surface samples for Chamfer distance (0 disables)")
      ->capture_default_str();

  StrokeArgs xa;
  auto* strokes = app.add_subcommand("export-strokes", "Export small tessellated faces as lines");
  strokes->add_option("--checkpoint", xa.checkpoint, "Checkpoint");
  strokes->add_option("--threshold", xa.threshold,
                      "Face area threshold (default 10x the median face area)");
  strokes->add_option("--level", xa.level, "Tessellation level")->capture_default_str();
  strokes->add_option("--output", xa.output, "Output file (default <out>/strokes.obj)");

  GradArgs ga;
  auto* grad = app.add_subcommand("check-grad", "Compare analytic gradients to finite differences");
  grad->add_option("--checkpoint", ga.checkpoint, "Checkpoint (default: built-in 3-patch scene)");
  grad->add_option("--count", ga.count, "Parameters to sample")->capture_default_str();
  grad->add_option("--eps", ga.eps, "Central difference step")->capture_default_str();
  grad->add_option("--size", ga.size, "Image side in pixels")->capture_default_str();
  grad->add_flag("--live-raster", ga.live_raster, "Re-rasterize for every perturbation");

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error code=usage message=\"" << e.what() << "\"\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return run_synth(g, sa);
    if (*train) return run_train(g, ta);
    if (*render) return run_render(g, ra);
    if (*eval) return run_eval(g, ea);
    if (*strokes) return run_strokes(g, xa);
    if (*grad) return run_check_grad(g, ga);
  } catch (const bgt::Error& e) {
    std::cerr << "error code=" << e.code() << " message=" << json(e.what()).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error code=internal message=" << json(e.what()).dump() << '\n';
    return 1;
  }
  return 2;
}
