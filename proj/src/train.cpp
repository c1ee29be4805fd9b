#include "bgtri/train.hpp"

#include "bgtri/error.hpp"
#include "bgtri/metrics.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace bgt {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("lambda must lie in [0, 1]");
  if (iterations < 0) throw ContractError("iterations must be non-negative");
  if (split_interval <= 0) throw ContractError("split_interval must be positive");
  for (double t : {tau_grad, tau_edge, tau_visibility, tau_texels, tau_area, tau_aspect})
    if (!(t > 0.0)) throw ContractError("split/prune thresholds must be positive");
  if (max_primitives <= 0) throw ContractError("max_primitives must be positive");
  if (!(boundary_scale > 0.0)) throw ContractError("boundary_scale must be positive");
  if (threads <= 0) throw ContractError("threads must be positive");
  if (log_interval <= 0) throw ContractError("log_interval must be positive");
}

namespace {

struct ConfigField {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw FormatError("bad number '" + v + "'");
  return out;
}

long long parse_int(const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw FormatError("bad integer '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw FormatError("bad boolean '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
ConfigField number_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>)
              c.*member = parse_double(v);
            else
              c.*member = static_cast<T>(parse_int(v));
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

const std::vector<std::pair<std::string, ConfigField>>& config_table() {
  static const std::vector<std::pair<std::string, ConfigField>> table = {
      {"iterations", number_field(&TrainConfig::iterations)},
      {"lambda", number_field(&TrainConfig::lambda)},
      {"split_interval", number_field(&TrainConfig::split_interval)},
      {"split_until", number_field(&TrainConfig::split_until)},
      {"tau_grad", number_field(&TrainConfig::tau_grad)},
      {"tau_edge", number_field(&TrainConfig::tau_edge)},
      {"tau_visibility", number_field(&TrainConfig::tau_visibility)},
      {"tau_texels", number_field(&TrainConfig::tau_texels)},
      {"tau_area", number_field(&TrainConfig::tau_area)},
      {"tau_aspect", number_field(&TrainConfig::tau_aspect)},
      {"lr_position", number_field(&TrainConfig::lr_position)},
      {"lr_position_final", number_field(&TrainConfig::lr_position_final)},
      {"lr_color", number_field(&TrainConfig::lr_color)},
      {"lr_rotation", number_field(&TrainConfig::lr_rotation)},
      {"lr_scaling", number_field(&TrainConfig::lr_scaling)},
      {"lr_sh", number_field(&TrainConfig::lr_sh)},
      {"max_primitives", number_field(&TrainConfig::max_primitives)},
      {"seed", number_field(&TrainConfig::seed)},
      {"boundary_scale", number_field(&TrainConfig::boundary_scale)},
      {"background",
       {[](TrainConfig& c, const std::string& v) {
          std::stringstream ss(v);
          std::string part;
          std::vector<double> vals;
          while (std::getline(ss, part, ',')) vals.push_back(parse_double(part));
          if (vals.size() == 1) vals.assign(3, vals[0]);
          if (vals.size() != 3) throw FormatError("expected r,g,b");
          c.background = Vec3(vals[0], vals[1], vals[2]);
        },
        [](const TrainConfig& c) {
          return fmt(c.background[0]) + "," + fmt(c.background[1]) + "," + fmt(c.background[2]);
        }}},
      {"blending",
       {[](TrainConfig& c, const std::string& v) { c.blending = parse_bool(v); },
        [](const TrainConfig& c) { return std::string(c.blending ? "true" : "false"); }}},
      {"threads", number_field(&TrainConfig::threads)},
      {"log_interval", number_field(&TrainConfig::log_interval)},
      {"checkpoint_interval", number_field(&TrainConfig::checkpoint_interval)},
      {"float32_storage",
       {[](TrainConfig& c, const std::string& v) {
          c.float32_storage = parse_bool(v);
        },
        [](const TrainConfig& c) { return std::string(c.float32_storage ? "true" : "false"); }}},
  };
  return table;
}

const ConfigField& field(const std::string& key) {
  for (const auto& [name, f] : config_table())
    if (name == key) return f;
  throw FormatError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : config_table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  const ConfigField& f = field(key);
  try {
    f.set(config, trim(value));
  } catch (const FormatError& e) {
    throw FormatError("config key " + key + ": " + e.what());
  }
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  return field(key).get(config);
}

void load_config_file(TrainConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open config file " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

LossResult photometric_loss(const Image& render, const Image& target, double lambda,
                            bool want_grad) {
  if (!render.same_shape(target)) throw DimensionError("render and target shapes differ");
  LossResult out;
  out.l2 = mse(render, target);
  Image d_ssim;
  const double s = ssim_with_gradient(render, target, want_grad ? &d_ssim : nullptr);
  out.dssim = 0.5 * (1.0 - s);
  out.loss = (1.0 - lambda) * out.l2 + lambda * out.dssim;
  if (want_grad) {
    out.grad = Image(render.width, render.height, render.channels);
    const double n = static_cast<double>(render.data.size());
    for (std::size_t i = 0; i < render.data.size(); ++i)
      out.grad.data[i] = (1.0 - lambda) * 2.0 * (render.data[i] - target.data[i]) / n -
                         lambda * 0.5 * d_ssim.data[i];
  }
  return out;
}

AdamState AdamState::zeros_like(const Scene& scene) {
  AdamState s;
  s.m = GradientBuffers::zeros_like(scene);
  s.v = GradientBuffers::zeros_like(scene);
  return s;
}

LearningRates learning_rates(const TrainConfig& config, double extent, int iteration) {
  const double progress =
      config.iterations > 0 ? std::clamp(double(iteration) / config.iterations, 0.0, 1.0) : 0.0;
  LearningRates r{};
  r[static_cast<int>(ParamGroup::position)] =
      config.lr_position * extent * std::pow(config.lr_position_final, progress);
  r[static_cast<int>(ParamGroup::color)] = config.lr_color;
  r[static_cast<int>(ParamGroup::rotation)] = config.lr_rotation;
  r[static_cast<int>(ParamGroup::scaling)] = config.lr_scaling;
  r[static_cast<int>(ParamGroup::sh)] = config.lr_sh;
  return r;
}

void adam_step(Scene& scene, const GradientBuffers& grads, AdamState& state,
               const LearningRates& rates, bool float32_storage) {
  if (grads.primitives.size() != scene.primitives.size() ||
      state.m.primitives.size() != scene.primitives.size())
    throw DimensionError("gradient/optimizer state does not match the scene");
  grads.check_finite();
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, double(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, double(state.step));
  for (std::size_t p = 0; p < scene.primitives.size(); ++p) {
    Primitive& prim = scene.primitives[p];
    for (ParamGroup g : kParamGroups) {
      auto values = params(prim, g);
      const auto grad = grads.primitives[p][g];
      auto m = state.m.primitives[p][g];
      auto v = state.v.primitives[p][g];
      const double lr = rates[static_cast<int>(g)];
      for (std::size_t i = 0; i < values.size(); ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * grad[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        values[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      }
    }
    for (double& c : params(prim, ParamGroup::color)) c = std::clamp(c, 0.0, 1.0);
    for (int t = 0; t < prim.rotation.texel_count(); ++t) {
      auto q = prim.rotation.texel(t);
      double norm = 0.0;
      for (double c : q) norm += c * c;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (double& c : q) c /= norm;
      } else {
        q[0] = 1.0;
      }
    }
    if (float32_storage)
      for (ParamGroup g : kParamGroups)
        for (double& x : params(prim, g)) x = static_cast<double>(static_cast<float>(x));
  }
}

Image edge_map(const Image& target) { return sobel_magnitude(grayscale(target, 255.0)); }

void accumulate_split_stats(Scene& scene, const GradientBuffers& grads,
                            const RasterBuffers& buffers, const Image& edges) {
  const std::size_t n = scene.primitives.size();
  if (grads.primitives.size() != n) throw DimensionError("gradient buffers do not match scene");
  if (edges.width != buffers.width || edges.height != buffers.height || edges.channels != 1)
    throw DimensionError("edge map does not match the raster buffers");
  std::vector<int> pixels(n, 0);
  std::vector<double> edge(n, 0.0);
  for (std::size_t pix = 0; pix < buffers.id.size(); ++pix) {
    const int id = buffers.id[pix];
    if (id < 0) continue;
    ++pixels[id];
    edge[id] += edges.data[pix];
    auto& texels = scene.primitives[id].stats.visibility_texels;
    if (texels.empty()) texels.assign(triangular_texel_count(kVisibilityResolution), 0);
    texels[visibility_texel(buffers.uv[pix])] = 1;
  }
  for (std::size_t p = 0; p < n; ++p) {
    PrimitiveStats& s = scene.primitives[p].stats;
    ++s.observed_views;
    if (pixels[p] == 0) continue;
    ++s.visible_views;
    s.grad_norm_sum += grads.primitives[p].mean_position_norm();
    ++s.grad_samples;
    s.edge_sum += edge[p] / pixels[p];
    ++s.edge_views;
  }
}

namespace {

Vec4 resample_rotation(const Primitive& parent, const ControlNet& child_geometry,
                       const Barycentric& parent_bc, const Barycentric& child_bc) {
  const auto raw = interpolate_texels(parent.rotation, parent_bc);
  Vec4 q(raw[0], raw[1], raw[2], raw[3]);
  const double norm = q.norm();
  q = norm > 0.0 ? Vec4(q / norm) : Vec4(1, 0, 0, 0);
  const SurfaceFrame fp = tangent_frame(parent.geometry, parent_bc);
  const SurfaceFrame fc = tangent_frame(child_geometry, child_bc);
  if (fp.degenerate || fc.degenerate) return q;
  // Keep F_child * Q_child equal to F_parent * Q_parent.
  const Mat3 m = fc.frame.transpose() * fp.frame * quaternion_to_matrix(q);
  const Eigen::Quaterniond e(m);
  Vec4 out(e.w(), e.x(), e.y(), e.z());
  if (out.dot(q) < 0.0) out = -out;
  return out;
}

}  // namespace

std::array<Primitive, 4> split_primitive(const Primitive& prim, Scene& scene) {
  const auto nets = subdivide_4(prim.geometry);
  const auto& subs = midpoint_subtriangles();
  std::array<Primitive, 4> children;
  for (int c = 0; c < 4; ++c) {
    Primitive& child = children[c];
    child.id = scene.next_id++;
    child.geometry = nets[c];
    child.color = restrict_net(prim.color, subs[c]);
    child.rotation = prim.rotation;
    child.scaling = prim.scaling;
    child.sh = prim.sh;
    for (AttributeKind kind : {AttributeKind::rotation, AttributeKind::scaling, AttributeKind::sh}) {
      AttributeMap& map = child.map(kind);
      const int r = map.resolution;
      if (r == 1) continue;
      for (int y = 0; y < r; ++y)
        for (int x = 0; x + y < r; ++x) {
          const double v = double(x) / (r - 1), w = double(y) / (r - 1);
          const Barycentric cbc{std::max(0.0, 1.0 - v - w), v, w};
          const Barycentric pbc = subs[c].to_parent(cbc);
          auto dst = map.texel(triangular_texel_index(r, x, y));
          if (kind == AttributeKind::rotation) {
            const Vec4 q = resample_rotation(prim, child.geometry, pbc, cbc);
            for (int k = 0; k < 4; ++k) dst[k] = q[k];
          } else {
            const auto value = interpolate_texels(prim.map(kind), pbc);
            std::copy(value.begin(), value.end(), dst.begin());
          }
        }
    }
    child.stats.reset();
  }
  return children;
}

SplitReport split_and_prune(Scene& scene, const TrainConfig& config, std::mt19937_64& rng) {
  SplitReport report;
  const int n = static_cast<int>(scene.primitives.size());
  std::vector<char> keep(n, 1);
  for (int p = 0; p < n; ++p) {
    const Primitive& prim = scene.primitives[p];
    const PrimitiveStats& s = prim.stats;
    bool prune = approximate_area(prim.geometry) < config.tau_area ||
                 aspect_ratio(prim.geometry) > config.tau_aspect;
    if (s.observed_views > 0)
      prune = prune || s.visibility_ratio() < config.tau_visibility ||
              s.visible_texel_ratio() < config.tau_texels;
    keep[p] = !prune;
  }
  const int survivors = static_cast<int>(std::count(keep.begin(), keep.end(), 1));
  if (survivors == 0 && n > 0) throw ContractError("pruning would remove every primitive");
  report.pruned = n - survivors;

  std::vector<int> candidates;
  for (int p = 0; p < n; ++p) {
    if (!keep[p]) continue;
    const PrimitiveStats& s = scene.primitives[p].stats;
    if (s.mean_grad_norm() > config.tau_grad || s.mean_edge() > config.tau_edge)
      candidates.push_back(p);
  }
  // Each split adds three primitives; whole candidates keep the surface watertight.
  const int allowed = std::max(0, (config.max_primitives - survivors) / 3);
  if (static_cast<int>(candidates.size()) > allowed) {
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(allowed);
    std::sort(candidates.begin(), candidates.end());
  }
  std::vector<char> split(n, 0);
  for (int p : candidates) split[p] = 1;
  report.split = static_cast<int>(candidates.size());

  std::vector<Primitive> next;
  next.reserve(survivors + 3 * candidates.size());
  for (int p = 0; p < n; ++p) {
    if (!keep[p]) continue;
    if (split[p]) {
      for (Primitive& child : split_primitive(scene.primitives[p], scene)) {
        next.push_back(std::move(child));
        report.source.push_back(-1);
      }
    } else {
      next.push_back(std::move(scene.primitives[p]));
      report.source.push_back(p);
    }
  }
  scene.primitives = std::move(next);
  for (Primitive& prim : scene.primitives) prim.stats.reset();
  return report;
}

void remap_state(AdamState& state, const Scene& scene, const SplitReport& report) {
  AdamState next = AdamState::zeros_like(scene);
  next.step = state.step;
  for (std::size_t i = 0; i < report.source.size(); ++i) {
    const int src = report.source[i];
    if (src < 0) continue;
    next.m.primitives[i] = std::move(state.m.primitives[src]);
    next.v.primitives[i] = std::move(state.v.primitives[src]);
  }
  state = std::move(next);
}

double scene_extent(const SceneDataset& data) {
  if (data.views.empty()) return 1.0;
  Vec3 mean = Vec3::Zero();
  for (const View& v : data.views) mean += v.camera.center();
  mean /= double(data.views.size());
  double r = 0.0;
  for (const View& v : data.views) r = std::max(r, (v.camera.center() - mean).norm());
  return r > 0.0 ? 1.1 * r : 1.0;
}

double pixel_footprint(const SceneDataset& data, const Vec3& center) {
  if (data.views.empty()) throw ContractError("dataset has no views");
  std::vector<double> sizes;
  for (const View& v : data.views) sizes.push_back((v.camera.center() - center).norm() / v.camera.fx);
  std::nth_element(sizes.begin(), sizes.begin() + sizes.size() / 2, sizes.end());
  return sizes[sizes.size() / 2];
}

Scene initialize_scene(const SceneDataset& data, std::span<const Vec3> points,
                       const InitOptions& options) {
  if (points.empty()) throw ContractError("initialization needs a point cloud");
  if (options.count < 1) throw ContractError("initial primitive count must be >= 1");
  if (!(options.footprint_px > 0.0)) throw ContractError("footprint must be positive");
  Vec3 centroid = Vec3::Zero(), lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    centroid += p;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  centroid /= double(points.size());
  Scene scene;
  if (options.kind == "points") {
    if (!(options.coverage > 0.0)) throw ContractError("coverage must be positive");
    const double area = estimate_surface_area(points);
    const double size =
        std::sqrt(options.coverage * area / (options.count * std::sqrt(3.0) / 4.0));
    scene = init_from_point_cloud(points, options.count, size, options.seed,
                                  options.fit_orientation);
  } else if (options.kind == "cube") {
    int n = 1;
    while (12 * (n + 1) * (n + 1) <= options.count) ++n;
    scene = init_from_cube(0.5 * (lo + hi), (hi - lo).maxCoeff(), n);
  } else {
    throw ContractError("unknown init '" + options.kind + "' (points, cube)");
  }
  scene.set_footprint(options.footprint_px * pixel_footprint(data, centroid));
  return scene;
}

double dataset_l2(const Scene& scene, const SceneDataset& data, const RenderOptions& options) {
  if (data.views.empty()) return 0.0;
  double sum = 0.0;
  for (const View& v : data.views) sum += mse(render(scene, v.camera, options).image(), v.image);
  return sum / data.views.size();
}

TrainResult train(Scene scene, const SceneDataset& data, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  if (data.views.empty()) throw ContractError("training needs at least one view");
  scene.background = config.background;
  scene.boundary_scale = config.boundary_scale;
  scene.validate();
  for (Primitive& p : scene.primitives) p.stats.reset();

  RenderOptions ropts;
  ropts.blending = config.blending;
  ropts.threads = config.threads;

  TrainResult result;
  result.state = AdamState::zeros_like(scene);
  if (hooks.measure_l2) result.initial_l2 = dataset_l2(scene, data, ropts);

  const double extent = scene_extent(data);
  std::vector<Image> edges;
  edges.reserve(data.views.size());
  for (const View& v : data.views) edges.push_back(edge_map(v.image));

  std::filesystem::path ckpt_dir, log_dir;
  std::ofstream log_file;
  if (!hooks.out_dir.empty()) {
    ckpt_dir = hooks.out_dir / "checkpoints";
    log_dir = hooks.out_dir / "logs";
    std::filesystem::create_directories(ckpt_dir);
    std::filesystem::create_directories(log_dir);
    log_file.open(log_dir / "train.csv");
    if (!log_file) throw IoError("cannot write " + (log_dir / "train.csv").string());
    log_file << "iteration,loss,l2,dssim,primitive_count,psnr_running\n";
    log_file.precision(10);
  }

  std::mt19937_64 rng(config.seed);
  std::vector<int> order(data.views.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  double sum_loss = 0.0, sum_l2 = 0.0, sum_dssim = 0.0, sum_psnr = 0.0;
  int window = 0;

  for (int it = 1; it <= config.iterations; ++it) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const int vi = order[cursor++];
    const View& view = data.views[vi];
    const ForwardPass pass = render(scene, view.camera, ropts);
    const LossResult loss = photometric_loss(pass.image(), view.image, config.lambda);
    const GradientBuffers grads = backward(scene, view.camera, pass, loss.grad, ropts);
    accumulate_split_stats(scene, grads, pass.buffers, edges[vi]);
    adam_step(scene, grads, result.state, learning_rates(config, extent, it - 1),
              config.float32_storage);

    sum_loss += loss.loss;
    sum_l2 += loss.l2;
    sum_dssim += loss.dssim;
    sum_psnr += loss.l2 > 0.0 ? -10.0 * std::log10(loss.l2) : 100.0;
    ++window;
    if (it % config.log_interval == 0 || it == config.iterations) {
      TrainLogRow row{it,       sum_loss / window, sum_l2 / window, sum_dssim / window,
                      static_cast<int>(scene.primitives.size()), sum_psnr / window};
      result.log.push_back(row);
      if (log_file)
        log_file << row.iteration << ',' << row.loss << ',' << row.l2 << ',' << row.dssim << ','
                 << row.primitives << ',' << row.psnr << '\n';
      if (hooks.on_log) hooks.on_log(row);
      sum_loss = sum_l2 = sum_dssim = sum_psnr = 0.0;
      window = 0;
    }

    if (it % config.split_interval == 0 && it <= config.split_until && it < config.iterations) {
      const SplitReport report = split_and_prune(scene, config, rng);
      remap_state(result.state, scene, report);
    }
    if (!ckpt_dir.empty() && config.checkpoint_interval > 0 &&
        it % config.checkpoint_interval == 0)
      save_checkpoint(scene, &result.state, ckpt_dir / ("iter_" + std::to_string(it) + ".ckpt"));
  }

  if (hooks.measure_l2) result.final_l2 = dataset_l2(scene, data, ropts);
  if (!ckpt_dir.empty()) save_checkpoint(scene, &result.state, ckpt_dir / "final.ckpt");
  result.scene = std::move(scene);
  return result;
}

}  // namespace bgt
