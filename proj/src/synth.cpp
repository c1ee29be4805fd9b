#include "bgtri/synth.hpp"

#include "bgtri/dataio.hpp"
#include "bgtri/error.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace bgt::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

Shape shape_from_string(const std::string& s) {
  if (s == "cube") return Shape::cube;
  if (s == "ball") return Shape::ball;
  throw ContractError("unknown shape '" + s + "' (cube, ball)");
}

Texture texture_from_string(const std::string& s) {
  if (s == "checker") return Texture::checker;
  if (s == "stripes") return Texture::stripes;
  throw ContractError("unknown texture '" + s + "' (checker, stripes)");
}

std::string to_string(Shape s) { return s == Shape::cube ? "cube" : "ball"; }
std::string to_string(Texture t) { return t == Texture::checker ? "checker" : "stripes"; }

AnalyticScene make_scene(Shape shape, Texture texture, int texels) {
  if (texels < 1) throw ContractError("texel count must be at least 1");
  AnalyticScene s;
  s.shape = shape;
  s.texture = texture;
  s.texels = texels;
  return s;
}

SurfaceParam surface_param(const AnalyticScene& scene, const Vec3& p) {
  SurfaceParam out;
  if (scene.shape == Shape::cube) {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(p[a]) > std::abs(p[axis])) axis = a;
    const int b = (axis + 1) % 3, c = (axis + 2) % 3;
    out.face = axis * 2 + (p[axis] < 0.0 ? 1 : 0);
    out.s = std::clamp(0.5 * (p[b] + 1.0), 0.0, 1.0);
    out.t = std::clamp(0.5 * (p[c] + 1.0), 0.0, 1.0);
  } else {
    const Vec3 d = p.normalized();
    double lon = std::atan2(d.y(), d.x());
    if (lon < 0.0) lon += 2.0 * std::numbers::pi;
    out.s = lon / (2.0 * std::numbers::pi);
    out.t = std::acos(std::clamp(d.z(), -1.0, 1.0)) / std::numbers::pi;
  }
  return out;
}

bool pattern_cell(const AnalyticScene& scene, const SurfaceParam& param) {
  const int n = scene.texels;
  auto cell = [](double x, int count) { return std::min(static_cast<int>(x * count), count - 1); };
  // Longitude spans twice the polar range, so the ball gets 2n columns.
  const int columns = scene.shape == Shape::ball ? 2 * n : n;
  const int i = cell(param.s, columns), j = cell(param.t, n);
  if (scene.texture == Texture::stripes)
    return (scene.shape == Shape::ball ? j : i) % 2 == 0;
  return (i + j) % 2 == 0;
}

Vec3 albedo(const AnalyticScene& scene, const Vec3& point) {
  return pattern_cell(scene, surface_param(scene, point)) ? scene.color_a : scene.color_b;
}

std::optional<double> intersect(const AnalyticScene& scene, const Vec3& o, const Vec3& d) {
  const double r = scene.size();
  if (scene.shape == Shape::ball) {
    const double b = o.dot(d), a = d.squaredNorm(), c = o.squaredNorm() - r * r;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) / a, t1 = (-b + sq) / a;
    if (t0 > 0.0) return t0;
    if (t1 > 0.0) return t1;
    return std::nullopt;
  }
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (std::abs(o[a]) > r) return std::nullopt;
      continue;
    }
    double t0 = (-r - o[a]) / d[a], t1 = (r - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far) return std::nullopt;
  if (t_near > 0.0) return t_near;
  if (t_far > 0.0) return t_far;
  return std::nullopt;
}

ReferenceImage render_reference(const AnalyticScene& scene, const Camera& cam, int supersample,
                                const Vec3& background) {
  if (supersample < 1) throw ContractError("supersampling factor must be at least 1");
  ReferenceImage out;
  out.rgb = Image(cam.width, cam.height, 3);
  out.coverage = Image(cam.width, cam.height, 1);
  const Vec3 origin = cam.center();
  const Mat3 to_world = cam.rotation.transpose();
  const double inv = 1.0 / (double(supersample) * supersample);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Vec3 sum = Vec3::Zero();
      int hits = 0;
      for (int j = 0; j < supersample; ++j)
        for (int i = 0; i < supersample; ++i) {
          const double u = x + (i + 0.5) / supersample, v = y + (j + 0.5) / supersample;
          const Vec3 dir =
              (to_world * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0)).normalized();
          const auto t = intersect(scene, origin, dir);
          if (t) {
            sum += albedo(scene, origin + *t * dir);
            ++hits;
          } else {
            sum += background;
          }
        }
      out.rgb.set_rgb(x, y, sum * inv);
      out.coverage.at(x, y) = hits * inv;
    }
  return out;
}

std::vector<Vec3> sample_surface(const AnalyticScene& scene, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&] { return double(rng() >> 11) * 0x1.0p-53; };
  std::vector<Vec3> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    if (scene.shape == Shape::ball) {
      const double z = 1.0 - 2.0 * uni(), phi = 2.0 * std::numbers::pi * uni();
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      out.emplace_back(scene.size() * Vec3(r * std::cos(phi), r * std::sin(phi), z));
    } else {
      const int face = static_cast<int>(uni() * 6.0);
      const int axis = face / 2;
      Vec3 p;
      p[axis] = face % 2 == 0 ? 1.0 : -1.0;
      p[(axis + 1) % 3] = 2.0 * uni() - 1.0;
      p[(axis + 2) % 3] = 2.0 * uni() - 1.0;
      out.push_back(scene.size() * p);
    }
  }
  return out;
}

std::vector<Camera> sphere_cameras(int count, double radius, double fov_x, int width, int height,
                                   std::uint64_t rotation_seed) {
  Mat3 rot = Mat3::Identity();
  if (rotation_seed != 0) {
    std::mt19937_64 rng(rotation_seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    rot = q.normalized().toRotationMatrix();
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 dir = rot * Vec3(r * std::cos(golden * i), r * std::sin(golden * i), z);
    cams.push_back(Camera::look_at(radius * dir, Vec3::Zero(), Vec3::UnitZ(), fov_x, width,
                                   height));
  }
  return cams;
}

namespace {

void write_split(const fs::path& dir, const std::string& split, const AnalyticScene& scene,
                 const std::vector<Camera>& cams, const DatasetSpec& spec) {
  json doc;
  doc["camera_angle_x"] = spec.fov_x;
  doc["frames"] = json::array();
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string rel = split + "/r_" + std::to_string(i);
    const ReferenceImage ref = render_reference(scene, cams[i], spec.supersample);
    Image rgba(cams[i].width, cams[i].height, 4);
    for (int p = 0; p < rgba.width * rgba.height; ++p) {
      const double a = ref.coverage.data[p];
      for (int c = 0; c < 3; ++c)
        rgba.data[4 * p + c] = a > 0.0 ? linear_to_srgb(ref.rgb.data[3 * p + c] / a) : 0.0;
      rgba.data[4 * p + 3] = a;
    }
    write_png(dir / (rel + ".png"), rgba);
    const Eigen::Matrix4d c2w = camera_to_world_gl(cams[i]);
    json m = json::array();
    for (int r = 0; r < 4; ++r) m.push_back({c2w(r, 0), c2w(r, 1), c2w(r, 2), c2w(r, 3)});
    doc["frames"].push_back({{"file_path", "./" + rel}, {"transform_matrix", m}});
  }
  std::ofstream out(dir / ("transforms_" + split + ".json"));
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << doc.dump(2) << '\n';
}

}  // namespace

void make_dataset(const fs::path& dir, const DatasetSpec& spec) {
  if (spec.n_train < 1 || spec.n_test < 0) throw ContractError("need at least one training view");
  fs::create_directories(dir);
  const AnalyticScene scene = make_scene(spec.shape, spec.texture, spec.texels);
  const auto train = sphere_cameras(spec.n_train, spec.radius, spec.fov_x, spec.width,
                                    spec.height);
  const double test_radius = spec.closeup ? kCloseupFactor * spec.radius : spec.radius;
  const auto test = sphere_cameras(spec.n_test, test_radius, spec.fov_x, spec.width, spec.height,
                                   spec.seed * 2654435761ull + 1);
  write_split(dir, "train", scene, train, spec);
  write_split(dir, "test", scene, test, spec);
  write_points(dir / "points3d.txt", sample_surface(scene, spec.point_count, spec.seed + 7));
  json desc = {{"shape", to_string(spec.shape)},
               {"texture", to_string(spec.texture)},
               {"texels", spec.texels},
               {"radius", spec.radius},
               {"closeup", spec.closeup}};
  std::ofstream out(dir / "scene.json");
  if (!out) throw IoError("cannot write scene.json in " + dir.string());
  out << desc.dump(2) << '\n';
}

AnalyticScene load_scene_description(const fs::path& dir) {
  const fs::path path = dir / "scene.json";
  std::ifstream in(path);
  if (!in) throw MissingFileError("missing " + path.string());
  try {
    const json doc = json::parse(in);
    return make_scene(shape_from_string(doc.at("shape")), texture_from_string(doc.at("texture")),
                      doc.at("texels"));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace bgt::synth
