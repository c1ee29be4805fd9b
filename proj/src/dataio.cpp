#include "bgtri/dataio.hpp"

#include "bgtri/error.hpp"
#include "bgtri/train.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace bgt {

namespace fs = std::filesystem;
using json = nlohmann::json;

double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

Image read_png(const fs::path& path) {
  if (!fs::exists(path)) throw MissingFileError("missing image " + path.string());
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  int channels = 0;
  switch (img.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) {
    case 0: img.format = PNG_FORMAT_GRAY; channels = 1; break;
    case PNG_FORMAT_FLAG_ALPHA: img.format = PNG_FORMAT_GA; channels = 2; break;
    case PNG_FORMAT_FLAG_COLOR: img.format = PNG_FORMAT_RGB; channels = 3; break;
    default: img.format = PNG_FORMAT_RGBA; channels = 4; break;
  }
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0;
  return out;
}

void write_png(const fs::path& path, const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = image.width;
  img.height = image.height;
  switch (image.channels) {
    case 1: img.format = PNG_FORMAT_GRAY; break;
    case 3: img.format = PNG_FORMAT_RGB; break;
    case 4: img.format = PNG_FORMAT_RGBA; break;
    default: throw DimensionError("PNG output needs 1, 3 or 4 channels");
  }
  std::vector<png_byte> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
}

Camera camera_from_pose(const Eigen::Matrix4d& c2w, bool opengl, double camera_angle_x,
                        int width, int height) {
  Mat3 rot = c2w.block<3, 3>(0, 0);
  if (opengl) rot = rot * Vec3(1, -1, -1).asDiagonal();
  const Vec3 eye = c2w.block<3, 1>(0, 3);
  Camera cam;
  cam.rotation = rot.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = width / (2.0 * std::tan(0.5 * camera_angle_x));
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

Eigen::Matrix4d camera_to_world_gl(const Camera& cam) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = cam.rotation.transpose() * Vec3(1, -1, -1).asDiagonal();
  m.block<3, 1>(0, 3) = cam.center();
  return m;
}

SceneDataset load_dataset(const fs::path& dir, const std::string& split,
                          const LoadOptions& options) {
  const fs::path manifest = dir / ("transforms_" + split + ".json");
  if (!fs::exists(manifest)) throw MissingFileError("missing manifest " + manifest.string());
  json doc;
  {
    std::ifstream in(manifest);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(manifest.string() + ": " + e.what());
    }
  }
  auto field_error = [&](const std::string& field) {
    return FormatError(manifest.string() + ": field '" + field + "' missing or malformed");
  };
  if (!doc.contains("camera_angle_x") || !doc["camera_angle_x"].is_number())
    throw field_error("camera_angle_x");
  if (!doc.contains("frames") || !doc["frames"].is_array()) throw field_error("frames");
  bool opengl = true;
  if (doc.contains("camera_convention")) {
    const auto conv = doc["camera_convention"].get<std::string>();
    if (conv == "opencv")
      opengl = false;
    else if (conv != "opengl")
      throw field_error("camera_convention");
  }

  SceneDataset data;
  data.camera_angle_x = doc["camera_angle_x"].get<double>();
  int expected_w = -1, expected_h = -1;
  for (std::size_t f = 0; f < doc["frames"].size(); ++f) {
    const json& frame = doc["frames"][f];
    const std::string prefix = "frames[" + std::to_string(f) + "].";
    if (!frame.contains("file_path") || !frame["file_path"].is_string())
      throw field_error(prefix + "file_path");
    if (!frame.contains("transform_matrix") || !frame["transform_matrix"].is_array() ||
        frame["transform_matrix"].size() != 4)
      throw field_error(prefix + "transform_matrix");
    Eigen::Matrix4d c2w;
    for (int r = 0; r < 4; ++r) {
      const json& row = frame["transform_matrix"][r];
      if (!row.is_array() || row.size() != 4) throw field_error(prefix + "transform_matrix");
      for (int c = 0; c < 4; ++c) {
        if (!row[c].is_number()) throw field_error(prefix + "transform_matrix");
        c2w(r, c) = row[c].get<double>();
      }
    }
    std::string rel = frame["file_path"].get<std::string>();
    fs::path image_path = dir / rel;
    if (!image_path.has_extension()) image_path += ".png";
    const Image raw = read_png(image_path);
    if (expected_w < 0) {
      expected_w = raw.width;
      expected_h = raw.height;
    } else if (raw.width != expected_w || raw.height != expected_h) {
      throw DimensionError(image_path.string() + ": image size differs from the first frame");
    }

    View view;
    view.name = rel;
    view.camera = camera_from_pose(c2w, opengl, data.camera_angle_x, raw.width, raw.height);
    view.camera.validate();
    view.image = Image(raw.width, raw.height, 3);
    view.mask.assign(static_cast<std::size_t>(raw.width) * raw.height, 1);
    const bool alpha = raw.channels == 2 || raw.channels == 4;
    const bool gray = raw.channels <= 2;
    for (int i = 0; i < raw.width * raw.height; ++i) {
      const double a = alpha ? raw.data[i * raw.channels + raw.channels - 1] : 1.0;
      view.mask[i] = a >= 0.5 ? 1 : 0;
      for (int c = 0; c < 3; ++c) {
        double v = raw.data[i * raw.channels + (gray ? 0 : c)];
        if (options.linear) v = srgb_to_linear(v);
        view.image.data[3 * i + c] = a * v + (1.0 - a) * options.background[c];
      }
    }
    data.views.push_back(std::move(view));
  }
  return data;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

double get_f32(const unsigned char* b) {
  const std::uint32_t bits = get_u32(b);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

json layout_json() {
  Scene probe;
  const Primitive p = probe.make_primitive(flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)),
                                           0.1);
  json layout = json::object();
  for (ParamGroup g : kParamGroups) layout[std::string(to_string(g))] = params(p, g).size();
  return layout;
}

}  // namespace

void save_checkpoint(const Scene& scene, const AdamState* state, const fs::path& path) {
  json header;
  header["format"] = "bgtri-checkpoint";
  header["version"] = kCheckpointVersion;
  header["primitives"] = scene.primitives.size();
  header["layout"] = layout_json();
  header["resolutions"] = {{"rotation", kRotationResolution},
                           {"scaling", kScalingResolution},
                           {"sh", kShResolution}};
  header["surface_degree"] = kSurfaceDegree;
  header["background"] = {scene.background[0], scene.background[1], scene.background[2]};
  header["opacity"] = scene.opacity;
  header["boundary_scale"] = scene.boundary_scale;
  header["sh_bands"] = scene.sh_bands;
  header["next_id"] = scene.next_id;
  json ids = json::array();
  for (const auto& p : scene.primitives) ids.push_back(p.id);
  header["ids"] = ids;
  header["optimizer"] = state != nullptr;
  header["optimizer_step"] = state ? state->step : 0;
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::size_t pad = (4 - (4 + text.size()) % 4) % 4;
  for (std::size_t i = 0; i < pad; ++i) out.put('\0');
  for (const auto& p : scene.primitives)
    for (ParamGroup g : kParamGroups)
      for (double v : params(p, g)) put_f32(out, v);
  if (state) {
    for (const GradientBuffers* buf : {&state->m, &state->v})
      for (const auto& pg : buf->primitives)
        for (ParamGroup g : kParamGroups)
          for (double v : pg[g]) put_f32(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Scene load_checkpoint(const fs::path& path, AdamState* state) {
  if (!fs::exists(path)) throw MissingFileError("missing checkpoint " + path.string());
  std::ifstream in(path, std::ios::binary);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 4) throw FormatError(where + ": truncated header");
  const std::uint32_t len = get_u32(bytes.data());
  if (bytes.size() < 4 + std::size_t(len)) throw FormatError(where + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  try {
    if (header.value("format", std::string()) != "bgtri-checkpoint")
      throw FormatError(where + ": not a checkpoint");
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kCheckpointVersion)
      throw VersionError(where + ": version " + std::to_string(version) + ", expected " +
                         std::to_string(kCheckpointVersion));
    if (header.at("layout") != layout_json() || header.at("surface_degree") != kSurfaceDegree)
      throw DimensionError(where + ": parameter layout differs from this build");

    Scene scene;
    const auto bg = header.at("background");
    scene.background = Vec3(bg.at(0), bg.at(1), bg.at(2));
    scene.opacity = header.at("opacity");
    scene.boundary_scale = header.at("boundary_scale");
    scene.sh_bands = header.at("sh_bands");
    const auto count = header.at("primitives").get<std::size_t>();
    const auto& ids = header.at("ids");
    if (ids.size() != count) throw FormatError(where + ": id list length mismatch");
    const bool has_state = header.at("optimizer").get<bool>();

    std::size_t offset = 4 + len;
    offset += (4 - offset % 4) % 4;
    std::size_t per = 0;
    const json layout = layout_json();
    for (const auto& item : layout.items()) per += item.value().get<std::size_t>();
    const std::size_t floats = count * per * (has_state ? 3 : 1);
    if (bytes.size() != offset + 4 * floats)
      throw FormatError(where + ": expected " + std::to_string(offset + 4 * floats) +
                        " bytes, found " + std::to_string(bytes.size()));
    const unsigned char* cur = bytes.data() + offset;
    for (std::size_t i = 0; i < count; ++i) {
      Primitive p = scene.make_primitive(flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)),
                                         1.0);
      p.id = ids[i].get<std::int64_t>();
      for (ParamGroup g : kParamGroups)
        for (double& v : params(p, g)) {
          v = get_f32(cur);
          cur += 4;
        }
      p.stats.reset();
      scene.primitives.push_back(std::move(p));
    }
    scene.next_id = header.at("next_id").get<std::int64_t>();
    if (state) {
      *state = AdamState::zeros_like(scene);
      state->step = header.value("optimizer_step", std::int64_t(0));
      if (has_state)
        for (GradientBuffers* buf : {&state->m, &state->v})
          for (auto& pg : buf->primitives)
            for (ParamGroup g : kParamGroups)
              for (double& v : pg[g]) {
                v = get_f32(cur);
                cur += 4;
              }
    }
    return scene;
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

double median_face_area(const Scene& scene, int level) {
  std::vector<double> areas;
  for (const auto& p : scene.primitives) {
    const Tessellation t = tessellate_level(p.geometry, level);
    for (const auto& tri : t.triangles)
      areas.push_back(0.5 * (t.positions[tri[1]] - t.positions[tri[0]])
                                .cross(t.positions[tri[2]] - t.positions[tri[0]])
                                .norm());
  }
  if (areas.empty()) return 0.0;
  std::nth_element(areas.begin(), areas.begin() + areas.size() / 2, areas.end());
  return areas[areas.size() / 2];
}

int export_strokes(const Scene& scene, double area_threshold, const fs::path& path, int level) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  int next_vertex = 1, segments = 0;
  for (const auto& p : scene.primitives) {
    const Tessellation t = tessellate_level(p.geometry, level);
    std::set<std::pair<int, int>> edges;
    for (const auto& tri : t.triangles) {
      const double area = 0.5 * (t.positions[tri[1]] - t.positions[tri[0]])
                                    .cross(t.positions[tri[2]] - t.positions[tri[0]])
                                    .norm();
      if (!(area < area_threshold)) continue;
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k], b = tri[(k + 1) % 3];
        edges.emplace(std::min(a, b), std::max(a, b));
      }
    }
    std::map<int, int> index;
    for (const auto& [a, b] : edges)
      for (int v : {a, b})
        if (!index.count(v)) {
          index[v] = next_vertex++;
          const Vec3& x = t.positions[v];
          out << "v " << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
        }
    for (const auto& [a, b] : edges) out << "l " << index[a] << ' ' << index[b] << '\n';
    segments += static_cast<int>(edges.size());
  }
  return segments;
}

void write_index_png(const fs::path& path, const RasterBuffers& buffers) {
  Image img(buffers.width, buffers.height, 3);
  for (std::size_t i = 0; i < buffers.id.size(); ++i) {
    const int id = buffers.id[i];
    if (id < 0) continue;
    std::uint32_t h = static_cast<std::uint32_t>(id) * 2654435761u;
    for (int c = 0; c < 3; ++c) img.data[3 * i + c] = (64 + ((h >> (8 * c)) & 0xBF)) / 255.0;
  }
  write_png(path, img);
}

void write_boundary_csv(const fs::path& path, const RasterBuffers& buffers) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << "px,py,owner,u,v,w,x,y,sigma\n";
  for (const BoundaryPoint& b : buffers.boundary)
    out << b.px << ',' << b.py << ',' << b.owner << ',' << b.bc.u << ',' << b.bc.v << ','
        << b.bc.w << ',' << b.position.x() << ',' << b.position.y() << ',' << b.sigma << '\n';
}

void write_points(const fs::path& path, const std::vector<Vec3>& points) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  for (const Vec3& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::vector<Vec3> read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("missing point file " + path.string());
  std::vector<Vec3> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x() >> p.y() >> p.z()))
      throw FormatError(path.string() + ":" + std::to_string(number) + ": expected x y z");
    out.push_back(p);
  }
  return out;
}

}  // namespace bgt
