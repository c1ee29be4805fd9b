#pragma once

#include "bgtri/camera.hpp"
#include "bgtri/raster.hpp"
#include "bgtri/scene.hpp"
#include "bgtri/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bgt {

struct AdamState;

/// One posed image. `mask` is 1 where the source alpha is >= 0.5.
struct View {
  std::string name;
  Camera camera;
  Image image;  // RGB, composited over the dataset background
  std::vector<std::uint8_t> mask;
};

struct SceneDataset {
  std::vector<View> views;
  double camera_angle_x = 0.0;
};

struct LoadOptions {
  /// Decode sRGB-encoded 8-bit values to linear light.
  bool linear = true;
  Vec3 background = Vec3::Zero();
};

double srgb_to_linear(double v);
double linear_to_srgb(double v);

/// 8-bit PNG; gray, gray+alpha, RGB and RGBA are accepted. Values in [0, 1].
Image read_png(const std::filesystem::path& path);
/// Writes a 1-, 3- or 4-channel image as 8-bit PNG, clamping to [0, 1].
void write_png(const std::filesystem::path& path, const Image& image);

/// Loads `transforms_<split>.json` under `dir`. Poses are camera-to-world in the
/// OpenGL convention unless the manifest sets "camera_convention": "opencv".
SceneDataset load_dataset(const std::filesystem::path& dir, const std::string& split,
                          const LoadOptions& options = {});

/// OpenGL-convention camera-to-world matrix of `cam`, as stored in manifests.
Eigen::Matrix4d camera_to_world_gl(const Camera& cam);

/// Camera from a manifest pose, image size and horizontal field of view.
Camera camera_from_pose(const Eigen::Matrix4d& c2w, bool opengl, double camera_angle_x,
                        int width, int height);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header JSON, padding to 4 bytes, then little-endian float32 parameters per
/// primitive in group order, optionally followed by optimizer moments.
void save_checkpoint(const Scene& scene, const AdamState* state,
                     const std::filesystem::path& path);
Scene load_checkpoint(const std::filesystem::path& path, AdamState* state = nullptr);

/// Median flat-triangle area over every primitive tessellated at `level`.
double median_face_area(const Scene& scene, int level);

/// Writes kept tessellation edges as "v x y z" and "l a b" records.
/// Returns the number of segments written.
int export_strokes(const Scene& scene, double area_threshold, const std::filesystem::path& path,
                   int level = 3);

/// Primitive-index map as an 8-bit palette PNG (background black).
void write_index_png(const std::filesystem::path& path, const RasterBuffers& buffers);
/// One row per boundary point: px, py, owner, u, v, w, x, y, sigma.
void write_boundary_csv(const std::filesystem::path& path, const RasterBuffers& buffers);

/// Point cloud as "x y z" text lines.
void write_points(const std::filesystem::path& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_points(const std::filesystem::path& path);

}  // namespace bgt
