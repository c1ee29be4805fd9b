#pragma once

#include "bgtri/camera.hpp"
#include "bgtri/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bgt::synth {

enum class Shape { cube, ball };
enum class Texture { checker, stripes };

Shape shape_from_string(const std::string& s);
Texture texture_from_string(const std::string& s);
std::string to_string(Shape s);
std::string to_string(Texture t);

/// Axis-aligned cube [-1, 1]^3 or unit sphere at the origin, with a two-color
/// procedural albedo in surface parameter space. Albedo is radiance.
struct AnalyticScene {
  Shape shape = Shape::cube;
  Texture texture = Texture::checker;
  int texels = 4;
  Vec3 color_a = Vec3(0.9, 0.75, 0.2);
  Vec3 color_b = Vec3(0.1, 0.25, 0.6);

  /// Cube half-edge or sphere radius.
  double size() const { return 1.0; }
};

AnalyticScene make_scene(Shape shape, Texture texture, int texels);

/// Surface parameters in [0, 1]^2 of a surface point. For the cube, (s, t)
/// run along the two other axes of the face in cyclic order; for the ball,
/// s is longitude / 2 pi and t is polar angle / pi.
struct SurfaceParam {
  int face = 0;  // cube face 0..5 as (axis * 2 + (sign < 0)); 0 for the ball
  double s = 0.0;
  double t = 0.0;
};

SurfaceParam surface_param(const AnalyticScene& scene, const Vec3& point);
/// True where the pattern takes color_a.
bool pattern_cell(const AnalyticScene& scene, const SurfaceParam& param);
Vec3 albedo(const AnalyticScene& scene, const Vec3& point);

/// Nearest positive ray parameter hitting the shape.
std::optional<double> intersect(const AnalyticScene& scene, const Vec3& origin, const Vec3& dir);

struct ReferenceImage {
  Image rgb;       // composited over the background
  Image coverage;  // single channel, fraction of samples hitting the shape
};

/// s x s stratified samples per pixel.
ReferenceImage render_reference(const AnalyticScene& scene, const Camera& cam, int supersample,
                                const Vec3& background = Vec3::Zero());

/// Area-uniform surface samples.
std::vector<Vec3> sample_surface(const AnalyticScene& scene, int count, std::uint64_t seed);

/// Fibonacci-sphere cameras at `radius` facing the origin. A non-zero
/// `rotation_seed` applies a seeded random rotation to the whole set.
std::vector<Camera> sphere_cameras(int count, double radius, double fov_x, int width, int height,
                                   std::uint64_t rotation_seed = 0);

struct DatasetSpec {
  Shape shape = Shape::cube;
  Texture texture = Texture::checker;
  int texels = 4;
  int n_train = 100;
  int n_test = 20;
  double radius = 6.0;
  double fov_x = 0.6981317007977318;  // 40 degrees
  int width = 128;
  int height = 128;
  int supersample = 4;
  std::uint64_t seed = 0;
  /// Test views at 40% of the training distance.
  bool closeup = false;
  int point_count = 2000;
};

inline constexpr double kCloseupFactor = 0.4;

/// Writes transforms_{train,test}.json, RGBA PNGs, points3d.txt and scene.json.
void make_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

/// Reads the scene.json written by make_dataset.
AnalyticScene load_scene_description(const std::filesystem::path& dir);

}  // namespace bgt::synth
