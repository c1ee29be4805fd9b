#pragma once

#include "bgtri/bezier.hpp"
#include "bgtri/camera.hpp"
#include "bgtri/scene.hpp"

#include <array>
#include <limits>
#include <span>
#include <vector>

namespace bgt {

inline constexpr int kMinTessellationLevel = 1;
inline constexpr int kMaxTessellationLevel = 6;

/// Uniform barycentric grid of flat triangles approximating one patch.
struct Tessellation {
  int primitive = -1;
  int level = 1;
  std::vector<Barycentric> bc;
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> triangles;
};

/// Smallest level L in [1, 6] with (longest projected control-net edge) / 2^L <= 1 px.
int tessellation_level(const ControlNet& net, const Camera& cam);

/// 4^level flat triangles with exact surface vertices.
Tessellation tessellate_level(const ControlNet& net, int level);

Tessellation tessellate(const Primitive& prim, const Camera& cam);

/// False when the patch's convex hull is entirely outside the view frustum.
bool intersects_frustum(const ControlNet& net, const Camera& cam);

inline constexpr int kBackground = -1;

struct BoundaryPoint {
  int px = 0;  // pixel holding the point
  int py = 0;
  int owner = kBackground;
  Barycentric bc;           // fixed during backward
  Vec3 point = Vec3::Zero();     // S(bc) of the owner, world space
  Vec2 position = Vec2::Zero();  // projection of `point`, pixel units
  double depth = 0.0;
  double sigma = 0.0;  // projected boundary radius, pixels

  Vec2 pixel_center() const { return {px + 0.5, py + 0.5}; }
};

/// Per-view rasterization output. I_id holds primitive indices into
/// Scene::primitives, kBackground for empty pixels.
struct RasterBuffers {
  int width = 0;
  int height = 0;
  std::vector<Barycentric> uv;
  std::vector<int> id;
  std::vector<double> depth;
  std::vector<BoundaryPoint> boundary;

  int pixel(int x, int y) const { return y * width + x; }
  int id_at(int x, int y) const { return id[pixel(x, y)]; }
  int foreground_count() const;
};

/// Depth-tested rasterization of every tessellated patch with
/// perspective-correct interpolation of the patch coordinates.
RasterBuffers rasterize(const Scene& scene, const Camera& cam, int threads = 1);

/// Foreground pixels whose 4-neighbourhood holds a different id, with their
/// surface point and projected boundary radius r_b * fx / depth.
std::vector<BoundaryPoint> extract_boundaries(const RasterBuffers& buffers, const Scene& scene,
                                              const Camera& cam, double boundary_scale);

/// Recomputes point, position, depth and sigma of each boundary point from
/// its (owner, bc), keeping the discrete pixel set fixed.
void locate_boundaries(std::span<BoundaryPoint> points, const Scene& scene, const Camera& cam,
                       double boundary_scale);

}  // namespace bgt
