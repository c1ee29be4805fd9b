#pragma once

#include "bgtri/bezier.hpp"
#include "bgtri/types.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace bgt {

inline constexpr int kSurfaceDegree = 2;
inline constexpr int kRotationResolution = 3;
inline constexpr int kScalingResolution = 3;
inline constexpr int kShResolution = 1;
/// Real SH bands 1 and 2; the DC term is the diffuse color.
inline constexpr int kShBasisCount = 8;
inline constexpr int kVisibilityResolution = 8;
/// Thin third axis of a sub-primitive disc, relative to its mean in-plane scale.
inline constexpr double kThinAxisRatio = 1e-4;

enum class AttributeKind { rotation, scaling, sh };

/// Texels usable in a triangular half of an R x R grid.
constexpr int triangular_texel_count(int resolution) { return resolution * (resolution + 1) / 2; }

/// Storage index of texel (x, y), x + y <= R - 1, row by row in y.
constexpr int triangular_texel_index(int resolution, int x, int y) {
  return y * resolution - y * (y - 1) / 2 + x;
}

/// Per-primitive texel grid shaped as an isosceles right triangle.
struct AttributeMap {
  AttributeKind kind = AttributeKind::scaling;
  int resolution = 1;
  int channels = 1;
  std::vector<double> texels;

  static AttributeMap make(AttributeKind kind, int resolution, int channels, double fill = 0.0);
  int texel_count() const { return triangular_texel_count(resolution); }
  std::span<double> texel(int t) { return {texels.data() + t * channels, std::size_t(channels)}; }
  std::span<const double> texel(int t) const {
    return {texels.data() + t * channels, std::size_t(channels)};
  }
};

/// Bilinear texel weights of the texture lookup, re-normalized over the
/// texels that lie inside the triangular half.
struct TexelWeights {
  std::array<int, 4> texel{};
  std::array<double, 4> weight{};
  int count = 0;
};

TexelWeights texel_weights(int resolution, const Barycentric& bc);

/// Raw (un-normalized) interpolated texel value.
std::vector<double> interpolate_texels(const AttributeMap& map, const Barycentric& bc);

/// Split-event bookkeeping, reset after each split/prune event.
struct PrimitiveStats {
  int observed_views = 0;
  int visible_views = 0;
  std::vector<std::uint8_t> visibility_texels;  // R_v x R_v triangular occupancy
  double grad_norm_sum = 0.0;
  int grad_samples = 0;
  double edge_sum = 0.0;
  int edge_views = 0;

  void reset();
  double mean_grad_norm() const { return grad_samples ? grad_norm_sum / grad_samples : 0.0; }
  double mean_edge() const { return edge_views ? edge_sum / edge_views : 0.0; }
  double visibility_ratio() const {
    return observed_views ? double(visible_views) / observed_views : 0.0;
  }
  double visible_texel_ratio() const;
};

/// Triangular visibility-texture cell covering a domain point.
int visibility_texel(const Barycentric& bc);

struct Primitive {
  std::int64_t id = 0;
  ControlNet geometry;  // 6 world-space control points
  ControlNet color;     // 6 RGB control values in [0, 1]
  AttributeMap rotation;
  AttributeMap scaling;
  AttributeMap sh;
  PrimitiveStats stats;

  const AttributeMap& map(AttributeKind kind) const;
  AttributeMap& map(AttributeKind kind);
};

/// a_h = Theta(M_h, bc); rotation comes back as a unit quaternion (w, x, y, z).
std::vector<double> sample_attribute(const Primitive& prim, AttributeKind kind,
                                     const Barycentric& bc);

/// Learnable parameter groups, in checkpoint order.
enum class ParamGroup { position, color, rotation, scaling, sh };
inline constexpr std::array<ParamGroup, 5> kParamGroups = {
    ParamGroup::position, ParamGroup::color, ParamGroup::rotation, ParamGroup::scaling,
    ParamGroup::sh};

std::string_view to_string(ParamGroup group);
ParamGroup param_group_from_string(std::string_view name);

std::span<double> params(Primitive& prim, ParamGroup group);
std::span<const double> params(const Primitive& prim, ParamGroup group);
int parameter_count(const Primitive& prim);

struct Scene {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Zero();
  /// Constant sub-primitive opacity o.
  double opacity = 0.99;
  /// World radius r_b of boundary Gaussians.
  double boundary_scale = 0.06;
  int sh_bands = 2;
  std::int64_t next_id = 0;

  /// Fresh primitive with default appearance and a new id.
  Primitive make_primitive(ControlNet geometry, double footprint);
  /// Sets every in-plane sub-primitive scale to `footprint` world units.
  void set_footprint(double footprint);
  void validate() const;
  std::size_t parameter_count() const;
};

/// Flat degree-2 net with corners a, b, c and mid-edge control points.
ControlNet flat_net(const Vec3& a, const Vec3& b, const Vec3& c);

/// Twice the median nearest-neighbour distance among `points`.
double default_triangle_size(std::span<const Vec3> points);

/// Surface area sampled by `points`, from the median k-nearest-neighbour
/// density.
double estimate_surface_area(std::span<const Vec3> points, int neighbours = 8);

/// One flat equilateral triangle per sampled point, randomly oriented. With
/// `fit_orientation` it lies in the plane fitted to the point's nearest
/// neighbours instead (random where that plane is ill-defined).
Scene init_from_point_cloud(std::span<const Vec3> points, int target_count, double triangle_size,
                            std::uint64_t seed, bool fit_orientation = false);

Scene init_from_cube(const Vec3& center, double edge, int per_face_subdiv);

/// Area-uniform samples of the parameter domain pushed through the surface.
std::vector<Vec3> sample_surface_points(const Primitive& prim, int count, std::uint64_t seed);

/// Surface area approximated by the four planar midpoint triangles.
double approximate_area(const ControlNet& net);

/// Bounding-box aspect ratio measured in the patch plane, aligned to its
/// longest corner edge.
double aspect_ratio(const ControlNet& net);

/// Uniform double in [0, 1) from 53 random bits.
inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace bgt
