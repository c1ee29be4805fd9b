#pragma once

#include "bgtri/render.hpp"
#include "bgtri/scene.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace bgt {

/// Gradient of one primitive, laid out exactly like params(prim, group).
struct PrimitiveGradient {
  std::array<std::vector<double>, kParamGroups.size()> groups;

  std::span<double> operator[](ParamGroup g) { return groups[static_cast<int>(g)]; }
  std::span<const double> operator[](ParamGroup g) const { return groups[static_cast<int>(g)]; }
  /// Mean L2 norm over the position control-point gradients.
  double mean_position_norm() const;
};

struct GradientBuffers {
  std::vector<PrimitiveGradient> primitives;

  static GradientBuffers zeros_like(const Scene& scene);
  /// Throws NumericError naming the first non-finite entry.
  void check_finite() const;
  double max_abs() const;
};

struct CompositeTermGradient {
  Vec3 d_color = Vec3::Zero();
  double d_alpha = 0.0;
};

/// Gradients of one pixel's composite w.r.t. each recorded term, computed
/// back to front with a suffix accumulator. `colors[i]` is the color of term i.
std::vector<CompositeTermGradient> backward_composite(std::span<const Contribution> records,
                                                      std::span<const Vec3> colors,
                                                      double final_transmittance,
                                                      const Vec3& background, const Vec3& d_pixel);

/// d exp(-0.5 d^T K d) with d = q - mean, K = [[a b] [b c]].
struct FalloffGradient {
  Vec2 d_mean = Vec2::Zero();
  Vec3 d_conic = Vec3::Zero();
};
FalloffGradient falloff_gradient(const Vec2& q, const Vec2& mean, const Vec3& conic);

/// Pulls a conic gradient back onto the covariance it inverts.
Mat2 conic_to_covariance_gradient(const Vec3& conic, const Vec3& d_conic);

/// Relative distance |q - b| / sigma below which q counts as the boundary point itself.
inline constexpr double kConeTolerance = 1e-9;

/// Derivatives of w w.r.t. the located boundary point position and its sigma.
struct BoundaryWeightGradient {
  Vec2 d_position = Vec2::Zero();
  double d_sigma = 0.0;
};
BoundaryWeightGradient boundary_weight_gradient(const Vec2& q, const Vec2& b, double sigma,
                                                BlendCase side);

/// d(loss) / d(unit quaternion) given d(loss) / d(rotation matrix).
Vec4 quaternion_matrix_gradient(const Vec4& q, const Mat3& d_matrix);

/// Full analytic backward for the pass that produced `pass` under `options`.
GradientBuffers backward(const Scene& scene, const Camera& cam, const ForwardPass& pass,
                         const Image& d_image, const RenderOptions& options = {});

struct ParamRef {
  int primitive = 0;
  ParamGroup group = ParamGroup::position;
  int index = 0;
};

/// Loss of a rendered image; writes dL/dimage when `grad` is non-null.
using LossFn = std::function<double(const Image& render, Image* grad)>;

struct FdEntry {
  ParamRef param;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  /// A discrete event (clamp, cutoff, record set) changes within +-10 eps.
  bool excluded = false;
};

struct FdOptions {
  double eps = 1e-6;
  bool freeze_raster = true;
  double rel_tol = 2e-3;
  double abs_floor = 1e-8;
};

bool fd_passes(const FdEntry& e, const FdOptions& options);

std::vector<ParamRef> sample_parameters(const Scene& scene, int count, std::uint64_t seed);

std::vector<FdEntry> finite_difference_check(const Scene& scene, const Camera& cam,
                                             const LossFn& loss, std::span<const ParamRef> params,
                                             const FdOptions& fd = {},
                                             const RenderOptions& options = {});

/// Three overlapping curved patches with randomized appearance in front of a
/// size x size camera; boundary radii span more than a pixel.
std::pair<Scene, Camera> gradient_check_scene(std::uint64_t seed, int size = 16);

}  // namespace bgt
