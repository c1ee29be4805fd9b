#pragma once

#include "bgtri/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace bgt {

/// Barycentric coordinate (u, v, w) on the triangular parameter domain.
struct Barycentric {
  double u = 1.0;
  double v = 0.0;
  double w = 0.0;

  double operator[](int i) const { return i == 0 ? u : (i == 1 ? v : w); }
  bool operator==(const Barycentric&) const = default;
};

/// Throws ContractError unless the weights are non-negative and sum to one.
void validate(const Barycentric& bc);

/// Multi-index (i, j, k) of a control point, i + j + k = degree.
struct TriIndex {
  int i = 0;
  int j = 0;
  int k = 0;
};

int control_count(int degree);

/// Control-point multi-indices in storage order: lexicographic (i, j) descending.
const std::vector<TriIndex>& control_indices(int degree);

/// Storage slot of p_{i,j,n-i-j}.
int control_slot(int degree, int i, int j);

/// n!/(i!j!k!) u^i v^j w^k. Throws ContractError if i + j + k != n.
double bernstein(int n, int i, int j, int k, const Barycentric& bc);

/// All degree-n Bernstein weights in storage order.
void bernstein_weights(int n, const Barycentric& bc, std::span<double> out);

/// (dB/du, dB/dv, dB/dw) treating u, v, w as independent variables.
Vec3 bernstein_gradient(int n, int i, int j, int k, const Barycentric& bc);

/// Partials along the domain with u = 1 - v - w eliminated:
/// d/dv = dB/dv - dB/du, d/dw = dB/dw - dB/du, in storage order.
void bernstein_tangent_weights(int n, const Barycentric& bc, std::span<double> d_dv,
                               std::span<double> d_dw);

struct ControlNet {
  int degree = 2;
  std::vector<Vec3> points;

  /// Validates count and finiteness; throws ContractError.
  void validate() const;
  std::span<double> flat() {
    if (points.empty()) return {};
    return {points.front().data(), points.size() * 3};
  }
  std::span<const double> flat() const {
    if (points.empty()) return {};
    return {points.front().data(), points.size() * 3};
  }
};

Vec3 evaluate_surface(const ControlNet& net, const Barycentric& bc);

/// Bernstein-weighted sum of per-control-point values of dimension `dim`.
std::vector<double> evaluate_generic(int degree, std::span<const double> values, int dim,
                                     const Barycentric& bc);

/// Surface tangents dS/dv and dS/dw on the domain (u = 1 - v - w).
std::array<Vec3, 2> surface_tangents(const ControlNet& net, const Barycentric& bc);

/// Polar form of the surface: de Casteljau with a different parameter per level.
Vec3 blossom(const ControlNet& net, std::span<const Barycentric> args);

/// Corners of a sub-triangle of the parent domain.
struct SubTriangle {
  std::array<Barycentric, 3> corners;

  /// Parent-domain coordinate of a child-domain coordinate.
  Barycentric to_parent(const Barycentric& child) const;
};

/// Exact control net of the surface restricted to `sub`.
ControlNet restrict_net(const ControlNet& net, const SubTriangle& sub);

/// The four midpoint sub-triangles: three corner triangles then the middle one.
const std::array<SubTriangle, 4>& midpoint_subtriangles();

/// Splits the patch at its edge midpoints into four exact child patches,
/// ordered as midpoint_subtriangles(). Throws ContractError for degree < 1.
std::array<ControlNet, 4> subdivide_4(const ControlNet& net);

}  // namespace bgt
