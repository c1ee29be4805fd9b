#include "bgtri/bezier.hpp"

#include "bgtri/error.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

namespace bgt {

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

double int_pow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

void require_degree(int n) {
  if (n < 0 || n > 16) throw ContractError("Bezier degree out of range: " + std::to_string(n));
}

}  // namespace

void validate(const Barycentric& bc) {
  if (!(std::isfinite(bc.u) && std::isfinite(bc.v) && std::isfinite(bc.w)))
    throw ContractError("barycentric coordinate is not finite");
  if (bc.u < 0.0 || bc.v < 0.0 || bc.w < 0.0)
    throw ContractError("barycentric coordinate has a negative weight");
  if (std::abs(bc.u + bc.v + bc.w - 1.0) > 1e-12)
    throw ContractError("barycentric weights do not sum to one");
}

int control_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

const std::vector<TriIndex>& control_indices(int degree) {
  require_degree(degree);
  static std::mutex mutex;
  static std::map<int, std::vector<TriIndex>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(degree);
  if (it != cache.end()) return it->second;
  std::vector<TriIndex> out;
  for (int i = degree; i >= 0; --i)
    for (int j = degree - i; j >= 0; --j) out.push_back({i, j, degree - i - j});
  return cache.emplace(degree, std::move(out)).first->second;
}

int control_slot(int degree, int i, int j) {
  // Rows with first index > i hold sum_{r=i+1}^{n} (n - r + 1) entries.
  const int m = degree - i;  // entries before row i: sum_{s=0}^{m-1} (s + 1)
  const int before = m * (m + 1) / 2;
  return before + (degree - i - j);
}

double bernstein(int n, int i, int j, int k, const Barycentric& bc) {
  require_degree(n);
  if (i < 0 || j < 0 || k < 0 || i + j + k != n)
    throw ContractError("Bernstein index sum does not match degree");
  const double coeff = factorial(n) / (factorial(i) * factorial(j) * factorial(k));
  return coeff * int_pow(bc.u, i) * int_pow(bc.v, j) * int_pow(bc.w, k);
}

void bernstein_weights(int n, const Barycentric& bc, std::span<double> out) {
  if (n == 2) {
    // Hot path for the scene-wide degree.
    out[0] = bc.u * bc.u;
    out[1] = 2.0 * bc.u * bc.v;
    out[2] = 2.0 * bc.u * bc.w;
    out[3] = bc.v * bc.v;
    out[4] = 2.0 * bc.v * bc.w;
    out[5] = bc.w * bc.w;
    return;
  }
  const auto& idx = control_indices(n);
  for (std::size_t s = 0; s < idx.size(); ++s) out[s] = bernstein(n, idx[s].i, idx[s].j, idx[s].k, bc);
}

Vec3 bernstein_gradient(int n, int i, int j, int k, const Barycentric& bc) {
  require_degree(n);
  if (i < 0 || j < 0 || k < 0 || i + j + k != n)
    throw ContractError("Bernstein index sum does not match degree");
  if (n == 0) return Vec3::Zero();
  const double coeff = factorial(n) / (factorial(i) * factorial(j) * factorial(k));
  const double pu = int_pow(bc.u, i), pv = int_pow(bc.v, j), pw = int_pow(bc.w, k);
  const double du = i > 0 ? i * int_pow(bc.u, i - 1) : 0.0;
  const double dv = j > 0 ? j * int_pow(bc.v, j - 1) : 0.0;
  const double dw = k > 0 ? k * int_pow(bc.w, k - 1) : 0.0;
  return coeff * Vec3(du * pv * pw, pu * dv * pw, pu * pv * dw);
}

void bernstein_tangent_weights(int n, const Barycentric& bc, std::span<double> d_dv,
                               std::span<double> d_dw) {
  if (n == 2) {
    const double u = bc.u, v = bc.v, w = bc.w;
    // d/du of (u^2, 2uv, 2uw, v^2, 2vw, w^2) = (2u, 2v, 2w, 0, 0, 0), etc.
    d_dv[0] = -2.0 * u;
    d_dv[1] = 2.0 * u - 2.0 * v;
    d_dv[2] = -2.0 * w;
    d_dv[3] = 2.0 * v;
    d_dv[4] = 2.0 * w;
    d_dv[5] = 0.0;
    d_dw[0] = -2.0 * u;
    d_dw[1] = -2.0 * v;
    d_dw[2] = 2.0 * u - 2.0 * w;
    d_dw[3] = 0.0;
    d_dw[4] = 2.0 * v;
    d_dw[5] = 2.0 * w;
    return;
  }
  const auto& idx = control_indices(n);
  for (std::size_t s = 0; s < idx.size(); ++s) {
    const Vec3 g = bernstein_gradient(n, idx[s].i, idx[s].j, idx[s].k, bc);
    d_dv[s] = g.y() - g.x();
    d_dw[s] = g.z() - g.x();
  }
}

void ControlNet::validate() const {
  require_degree(degree);
  if (static_cast<int>(points.size()) != control_count(degree))
    throw ContractError("control net has " + std::to_string(points.size()) +
                        " points, expected " + std::to_string(control_count(degree)));
  for (const auto& p : points)
    if (!p.allFinite()) throw ContractError("control net has a non-finite coordinate");
}

Vec3 evaluate_surface(const ControlNet& net, const Barycentric& bc) {
  std::array<double, 64> weights{};
  const int count = control_count(net.degree);
  if (count > static_cast<int>(weights.size()) || static_cast<int>(net.points.size()) != count)
    throw ContractError("control net size does not match its degree");
  bernstein_weights(net.degree, bc, std::span<double>(weights.data(), count));
  Vec3 s = Vec3::Zero();
  for (int i = 0; i < count; ++i) s += weights[i] * net.points[i];
  return s;
}

std::vector<double> evaluate_generic(int degree, std::span<const double> values, int dim,
                                     const Barycentric& bc) {
  const int count = control_count(degree);
  if (dim <= 0 || static_cast<int>(values.size()) != count * dim)
    throw DimensionError("value array has " + std::to_string(values.size()) +
                         " entries, expected " + std::to_string(count) + " x " +
                         std::to_string(dim));
  std::vector<double> weights(count);
  bernstein_weights(degree, bc, weights);
  std::vector<double> out(dim, 0.0);
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < dim; ++d) out[d] += weights[i] * values[i * dim + d];
  return out;
}

std::array<Vec3, 2> surface_tangents(const ControlNet& net, const Barycentric& bc) {
  const int count = control_count(net.degree);
  std::array<double, 64> dv{}, dw{};
  bernstein_tangent_weights(net.degree, bc, std::span<double>(dv.data(), count),
                            std::span<double>(dw.data(), count));
  std::array<Vec3, 2> t{Vec3::Zero(), Vec3::Zero()};
  for (int i = 0; i < count; ++i) {
    t[0] += dv[i] * net.points[i];
    t[1] += dw[i] * net.points[i];
  }
  return t;
}

Vec3 blossom(const ControlNet& net, std::span<const Barycentric> args) {
  if (static_cast<int>(args.size()) != net.degree)
    throw ContractError("blossom needs one argument per degree");
  std::vector<Vec3> level = net.points;
  for (int n = net.degree; n > 0; --n) {
    const Barycentric& a = args[net.degree - n];
    std::vector<Vec3> next(control_count(n - 1));
    for (int i = n - 1; i >= 0; --i) {
      for (int j = n - 1 - i; j >= 0; --j) {
        next[control_slot(n - 1, i, j)] = a.u * level[control_slot(n, i + 1, j)] +
                                          a.v * level[control_slot(n, i, j + 1)] +
                                          a.w * level[control_slot(n, i, j)];
      }
    }
    level = std::move(next);
  }
  return level.front();
}

Barycentric SubTriangle::to_parent(const Barycentric& c) const {
  const auto& [a, b, d] = corners;
  return {c.u * a.u + c.v * b.u + c.w * d.u, c.u * a.v + c.v * b.v + c.w * d.v,
          c.u * a.w + c.v * b.w + c.w * d.w};
}

ControlNet restrict_net(const ControlNet& net, const SubTriangle& sub) {
  net.validate();
  ControlNet out;
  out.degree = net.degree;
  out.points.resize(net.points.size());
  std::vector<Barycentric> args(net.degree);
  for (const auto& t : control_indices(net.degree)) {
    int pos = 0;
    for (int r = 0; r < t.i; ++r) args[pos++] = sub.corners[0];
    for (int r = 0; r < t.j; ++r) args[pos++] = sub.corners[1];
    for (int r = 0; r < t.k; ++r) args[pos++] = sub.corners[2];
    out.points[control_slot(net.degree, t.i, t.j)] = blossom(net, args);
  }
  return out;
}

const std::array<SubTriangle, 4>& midpoint_subtriangles() {
  static const std::array<SubTriangle, 4> subs = [] {
    const Barycentric a{1, 0, 0}, b{0, 1, 0}, c{0, 0, 1};
    const Barycentric ab{0.5, 0.5, 0}, ac{0.5, 0, 0.5}, bc{0, 0.5, 0.5};
    return std::array<SubTriangle, 4>{SubTriangle{{a, ab, ac}}, SubTriangle{{ab, b, bc}},
                                      SubTriangle{{ac, bc, c}}, SubTriangle{{bc, ac, ab}}};
  }();
  return subs;
}

std::array<ControlNet, 4> subdivide_4(const ControlNet& net) {
  if (net.degree < 1) throw ContractError("subdivision needs degree >= 1");
  const auto& subs = midpoint_subtriangles();
  return {restrict_net(net, subs[0]), restrict_net(net, subs[1]), restrict_net(net, subs[2]),
          restrict_net(net, subs[3])};
}

}  // namespace bgt
