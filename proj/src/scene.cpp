#include "bgtri/scene.hpp"

#include "bgtri/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <limits>
#include <string>
#include <utility>

namespace bgt {

AttributeMap AttributeMap::make(AttributeKind kind, int resolution, int channels, double fill) {
  AttributeMap m;
  m.kind = kind;
  m.resolution = resolution;
  m.channels = channels;
  m.texels.assign(static_cast<std::size_t>(triangular_texel_count(resolution)) * channels, fill);
  return m;
}

TexelWeights texel_weights(int resolution, const Barycentric& bc) {
  TexelWeights tw;
  if (resolution <= 1) {
    tw.texel[0] = 0;
    tw.weight[0] = 1.0;
    tw.count = 1;
    return tw;
  }
  const int last = resolution - 1;
  const double x = bc.v * last;
  const double y = bc.w * last;
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, last - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, last - 1);
  const double fx = std::clamp(x - x0, 0.0, 1.0);
  const double fy = std::clamp(y - y0, 0.0, 1.0);
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  double total = 0.0;
  for (int c = 0; c < 4; ++c) {
    if (xs[c] + ys[c] > last) continue;
    tw.texel[tw.count] = triangular_texel_index(resolution, xs[c], ys[c]);
    tw.weight[tw.count] = ws[c];
    total += ws[c];
    ++tw.count;
  }
  if (total <= 0.0) {
    tw.count = 1;
    tw.texel[0] = triangular_texel_index(resolution, std::min(x0, last), 0);
    tw.weight[0] = 1.0;
    return tw;
  }
  for (int c = 0; c < tw.count; ++c) tw.weight[c] /= total;
  return tw;
}

std::vector<double> interpolate_texels(const AttributeMap& map, const Barycentric& bc) {
  const TexelWeights tw = texel_weights(map.resolution, bc);
  std::vector<double> out(map.channels, 0.0);
  for (int c = 0; c < tw.count; ++c) {
    const auto t = map.texel(tw.texel[c]);
    for (int k = 0; k < map.channels; ++k) out[k] += tw.weight[c] * t[k];
  }
  return out;
}

void PrimitiveStats::reset() {
  observed_views = 0;
  visible_views = 0;
  visibility_texels.assign(triangular_texel_count(kVisibilityResolution), 0);
  grad_norm_sum = 0.0;
  grad_samples = 0;
  edge_sum = 0.0;
  edge_views = 0;
}

double PrimitiveStats::visible_texel_ratio() const {
  if (visibility_texels.empty()) return 0.0;
  const auto marked = std::count_if(visibility_texels.begin(), visibility_texels.end(),
                                    [](std::uint8_t v) { return v != 0; });
  return double(marked) / double(visibility_texels.size());
}

int visibility_texel(const Barycentric& bc) {
  constexpr int r = kVisibilityResolution;
  int x = std::clamp(static_cast<int>(std::floor(bc.v * r)), 0, r - 1);
  int y = std::clamp(static_cast<int>(std::floor(bc.w * r)), 0, r - 1);
  const int excess = x + y - (r - 1);
  if (excess > 0) {
    if (x >= y)
      x -= excess;
    else
      y -= excess;
  }
  return triangular_texel_index(r, x, y);
}

const AttributeMap& Primitive::map(AttributeKind kind) const {
  switch (kind) {
    case AttributeKind::rotation: return rotation;
    case AttributeKind::scaling: return scaling;
    case AttributeKind::sh: return sh;
  }
  return sh;
}

AttributeMap& Primitive::map(AttributeKind kind) {
  return const_cast<AttributeMap&>(std::as_const(*this).map(kind));
}

std::vector<double> sample_attribute(const Primitive& prim, AttributeKind kind,
                                     const Barycentric& bc) {
  std::vector<double> value = interpolate_texels(prim.map(kind), bc);
  if (kind == AttributeKind::rotation) {
    double norm = 0.0;
    for (double c : value) norm += c * c;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& c : value) c /= norm;
    else
      value = {1.0, 0.0, 0.0, 0.0};
  }
  return value;
}

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::position: return "position";
    case ParamGroup::color: return "color";
    case ParamGroup::rotation: return "rotation";
    case ParamGroup::scaling: return "scaling";
    case ParamGroup::sh: return "sh";
  }
  return "unknown";
}

ParamGroup param_group_from_string(std::string_view name) {
  for (ParamGroup g : kParamGroups)
    if (to_string(g) == name) return g;
  throw ContractError("unknown parameter group: " + std::string(name));
}

std::span<double> params(Primitive& prim, ParamGroup group) {
  switch (group) {
    case ParamGroup::position: return prim.geometry.flat();
    case ParamGroup::color: return prim.color.flat();
    case ParamGroup::rotation: return prim.rotation.texels;
    case ParamGroup::scaling: return prim.scaling.texels;
    case ParamGroup::sh: return prim.sh.texels;
  }
  return {};
}

std::span<const double> params(const Primitive& prim, ParamGroup group) {
  return params(const_cast<Primitive&>(prim), group);
}

int parameter_count(const Primitive& prim) {
  int n = 0;
  for (ParamGroup g : kParamGroups) n += static_cast<int>(params(prim, g).size());
  return n;
}

Primitive Scene::make_primitive(ControlNet geometry, double footprint) {
  Primitive p;
  p.id = next_id++;
  p.geometry = std::move(geometry);
  p.color.degree = p.geometry.degree;
  p.color.points.assign(p.geometry.points.size(), Vec3::Constant(0.5));
  p.rotation = AttributeMap::make(AttributeKind::rotation, kRotationResolution, 4);
  for (int t = 0; t < p.rotation.texel_count(); ++t) p.rotation.texel(t)[0] = 1.0;
  p.scaling = AttributeMap::make(AttributeKind::scaling, kScalingResolution, 2,
                                 std::log(std::max(footprint, 1e-12)));
  p.sh = AttributeMap::make(AttributeKind::sh, kShResolution, kShBasisCount * 3, 0.0);
  p.stats.reset();
  return p;
}

void Scene::set_footprint(double footprint) {
  if (!(footprint > 0.0)) throw ContractError("footprint must be positive");
  for (Primitive& p : primitives)
    std::fill(p.scaling.texels.begin(), p.scaling.texels.end(), std::log(footprint));
}

void Scene::validate() const {
  if (primitives.empty()) throw ContractError("scene has no primitives");
  if (!(opacity > 0.0 && opacity <= 1.0)) throw ContractError("opacity must lie in (0, 1]");
  if (!(boundary_scale > 0.0)) throw ContractError("boundary scale r_b must be positive");
  for (const auto& p : primitives) {
    p.geometry.validate();
    p.color.validate();
  }
}

std::size_t Scene::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : primitives) n += bgt::parameter_count(p);
  return n;
}

ControlNet flat_net(const Vec3& a, const Vec3& b, const Vec3& c) {
  ControlNet net;
  net.degree = 2;
  net.points = {a, 0.5 * (a + b), 0.5 * (a + c), b, 0.5 * (b + c), c};
  return net;
}

double default_triangle_size(std::span<const Vec3> points) {
  if (points.size() < 2) return 1.0;
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double d = (points[i] - points[j]).squaredNorm();
      nearest[i] = std::min(nearest[i], d);
      nearest[j] = std::min(nearest[j], d);
    }
  auto mid = nearest.begin() + nearest.size() / 2;
  std::nth_element(nearest.begin(), mid, nearest.end());
  const double median = std::sqrt(*mid);
  return median > 0.0 ? 2.0 * median : 1.0;
}

double estimate_surface_area(std::span<const Vec3> points, int neighbours) {
  if (neighbours < 1) throw ContractError("neighbour count must be >= 1");
  const std::size_t k = static_cast<std::size_t>(neighbours);
  if (points.size() <= k) throw ContractError("too few points for the area estimate");
  std::vector<double> radius(points.size());
  std::vector<double> dist(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) dist[j] = (points[i] - points[j]).squaredNorm();
    // dist[i] == 0 is the point itself, so the k-th neighbour sits at rank k.
    std::nth_element(dist.begin(), dist.begin() + k, dist.end());
    radius[i] = dist[k];
  }
  auto mid = radius.begin() + radius.size() / 2;
  std::nth_element(radius.begin(), mid, radius.end());
  // k neighbours inside a disc of squared radius r^2 on the surface.
  return static_cast<double>(points.size()) * std::numbers::pi * *mid / static_cast<double>(k);
}

namespace {

Vec3 random_unit_vector(std::mt19937_64& rng) {
  const double z = 2.0 * uniform01(rng) - 1.0;
  const double phi = 2.0 * std::numbers::pi * uniform01(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

// Smallest-variance axis of the nearest neighbours of `center`.
std::optional<Vec3> local_normal(std::span<const Vec3> points, const Vec3& center) {
  constexpr std::size_t kNeighbours = 12;
  if (points.size() < kNeighbours) return std::nullopt;
  std::vector<std::pair<double, std::size_t>> dist(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) dist[k] = {(points[k] - center).squaredNorm(), k};
  std::partial_sort(dist.begin(), dist.begin() + kNeighbours, dist.end());
  Vec3 mean = Vec3::Zero();
  for (std::size_t k = 0; k < kNeighbours; ++k) mean += points[dist[k].second];
  mean /= double(kNeighbours);
  Mat3 cov = Mat3::Zero();
  for (std::size_t k = 0; k < kNeighbours; ++k) {
    const Vec3 d = points[dist[k].second] - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 evals = eig.eigenvalues();
  // Reject ill-defined planes (collinear or isotropic neighbourhoods).
  if (!(evals[1] > 4.0 * evals[0])) return std::nullopt;
  return eig.eigenvectors().col(0).normalized();
}

}  // namespace

Scene init_from_point_cloud(std::span<const Vec3> points, int target_count, double triangle_size,
                            std::uint64_t seed, bool fit_orientation) {
  if (points.empty()) throw ContractError("point cloud is empty");
  if (target_count < 1) throw ContractError("target primitive count must be >= 1");
  if (!(triangle_size > 0.0)) throw ContractError("triangle size must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t count = std::min<std::size_t>(target_count, points.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * (points.size() - i));
    std::swap(order[i], order[std::min(j, points.size() - 1)]);
  }
  Scene scene;
  const double circumradius = triangle_size / std::sqrt(3.0);
  const double footprint = triangle_size / (2.0 * kScalingResolution);
  scene.primitives.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Vec3& center = points[order[i]];
    Vec3 normal = random_unit_vector(rng);
    if (fit_orientation)
      if (const auto fitted = local_normal(points, center)) normal = *fitted;
    const Vec3 helper = std::abs(normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = normal.cross(helper).normalized();
    const Vec3 e2 = normal.cross(e1);
    const double angle = 2.0 * std::numbers::pi * uniform01(rng);
    std::array<Vec3, 3> corners;
    for (int c = 0; c < 3; ++c) {
      const double a = angle + c * 2.0 * std::numbers::pi / 3.0;
      corners[c] = center + circumradius * (std::cos(a) * e1 + std::sin(a) * e2);
    }
    scene.primitives.push_back(
        scene.make_primitive(flat_net(corners[0], corners[1], corners[2]), footprint));
  }
  return scene;
}

Scene init_from_cube(const Vec3& center, double edge, int per_face_subdiv) {
  if (!(edge > 0.0)) throw ContractError("cube edge must be positive");
  if (per_face_subdiv < 1) throw ContractError("per-face subdivision must be >= 1");
  Scene scene;
  const double h = edge / 2.0;
  const int n = per_face_subdiv;
  const double footprint = (edge / n) / (2.0 * kScalingResolution);
  // Each face: outward axis, and two in-plane axes forming a right-handed frame.
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign : {1, -1}) {
      Vec3 normal = Vec3::Zero();
      normal[axis] = sign;
      Vec3 s = Vec3::Zero(), t = Vec3::Zero();
      s[(axis + 1) % 3] = 1.0;
      t[(axis + 2) % 3] = 1.0;
      if (sign < 0) std::swap(s, t);
      const Vec3 origin = center + h * normal - h * s - h * t;
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          const double step = edge / n;
          const Vec3 p00 = origin + (a * step) * s + (b * step) * t;
          const Vec3 p10 = p00 + step * s;
          const Vec3 p01 = p00 + step * t;
          const Vec3 p11 = p10 + step * t;
          scene.primitives.push_back(scene.make_primitive(flat_net(p00, p10, p11), footprint));
          scene.primitives.push_back(scene.make_primitive(flat_net(p00, p11, p01), footprint));
        }
      }
    }
  }
  return scene;
}

std::vector<Vec3> sample_surface_points(const Primitive& prim, int count, std::uint64_t seed) {
  std::vector<Vec3> out;
  if (count <= 0) return out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    const double s = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const Barycentric bc{1.0 - s, s * (1.0 - r2), s * r2};
    out.push_back(evaluate_surface(prim.geometry, bc));
  }
  return out;
}

double approximate_area(const ControlNet& net) {
  const Vec3 a = evaluate_surface(net, {1, 0, 0});
  const Vec3 b = evaluate_surface(net, {0, 1, 0});
  const Vec3 c = evaluate_surface(net, {0, 0, 1});
  const Vec3 ab = evaluate_surface(net, {0.5, 0.5, 0});
  const Vec3 ac = evaluate_surface(net, {0.5, 0, 0.5});
  const Vec3 bc = evaluate_surface(net, {0, 0.5, 0.5});
  auto area = [](const Vec3& p, const Vec3& q, const Vec3& r) {
    return 0.5 * (q - p).cross(r - p).norm();
  };
  return area(a, ab, ac) + area(ab, b, bc) + area(ac, bc, c) + area(ab, bc, ac);
}

double aspect_ratio(const ControlNet& net) {
  const Vec3 a = evaluate_surface(net, {1, 0, 0});
  const Vec3 b = evaluate_surface(net, {0, 1, 0});
  const Vec3 c = evaluate_surface(net, {0, 0, 1});
  std::array<std::pair<Vec3, Vec3>, 3> edges{{{a, b}, {b, c}, {c, a}}};
  auto longest = std::max_element(edges.begin(), edges.end(), [](const auto& l, const auto& r) {
    return (l.second - l.first).squaredNorm() < (r.second - r.first).squaredNorm();
  });
  const Vec3 e1_raw = longest->second - longest->first;
  if (e1_raw.norm() <= 0.0) return std::numeric_limits<double>::infinity();
  const Vec3 e1 = e1_raw.normalized();
  Vec3 normal = (b - a).cross(c - a);
  Vec3 e2;
  if (normal.norm() > 1e-300) {
    e2 = normal.normalized().cross(e1);
  } else {
    return std::numeric_limits<double>::infinity();
  }
  double min1 = 1e300, max1 = -1e300, min2 = 1e300, max2 = -1e300;
  for (const Vec3& p : net.points) {
    const double s = (p - a).dot(e1), t = (p - a).dot(e2);
    min1 = std::min(min1, s);
    max1 = std::max(max1, s);
    min2 = std::min(min2, t);
    max2 = std::max(max2, t);
  }
  const double w = max1 - min1, h = max2 - min2;
  const double lo = std::min(w, h), hi = std::max(w, h);
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace bgt
