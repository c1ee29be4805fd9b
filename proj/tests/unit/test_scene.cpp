#include "bgtri/error.hpp"
#include "bgtri/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

namespace bgt {
namespace {

TEST(Scene, TriangularTexelIndexIsABijection) {
  for (int r = 1; r <= 8; ++r) {
    std::set<int> seen;
    for (int y = 0; y < r; ++y)
      for (int x = 0; x + y < r; ++x) seen.insert(triangular_texel_index(r, x, y));
    EXPECT_EQ(static_cast<int>(seen.size()), triangular_texel_count(r));
    EXPECT_EQ(*seen.begin(), 0);
    EXPECT_EQ(*seen.rbegin(), triangular_texel_count(r) - 1);
  }
}

TEST(Scene, TexelWeightsAreConvexAndInside) {
  for (int r : {1, 2, 3, 5}) {
    for (double v = 0.0; v <= 1.0; v += 0.05)
      for (double w = 0.0; v + w <= 1.0 + 1e-12; w += 0.05) {
        const TexelWeights tw = texel_weights(r, {std::max(0.0, 1.0 - v - w), v, w});
        double sum = 0.0;
        for (int k = 0; k < tw.count; ++k) {
          EXPECT_GE(tw.weight[k], 0.0);
          EXPECT_GE(tw.texel[k], 0);
          EXPECT_LT(tw.texel[k], triangular_texel_count(r));
          sum += tw.weight[k];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
  }
}

TEST(Scene, InterpolationReproducesTexelsAtGridPoints) {
  AttributeMap map = AttributeMap::make(AttributeKind::scaling, 4, 2);
  for (std::size_t i = 0; i < map.texels.size(); ++i) map.texels[i] = 0.37 * i - 1.0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x + y < 4; ++x) {
      const double v = x / 3.0, w = y / 3.0;
      const auto value = interpolate_texels(map, {1.0 - v - w, v, w});
      const auto texel = map.texel(triangular_texel_index(4, x, y));
      EXPECT_NEAR(value[0], texel[0], 1e-12);
      EXPECT_NEAR(value[1], texel[1], 1e-12);
    }
}

TEST(Scene, InterpolationReproducesConstants) {
  const AttributeMap map = AttributeMap::make(AttributeKind::sh, 5, 3, 0.625);
  for (double v = 0.0; v <= 1.0; v += 0.07)
    for (double w = 0.0; v + w <= 1.0; w += 0.07)
      for (double x : interpolate_texels(map, {1.0 - v - w, v, w})) EXPECT_NEAR(x, 0.625, 1e-15);
}

TEST(Scene, ParameterLayout) {
  Scene scene;
  Primitive p = scene.make_primitive(flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)), 0.1);
  EXPECT_EQ(params(p, ParamGroup::position).size(), 18u);
  EXPECT_EQ(params(p, ParamGroup::color).size(), 18u);
  EXPECT_EQ(params(p, ParamGroup::rotation).size(), 24u);
  EXPECT_EQ(params(p, ParamGroup::scaling).size(), 12u);
  EXPECT_EQ(params(p, ParamGroup::sh).size(), 24u);
  EXPECT_EQ(parameter_count(p), 96);
  for (ParamGroup g : kParamGroups) EXPECT_EQ(param_group_from_string(to_string(g)), g);
}

TEST(Scene, RotationSampleIsUnitQuaternion) {
  Scene scene;
  Primitive p = scene.make_primitive(flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)), 0.1);
  for (std::size_t i = 0; i < p.rotation.texels.size(); ++i) p.rotation.texels[i] += 0.1 * i;
  const auto q = sample_attribute(p, AttributeKind::rotation, {0.2, 0.3, 0.5});
  ASSERT_EQ(q.size(), 4u);
  EXPECT_NEAR(std::hypot(std::hypot(q[0], q[1]), std::hypot(q[2], q[3])), 1.0, 1e-12);
}

TEST(Scene, FlatNetIsPlanarAndExact) {
  const Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 1, 0);
  const ControlNet net = flat_net(a, b, c);
  EXPECT_LT((evaluate_surface(net, {0.2, 0.3, 0.5}) - (0.2 * a + 0.3 * b + 0.5 * c)).norm(), 1e-14);
  EXPECT_NEAR(approximate_area(net), 1.0, 1e-12);
}

TEST(Scene, AspectRatioOfEquilateralAndSliver) {
  const double h = std::sqrt(3.0) / 2.0;
  EXPECT_NEAR(aspect_ratio(flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, h, 0))),
              1.0 / h, 1e-12);
  EXPECT_NEAR(aspect_ratio(flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, 0.01, 0))), 100.0,
              1e-9);
}

TEST(Scene, CubeInitCoversTheSurface) {
  const Scene scene = init_from_cube(Vec3::Zero(), 2.0, 2);
  ASSERT_EQ(scene.primitives.size(), 48u);
  double area = 0.0;
  for (const Primitive& p : scene.primitives) {
    area += approximate_area(p.geometry);
    for (const Vec3& c : p.geometry.points) EXPECT_NEAR(c.cwiseAbs().maxCoeff(), 1.0, 1e-12);
    // Outward normals.
    const auto t = surface_tangents(p.geometry, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    EXPECT_GT(t[0].cross(t[1]).dot(evaluate_surface(p.geometry, {1.0 / 3, 1.0 / 3, 1.0 / 3})),
              0.0);
  }
  EXPECT_NEAR(area, 24.0, 1e-9);
  EXPECT_NO_THROW(scene.validate());
}

TEST(Scene, PointCloudInitPlacesTrianglesOnPoints) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(std::cos(i), std::sin(i), 0.1 * i);
  const Scene scene = init_from_point_cloud(pts, 20, 0.3, 7);
  ASSERT_EQ(scene.primitives.size(), 20u);
  std::set<std::int64_t> ids;
  for (const Primitive& p : scene.primitives) {
    ids.insert(p.id);
    const Vec3 centroid = evaluate_surface(p.geometry, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    double best = 1e9;
    for (const Vec3& q : pts) best = std::min(best, (q - centroid).norm());
    EXPECT_LT(best, 1e-12);
    EXPECT_NEAR(aspect_ratio(p.geometry), 2.0 / std::sqrt(3.0), 1e-9);
  }
  EXPECT_EQ(ids.size(), 20u);
  EXPECT_THROW(init_from_point_cloud({}, 5, 0.3, 0), ContractError);
}

TEST(Scene, PointCloudTrianglesFollowTheFittedPlane) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Vec3 normal = Vec3(0.3, -0.2, 1.0).normalized();
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) {
    const double x = u(rng), y = u(rng);
    pts.emplace_back(x, y, -(normal.x() * x + normal.y() * y) / normal.z());
  }
  const Scene fitted = init_from_point_cloud(pts, 15, 0.3, 2, true);
  for (const Primitive& p : fitted.primitives)
    for (const Vec3& c : p.geometry.points) EXPECT_NEAR(c.dot(normal), 0.0, 1e-9);

  // Default orientation is random: most triangles leave the plane.
  const Scene random = init_from_point_cloud(pts, 15, 0.3, 2);
  int off_plane = 0;
  for (const Primitive& p : random.primitives) {
    const auto& g = p.geometry.points;
    const Vec3 n = (g[3] - g[0]).cross(g[5] - g[0]).normalized();
    off_plane += std::abs(n.dot(normal)) < 0.99;
  }
  EXPECT_GE(off_plane, 12);
}

TEST(Scene, SetFootprintFillsScales) {
  Scene scene = init_from_cube(Vec3::Zero(), 2.0, 1);
  scene.set_footprint(0.05);
  for (const Primitive& p : scene.primitives)
    for (double s : p.scaling.texels) EXPECT_DOUBLE_EQ(s, std::log(0.05));
  EXPECT_THROW(scene.set_footprint(0.0), ContractError);
}

TEST(Scene, SurfaceSamplesLieOnThePatch) {
  Scene scene;
  Primitive p = scene.make_primitive(flat_net(Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 1, 1)), 0.1);
  for (const Vec3& s : sample_surface_points(p, 200, 3)) {
    EXPECT_NEAR(s.z(), 1.0, 1e-12);
    EXPECT_GE(s.x(), -1e-12);
    EXPECT_GE(s.y(), -1e-12);
    EXPECT_LE(s.x() + s.y(), 1.0 + 1e-12);
  }
}

TEST(Scene, VisibilityTexelCoversDomain) {
  std::set<int> seen;
  const int r = kVisibilityResolution;
  for (int a = 0; a <= 200; ++a)
    for (int b = 0; a + b <= 200; ++b) {
      const int t = visibility_texel({1.0 - (a + b) / 200.0, a / 200.0, b / 200.0});
      EXPECT_GE(t, 0);
      EXPECT_LT(t, triangular_texel_count(r));
      seen.insert(t);
    }
  EXPECT_EQ(static_cast<int>(seen.size()), triangular_texel_count(r));
}

}  // namespace
}  // namespace bgt
