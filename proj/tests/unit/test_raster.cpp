#include "bgtri/raster.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

namespace bgt {
namespace {

Camera pinhole(int size, double f) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  return cam;
}

Scene one_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
  Scene scene;
  scene.primitives.push_back(scene.make_primitive(flat_net(a, b, c), 0.05));
  return scene;
}

// Ray through the pixel center against the plane of (a, b, c); barycentrics
// from Cramer's rule on the hit point.
struct Hit {
  bool inside = false;
  double margin = 0.0;
  double depth = 0.0;
  Vec3 bc;
};

Hit ray_triangle(const Camera& cam, int x, int y, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 dir((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1.0);
  const Vec3 n = (b - a).cross(c - a);
  const double t = n.dot(a) / n.dot(dir);
  const Vec3 p = t * dir;
  const double total = n.squaredNorm();
  const double l0 = n.dot((b - p).cross(c - p)) / total;
  const double l1 = n.dot((c - p).cross(a - p)) / total;
  Hit h;
  h.bc = Vec3(l0, l1, 1.0 - l0 - l1);
  h.margin = h.bc.minCoeff();
  h.inside = h.margin >= 0.0 && t > 0.0;
  h.depth = p.z();
  return h;
}

TEST(Raster, TessellationLevelFollowsProjectedNetEdges) {
  const Camera cam = pinhole(64, 100.0);
  // Control-net edges are half the triangle edges; the longest projects to
  // (sqrt(2) / 2) * 100 / 5 * s pixels.
  for (double s : {0.05, 0.2, 0.5, 1.0, 3.0}) {
    const ControlNet net = flat_net(Vec3(0, 0, 5), Vec3(s, 0, 5), Vec3(0, s, 5));
    const double longest = std::sqrt(2.0) / 2.0 * 20.0 * s;
    int expected = 1;
    while (expected < kMaxTessellationLevel && longest / std::pow(2.0, expected) > 1.0) ++expected;
    EXPECT_EQ(tessellation_level(net, cam), expected) << "s=" << s;
  }
}

TEST(Raster, TessellationCountsAndVertices) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  ControlNet net;
  for (int i = 0; i < 6; ++i) net.points.emplace_back(n(rng), n(rng), n(rng));
  for (int level = 1; level <= 4; ++level) {
    const Tessellation t = tessellate_level(net, level);
    const int m = 1 << level;
    EXPECT_EQ(t.triangles.size(), static_cast<std::size_t>(m * m));
    EXPECT_EQ(t.positions.size(), static_cast<std::size_t>((m + 1) * (m + 2) / 2));
    double area = 0.0;
    for (const auto& tri : t.triangles) {
      const Barycentric &a = t.bc[tri[0]], &b = t.bc[tri[1]], &c = t.bc[tri[2]];
      area += 0.5 * std::abs((b.v - a.v) * (c.w - a.w) - (b.w - a.w) * (c.v - a.v));
    }
    EXPECT_NEAR(area, 0.5, 1e-12);
    for (std::size_t v = 0; v < t.positions.size(); ++v)
      EXPECT_EQ(t.positions[v], evaluate_surface(net, t.bc[v]));
  }
}

TEST(Raster, FrustumRejection) {
  const Camera cam = pinhole(32, 40.0);
  EXPECT_TRUE(intersects_frustum(flat_net(Vec3(0, 0, 4), Vec3(1, 0, 4), Vec3(0, 1, 4)), cam));
  EXPECT_FALSE(
      intersects_frustum(flat_net(Vec3(0, 0, -4), Vec3(1, 0, -4), Vec3(0, 1, -4)), cam));
  EXPECT_FALSE(
      intersects_frustum(flat_net(Vec3(20, 0, 4), Vec3(21, 0, 4), Vec3(20, 1, 4)), cam));
  // Straddling the camera plane is conservatively kept.
  EXPECT_TRUE(intersects_frustum(flat_net(Vec3(0, 0, -1), Vec3(1, 0, 4), Vec3(0, 1, 4)), cam));
}

TEST(Raster, FlatTriangleMatchesRayCasting) {
  const Camera cam = pinhole(32, 40.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> xy(-1.2, 1.2), z(3.0, 6.0);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec3 a(xy(rng), xy(rng), z(rng)), b(xy(rng), xy(rng), z(rng)), c(xy(rng), xy(rng), z(rng));
    const Scene scene = one_triangle(a, b, c);
    const RasterBuffers buf = rasterize(scene, cam);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const Hit h = ray_triangle(cam, x, y, a, b, c);
        if (std::abs(h.margin) < 1e-9) continue;
        ASSERT_EQ(buf.id_at(x, y) == 0, h.inside) << x << "," << y;
        if (!h.inside) continue;
        const Barycentric& bc = buf.uv[buf.pixel(x, y)];
        EXPECT_NEAR(bc.u, h.bc[0], 1e-9);
        EXPECT_NEAR(bc.v, h.bc[1], 1e-9);
        EXPECT_NEAR(bc.w, h.bc[2], 1e-9);
        EXPECT_NEAR(buf.depth[buf.pixel(x, y)], h.depth, 1e-9);
      }
  }
}

TEST(Raster, NearerPrimitiveWins) {
  const Camera cam = pinhole(16, 20.0);
  Scene scene;
  scene.primitives.push_back(
      scene.make_primitive(flat_net(Vec3(-2, -2, 5), Vec3(2, -2, 5), Vec3(0, 2, 5)), 0.05));
  scene.primitives.push_back(
      scene.make_primitive(flat_net(Vec3(-2, -2, 3), Vec3(2, -2, 3), Vec3(0, 2, 3)), 0.05));
  const RasterBuffers buf = rasterize(scene, cam);
  EXPECT_EQ(buf.id_at(8, 8), 1);
  EXPECT_NEAR(buf.depth[buf.pixel(8, 8)], 3.0, 1e-12);
}

TEST(Raster, BandCountDoesNotChangeOutput) {
  const Camera cam = pinhole(24, 30.0);
  Scene scene;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> xy(-1.0, 1.0), z(2.5, 4.0);
  for (int i = 0; i < 8; ++i)
    scene.primitives.push_back(scene.make_primitive(
        flat_net(Vec3(xy(rng), xy(rng), z(rng)), Vec3(xy(rng), xy(rng), z(rng)),
                 Vec3(xy(rng), xy(rng), z(rng))),
        0.05));
  const RasterBuffers one = rasterize(scene, cam, 1);
  const RasterBuffers many = rasterize(scene, cam, 5);
  EXPECT_EQ(one.id, many.id);
  EXPECT_EQ(one.depth, many.depth);
}

TEST(Raster, BoundaryPointsMatchNeighbourhoodScan) {
  const Camera cam = pinhole(24, 30.0);
  Scene scene;
  scene.primitives.push_back(
      scene.make_primitive(flat_net(Vec3(-1, -1, 4), Vec3(1, -1, 4), Vec3(-1, 1, 4)), 0.05));
  scene.primitives.push_back(
      scene.make_primitive(flat_net(Vec3(1, -1, 4), Vec3(1, 1, 4), Vec3(-1, 1, 4)), 0.05));
  const RasterBuffers buf = rasterize(scene, cam);
  const double scale = 0.02;
  const auto points = extract_boundaries(buf, scene, cam, scale);

  std::set<std::pair<int, int>> expected;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const int id = buf.id_at(x, y);
      if (id == kBackground) continue;
      const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= cam.width || ny >= cam.height) continue;
        if (buf.id_at(nx, ny) != id) expected.insert({x, y});
      }
    }
  std::set<std::pair<int, int>> got;
  for (const BoundaryPoint& b : points) {
    got.insert({b.px, b.py});
    EXPECT_EQ(b.owner, buf.id_at(b.px, b.py));
    EXPECT_LT((b.point - evaluate_surface(scene.primitives[b.owner].geometry, b.bc)).norm(),
              1e-12);
    EXPECT_NEAR(b.sigma, scale * cam.fx / b.depth, 1e-12);
    // The surface point under a pixel center projects back onto it.
    EXPECT_LT((b.position - b.pixel_center()).norm(), 1e-9);
  }
  EXPECT_EQ(got, expected);
  // Both primitives own part of the shared diagonal.
  std::set<int> owners;
  for (const BoundaryPoint& b : points) owners.insert(b.owner);
  EXPECT_EQ(owners.size(), 2u);
}

}  // namespace
}  // namespace bgt
