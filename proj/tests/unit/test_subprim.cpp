#include "bgtri/error.hpp"
#include "bgtri/subprim.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace bgt {
namespace {

ControlNet bent_net() {
  ControlNet net = flat_net(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
  net.points[control_slot(2, 1, 1)] += Vec3(0, 0, 0.4);
  net.points[control_slot(2, 0, 1)] += Vec3(0.1, -0.2, 0.3);
  return net;
}

TEST(Subprim, TangentFrameIsRightHandedAndAligned) {
  const ControlNet net = bent_net();
  for (const Barycentric bc : {Barycentric{0.2, 0.3, 0.5}, Barycentric{0.7, 0.1, 0.2}}) {
    const SurfaceFrame f = tangent_frame(net, bc);
    ASSERT_FALSE(f.degenerate);
    EXPECT_LT((f.frame.transpose() * f.frame - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(f.frame.determinant(), 1.0, 1e-12);
    EXPECT_LT((f.frame.col(0) - f.dv.normalized()).norm(), 1e-12);
    EXPECT_LT((f.frame.col(2) - f.dv.cross(f.dw).normalized()).norm(), 1e-12);
  }
}

TEST(Subprim, CollapsedNetGivesDegenerateFrame) {
  ControlNet net;
  net.points.assign(6, Vec3(1, 2, 3));
  EXPECT_TRUE(tangent_frame(net, {0.3, 0.3, 0.4}).degenerate);
}

TEST(Subprim, QuaternionMatrixMatchesEigen) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    const Mat3 m = quaternion_to_matrix(Vec4(q.w(), q.x(), q.y(), q.z()));
    EXPECT_LT((m - q.toRotationMatrix()).norm(), 1e-12);
  }
}

TEST(Subprim, AttributesFromTexels) {
  Scene scene;
  Primitive p = scene.make_primitive(bent_net(), 0.1);
  const Barycentric bc{0.25, 0.25, 0.5};
  const SubPrimitiveAttributes a = evaluate_attributes(p, bc);
  // Identity quaternion texels leave the surface frame untouched.
  EXPECT_LT((a.rotation - tangent_frame(p.geometry, bc).frame).norm(), 1e-12);
  EXPECT_NEAR(a.scale[0], 0.1, 1e-15);
  EXPECT_NEAR(a.scale[1], 0.1, 1e-15);
  EXPECT_NEAR(a.scale[2], kThinAxisRatio * 0.1, 1e-18);

  // Quaternion texels are normalized after interpolation.
  for (std::size_t t = 0; t < p.rotation.texels.size(); t += 4) p.rotation.texels[t] = 3.0;
  EXPECT_NEAR(evaluate_attributes(p, bc).quaternion[0], 1.0, 1e-15);
}

TEST(Subprim, DiffuseColorIsQuadraticBernsteinSum) {
  Scene scene;
  Primitive p = scene.make_primitive(bent_net(), 0.1);
  for (int i = 0; i < 6; ++i) p.color.points[i] = Vec3(0.1 * i, 0.5 - 0.05 * i, 0.3);
  const Barycentric bc{0.2, 0.3, 0.5};
  Vec3 expected = Vec3::Zero();
  for (int s = 0; s < 6; ++s) {
    const TriIndex t = control_indices(2)[s];
    const double f[3] = {1.0, 1.0, 2.0};
    const double b = 2.0 / (f[t.i] * f[t.j] * f[t.k]) * std::pow(bc.u, t.i) *
                     std::pow(bc.v, t.j) * std::pow(bc.w, t.k);
    expected += b * p.color.points[s];
  }
  EXPECT_LT((evaluate_attributes(p, bc).raw_diffuse - expected).norm(), 1e-14);
}

TEST(Subprim, ShBasisIsOrthonormal) {
  // Fibonacci-sphere quadrature.
  const int n = 40000;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  double gram[kShBasisCount][kShBasisCount] = {};
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3 d(r * std::cos(golden * i), r * std::sin(golden * i), z);
    const auto y = sh_basis(d);
    for (int a = 0; a < kShBasisCount; ++a)
      for (int b = 0; b < kShBasisCount; ++b) gram[a][b] += y[a] * y[b] * 4.0 * M_PI / n;
  }
  for (int a = 0; a < kShBasisCount; ++a)
    for (int b = 0; b < kShBasisCount; ++b) EXPECT_NEAR(gram[a][b], a == b ? 1.0 : 0.0, 1e-3);
}

TEST(Subprim, ShGradientMatchesFiniteDifferences) {
  const Vec3 d = Vec3(0.3, -0.5, 0.8).normalized();
  const auto g = sh_basis_gradient(d);
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Vec3 dp = d, dm = d;
    dp[k] += h;
    dm[k] -= h;
    const auto yp = sh_basis(dp), ym = sh_basis(dm);
    for (int b = 0; b < kShBasisCount; ++b) EXPECT_NEAR(g[b][k], (yp[b] - ym[b]) / (2 * h), 1e-8);
  }
}

TEST(Subprim, ShResidualIsLinearAndChecksSize) {
  std::array<double, kShBasisCount * 3> c{};
  c[2 * 3 + 1] = 2.0;  // basis 2 (-C1 x), green
  const Vec3 r = eval_sh_residual(c, Vec3(1, 0, 0));
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], -2.0 * 0.4886025119029199, 1e-15);
  const std::vector<double> short_coeffs(5, 0.0);
  EXPECT_THROW(eval_sh_residual(short_coeffs, Vec3(1, 0, 0)), DimensionError);
}

TEST(Subprim, GenerateOnePerForegroundPixel) {
  Camera cam;
  cam.fx = cam.fy = 30.0;
  cam.cx = cam.cy = 10.0;
  cam.width = cam.height = 20;
  Scene scene;
  Primitive p = scene.make_primitive(flat_net(Vec3(-1, -1, 4), Vec3(1, -1, 4), Vec3(0, 1, 4)), 0.1);
  p.color.points[0] = Vec3(1.5, -0.2, 0.5);
  scene.primitives.push_back(p);
  const RasterBuffers buf = rasterize(scene, cam);
  const auto subs = generate(buf, scene, cam);
  ASSERT_EQ(static_cast<int>(subs.size()), buf.foreground_count());
  int last = -1;
  for (const SubPrimitive& s : subs) {
    EXPECT_GT(s.pixel, last);
    last = s.pixel;
    EXPECT_EQ(buf.id[s.pixel], s.owner);
    EXPECT_LT((s.position - evaluate_surface(scene.primitives[0].geometry, s.bc)).norm(), 1e-15);
    EXPECT_NEAR(s.depth, 4.0, 1e-12);
    for (int c = 0; c < 3; ++c) {
      EXPECT_GE(s.diffuse[c], 0.0);
      EXPECT_LE(s.diffuse[c], 1.0);
    }
  }
}

}  // namespace
}  // namespace bgt
