#include "bgtri/bezier.hpp"
#include "bgtri/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <tuple>

namespace bgt {
namespace {

Barycentric random_bc(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double a = uni(rng), b = uni(rng);
  if (a + b > 1.0) {
    a = 1.0 - a;
    b = 1.0 - b;
  }
  return {1.0 - a - b, a, b};
}

ControlNet random_net(std::mt19937_64& rng, int degree = 2) {
  std::normal_distribution<double> n(0.0, 1.0);
  ControlNet net;
  net.degree = degree;
  for (int i = 0; i < control_count(degree); ++i) net.points.emplace_back(n(rng), n(rng), n(rng));
  return net;
}

// Textbook de Casteljau on a map keyed by (i, j, k).
Vec3 de_casteljau(const ControlNet& net, const Barycentric& bc) {
  const int n = net.degree;
  std::map<std::tuple<int, int, int>, Vec3> level;
  for (int s = 0; s < control_count(n); ++s) {
    const TriIndex t = control_indices(n)[s];
    level[{t.i, t.j, t.k}] = net.points[s];
  }
  for (int r = n; r > 0; --r) {
    std::map<std::tuple<int, int, int>, Vec3> next;
    for (int i = 0; i < r; ++i)
      for (int j = 0; i + j < r; ++j) {
        const int k = r - 1 - i - j;
        next[{i, j, k}] = bc.u * level[{i + 1, j, k}] + bc.v * level[{i, j + 1, k}] +
                          bc.w * level[{i, j, k + 1}];
      }
    level = std::move(next);
  }
  return level[{0, 0, 0}];
}

double factorial(int n) { return std::tgamma(n + 1.0); }

TEST(Bezier, StorageOrderForDegreeTwo) {
  const auto& idx = control_indices(2);
  ASSERT_EQ(idx.size(), 6u);
  const int expected[6][3] = {{2, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 2, 0}, {0, 1, 1}, {0, 0, 2}};
  for (int s = 0; s < 6; ++s) {
    EXPECT_EQ(idx[s].i, expected[s][0]);
    EXPECT_EQ(idx[s].j, expected[s][1]);
    EXPECT_EQ(idx[s].k, expected[s][2]);
    EXPECT_EQ(control_slot(2, idx[s].i, idx[s].j), s);
  }
}

TEST(Bezier, BernsteinMatchesFactorialFormula) {
  std::mt19937_64 rng(1);
  for (int n = 1; n <= 4; ++n)
    for (int rep = 0; rep < 20; ++rep) {
      const Barycentric bc = random_bc(rng);
      for (const TriIndex& t : control_indices(n)) {
        const double expected = factorial(n) / (factorial(t.i) * factorial(t.j) * factorial(t.k)) *
                                std::pow(bc.u, t.i) * std::pow(bc.v, t.j) * std::pow(bc.w, t.k);
        EXPECT_NEAR(bernstein(n, t.i, t.j, t.k, bc), expected, 1e-14);
      }
    }
}

TEST(Bezier, PartitionOfUnity) {
  std::mt19937_64 rng(2);
  std::vector<double> w(control_count(2));
  for (int rep = 0; rep < 1000; ++rep) {
    bernstein_weights(2, random_bc(rng), w);
    double sum = 0.0;
    for (double x : w) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Bezier, BadMultiIndexThrows) {
  EXPECT_THROW(bernstein(2, 1, 1, 1, {}), ContractError);
  EXPECT_THROW(validate(Barycentric{0.5, 0.6, -0.1}), ContractError);
}

TEST(Bezier, SurfaceMatchesDeCasteljau) {
  std::mt19937_64 rng(3);
  for (int n = 1; n <= 3; ++n) {
    const ControlNet net = random_net(rng, n);
    for (int rep = 0; rep < 50; ++rep) {
      const Barycentric bc = random_bc(rng);
      EXPECT_LT((evaluate_surface(net, bc) - de_casteljau(net, bc)).norm(), 1e-12);
    }
  }
}

TEST(Bezier, CornersInterpolateControlPoints) {
  std::mt19937_64 rng(4);
  const ControlNet net = random_net(rng);
  EXPECT_EQ(evaluate_surface(net, {1, 0, 0}), net.points[control_slot(2, 2, 0)]);
  EXPECT_EQ(evaluate_surface(net, {0, 1, 0}), net.points[control_slot(2, 0, 2)]);
  EXPECT_EQ(evaluate_surface(net, {0, 0, 1}), net.points[control_slot(2, 0, 0)]);
}

TEST(Bezier, CollapsedNetIsAPoint) {
  ControlNet net;
  net.points.assign(6, Vec3(0.25, -1.5, 3.0));
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep)
    EXPECT_LT((evaluate_surface(net, random_bc(rng)) - Vec3(0.25, -1.5, 3.0)).norm(), 1e-14);
}

TEST(Bezier, TangentsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  const ControlNet net = random_net(rng);
  const double h = 1e-6;
  for (int rep = 0; rep < 20; ++rep) {
    Barycentric bc = random_bc(rng);
    bc = {bc.u * 0.8 + 0.1, bc.v * 0.8 + 0.05, bc.w * 0.8 + 0.05};
    const auto t = surface_tangents(net, bc);
    const Vec3 dv = (evaluate_surface(net, {bc.u - h, bc.v + h, bc.w}) -
                     evaluate_surface(net, {bc.u + h, bc.v - h, bc.w})) / (2 * h);
    const Vec3 dw = (evaluate_surface(net, {bc.u - h, bc.v, bc.w + h}) -
                     evaluate_surface(net, {bc.u + h, bc.v, bc.w - h})) / (2 * h);
    EXPECT_LT((t[0] - dv).norm(), 1e-7);
    EXPECT_LT((t[1] - dw).norm(), 1e-7);
  }
}

TEST(Bezier, BlossomDiagonalAndSymmetry) {
  std::mt19937_64 rng(7);
  const ControlNet net = random_net(rng);
  const Barycentric a = random_bc(rng), b = random_bc(rng);
  const std::array<Barycentric, 2> same{a, a}, ab{a, b}, ba{b, a};
  EXPECT_LT((blossom(net, same) - evaluate_surface(net, a)).norm(), 1e-12);
  EXPECT_LT((blossom(net, ab) - blossom(net, ba)).norm(), 1e-12);
}

TEST(Bezier, MidpointSubtrianglesTileTheDomain) {
  const auto& subs = midpoint_subtriangles();
  double area = 0.0;
  for (const SubTriangle& s : subs) {
    const Vec2 a(s.corners[0].v, s.corners[0].w), b(s.corners[1].v, s.corners[1].w),
        c(s.corners[2].v, s.corners[2].w);
    const Vec2 e1 = b - a, e2 = c - a;
    area += 0.5 * std::abs(e1.x() * e2.y() - e1.y() * e2.x());
    for (const Barycentric& k : s.corners)
      for (int i = 0; i < 3; ++i) EXPECT_TRUE(k[i] == 0.0 || k[i] == 0.5 || k[i] == 1.0);
  }
  EXPECT_DOUBLE_EQ(area, 0.5);
}

TEST(Bezier, SubdivisionReproducesParent) {
  std::mt19937_64 rng(8);
  for (int n = 1; n <= 3; ++n) {
    const ControlNet net = random_net(rng, n);
    const auto children = subdivide_4(net);
    const auto& subs = midpoint_subtriangles();
    for (int c = 0; c < 4; ++c) {
      for (int rep = 0; rep < 200; ++rep) {
        const Barycentric cb = random_bc(rng);
        // Independent affine map from child to parent domain.
        Barycentric pb{0, 0, 0};
        for (int k = 0; k < 3; ++k) {
          pb.u += cb[k] * subs[c].corners[k].u;
          pb.v += cb[k] * subs[c].corners[k].v;
          pb.w += cb[k] * subs[c].corners[k].w;
        }
        EXPECT_LT((evaluate_surface(children[c], cb) - de_casteljau(net, pb)).norm(), 1e-9);
      }
    }
  }
}

TEST(Bezier, RestrictionToArbitrarySubtriangle) {
  std::mt19937_64 rng(9);
  const ControlNet net = random_net(rng);
  SubTriangle sub{{random_bc(rng), random_bc(rng), random_bc(rng)}};
  const ControlNet child = restrict_net(net, sub);
  for (int rep = 0; rep < 50; ++rep) {
    const Barycentric cb = random_bc(rng);
    EXPECT_LT((evaluate_surface(child, cb) - evaluate_surface(net, sub.to_parent(cb))).norm(),
              1e-10);
  }
}

TEST(Bezier, SubdivideRejectsDegreeZero) {
  ControlNet net;
  net.degree = 0;
  net.points = {Vec3::Zero()};
  EXPECT_THROW(subdivide_4(net), ContractError);
}

}  // namespace
}  // namespace bgt
