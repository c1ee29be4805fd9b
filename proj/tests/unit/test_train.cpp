#include "bgtri/error.hpp"
#include "bgtri/metrics.hpp"
#include "bgtri/subprim.hpp"
#include "bgtri/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace bgt {
namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, 3);
  for (double& v : img.data) v = u(rng);
  return img;
}

Camera front_camera(int size) {
  return Camera::look_at(Vec3(2.5, -3.5, 2.0), Vec3::Zero(), Vec3::UnitZ(), 0.8, size, size);
}

TEST(Train, LossIsMseWithoutSsimTerm) {
  const Image a = random_image(14, 13, 1), b = random_image(14, 13, 2);
  EXPECT_NEAR(photometric_loss(a, b, 0.0).loss, mse(a, b), 1e-15);
  const LossResult r = photometric_loss(a, b, 0.2);
  EXPECT_NEAR(r.loss, 0.8 * mse(a, b) + 0.2 * 0.5 * (1.0 - ssim(a, b)), 1e-14);
  EXPECT_NEAR(r.l2, mse(a, b), 1e-15);
}

TEST(Train, LossGradientMatchesFiniteDifferences) {
  const Image a = random_image(16, 15, 3), b = random_image(16, 15, 4);
  const LossResult r = photometric_loss(a, b, 0.2);
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t i = rng() % a.data.size();
    Image p = a, m = a;
    p.data[i] += h;
    m.data[i] -= h;
    const double numeric =
        (photometric_loss(p, b, 0.2, false).loss - photometric_loss(m, b, 0.2, false).loss) /
        (2 * h);
    EXPECT_NEAR(r.grad.data[i], numeric, 1e-9);
  }
}

TEST(Train, AdamFirstStepMovesByLearningRate) {
  Scene scene = init_from_cube(Vec3::Zero(), 2.0, 1);
  AdamState state = AdamState::zeros_like(scene);
  GradientBuffers g = GradientBuffers::zeros_like(scene);
  g.primitives[0][ParamGroup::scaling][0] = 0.3;
  g.primitives[0][ParamGroup::scaling][1] = -1e-6;
  g.primitives[0][ParamGroup::color][0] = -2.0;
  const Scene before = scene;
  LearningRates rates{};
  rates.fill(0.01);
  adam_step(scene, g, state, rates, false);
  const auto s0 = params(before.primitives[0], ParamGroup::scaling);
  const auto s1 = params(scene.primitives[0], ParamGroup::scaling);
  EXPECT_NEAR(s1[0] - s0[0], -0.01, 1e-12);
  EXPECT_NEAR(s1[1] - s0[1], 0.01, 1e-9);
  EXPECT_EQ(s1[2], s0[2]);
  EXPECT_NEAR(params(scene.primitives[0], ParamGroup::color)[0] -
                  params(before.primitives[0], ParamGroup::color)[0],
              0.01, 1e-12);
  EXPECT_EQ(state.step, 1);
}

TEST(Train, AdamClampsColorsAndNormalizesRotations) {
  Scene scene = init_from_cube(Vec3::Zero(), 2.0, 1);
  AdamState state = AdamState::zeros_like(scene);
  GradientBuffers g = GradientBuffers::zeros_like(scene);
  for (auto& pg : g.primitives) {
    for (double& c : pg[ParamGroup::color]) c = -1.0;
    for (double& r : pg[ParamGroup::rotation]) r = 0.5;
  }
  LearningRates rates{};
  rates.fill(2.0);
  adam_step(scene, g, state, rates, true);
  for (const Primitive& p : scene.primitives) {
    for (double c : params(p, ParamGroup::color)) EXPECT_EQ(c, 1.0);
    for (int t = 0; t < p.rotation.texel_count(); ++t) {
      double n = 0.0;
      for (double c : p.rotation.texel(t)) n += c * c;
      EXPECT_NEAR(n, 1.0, 1e-6);
    }
    for (ParamGroup grp : kParamGroups)
      for (double x : params(p, grp)) EXPECT_EQ(x, static_cast<double>(static_cast<float>(x)));
  }
}

TEST(Train, PositionLearningRateDecaysExponentially) {
  TrainConfig c;
  c.iterations = 1000;
  const double extent = 4.0;
  const auto first = learning_rates(c, extent, 0);
  const auto mid = learning_rates(c, extent, 500);
  const auto last = learning_rates(c, extent, 1000);
  const int pos = static_cast<int>(ParamGroup::position);
  EXPECT_NEAR(first[pos], c.lr_position * extent, 1e-18);
  EXPECT_NEAR(mid[pos], c.lr_position * extent * std::sqrt(c.lr_position_final), 1e-15);
  EXPECT_NEAR(last[pos], c.lr_position * extent * c.lr_position_final, 1e-18);
  EXPECT_EQ(last[static_cast<int>(ParamGroup::color)], c.lr_color);
  EXPECT_EQ(last[static_cast<int>(ParamGroup::sh)], c.lr_sh);
}

Primitive curved_primitive(Scene& scene) {
  ControlNet net = flat_net(Vec3(-1, -1, 0), Vec3(1, -1, 0.2), Vec3(0, 1, -0.1));
  net.points[control_slot(2, 1, 1)] += Vec3(0.1, 0.0, 0.4);
  Primitive p = scene.make_primitive(net, 0.05);
  for (int i = 0; i < 6; ++i) p.color.points[i] = Vec3(0.1 + 0.1 * i, 0.9 - 0.1 * i, 0.5);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.2);
  for (double& x : p.rotation.texels) x += n(rng);
  for (double& x : p.scaling.texels) x += n(rng);
  for (double& x : p.sh.texels) x = n(rng);
  return p;
}

TEST(Train, SplitChildrenReproduceParent) {
  Scene scene;
  const Primitive parent = curved_primitive(scene);
  const auto children = split_primitive(parent, scene);
  const auto& subs = midpoint_subtriangles();
  std::set<std::int64_t> ids;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 4; ++c) {
    ids.insert(children[c].id);
    EXPECT_NE(children[c].id, parent.id);
    for (int rep = 0; rep < 50; ++rep) {
      double a = u(rng), b = u(rng);
      if (a + b > 1) a = 1 - a, b = 1 - b;
      const Barycentric cbc{1 - a - b, a, b};
      const Barycentric pbc = subs[c].to_parent(cbc);
      EXPECT_LT((evaluate_surface(children[c].geometry, cbc) -
                 evaluate_surface(parent.geometry, pbc)).norm(), 1e-12);
      EXPECT_LT((evaluate_attributes(children[c], cbc).raw_diffuse -
                 evaluate_attributes(parent, pbc).raw_diffuse).norm(), 1e-12);
    }
  }
  EXPECT_EQ(ids.size(), 4u);
}

TEST(Train, SplitKeepsWorldRotationAtChildTexels) {
  Scene scene;
  const Primitive parent = curved_primitive(scene);
  const auto children = split_primitive(parent, scene);
  const auto& subs = midpoint_subtriangles();
  const int r = kRotationResolution;
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x + y < r; ++x) {
        const double v = double(x) / (r - 1), w = double(y) / (r - 1);
        const Barycentric cbc{std::max(0.0, 1.0 - v - w), v, w};
        const Mat3 child = evaluate_attributes(children[c], cbc).rotation;
        const Mat3 par = evaluate_attributes(parent, subs[c].to_parent(cbc)).rotation;
        EXPECT_LT((child - par).norm(), 1e-9);
      }
}

TEST(Train, PureSplitPreservesGeometryAndPlainSplatting) {
  Scene scene = init_from_cube(Vec3::Zero(), 2.0, 2);
  scene.set_footprint(0.03);
  for (std::size_t p = 0; p < scene.primitives.size(); ++p)
    for (int i = 0; i < 6; ++i)
      scene.primitives[p].color.points[i] = Vec3(0.2 + 0.01 * p, 0.1 * i, 0.5);
  Scene split = scene;
  std::vector<Primitive> next;
  for (const Primitive& p : split.primitives)
    for (Primitive& c : split_primitive(p, split)) next.push_back(std::move(c));
  split.primitives = std::move(next);

  const Camera cam = front_camera(64);
  RenderOptions plain;
  plain.blending = false;
  const ForwardPass a = render(scene, cam, plain), b = render(split, cam, plain);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.image().data.size(); ++i)
    worst = std::max(worst, std::abs(a.image().data[i] - b.image().data[i]));
  EXPECT_LT(worst, 2.0 / 255.0);
  for (std::size_t pix = 0; pix < a.buffers.depth.size(); ++pix) {
    ASSERT_EQ(a.buffers.id[pix] < 0, b.buffers.id[pix] < 0);
    if (a.buffers.id[pix] >= 0) {
      EXPECT_NEAR(a.buffers.depth[pix], b.buffers.depth[pix], 1e-9);
    }
  }
}

TEST(Train, NeverVisiblePrimitiveIsPruned) {
  Scene scene;
  scene.primitives.push_back(
      scene.make_primitive(flat_net(Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(0, 1, 0)), 0.05));
  // Entirely behind the first triangle as seen from above.
  scene.primitives.push_back(scene.make_primitive(
      flat_net(Vec3(-0.1, -0.1, -1), Vec3(0.1, -0.1, -1), Vec3(0, 0.1, -1)), 0.05));
  const Camera cam =
      Camera::look_at(Vec3(0, 0, 5), Vec3::Zero(), Vec3::UnitY(), 0.5, 32, 32);
  const ForwardPass pass = render(scene, cam);
  accumulate_split_stats(scene, GradientBuffers::zeros_like(scene), pass.buffers,
                         Image(32, 32, 1));
  EXPECT_EQ(scene.primitives[1].stats.visible_views, 0);
  TrainConfig config;
  std::mt19937_64 rng(0);
  const SplitReport report = split_and_prune(scene, config, rng);
  EXPECT_EQ(report.pruned, 1);
  ASSERT_EQ(scene.primitives.size(), 1u);
  EXPECT_EQ(report.source, std::vector<int>{0});
}

TEST(Train, EdgeStraddlingPrimitiveSplits) {
  Scene scene;
  scene.primitives.push_back(
      scene.make_primitive(flat_net(Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(0, 1, 0)), 0.05));
  const Camera cam =
      Camera::look_at(Vec3(0, 0, 5), Vec3::Zero(), Vec3::UnitY(), 0.5, 32, 32);
  // Target with a hard vertical edge through the middle of the triangle.
  Image target(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 16; x < 32; ++x) target.set_rgb(x, y, Vec3(1, 1, 1));
  const ForwardPass pass = render(scene, cam);
  accumulate_split_stats(scene, GradientBuffers::zeros_like(scene), pass.buffers,
                         edge_map(target));
  TrainConfig config;
  EXPECT_GT(scene.primitives[0].stats.mean_edge(), config.tau_edge);
  std::mt19937_64 rng(0);
  const SplitReport report = split_and_prune(scene, config, rng);
  EXPECT_EQ(report.split, 1);
  EXPECT_EQ(scene.primitives.size(), 4u);
}

TEST(Train, SplitRespectsPrimitiveCeiling) {
  Scene scene = init_from_cube(Vec3::Zero(), 2.0, 1);  // 12 primitives
  for (Primitive& p : scene.primitives) {
    p.stats.observed_views = p.stats.visible_views = 1;
    p.stats.visibility_texels.assign(triangular_texel_count(kVisibilityResolution), 1);
    p.stats.edge_sum = 100.0;
    p.stats.edge_views = 1;
  }
  TrainConfig config;
  config.max_primitives = 20;
  std::mt19937_64 rng(1);
  const SplitReport report = split_and_prune(scene, config, rng);
  EXPECT_EQ(report.split, 2);
  EXPECT_EQ(scene.primitives.size(), 18u);
  EXPECT_LE(static_cast<int>(scene.primitives.size()), config.max_primitives);
}

TEST(Train, RemapStateCarriesMoments) {
  Scene scene = init_from_cube(Vec3::Zero(), 2.0, 1);
  AdamState state = AdamState::zeros_like(scene);
  for (std::size_t p = 0; p < scene.primitives.size(); ++p)
    state.m.primitives[p][ParamGroup::sh][0] = double(p + 1);
  SplitReport report;
  report.source = {3, -1, 0};
  Scene next;
  for (int i = 0; i < 3; ++i) next.primitives.push_back(scene.primitives[0]);
  remap_state(state, next, report);
  ASSERT_EQ(state.m.primitives.size(), 3u);
  EXPECT_EQ(state.m.primitives[0][ParamGroup::sh][0], 4.0);
  EXPECT_EQ(state.m.primitives[1][ParamGroup::sh][0], 0.0);
  EXPECT_EQ(state.m.primitives[2][ParamGroup::sh][0], 1.0);
}

TEST(Train, ConfigRoundTripAndErrors) {
  TrainConfig c;
  for (const std::string& key : config_keys()) {
    TrainConfig d;
    set_config_value(d, key, get_config_value(c, key));
    EXPECT_EQ(get_config_value(d, key), get_config_value(c, key)) << key;
  }
  set_config_value(c, "lambda", " 0.35 ");
  EXPECT_EQ(c.lambda, 0.35);
  set_config_value(c, "background", "0.1,0.2,0.3");
  EXPECT_EQ(c.background, Vec3(0.1, 0.2, 0.3));
  EXPECT_THROW(set_config_value(c, "lambda", "abc"), FormatError);
  EXPECT_THROW(set_config_value(c, "no_such_key", "1"), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "bgtri_test_config.txt";
  {
    std::ofstream f(path);
    f << "# comment\niterations = 42\nmax_primitives = 77  # trailing\n\n";
  }
  TrainConfig e;
  load_config_file(e, path);
  EXPECT_EQ(e.iterations, 42);
  EXPECT_EQ(e.max_primitives, 77);
  {
    std::ofstream f(path);
    f << "iterations 42\n";
  }
  EXPECT_THROW(load_config_file(e, path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config_file(e, path), MissingFileError);
}

}  // namespace
}  // namespace bgt
