#include "bgtri/error.hpp"
#include "bgtri/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace bgt {
namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, 3);
  for (double& v : img.data) v = u(rng);
  return img;
}

// Direct 2D-window SSIM with its own Gaussian weights.
double ssim_oracle(const Image& a, const Image& b) {
  double taps[11], norm = 0.0;
  for (int k = 0; k < 11; ++k) norm += taps[k] = std::exp(-(k - 5.0) * (k - 5.0) / (2 * 1.5 * 1.5));
  for (double& t : taps) t /= norm;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y + 11 <= a.height; ++y)
      for (int x = 0; x + 11 <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int j = 0; j < 11; ++j)
          for (int i = 0; i < 11; ++i) {
            const double w = taps[i] * taps[j];
            const double va = a.at(x + i, y + j, c), vb = b.at(x + i, y + j, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / count;
}

TEST(Metrics, PsnrOfConstantOffset) {
  Image a(8, 8, 3, 0.5), b(8, 8, 3, 0.6);
  EXPECT_NEAR(mse(a, b), 0.01, 1e-15);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_THROW(mse(a, Image(8, 7, 3)), DimensionError);
}

TEST(Metrics, SsimMatchesDirectWindow) {
  const Image a = random_image(23, 19, 1);
  Image b = a;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.1);
  for (double& v : b.data) v += n(rng);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-12);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Metrics, SsimTapsAreNormalizedAndSymmetric) {
  const auto taps = ssim_taps();
  ASSERT_EQ(taps.size(), static_cast<std::size_t>(kSsimWindow));
  double sum = 0.0;
  for (int k = 0; k < kSsimWindow; ++k) {
    sum += taps[k];
    EXPECT_DOUBLE_EQ(taps[k], taps[kSsimWindow - 1 - k]);
  }
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(Metrics, SsimGradientMatchesFiniteDifferences) {
  const Image a = random_image(16, 14, 3), b = random_image(16, 14, 4);
  Image grad;
  const double value = ssim_with_gradient(a, b, &grad);
  EXPECT_NEAR(value, ssim(a, b), 1e-14);
  ASSERT_EQ(grad.data.size(), a.data.size());
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t i = rng() % a.data.size();
    Image p = a, m = a;
    p.data[i] += h;
    m.data[i] -= h;
    EXPECT_NEAR(grad.data[i], (ssim(p, b) - ssim(m, b)) / (2 * h), 1e-8);
  }
}

TEST(Metrics, GrayscaleUsesLumaWeights) {
  Image rgb(1, 1, 3);
  rgb.set_rgb(0, 0, Vec3(1.0, 0.5, 0.25));
  EXPECT_NEAR(grayscale(rgb, 2.0).data[0], 2.0 * (0.299 + 0.587 * 0.5 + 0.114 * 0.25), 1e-15);
}

TEST(Metrics, SobelOfUnitStep) {
  Image gray(8, 5, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 4; x < 8; ++x) gray.at(x, y) = 1.0;
  const Image mag = sobel_magnitude(gray);
  for (int y = 0; y < 5; ++y) {
    EXPECT_DOUBLE_EQ(mag.at(3, y), 4.0);
    EXPECT_DOUBLE_EQ(mag.at(4, y), 4.0);
    EXPECT_DOUBLE_EQ(mag.at(1, y), 0.0);
    EXPECT_DOUBLE_EQ(mag.at(6, y), 0.0);
  }
  EXPECT_THROW(sobel_magnitude(Image(4, 4, 3)), DimensionError);
}

TEST(Metrics, EdgeSharpnessAveragesOverMask) {
  Image rgb(8, 5, 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 4; x < 8; ++x) rgb.set_rgb(x, y, Vec3(1, 1, 1));
  std::vector<std::uint8_t> mask(40, 0);
  for (int y = 0; y < 5; ++y) mask[y * 8 + 3] = mask[y * 8 + 1] = 1;
  EXPECT_NEAR(edge_sharpness(rgb, mask), 2.0, 1e-12);
  EXPECT_THROW(edge_sharpness(rgb, std::vector<std::uint8_t>(40, 0)), ContractError);
}

TEST(Metrics, ChamferKnownValue) {
  const std::vector<Vec3> p{Vec3(0, 0, 0)}, q{Vec3(1, 0, 0), Vec3(3, 0, 0)};
  // p -> q: 1; q -> p: (1 + 3) / 2.
  EXPECT_NEAR(chamfer(p, q), 0.5 * (1.0 + 2.0), 1e-15);
  EXPECT_THROW(chamfer({}, q), ContractError);
}

TEST(Metrics, ChamferGridMatchesBruteForce) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Vec3> p, q;
    for (int i = 0; i < 700; ++i) p.emplace_back(n(rng), n(rng), 0.2 * n(rng));
    for (int i = 0; i < 900; ++i) q.emplace_back(n(rng) + 0.1, n(rng), n(rng));
    EXPECT_NEAR(chamfer_grid(p, q), chamfer_bruteforce(p, q), 1e-12);
  }
}

}  // namespace
}  // namespace bgt
