#include <gtest/gtest.h>

#include <cmath>

#include "warpreg/metrics.hpp"

#include "test_util.hpp"

using namespace warpreg;

namespace {

// Direct SSIM: explicit 2D Gaussian window, one double loop per window.
// Deliberately shares no code with the separable implementation under test.
double ssim_direct(const Image& x, const Image& y, const SsimParams& p = {}) {
  const int n = p.window_size;
  const int r = n / 2;
  std::vector<double> win(static_cast<size_t>(n) * n);
  double wsum = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double da = a - r, db = b - r;
      const double v = std::exp(-(da * da + db * db) / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
      win[static_cast<size_t>(a) * n + b] = v;
      wsum += v;
    }
  }
  for (double& v : win) v /= wsum;

  double total = 0.0;
  int count = 0;
  for (int i = r; i < x.height - r; ++i) {
    for (int j = r; j < x.width - r; ++j) {
      double mx = 0, my = 0;
      for (int a = -r; a <= r; ++a) {
        for (int b = -r; b <= r; ++b) {
          const double wt = win[static_cast<size_t>(a + r) * n + (b + r)];
          mx += wt * x.at(i + a, j + b);
          my += wt * y.at(i + a, j + b);
        }
      }
      double vx = 0, vy = 0, vxy = 0;
      for (int a = -r; a <= r; ++a) {
        for (int b = -r; b <= r; ++b) {
          const double wt = win[static_cast<size_t>(a + r) * n + (b + r)];
          const double dx = x.at(i + a, j + b) - mx;
          const double dy = y.at(i + a, j + b) - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          vxy += wt * dx * dy;
        }
      }
      const double c1 = p.c1(), c2 = p.c2();
      total += ((2.0 * mx * my + c1) * (2.0 * vxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST(Mse, HandComputedCase) {
  Image a(1, 2), b(1, 2);
  a.data = {0.0f, 0.5f};
  b.data = {0.5f, 0.5f};
  EXPECT_EQ(mse(a, b), 0.125);
}

TEST(Mse, ZeroOnIdenticalImages) {
  RngStream rng(1);
  const Image a = testutil::random_image(9, 9, rng);
  EXPECT_EQ(mse(a, a), 0.0);
}

TEST(Mse, SymmetricAndNonNegative) {
  RngStream rng(2);
  const Image a = testutil::random_image(6, 6, rng);
  const Image b = testutil::random_image(6, 6, rng);
  EXPECT_GT(mse(a, b), 0.0);
  EXPECT_EQ(mse(a, b), mse(b, a));
}

TEST(Mse, RejectsShapeMismatch) {
  const Image a(4, 4), b(4, 5);
  EXPECT_THROW(mse(a, b), DimensionError);
}

TEST(GaussianWindow, NormalizedAndSymmetric) {
  const auto k = detail::gaussian_window_1d(11, 1.5);
  ASSERT_EQ(k.size(), 11u);
  double sum = 0.0;
  for (double v : k) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (int t = 0; t < 5; ++t) EXPECT_NEAR(k[t], k[10 - t], 1e-15);
  for (int t = 0; t < 5; ++t) EXPECT_LT(k[t], k[t + 1]);
}

TEST(Ssim, IdenticalImagesScoreOne) {
  const Image a = testutil::textured_image(32, 32, 41);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantPairMatchesClosedForm) {
  const double av = 0.3, bv = 0.8;
  Image a(16, 16), b(16, 16);
  for (float& v : a.data) v = static_cast<float>(av);
  for (float& v : b.data) v = static_cast<float>(bv);
  const SsimParams p;
  // zero variance collapses the structure term, leaving the luminance ratio
  const double ax = static_cast<double>(a.data[0]);
  const double bx = static_cast<double>(b.data[0]);
  const double expected = (2.0 * ax * bx + p.c1()) / (ax * ax + bx * bx + p.c1());
  EXPECT_NEAR(ssim(a, b), expected, 1e-9);
}

TEST(Ssim, MatchesDirectImplementation) {
  for (uint64_t seed : {7u, 8u, 9u}) {
    const Image a = testutil::textured_image(24, 20, seed);
    const Image b = testutil::textured_image(24, 20, seed + 100);
    EXPECT_NEAR(ssim(a, b), ssim_direct(a, b), 1e-9);
  }
}

TEST(Ssim, SymmetricInArguments) {
  const Image a = testutil::textured_image(20, 20, 3);
  const Image b = testutil::textured_image(20, 20, 4);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, PenalizesMisalignment) {
  const Image a = testutil::textured_image(32, 32, 6);
  Image shifted(32, 32);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) shifted.at(i, j) = a.at(i, (j + 3) % 32);
  }
  EXPECT_LT(ssim(a, shifted), 0.9);
  EXPECT_GT(ssim(a, shifted), -1.0);
}

TEST(Ssim, WindowLargerThanImageThrows) {
  const Image a(8, 8), b(8, 8);
  EXPECT_THROW(ssim(a, b), ConfigError);
}

TEST(Ssim, CustomSmallWindowOnSmallImage) {
  SsimParams p;
  p.window_size = 5;
  const Image a = testutil::textured_image(8, 8, 12);
  EXPECT_NEAR(ssim(a, a, p), 1.0, 1e-9);
}

TEST(Ssim, InvalidParamsRejected) {
  SsimParams even;
  even.window_size = 10;
  EXPECT_THROW(even.validate(64, 64), ConfigError);
  SsimParams tiny;
  tiny.window_size = 1;
  EXPECT_THROW(tiny.validate(64, 64), ConfigError);
}

TEST(SsimMap, InteriorMatchesMean) {
  const Image a = testutil::textured_image(24, 24, 21);
  const Image b = testutil::textured_image(24, 24, 22);
  const Image map = ssim_map(a, b);
  ASSERT_EQ(map.height, 24);
  ASSERT_EQ(map.width, 24);
  double acc = 0.0;
  int count = 0;
  for (int i = 5; i < 24 - 5; ++i) {
    for (int j = 5; j < 24 - 5; ++j) {
      acc += map.at(i, j);
      ++count;
    }
  }
  EXPECT_NEAR(acc / count, ssim(a, b), 1e-5);
}

TEST(SsimMap, BordersReplicateNearestValidWindow) {
  const Image a = testutil::textured_image(24, 24, 31);
  const Image b = testutil::textured_image(24, 24, 32);
  const Image map = ssim_map(a, b);
  EXPECT_EQ(map.at(0, 0), map.at(5, 5));
  EXPECT_EQ(map.at(0, 7), map.at(5, 7));
  EXPECT_EQ(map.at(23, 23), map.at(18, 18));
}

TEST(Loss, ZeroForIdenticalImages) {
  const Image a = testutil::textured_image(16, 16, 2);
  EXPECT_NEAR(msessim_loss(a, a), 0.0, 1e-9);
}

TEST(Loss, DecomposesIntoWeightedTerms) {
  const Image a = testutil::textured_image(16, 16, 51);
  const Image b = testutil::textured_image(16, 16, 52);
  LossWeights lw;
  lw.alpha = 2.5;
  lw.beta = 0.5;
  const double expected = 2.5 * mse(a, b) - 0.5 * (ssim(a, b) - 1.0);
  EXPECT_NEAR(msessim_loss(a, b, lw), expected, 1e-12);
}

TEST(Loss, PositiveForDifferentImages) {
  const Image a = testutil::textured_image(16, 16, 61);
  const Image b = testutil::textured_image(16, 16, 62);
  EXPECT_GT(msessim_loss(a, b), 0.0);
}

TEST(Loss, RejectsInvalidWeights) {
  const Image a(16, 16), b(16, 16);
  LossWeights lw;
  lw.alpha = -1.0;
  EXPECT_THROW(msessim_loss(a, b, lw), ConfigError);
  lw.alpha = 0.0;
  lw.beta = 0.0;
  EXPECT_THROW(msessim_loss(a, b, lw), ConfigError);
}

TEST(Loss, DefaultWeightsMatchDocumentedValues) {
  const LossWeights lw;
  EXPECT_EQ(lw.alpha, 10.0);
  EXPECT_EQ(lw.beta, 1.0);
  const SsimParams p;
  EXPECT_EQ(p.window_size, 11);
  EXPECT_EQ(p.gaussian_sigma, 1.5);
  EXPECT_NEAR(p.c1(), 0.01 * 0.01, 1e-15);
  EXPECT_NEAR(p.c2(), 0.03 * 0.03, 1e-15);
}
