#include <gtest/gtest.h>

#include "warpreg/phase_correlation.hpp"

#include "test_util.hpp"

using namespace warpreg;

namespace {

// Exhaustive circular cross-correlation argmax, the quadratic-time oracle.
Shift brute_force_shift(const Image& s, const Image& t) {
  const int h = s.height, w = s.width;
  double best = -1e300;
  Shift out{0, 0, 0.0};
  for (int di = 0; di < h; ++di) {
    for (int dj = 0; dj < w; ++dj) {
      double acc = 0.0;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          acc += static_cast<double>(s.at(i, j)) *
                 static_cast<double>(t.at((i - di + h) % h, (j - dj + w) % w));
        }
      }
      if (acc > best) {
        best = acc;
        out.di = di > h / 2 ? di - h : di;
        out.dj = dj > w / 2 ? dj - w : dj;
      }
    }
  }
  return out;
}

}  // namespace

TEST(CircularShift, WrapsAroundBothAxes) {
  Image img(3, 3);
  for (size_t k = 0; k < 9; ++k) img.data[k] = static_cast<float>(k);
  const Image s = apply_circular_shift(img, 1, 2);
  // out(i,j) = img(i-1 mod 3, j-2 mod 3)
  EXPECT_FLOAT_EQ(s.at(0, 0), img.at(2, 1));
  EXPECT_FLOAT_EQ(s.at(1, 2), img.at(0, 0));
  EXPECT_FLOAT_EQ(s.at(2, 2), img.at(1, 0));
}

TEST(CircularShift, NegativeAndZeroShifts) {
  RngStream rng(4);
  const Image img = testutil::random_image(5, 7, rng);
  const Image zero = apply_circular_shift(img, 0, 0);
  for (size_t k = 0; k < img.size(); ++k) EXPECT_EQ(zero.data[k], img.data[k]);
  const Image back = apply_circular_shift(apply_circular_shift(img, 2, -3), -2, 3);
  for (size_t k = 0; k < img.size(); ++k) EXPECT_EQ(back.data[k], img.data[k]);
}

TEST(PhaseCorrelate, RecoversKnownShift) {
  const Image t = testutil::textured_image(64, 64, 91);
  const Image s = apply_circular_shift(t, 5, -3);
  const Shift r = phase_correlate(s, t);
  EXPECT_EQ(r.di, 5);
  EXPECT_EQ(r.dj, -3);
  EXPECT_GT(r.peak_response, 0.5);
}

TEST(PhaseCorrelate, ZeroShiftOnIdenticalImages) {
  const Image t = testutil::textured_image(32, 32, 92);
  const Shift r = phase_correlate(t, t);
  EXPECT_EQ(r.di, 0);
  EXPECT_EQ(r.dj, 0);
  // every bin's normalized cross power is ~1 except where spectrum energy
  // falls to the epsilon floor
  EXPECT_GT(r.peak_response, 0.95);
  EXPECT_LT(r.peak_response, 1.0 + 1e-9);
}

TEST(PhaseCorrelate, HalfRangeShiftsRecoveredModuloSize) {
  // +-16 alias on a 32-wide axis; the estimate must match modulo the extent
  const Image t = testutil::textured_image(32, 32, 93);
  for (const auto [di, dj] : {std::pair{15, -16}, std::pair{-16, 15}, std::pair{8, 8}}) {
    const Image s = apply_circular_shift(t, di, dj);
    const Shift r = phase_correlate(s, t);
    EXPECT_EQ((r.di - di) % 32, 0) << di << "," << dj;
    EXPECT_EQ((r.dj - dj) % 32, 0) << di << "," << dj;
    EXPECT_GE(r.di, -15);
    EXPECT_LE(r.di, 16);
    EXPECT_GE(r.dj, -15);
    EXPECT_LE(r.dj, 16);
  }
}

TEST(PhaseCorrelate, RectangularImages) {
  const Image t = testutil::textured_image(24, 40, 94);
  const Image s = apply_circular_shift(t, -7, 11);
  const Shift r = phase_correlate(s, t);
  EXPECT_EQ(r.di, -7);
  EXPECT_EQ(r.dj, 11);
}

TEST(PhaseCorrelate, NonPowerOfTwoSizes) {
  const Image t = testutil::textured_image(30, 42, 95);
  const Image s = apply_circular_shift(t, 4, -9);
  const Shift r = phase_correlate(s, t);
  EXPECT_EQ(r.di, 4);
  EXPECT_EQ(r.dj, -9);
}

TEST(PhaseCorrelate, AgreesWithBruteForceOracle) {
  RngStream shift_rng(1234);
  for (int c = 0; c < 5; ++c) {
    const Image t = testutil::textured_image(24, 24, 500 + static_cast<uint64_t>(c));
    const int di = static_cast<int>(shift_rng.uniform_int(-11, 11));
    const int dj = static_cast<int>(shift_rng.uniform_int(-11, 11));
    const Image s = apply_circular_shift(t, di, dj);
    const Shift fast = phase_correlate(s, t);
    const Shift brute = brute_force_shift(s, t);
    EXPECT_EQ(fast.di, brute.di) << "case " << c;
    EXPECT_EQ(fast.dj, brute.dj) << "case " << c;
    EXPECT_EQ(fast.di, di);
    EXPECT_EQ(fast.dj, dj);
  }
}

TEST(PhaseCorrelate, ConstantInputThrows) {
  Image flat(16, 16);
  for (float& v : flat.data) v = 0.5f;
  const Image t = testutil::textured_image(16, 16, 96);
  EXPECT_THROW(phase_correlate(flat, t), DegenerateInputError);
  EXPECT_THROW(phase_correlate(t, flat), DegenerateInputError);
}

TEST(PhaseCorrelate, RejectsShapeMismatch) {
  const Image a = testutil::textured_image(16, 16, 97);
  const Image b = testutil::textured_image(16, 18, 98);
  EXPECT_THROW(phase_correlate(a, b), DimensionError);
}

// Two crops of one larger scene: the translation is not circular, so content
// enters and leaves the frame. The Hann window suppresses the wrap-around
// seam and the integer estimate stays exact. Broadband content keeps the
// correlation peak sharp.
TEST(PhaseCorrelate, HannWindowHandlesNonPeriodicTranslation) {
  RngStream rng(99);
  Image scene = testutil::textured_image(96, 96, 99);
  for (float& v : scene.data) v += static_cast<float>(rng.uniform());
  Image t(64, 64);
  Image s(64, 64);
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) {
      t.at(i, j) = scene.at(i + 16, j + 16);
      s.at(i, j) = scene.at(i + 19, j + 18);
    }
  }
  // s(p) = t(p - d) with d = (-3, -2).
  const Shift r = phase_correlate(s, t, 1e-12, true);
  EXPECT_EQ(r.di, -3);
  EXPECT_EQ(r.dj, -2);
}

TEST(PhaseCorrelate, PeakResponseDropsWithNoise) {
  const Image t = testutil::textured_image(32, 32, 101);
  Image noisy = apply_circular_shift(t, 2, 2);
  RngStream rng(6);
  for (float& v : noisy.data) {
    v = std::clamp(v + static_cast<float>(rng.uniform(-0.2, 0.2)), 0.0f, 1.0f);
  }
  const Shift clean = phase_correlate(apply_circular_shift(t, 2, 2), t);
  const Shift degraded = phase_correlate(noisy, t);
  EXPECT_EQ(degraded.di, 2);
  EXPECT_EQ(degraded.dj, 2);
  EXPECT_LT(degraded.peak_response, clean.peak_response);
}
