#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "warpreg/fft.hpp"
#include "warpreg/rng.hpp"

#include "test_util.hpp"

using namespace warpreg;

namespace {

constexpr double kTau = 6.283185307179586;

// Quadratic-time reference transform.
std::vector<Complex> dft2_direct(const std::vector<Complex>& g, int h, int w, bool inverse) {
  std::vector<Complex> out(g.size());
  const double sign = inverse ? 1.0 : -1.0;
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      Complex acc = 0.0;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const double ang =
              sign * kTau * (static_cast<double>(u) * i / h + static_cast<double>(v) * j / w);
          acc += g[static_cast<size_t>(i) * w + j] * Complex(std::cos(ang), std::sin(ang));
        }
      }
      if (inverse) acc /= static_cast<double>(h) * w;
      out[static_cast<size_t>(u) * w + v] = acc;
    }
  }
  return out;
}

std::vector<Complex> random_grid(int h, int w, uint64_t seed) {
  RngStream rng(seed);
  std::vector<Complex> g(static_cast<size_t>(h) * w);
  for (auto& v : g) v = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  return g;
}

void expect_close(const std::vector<Complex>& a, const std::vector<Complex>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(a[k].real(), b[k].real(), tol) << "index " << k;
    EXPECT_NEAR(a[k].imag(), b[k].imag(), tol) << "index " << k;
  }
}

}  // namespace

TEST(Fft2, MatchesDirectTransformPowerOfTwo) {
  const auto g = random_grid(8, 16, 3);
  expect_close(fft2(g, 8, 16), dft2_direct(g, 8, 16, false), 1e-10);
}

TEST(Fft2, MatchesDirectTransformArbitrarySizes) {
  // prime and composite non-power-of-two extents
  for (const auto [h, w] : {std::pair{5, 7}, std::pair{12, 9}, std::pair{17, 4}}) {
    const auto g = random_grid(h, w, static_cast<uint64_t>(h * 100 + w));
    expect_close(fft2(g, h, w), dft2_direct(g, h, w, false), 1e-9);
  }
}

TEST(Fft2, InverseMatchesDirectInverse) {
  const auto g = random_grid(6, 10, 8);
  expect_close(ifft2(g, 6, 10), dft2_direct(g, 6, 10, true), 1e-10);
}

TEST(Fft2, RoundTripRestoresInput) {
  for (const auto [h, w] : {std::pair{16, 16}, std::pair{13, 21}, std::pair{1, 9}}) {
    const auto g = random_grid(h, w, static_cast<uint64_t>(h * 31 + w));
    expect_close(ifft2(fft2(g, h, w), h, w), g, 1e-10);
  }
}

TEST(Fft2, DeltaTransformsToAllOnes) {
  std::vector<Complex> g(64, 0.0);
  g[0] = 1.0;
  const auto f = fft2(g, 8, 8);
  for (const Complex& v : f) {
    EXPECT_NEAR(v.real(), 1.0, 1e-12);
    EXPECT_NEAR(v.imag(), 0.0, 1e-12);
  }
}

TEST(Fft2, ConstantTransformsToScaledDelta) {
  std::vector<Complex> g(static_cast<size_t>(4) * 6, 1.0);
  const auto f = fft2(g, 4, 6);
  EXPECT_NEAR(f[0].real(), 24.0, 1e-12);
  for (size_t k = 1; k < f.size(); ++k) {
    EXPECT_NEAR(std::abs(f[k]), 0.0, 1e-11) << "index " << k;
  }
}

TEST(Fft2, IsLinear) {
  const auto a = random_grid(9, 5, 10);
  const auto b = random_grid(9, 5, 11);
  std::vector<Complex> sum(a.size());
  const Complex s1(2.0, -1.0), s2(0.5, 3.0);
  for (size_t k = 0; k < a.size(); ++k) sum[k] = s1 * a[k] + s2 * b[k];
  const auto fa = fft2(a, 9, 5);
  const auto fb = fft2(b, 9, 5);
  const auto fs = fft2(sum, 9, 5);
  for (size_t k = 0; k < a.size(); ++k) {
    const Complex expect = s1 * fa[k] + s2 * fb[k];
    EXPECT_NEAR(fs[k].real(), expect.real(), 1e-9);
    EXPECT_NEAR(fs[k].imag(), expect.imag(), 1e-9);
  }
}

TEST(Fft2, ParsevalEnergyPreserved) {
  const int h = 11, w = 13;
  const auto g = random_grid(h, w, 21);
  const auto f = fft2(g, h, w);
  double space = 0.0, freq = 0.0;
  for (const Complex& v : g) space += std::norm(v);
  for (const Complex& v : f) freq += std::norm(v);
  EXPECT_NEAR(space, freq / (h * w), 1e-9);
}

TEST(Fft2, CircularShiftBecomesPhaseRamp) {
  const int n = 8;
  auto g = random_grid(n, n, 30);
  for (auto& v : g) v = Complex(v.real(), 0.0);
  std::vector<Complex> shifted(g.size());
  const int di = 3, dj = 5;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      shifted[static_cast<size_t>(i) * n + j] =
          g[static_cast<size_t>((i - di + n) % n) * n + (j - dj + n) % n];
    }
  }
  const auto fg = fft2(g, n, n);
  const auto fs = fft2(shifted, n, n);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double ang = -kTau * (static_cast<double>(u) * di + static_cast<double>(v) * dj) / n;
      const Complex expect = fg[static_cast<size_t>(u) * n + v] * Complex(std::cos(ang), std::sin(ang));
      const Complex got = fs[static_cast<size_t>(u) * n + v];
      EXPECT_NEAR(got.real(), expect.real(), 1e-10);
      EXPECT_NEAR(got.imag(), expect.imag(), 1e-10);
    }
  }
}

TEST(Fft2, RejectsMismatchedSizes) {
  std::vector<Complex> g(12);
  EXPECT_THROW(fft2(g, 3, 5), DimensionError);
  EXPECT_THROW(fft2(std::vector<Complex>{}, 0, 0), DimensionError);
}
