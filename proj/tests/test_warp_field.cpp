#include <gtest/gtest.h>

#include "warpreg/warp_field.hpp"

#include "test_util.hpp"

using namespace warpreg;

TEST(WarpField, DefaultZeroField) {
  WarpField f(4, 5);
  EXPECT_EQ(f.height, 4);
  EXPECT_EQ(f.width, 5);
  EXPECT_EQ(f.max_abs_displacement(), 0.0);
}

TEST(WarpField, ZeroFieldIsIdentityWarp) {
  RngStream rng(2);
  const Image img = testutil::random_image(6, 7, rng);
  const WarpField f(6, 7);
  const Image out = apply(f, img);
  for (size_t k = 0; k < img.size(); ++k) EXPECT_FLOAT_EQ(out.data[k], img.data[k]);
}

TEST(WarpField, IntegerShiftPullsFromSource) {
  // phi = (1, 2) everywhere makes out(i,j) = src(i-1, j-2), clamped at edges
  Image src(4, 5);
  for (size_t k = 0; k < src.size(); ++k) src.data[k] = static_cast<float>(k);
  WarpField f(4, 5);
  for (size_t k = 0; k < f.phi_i.size(); ++k) {
    f.phi_i[k] = 1.0f;
    f.phi_j[k] = 2.0f;
  }
  const Image out = apply(f, src);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) {
      const int si = std::max(i - 1, 0);
      const int sj = std::max(j - 2, 0);
      EXPECT_FLOAT_EQ(out.at(i, j), src.at(si, sj)) << i << "," << j;
    }
  }
}

TEST(WarpField, FractionalShiftInterpolates) {
  Image src(1, 3);
  src.data = {0.0f, 1.0f, 0.0f};
  WarpField f(1, 3);
  for (size_t k = 0; k < 3; ++k) f.phi_j[k] = 0.5f;
  const Image out = apply(f, src);
  EXPECT_NEAR(out.at(0, 1), 0.5f, 1e-6);
  EXPECT_NEAR(out.at(0, 2), 0.5f, 1e-6);
}

TEST(WarpField, ApplyRejectsShapeMismatch) {
  const Image img(4, 4);
  const WarpField f(4, 5);
  EXPECT_THROW(apply(f, img), DimensionError);
}

TEST(Compose, WithZeroFieldIsNoOp) {
  const WarpField g = testutil::smooth_field(8, 8, 2.0, 31);
  const WarpField zero(8, 8);
  const WarpField left = compose(zero, g);
  const WarpField right = compose(g, zero);
  for (size_t k = 0; k < g.phi_i.size(); ++k) {
    EXPECT_NEAR(left.phi_i[k], g.phi_i[k], 1e-6);
    EXPECT_NEAR(left.phi_j[k], g.phi_j[k], 1e-6);
    EXPECT_NEAR(right.phi_i[k], g.phi_i[k], 1e-6);
    EXPECT_NEAR(right.phi_j[k], g.phi_j[k], 1e-6);
  }
}

TEST(Compose, ConstantFieldsAdd) {
  WarpField f(6, 6), g(6, 6);
  for (size_t k = 0; k < f.phi_i.size(); ++k) {
    f.phi_i[k] = 0.5f;
    f.phi_j[k] = -0.25f;
    g.phi_i[k] = 1.0f;
    g.phi_j[k] = 0.75f;
  }
  const WarpField c = compose(f, g);
  // interior values add exactly; edges feel clamping
  EXPECT_NEAR(c.phi_i[3 * 6 + 3], 1.5f, 1e-6);
  EXPECT_NEAR(c.phi_j[3 * 6 + 3], 0.5f, 1e-6);
}

TEST(Compose, MatchesSequentialApplication) {
  // applying the composite reproduces apply(f, apply(g, x)) away from borders
  const int n = 32;
  const Image img = testutil::textured_image(n, n, 77);
  const WarpField f = testutil::smooth_field(n, n, 1.5, 101);
  const WarpField g = testutil::smooth_field(n, n, 1.5, 202);
  const Image via_composite = apply(compose(f, g), img);
  const Image via_two_steps = apply(f, apply(g, img));
  double interior_err = 0.0;
  int count = 0;
  for (int i = 4; i < n - 4; ++i) {
    for (int j = 4; j < n - 4; ++j) {
      interior_err += std::abs(via_composite.at(i, j) - via_two_steps.at(i, j));
      ++count;
    }
  }
  // two-step interpolates twice, so agreement is approximate
  EXPECT_LT(interior_err / count, 0.02);
}

TEST(Invert, ZeroFieldStaysZero) {
  const WarpField f(8, 8);
  const WarpField inv = invert(f);
  EXPECT_EQ(inv.max_abs_displacement(), 0.0);
}

TEST(Invert, ConstantShiftNegates) {
  WarpField f(16, 16);
  for (size_t k = 0; k < f.phi_i.size(); ++k) {
    f.phi_i[k] = 1.25f;
    f.phi_j[k] = -0.75f;
  }
  const WarpField inv = invert(f);
  // interior point: inverse of a translation is its negation
  const size_t mid = 8 * 16 + 8;
  EXPECT_NEAR(inv.phi_i[mid], -1.25f, 1e-3);
  EXPECT_NEAR(inv.phi_j[mid], 0.75f, 1e-3);
}

TEST(Invert, CompositionIsNearIdentityInside) {
  const int n = 32;
  const WarpField f = testutil::smooth_field(n, n, 2.0, 5);
  const WarpField inv = invert(f);
  const WarpField round = compose(f, inv);
  double worst = 0.0;
  for (int i = 6; i < n - 6; ++i) {
    for (int j = 6; j < n - 6; ++j) {
      const size_t k = static_cast<size_t>(i) * n + j;
      worst = std::max(worst, static_cast<double>(std::abs(round.phi_i[k])));
      worst = std::max(worst, static_cast<double>(std::abs(round.phi_j[k])));
    }
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Invert, RoundTripRestoresImageInterior) {
  const int n = 48;
  const Image img = testutil::textured_image(n, n, 13);
  const WarpField f = testutil::smooth_field(n, n, 2.5, 29);
  const Image warped = apply(f, img);
  const Image back = apply(invert(f), warped);
  double err = 0.0;
  int count = 0;
  for (int i = 8; i < n - 8; ++i) {
    for (int j = 8; j < n - 8; ++j) {
      err += std::abs(back.at(i, j) - img.at(i, j));
      ++count;
    }
  }
  EXPECT_LT(err / count, 0.03);
}

TEST(FieldIo, RoundTripsBitExactly) {
  testutil::TempDir tmp("field_io");
  const WarpField f = testutil::smooth_field(7, 9, 3.0, 55);
  const auto path = tmp.path / "f.wrp1";
  save_field(f, path);
  const WarpField back = load_field(path);
  ASSERT_EQ(back.height, 7);
  ASSERT_EQ(back.width, 9);
  for (size_t k = 0; k < f.phi_i.size(); ++k) {
    EXPECT_EQ(back.phi_i[k], f.phi_i[k]);
    EXPECT_EQ(back.phi_j[k], f.phi_j[k]);
  }
}

TEST(FieldIo, HeaderLayoutIsStable) {
  testutil::TempDir tmp("field_hdr");
  WarpField f(2, 3);
  f.phi_i[0] = 1.0f;
  const auto path = tmp.path / "f.wrp1";
  save_field(f, path);
  const std::string bytes = testutil::slurp(path);
  // magic, u32 height, u32 width, then h*w floats per component
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 2u * 3u * 2u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "WRP1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);  // little-endian height
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);  // little-endian width
}

TEST(FieldIo, RejectsBadMagic) {
  testutil::TempDir tmp("field_magic");
  const auto path = tmp.path / "bad.wrp1";
  atomic_write_file(path, "NOPE\x02\x00\x00\x00\x03\x00\x00\x00");
  EXPECT_THROW(load_field(path), FormatError);
}

TEST(FieldIo, RejectsTruncatedPayload) {
  testutil::TempDir tmp("field_trunc");
  const WarpField f(4, 4);
  const auto path = tmp.path / "f.wrp1";
  save_field(f, path);
  const std::string bytes = testutil::slurp(path);
  atomic_write_file(path, std::string_view(bytes).substr(0, bytes.size() - 5));
  EXPECT_THROW(load_field(path), FormatError);
}

TEST(FieldIo, MissingFileThrowsIoError) {
  EXPECT_THROW(load_field("/nonexistent/f.wrp1"), IoError);
}
