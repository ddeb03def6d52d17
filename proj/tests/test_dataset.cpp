#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "warpreg/dataset.hpp"

#include "test_util.hpp"

using namespace warpreg;

namespace {

// Independent extrema scan so the invertibility checks don't reuse library code.
void scan_field(const WarpField& f, double& max_mag, double& max_diff) {
  max_mag = 0.0;
  max_diff = 0.0;
  for (int i = 0; i < f.height; ++i) {
    for (int j = 0; j < f.width; ++j) {
      const size_t k = static_cast<size_t>(i) * f.width + j;
      max_mag = std::max(max_mag, std::hypot(static_cast<double>(f.phi_i[k]),
                                             static_cast<double>(f.phi_j[k])));
      if (i + 1 < f.height) {
        const size_t kd = k + static_cast<size_t>(f.width);
        max_diff = std::max({max_diff, std::abs(static_cast<double>(f.phi_i[kd] - f.phi_i[k])),
                             std::abs(static_cast<double>(f.phi_j[kd] - f.phi_j[k]))});
      }
      if (j + 1 < f.width) {
        max_diff = std::max({max_diff, std::abs(static_cast<double>(f.phi_i[k + 1] - f.phi_i[k])),
                             std::abs(static_cast<double>(f.phi_j[k + 1] - f.phi_j[k]))});
      }
    }
  }
}

double interior_mean_abs_diff(const Image& a, const Image& b, int margin) {
  double sum = 0.0;
  int n = 0;
  for (int i = margin; i < a.height - margin; ++i) {
    for (int j = margin; j < a.width - margin; ++j) {
      sum += std::abs(static_cast<double>(a.at(i, j)) - b.at(i, j));
      ++n;
    }
  }
  return sum / n;
}

}  // namespace

TEST(Phantom, DeterministicAndNormalized) {
  const Image a = gen_phantom(64, 5);
  const Image b = gen_phantom(64, 5);
  const Image c = gen_phantom(64, 6);
  float lo = 1e9f, hi = -1e9f;
  bool differs = false;
  for (size_t k = 0; k < a.data.size(); ++k) {
    EXPECT_EQ(a.data[k], b.data[k]);
    if (a.data[k] != c.data[k]) differs = true;
    lo = std::min(lo, a.data[k]);
    hi = std::max(hi, a.data[k]);
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(lo, 0.0f);
  EXPECT_EQ(hi, 1.0f);
}

TEST(Phantom, HasStructureAtWindowScale) {
  const Image a = gen_phantom(64, 9);
  // Mean absolute neighbour difference: flat images fail, pure noise is
  // handled elsewhere; phantoms should have visible edges.
  double sum = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j + 1 < 64; ++j) sum += std::abs(a.at(i, j + 1) - a.at(i, j));
  }
  EXPECT_GT(sum / (64.0 * 63.0), 0.005);
}

TEST(Phantom, RejectsTinySizes) {
  EXPECT_THROW(gen_phantom(8, 1), ConfigError);
  EXPECT_NO_THROW(gen_phantom(16, 1));
}

TEST(WarpKinds, NamesRoundTrip) {
  for (WarpKind k :
       {WarpKind::linear, WarpKind::spherical, WarpKind::sinusoidal, WarpKind::mixed}) {
    EXPECT_EQ(parse_warp_kind(warp_kind_name(k)), k);
  }
  EXPECT_THROW(parse_warp_kind("affine"), ConfigError);
}

TEST(WarpKinds, AmplitudeCapScalesWithSize) {
  EXPECT_DOUBLE_EQ(max_warp_amplitude(64), 5.0);
  EXPECT_DOUBLE_EQ(max_warp_amplitude(128), 10.0);
  EXPECT_DOUBLE_EQ(max_warp_amplitude(32), 2.5);
}

TEST(GenField, ZeroAmplitudeIsIdentity) {
  WarpSpec spec;
  spec.amplitude = 0.0;
  const WarpField f = gen_field(spec, 32);
  for (float v : f.phi_i) EXPECT_EQ(v, 0.0f);
  for (float v : f.phi_j) EXPECT_EQ(v, 0.0f);
}

TEST(GenField, ValidatesArguments) {
  WarpSpec spec;
  spec.amplitude = -1.0;
  EXPECT_THROW(gen_field(spec, 64), ConfigError);
  spec.amplitude = max_warp_amplitude(64) + 0.01;
  EXPECT_THROW(gen_field(spec, 64), ConfigError);
  spec.amplitude = 1.0;
  EXPECT_THROW(gen_field(spec, 4), ConfigError);
}

TEST(GenField, DeterministicPerSeed) {
  WarpSpec spec;
  spec.kind = WarpKind::mixed;
  spec.amplitude = 3.0;
  spec.seed = 77;
  const WarpField a = gen_field(spec, 64);
  const WarpField b = gen_field(spec, 64);
  spec.seed = 78;
  const WarpField c = gen_field(spec, 64);
  bool differs = false;
  for (size_t k = 0; k < a.phi_i.size(); ++k) {
    EXPECT_EQ(a.phi_i[k], b.phi_i[k]);
    EXPECT_EQ(a.phi_j[k], b.phi_j[k]);
    if (a.phi_i[k] != c.phi_i[k]) differs = true;
  }
  EXPECT_TRUE(differs);
}

TEST(GenField, RespectsAmplitudeAndGradientBounds) {
  for (WarpKind kind :
       {WarpKind::linear, WarpKind::spherical, WarpKind::sinusoidal, WarpKind::mixed}) {
    for (uint64_t seed = 0; seed < 12; ++seed) {
      WarpSpec spec;
      spec.kind = kind;
      spec.amplitude = max_warp_amplitude(64);  // worst case
      spec.seed = seed;
      const WarpField f = gen_field(spec, 64);
      double max_mag = 0.0, max_diff = 0.0;
      scan_field(f, max_mag, max_diff);
      EXPECT_LE(max_mag, spec.amplitude + 1e-4) << warp_kind_name(kind) << " seed " << seed;
      EXPECT_LT(max_diff, 0.45 + 1e-6) << warp_kind_name(kind) << " seed " << seed;
      EXPECT_GT(max_mag, 0.0);
    }
  }
}

TEST(GenField, MixedHitsRequestedPeakExactly) {
  // Small amplitude keeps the gradient bound slack, so the renormalization
  // should land the peak magnitude on the request.
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    WarpSpec spec;
    spec.kind = WarpKind::mixed;
    spec.amplitude = 1.0;
    spec.seed = seed;
    double max_mag = 0.0, max_diff = 0.0;
    scan_field(gen_field(spec, 64), max_mag, max_diff);
    ASSERT_LT(max_diff, 0.44) << "seed " << seed;  // confirms the slack assumption
    EXPECT_NEAR(max_mag, 1.0, 1e-3) << "seed " << seed;
  }
}

TEST(GenField, InvertibleAtTheCap) {
  WarpSpec spec;
  spec.kind = WarpKind::mixed;
  spec.amplitude = max_warp_amplitude(64);
  spec.seed = 123;
  const WarpField f = gen_field(spec, 64);
  const WarpField v = invert(f);
  const WarpField round = compose(f, v);
  double worst = 0.0;
  for (int i = 8; i < 56; ++i) {
    for (int j = 8; j < 56; ++j) {
      const size_t k = static_cast<size_t>(i) * 64 + j;
      worst = std::max(worst, std::hypot(static_cast<double>(round.phi_i[k]),
                                         static_cast<double>(round.phi_j[k])));
    }
  }
  EXPECT_LT(worst, 0.05);
}

TEST(MakePair, FieldsAreConsistent) {
  const Image base = gen_phantom(64, 200);
  WarpSpec spec;
  spec.kind = WarpKind::mixed;
  spec.amplitude = 2.0;
  spec.seed = 201;
  const SamplePair p = make_pair(base, spec, "b0000w0");
  EXPECT_EQ(p.pair_id, "b0000w0");

  for (size_t k = 0; k < base.data.size(); ++k) {
    EXPECT_EQ(p.template_image.data[k], base.data[k]);
  }
  const Image expect_subject = apply(p.applied_field, base);
  double max_diff = 0.0;
  for (size_t k = 0; k < base.data.size(); ++k) {
    max_diff = std::max(max_diff,
                        std::abs(static_cast<double>(expect_subject.data[k]) - p.subject.data[k]));
  }
  EXPECT_EQ(max_diff, 0.0);

  // The warp moved real content and the round trip restores it (away from the
  // clamped border).
  EXPECT_GT(mse(p.subject, p.template_image), 1e-4);
  EXPECT_LT(interior_mean_abs_diff(p.roundtrip_truth, p.template_image, 6), 0.03);
}

TEST(GenerateSet, CountsSplitAndIds) {
  const TrainingSet set = generate_training_set(5, 2, 32, 99);
  EXPECT_EQ(set.train.size(), 8u);       // 4 of 5 bases
  EXPECT_EQ(set.validation.size(), 2u);  // 1 of 5 bases

  // Pairs from one base image stay on one side of the split.
  const std::string val_base = set.validation.front().pair_id.substr(0, 5);
  for (const auto& p : set.validation) EXPECT_EQ(p.pair_id.substr(0, 5), val_base);
  for (const auto& p : set.train) EXPECT_NE(p.pair_id.substr(0, 5), val_base);

  for (const auto& p : set.train) {
    ASSERT_EQ(p.pair_id.size(), 7u) << p.pair_id;
    EXPECT_EQ(p.pair_id[0], 'b');
    EXPECT_EQ(p.pair_id[5], 'w');
    EXPECT_EQ(p.subject.height, 32);
    EXPECT_FALSE(p.is_validation);
  }
  for (const auto& p : set.validation) EXPECT_TRUE(p.is_validation);
}

TEST(GenerateSet, KindCyclePerWarpIndex) {
  EXPECT_EQ(detail::cycle_kind(0), WarpKind::linear);
  EXPECT_EQ(detail::cycle_kind(1), WarpKind::spherical);
  EXPECT_EQ(detail::cycle_kind(2), WarpKind::sinusoidal);
  EXPECT_EQ(detail::cycle_kind(3), WarpKind::mixed);
  EXPECT_EQ(detail::cycle_kind(4), WarpKind::linear);
}

TEST(GenerateSet, DeterministicPerSeed) {
  const TrainingSet a = generate_training_set(3, 2, 32, 7);
  const TrainingSet b = generate_training_set(3, 2, 32, 7);
  const TrainingSet c = generate_training_set(3, 2, 32, 8);
  ASSERT_EQ(a.train.size(), b.train.size());
  bool differs = false;
  for (size_t p = 0; p < a.train.size(); ++p) {
    EXPECT_EQ(a.train[p].pair_id, b.train[p].pair_id);
    for (size_t k = 0; k < a.train[p].subject.data.size(); ++k) {
      EXPECT_EQ(a.train[p].subject.data[k], b.train[p].subject.data[k]);
      if (p < c.train.size() && a.train[p].subject.data[k] != c.train[p].subject.data[k]) {
        differs = true;
      }
    }
  }
  EXPECT_TRUE(differs);
}

TEST(GenerateSet, ValidatesArguments) {
  EXPECT_THROW(generate_training_set(1, 2, 32, 0), ConfigError);
  EXPECT_THROW(generate_training_set(2, 0, 32, 0), ConfigError);
  std::vector<Image> sources{gen_phantom(32, 1)};
  EXPECT_THROW(generate_training_set(2, 1, 32, 0, &sources), ConfigError);
  sources.push_back(gen_phantom(16, 2));
  EXPECT_THROW(generate_training_set(2, 1, 32, 0, &sources), DimensionError);
}

TEST(GenerateSet, UsesProvidedSources) {
  std::vector<Image> sources{gen_phantom(32, 11), gen_phantom(32, 12), gen_phantom(32, 13)};
  const TrainingSet set = generate_training_set(3, 1, 32, 5, &sources);
  ASSERT_EQ(set.train.size() + set.validation.size(), 3u);
  // The template of pair b0000w0 must be the (normalized) first source.
  const Image want = normalize(sources[0]);
  bool found = false;
  auto check = [&](const SamplePair& p) {
    if (p.pair_id != "b0000w0") return;
    found = true;
    for (size_t k = 0; k < want.data.size(); ++k) {
      EXPECT_EQ(p.template_image.data[k], want.data[k]);
    }
  };
  for (const auto& p : set.train) check(p);
  for (const auto& p : set.validation) check(p);
  EXPECT_TRUE(found);
}

TEST(DatasetIo, WriteLoadRoundTrip) {
  testutil::TempDir tmp("dataset_rt");
  const TrainingSet set = generate_training_set(3, 2, 32, 404);
  const auto manifest = write_dataset(set, tmp.path);
  EXPECT_EQ(manifest.filename(), "manifest.txt");
  ASSERT_TRUE(std::filesystem::exists(manifest));

  const TrainingSet back = load_dataset(manifest);
  ASSERT_EQ(back.train.size(), set.train.size());
  ASSERT_EQ(back.validation.size(), set.validation.size());
  const float pgm_tol = 0.5f / 255.0f + 1e-6f;
  for (size_t p = 0; p < set.train.size(); ++p) {
    const SamplePair& want = set.train[p];
    const SamplePair& got = back.train[p];
    EXPECT_EQ(got.pair_id, want.pair_id);
    EXPECT_FALSE(got.is_validation);
    ASSERT_EQ(got.subject.height, want.subject.height);
    for (size_t k = 0; k < want.subject.data.size(); ++k) {
      EXPECT_NEAR(got.subject.data[k], want.subject.data[k], pgm_tol);
      EXPECT_NEAR(got.template_image.data[k], want.template_image.data[k], pgm_tol);
      EXPECT_NEAR(got.roundtrip_truth.data[k], want.roundtrip_truth.data[k], pgm_tol);
      // Fields travel as raw floats, so they come back bit-exact.
      EXPECT_EQ(got.applied_field.phi_i[k], want.applied_field.phi_i[k]);
      EXPECT_EQ(got.applied_field.phi_j[k], want.applied_field.phi_j[k]);
    }
  }
}

TEST(DatasetIo, ManifestLinesHaveSixFields) {
  testutil::TempDir tmp("dataset_manifest");
  const auto manifest = make_dataset(2, 1, 32, 5, tmp.path);
  std::istringstream in(testutil::slurp(manifest));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    std::istringstream ls(line);
    std::string tok;
    int fields = 0;
    while (ls >> tok) ++fields;
    EXPECT_EQ(fields, 6) << line;
  }
  EXPECT_EQ(lines, 2);
}

TEST(DatasetIo, MakeDatasetIsByteDeterministic) {
  testutil::TempDir a("dataset_det_a");
  testutil::TempDir b("dataset_det_b");
  const auto ma = make_dataset(2, 2, 32, 7, a.path);
  const auto mb = make_dataset(2, 2, 32, 7, b.path);
  EXPECT_EQ(testutil::slurp(ma), testutil::slurp(mb));
  EXPECT_EQ(testutil::slurp(a.path / "b0000w0_subject.pgm"),
            testutil::slurp(b.path / "b0000w0_subject.pgm"));
  EXPECT_EQ(testutil::slurp(a.path / "b0000w1_field.wrp1"),
            testutil::slurp(b.path / "b0000w1_field.wrp1"));
}

TEST(DatasetIo, RejectsMalformedManifests) {
  testutil::TempDir tmp("dataset_bad");
  const auto five_fields = tmp.path / "five.txt";
  atomic_write_file(five_fields, "p0 train a.pgm b.pgm c.wrp1\n");
  EXPECT_THROW(load_dataset(five_fields), FormatError);

  const auto bad_split = tmp.path / "split.txt";
  atomic_write_file(bad_split, "p0 test a.pgm b.pgm c.wrp1 d.pgm\n");
  EXPECT_THROW(load_dataset(bad_split), FormatError);

  const auto empty = tmp.path / "empty.txt";
  atomic_write_file(empty, "\n\n");
  EXPECT_THROW(load_dataset(empty), FormatError);

  EXPECT_THROW(load_dataset(tmp.path / "missing.txt"), IoError);

  // Well-formed line pointing at files that do not exist.
  const auto dangling = tmp.path / "dangling.txt";
  atomic_write_file(dangling, "p0 train a.pgm b.pgm c.wrp1 d.pgm\n");
  EXPECT_THROW(load_dataset(dangling), IoError);
}

TEST(ImageDir, LoadsSortedPgms) {
  testutil::TempDir tmp("image_dir");
  Image img(8, 8);
  auto put = [&](const char* name, float value) {
    for (auto& v : img.data) v = value;
    save_pgm(img, (tmp.path / name).string());
  };
  put("c.pgm", 1.0f);
  put("a.pgm", 0.0f);
  put("b.pgm", 0.5f);
  atomic_write_file(tmp.path / "notes.txt", "ignored");

  const std::vector<Image> images = load_image_dir(tmp.path);
  ASSERT_EQ(images.size(), 3u);
  EXPECT_EQ(images[0].at(0, 0), 0.0f);
  EXPECT_NEAR(images[1].at(0, 0), 0.5f, 0.5f / 255.0f + 1e-6f);
  EXPECT_EQ(images[2].at(0, 0), 1.0f);
}

TEST(ImageDir, EmptyDirectoryThrows) {
  testutil::TempDir tmp("image_dir_empty");
  EXPECT_THROW(load_image_dir(tmp.path), IoError);
}
