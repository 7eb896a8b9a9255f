#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "gmeld/error.hpp"
#include "gmeld/io_util.hpp"
#include "gmeld/world/dataset_io.hpp"
#include "gmeld/world/world.hpp"

using namespace gmeld;
using namespace gmeld::world;

namespace {

WorldSpec quiet_spec() {
  auto s = WorldSpec::desk_default();
  s.noise_sigma = 0.0;
  return s;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gmeld_unit" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(WorldSpec, DeskDefaultValidates) {
  const auto s = WorldSpec::desk_default();
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.num_classes, 6u);
  EXPECT_EQ(s.num_sensors, 8u);
  EXPECT_EQ(s.frames_per_clip, 32u);
  EXPECT_EQ(s.background_sensors.size(), 2u);
  EXPECT_EQ(s.redundancy_pairs.size(), 2u);
}

TEST(WorldSpec, InvalidFieldsAreNamed) {
  auto s = WorldSpec::desk_default();
  s.num_sensors = 0;
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("num_sensors"), std::string::npos);
  }
  s = WorldSpec::desk_default();
  s.event_rate.pop_back();
  EXPECT_THROW(s.validate(), ConfigError);
  s = WorldSpec::desk_default();
  s.noise_sigma = -1;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(WorldSpec, JsonRoundTrip) {
  const auto s = WorldSpec::desk_default();
  const nlohmann::json j = s;
  const auto back = j.get<WorldSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Signatures, UnitNormAndSharedByRedundantPairs) {
  const auto s = quiet_spec();
  const auto sig = make_signatures(s);
  const std::size_t F = s.feature_dim_raw;
  for (std::size_t c = 0; c < s.num_classes; ++c)
    for (std::size_t k = 0; k < s.num_sensors; ++k) {
      double n2 = 0;
      for (std::size_t d = 0; d < F; ++d) n2 += std::pow(sig[(c * s.num_sensors + k) * F + d], 2);
      if (s.coverage[c][k]) {
        EXPECT_NEAR(n2, 1.0, 1e-12);
      } else {
        EXPECT_EQ(n2, 0.0);
      }
    }
  for (auto [u, v] : s.redundancy_pairs)
    for (std::size_t c = 0; c < s.num_classes; ++c)
      for (std::size_t d = 0; d < F; ++d)
        EXPECT_EQ(sig[(c * s.num_sensors + u) * F + d], sig[(c * s.num_sensors + v) * F + d]);
}

TEST(EventScript, RespectsConcurrencyAndMinimumEvents) {
  const auto s = WorldSpec::desk_default();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto script = sample_event_script(s, rng);
    ASSERT_EQ(script.size(), s.frames_per_clip * s.num_classes);
    std::size_t total = 0;
    for (std::size_t t = 0; t < s.frames_per_clip; ++t) {
      std::size_t active = 0;
      for (std::size_t c = 0; c < s.num_classes; ++c) active += script[t * s.num_classes + c];
      EXPECT_LE(active, s.max_concurrent);
      total += active;
    }
    EXPECT_GT(total, 0u);
    const auto counts = count_event_instances(script, s.frames_per_clip, s.num_classes);
    for (auto n : counts) EXPECT_LE(n, 1u);
  }
}

TEST(EventScript, VanishingRateGivesExactlyOneEvent) {
  auto s = WorldSpec::desk_default();
  for (auto& r : s.event_rate) r = 1e-12;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto script = sample_event_script(s, rng);
    const auto counts = count_event_instances(script, s.frames_per_clip, s.num_classes);
    std::size_t total = 0;
    for (auto n : counts) total += n;
    EXPECT_EQ(total, 1u);
  }
}

TEST(EventScript, ActivationFrequencyMatchesRate) {
  auto s = WorldSpec::desk_default();
  s.max_concurrent = s.num_classes;
  std::mt19937_64 rng(11);
  const int n = 10000;
  std::vector<double> hits(s.num_classes, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto weak = make_weak_label(sample_event_script(s, rng), s.frames_per_clip, s.num_classes);
    for (std::size_t c = 0; c < s.num_classes; ++c) hits[c] += weak[c];
  }
  for (std::size_t c = 0; c < s.num_classes; ++c) {
    // A clip with no Bernoulli event gets one forced event on a uniformly chosen class.
    double none = 1.0;
    for (double r : s.event_rate) none *= 1.0 - r;
    const double p = s.event_rate[c] + none / static_cast<double>(s.num_classes);
    const double sd = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(hits[c] / n, p, 3 * sd) << "class " << c;
  }
}

TEST(WeakLabel, OrReduction) {
  const std::vector<std::uint8_t> zeros(4 * 5, 0);
  EXPECT_EQ(make_weak_label(zeros, 4, 5), std::vector<std::uint8_t>(5, 0));
  auto one = zeros;
  one[2 * 5 + 3] = 1;
  EXPECT_EQ(make_weak_label(one, 4, 5), (std::vector<std::uint8_t>{0, 0, 0, 1, 0}));
  const std::vector<std::uint8_t> row = {1, 0, 1};
  EXPECT_EQ(make_weak_label(row, 1, 3), row);
}

TEST(Render, BackgroundSilentAndRedundantEqualWithoutNoise) {
  const auto s = quiet_spec();
  const auto sig = make_signatures(s);
  std::mt19937_64 rng(8);
  const auto script = sample_event_script(s, rng);
  const auto f = render_features(s, sig, script, rng);
  const std::size_t T = s.frames_per_clip, F = s.feature_dim_raw;
  for (auto b : s.background_sensors)
    for (std::size_t i = 0; i < T * F; ++i) EXPECT_EQ(f[b * T * F + i], 0.0);
  for (auto [u, v] : s.redundancy_pairs)
    for (std::size_t i = 0; i < T * F; ++i) EXPECT_EQ(f[u * T * F + i], f[v * T * F + i]);
}

TEST(Render, CoverageSoundness) {
  const auto s = quiet_spec();
  const auto sig = make_signatures(s);
  std::mt19937_64 rng(9);
  const std::size_t T = s.frames_per_clip, F = s.feature_dim_raw, C = s.num_classes;
  for (int rep = 0; rep < 20; ++rep) {
    const auto script = sample_event_script(s, rng);
    const auto f = render_features(s, sig, script, rng);
    for (std::size_t k = 0; k < s.num_sensors; ++k)
      for (std::size_t t = 0; t < T; ++t) {
        bool covered = false;
        for (std::size_t c = 0; c < C; ++c) covered |= script[t * C + c] && s.coverage[c][k];
        if (covered) continue;
        for (std::size_t d = 0; d < F; ++d) EXPECT_EQ(f[(k * T + t) * F + d], 0.0);
      }
  }
}

TEST(Render, BackgroundCovarianceIsNoiseVariance) {
  auto s = WorldSpec::desk_default();
  s.noise_sigma = 0.3;
  const auto sig = make_signatures(s);
  std::mt19937_64 rng(10);
  const std::size_t T = s.frames_per_clip, F = s.feature_dim_raw;
  const std::size_t b = s.background_sensors.front();
  std::vector<double> cov(F * F, 0.0);
  std::size_t n = 0;
  for (int rep = 0; rep < 400; ++rep) {
    const auto f = render_features(s, sig, sample_event_script(s, rng), rng);
    for (std::size_t t = 0; t < T; ++t, ++n) {
      const double* x = f.data() + (b * T + t) * F;
      for (std::size_t i = 0; i < F; ++i)
        for (std::size_t j = 0; j < F; ++j) cov[i * F + j] += x[i] * x[j];
    }
  }
  const double var = s.noise_sigma * s.noise_sigma;
  // Standard error of a second moment of N(0, v) is v*sqrt(2/n) on the diagonal and v/sqrt(n) off it.
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < F; ++j) {
      const double est = cov[i * F + j] / static_cast<double>(n);
      const double se = var * (i == j ? std::sqrt(2.0 / n) : std::sqrt(1.0 / n));
      EXPECT_NEAR(est, i == j ? var : 0.0, 4 * se);
    }
}

TEST(Dataset, DeterministicWithUniqueIdsAndConsistentLabels) {
  const auto s = WorldSpec::desk_default();
  const auto a = generate_dataset(s, {});
  const auto b = generate_dataset(s, {});
  EXPECT_EQ(a.split, b.split);
  std::set<std::string> ids;
  for (const auto* part : {&a.split.train, &a.split.validation, &a.split.test})
    for (const auto& c : *part) {
      ids.insert(c.clip_id);
      EXPECT_EQ(c.weak_label, make_weak_label(c.strong_labels, s.frames_per_clip, s.num_classes));
    }
  EXPECT_EQ(ids.size(), 100u);
  for (auto n : a.split.class_counts) EXPECT_GE(n, 1u);
}

TEST(Dataset, ClassCountsAreTrainInstances) {
  const auto s = WorldSpec::desk_default();
  const auto d = generate_dataset(s, {});
  std::vector<std::size_t> expect(s.num_classes, 0);
  for (const auto& c : d.split.train) {
    const auto n = count_event_instances(c.strong_labels, s.frames_per_clip, s.num_classes);
    for (std::size_t k = 0; k < s.num_classes; ++k) expect[k] += n[k];
  }
  EXPECT_EQ(d.split.class_counts, expect);
}

TEST(Dataset, DifferentSeedDiffers) {
  auto s = WorldSpec::desk_default();
  const auto a = generate_dataset(s, {24, 2, 2});
  s.seed += 1;
  const auto b = generate_dataset(s, {24, 2, 2});
  EXPECT_NE(a.split.train.front().features, b.split.train.front().features);
}

TEST(DatasetIo, RoundTrip) {
  const auto d = generate_dataset(WorldSpec::desk_default(), {24, 2, 2});
  const auto dir = fresh_dir("ds_rt");
  save_dataset(dir, d);
  EXPECT_TRUE(std::filesystem::exists(dir / "spec.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "clips.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checksums.txt"));
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.split, d.split);
  EXPECT_EQ(nlohmann::json(back.spec), nlohmann::json(d.spec));
}

TEST(DatasetIo, CorruptedByteIsAChecksumError) {
  const auto d = generate_dataset(WorldSpec::desk_default(), {24, 1, 1});
  const auto dir = fresh_dir("ds_bad");
  save_dataset(dir, d);
  auto bytes = io::read_file(dir / "clips.bin");
  bytes[bytes.size() / 2] ^= 0x10;
  io::write_file(dir / "clips.bin", bytes);
  EXPECT_THROW(load_dataset(dir), ChecksumError);
}

TEST(DatasetIo, NewerFormatVersionIsAVersionError) {
  const auto d = generate_dataset(WorldSpec::desk_default(), {24, 1, 1});
  const auto dir = fresh_dir("ds_ver");
  save_dataset(dir, d);
  auto bytes = io::read_file(dir / "clips.bin");
  bytes[6] = static_cast<std::uint8_t>(kDatasetFormatVersion + 1);
  io::write_file(dir / "clips.bin", bytes);
  const std::string spec_text = io::read_text(dir / "spec.json");
  const std::vector<std::uint8_t> spec_bytes(spec_text.begin(), spec_text.end());
  io::write_text(dir / "checksums.txt", io::hex32(io::crc32(spec_bytes)) + "  spec.json\n" +
                                            io::hex32(io::crc32(bytes)) + "  clips.bin\n");
  EXPECT_THROW(load_dataset(dir), VersionError);
}

TEST(DatasetIo, MissingDirectoryIsAnIoError) {
  EXPECT_THROW(load_dataset(fresh_dir("does_not_exist")), Error);
}
