#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "deathcast/binary_io.hpp"
#include "deathcast/dataset.hpp"
#include "deathcast/error.hpp"
#include "support.hpp"

namespace deathcast {
namespace {

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

// Random normalized samples; each slot is positive with probability p.
SampleSet RandomSamples(std::mt19937_64& rng, std::size_t n, double p,
                        SchemaVariant variant = SchemaVariant::kMinimal) {
  const int width = FeatureSchema::Get(variant).per_hero_count();
  SampleSet set(variant, width);
  std::vector<float> features(static_cast<std::size_t>(kHeroCount) * width);
  for (std::size_t i = 0; i < n; ++i) {
    for (float& x : features) x = static_cast<float>(testing::Uniform(rng, 0, 1));
    LabelBits labels = 0;
    for (int s = 0; s < kHeroCount; ++s) {
      if (testing::Uniform(rng, 0, 1) < p) labels |= static_cast<LabelBits>(1u << s);
    }
    set.Add(features, labels, rng(), static_cast<float>(i) * 0.125f);
  }
  return set;
}

void Reseal(std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i + 8 < bytes.size(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  std::memcpy(bytes.data() + bytes.size() - 8, &h, 8);
}

TEST(Labels, MatchBruteForceOnRandomMatches) {
  std::mt19937_64 rng(21);
  testing::RandomMatchOptions opt;
  opt.death_rate = 0.8;
  for (int i = 0; i < 50; ++i) {
    const MatchRecord m = testing::RandomMatch(rng, opt);
    for (double w : {0.1, 1.0, 5.0, 30.0}) {
      EXPECT_EQ(LabelFrames(m, w), testing::BruteForceLabels(m, w));
    }
  }
}

TEST(Labels, WindowBoundaries) {
  std::mt19937_64 rng(22);
  MatchRecord m = testing::RandomMatch(rng);
  for (std::size_t f = 0; f < m.frames.size(); ++f) {
    m.frames[f].paused = false;
    m.frames[f].game_time = static_cast<double>(f);
  }
  m.deaths = {{2, 10.0}};
  EXPECT_EQ(LabelAt(m, 5.0, 5.0), 1u << 2);   // death exactly at t + W counts
  EXPECT_EQ(LabelAt(m, 10.0, 5.0), 0u);       // death at t does not
  EXPECT_EQ(LabelAt(m, 4.5, 5.0), 0u);
  EXPECT_EQ(CodeOf([&] { LabelFrames(m, 0.0); }), ErrorCode::kNonPositiveWindow);
  EXPECT_EQ(CodeOf([&] { LabelAt(m, 1.0, -1.0); }), ErrorCode::kNonPositiveWindow);
}

TEST(Downsample, KeepsTicksCongruentToFirst) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 10; ++i) {
    const MatchRecord m = testing::RandomMatch(rng);
    for (int period : {1, 3, 4}) {
      const auto kept = Downsample(m, period);
      std::vector<int> expected;
      for (int f = 0; f < static_cast<int>(m.frames.size()); ++f) {
        if ((m.frames[f].tick - m.frames[0].tick) % period == 0) expected.push_back(f);
      }
      EXPECT_EQ(kept, expected);
    }
  }
  std::mt19937_64 r2(1);
  EXPECT_EQ(CodeOf([&] { Downsample(testing::RandomMatch(r2), 0); }), ErrorCode::kInvalidConfig);
}

TEST(Samples, MatchToSamplesFollowsPipeline) {
  std::mt19937_64 rng(24);
  testing::RandomMatchOptions opt;
  opt.pause_chance = 0.3;
  opt.min_frames = 30;
  const MatchRecord m = testing::RandomMatch(rng, opt);
  const FeatureSchema& schema = FeatureSchema::Get(SchemaVariant::kMinimal);
  const MatchRecord clean = StripPauses(m);
  const auto idx = Downsample(clean, 2);
  const auto frames = ExtractFrames(clean, idx, schema);
  const NormalizationStats stats = ComputeNormStats(frames, schema);
  const SampleSet set = MatchToSamples(m, schema, stats, 2, 3.0);
  ASSERT_EQ(set.size(), idx.size());
  const auto brute = testing::BruteForceLabels(clean, 3.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EXPECT_EQ(set.labels(i), brute[idx[i]]);
    const FrameFeatures n = Normalize(frames[i], stats);
    for (std::size_t k = 0; k < n.values.size(); ++k) {
      EXPECT_EQ(set.features(i)[k], static_cast<float>(n.values[k]));
    }
  }
  EXPECT_EQ(BuildSamples(std::span<const MatchRecord>(&m, 1), schema, stats, 2, 3.0), set);
}

TEST(Shards, RoundTripAndChunking) {
  std::mt19937_64 rng(25);
  const SampleSet set = RandomSamples(rng, 9000, 0.1);
  const auto shards = ChunkIntoShards(set);
  ASSERT_EQ(shards.size(), 3u);
  EXPECT_EQ(shards[0].samples.size(), 4000u);
  EXPECT_EQ(shards[2].samples.size(), 1000u);

  testing::TempDir dir("shards");
  const auto paths = WriteShards(set, dir.str(), "train");
  ASSERT_EQ(paths.size(), 3u);
  SampleSet joined(set.variant(), set.per_hero_count());
  for (const auto& p : paths) joined.Append(ReadShard(p, SchemaVariant::kMinimal).samples);
  EXPECT_EQ(joined, set);

  const auto bytes = EncodeShard(shards[1].samples);
  EXPECT_EQ(EncodeShard(DecodeShard(bytes).samples), bytes);
  EXPECT_EQ(CodeOf([&] { ReadShard(paths[0], SchemaVariant::kFull); }), ErrorCode::kSchemaMismatch);
}

TEST(Shards, CorruptionAndVersion) {
  std::mt19937_64 rng(26);
  const auto bytes = EncodeShard(RandomSamples(rng, 50, 0.2));
  for (std::size_t pos : {std::size_t{0}, std::size_t{17}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x40;
    EXPECT_EQ(CodeOf([&] { DecodeShard(bad); }), ErrorCode::kChecksumMismatch);
  }
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_EQ(CodeOf([&] { DecodeShard(truncated); }), ErrorCode::kChecksumMismatch);

  auto version = bytes;
  version[4] += 1;
  Reseal(version);
  EXPECT_EQ(CodeOf([&] { DecodeShard(version); }), ErrorCode::kVersionMismatch);

  auto resealed = bytes;
  Reseal(resealed);
  EXPECT_EQ(resealed, bytes);
}

TEST(Undersample, KeepsPositivesAndHalfOfNegatives) {
  std::mt19937_64 rng(27);
  const SampleSet set = RandomSamples(rng, 100000, 0.01);
  const SampleSet kept = UndersampleNegatives(set, 0.5, 99);
  std::size_t negatives = 0, positives = 0, kept_neg = 0, kept_pos = 0;
  for (std::size_t i = 0; i < set.size(); ++i) (set.labels(i) ? positives : negatives)++;
  for (std::size_t i = 0; i < kept.size(); ++i) (kept.labels(i) ? kept_pos : kept_neg)++;
  EXPECT_EQ(kept_pos, positives);
  const double rate = static_cast<double>(kept_neg) / static_cast<double>(negatives);
  EXPECT_NEAR(rate, 0.5, 0.01);
  EXPECT_EQ(UndersampleNegatives(set, 0.5, 99), kept);
  EXPECT_EQ(UndersampleNegatives(set, 0.0, 1), set);
  EXPECT_EQ(CodeOf([&] { UndersampleNegatives(set, 1.0, 1); }), ErrorCode::kInvalidConfig);
}

TEST(Shuffle, IsPermutation) {
  std::mt19937_64 rng(28);
  const SampleSet set = RandomSamples(rng, 500, 0.1);
  const SampleSet mixed = ShuffleSamples(set, 3);
  ASSERT_EQ(mixed.size(), set.size());
  std::multiset<std::uint64_t> a, b;
  for (std::size_t i = 0; i < set.size(); ++i) {
    a.insert(set.match_hash(i));
    b.insert(mixed.match_hash(i));
  }
  EXPECT_EQ(a, b);
  EXPECT_NE(mixed, set);
  EXPECT_EQ(ShuffleSamples(set, 3), mixed);
}

TEST(Batches, BalancedForSelectedSlot) {
  std::mt19937_64 rng(29);
  const SampleSet set = RandomSamples(rng, 6000, 0.08);
  ShardPool pool(ChunkIntoShards(set));
  Rng batch_rng(5);
  std::array<int, kHeroCount> counts{};
  for (int b = 0; b < 2000; ++b) {
    const BalancedBatch batch = SampleBalancedBatch(pool, 64, batch_rng);
    ASSERT_EQ(batch.size(), 64);
    ASSERT_EQ(batch.features.size(), 64u * 150u);
    int pos = 0;
    for (LabelBits l : batch.labels) pos += SlotLabel(l, batch.selected_slot);
    EXPECT_EQ(pos, 32);
    ++counts[batch.selected_slot];
  }
  for (int c : counts) EXPECT_NEAR(c, 200, 3 * std::sqrt(2000 * 0.1 * 0.9));
}

TEST(Batches, SkipsSlotsThatCannotBeBalanced) {
  std::mt19937_64 rng(30);
  SampleSet set = RandomSamples(rng, 400, 0.0);
  std::vector<float> f(150, 0.5f);
  for (int i = 0; i < 10; ++i) set.Add(f, 1u << 7, 1, 0.0f);
  ShardPool pool(ChunkIntoShards(set));
  Rng batch_rng(1);
  EXPECT_EQ(SampleBalancedBatch(pool, 20, batch_rng).selected_slot, 7);
  EXPECT_EQ(CodeOf([&] { SampleBalancedBatch(pool, 64, batch_rng); }),
            ErrorCode::kInsufficientPositives);
  EXPECT_EQ(CodeOf([&] { SampleBalancedBatch(pool, 7, batch_rng); }), ErrorCode::kInvalidConfig);
}

TEST(Batches, TopsUpAcrossShards) {
  // Eight positives spread over three shards.
  std::mt19937_64 rng(31);
  SampleSet set = RandomSamples(rng, 9000, 0.0);
  ShardPool base(ChunkIntoShards(set));
  std::vector<Shard> shards = base.shards();
  std::vector<float> f(150, 0.25f);
  for (int i = 0; i < 8; ++i) shards[i % 3].samples.Add(f, 1u << 2, 2, 0.0f);
  ShardPool pool(shards);
  Rng batch_rng(3);
  const BalancedBatch batch = SampleBalancedBatch(pool, 16, batch_rng);
  EXPECT_EQ(batch.selected_slot, 2);
  int pos = 0;
  for (LabelBits l : batch.labels) pos += SlotLabel(l, 2);
  EXPECT_EQ(pos, 8);
}

TEST(Split, DisjointAndDeterministic) {
  std::vector<std::string> ids;
  for (int i = 0; i < 250; ++i) ids.push_back("m" + std::to_string(i));
  const SplitManifest a = SplitMatches(ids, 4);
  EXPECT_EQ(a.train.size(), 200u);
  EXPECT_EQ(a.validation.size(), 25u);
  EXPECT_EQ(a.test.size(), 25u);
  std::set<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.validation.begin(), a.validation.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all.size(), 250u);

  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  const SplitManifest b = SplitMatches(reversed, 4);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(SplitMatches(ids, 5).train, a.train);

  ids.push_back("m3");
  EXPECT_EQ(CodeOf([&] { SplitMatches(ids, 4); }), ErrorCode::kInvalidConfig);
}

TEST(Split, ManifestRoundTripAndLeakCheck) {
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) ids.push_back("match-" + std::to_string(i));
  SplitManifest m = SplitMatches(ids, 9);
  m.shuffle_seed = 10;
  m.undersample_seed = 11;
  m.variant = SchemaVariant::kMedium;
  m.window_seconds = 2.5;
  m.period_ticks = 3;
  m.train_shards = {"train-00000.shard", "train-00001.shard"};
  m.validation_shards = {"validation-00000.shard"};
  testing::TempDir dir("manifest");
  SaveManifest(m, dir / "manifest.tsv");
  EXPECT_EQ(LoadManifest(dir / "manifest.tsv"), m);

  EXPECT_NO_THROW(CheckNoTrainingMatches(m, m.test));
  std::vector<std::string> leaked = {m.test[0], m.validation[0]};
  EXPECT_EQ(CodeOf([&] { CheckNoTrainingMatches(m, leaked); }), ErrorCode::kSplitLeak);
  leaked = {m.train[1]};
  EXPECT_EQ(CodeOf([&] { CheckNoTrainingMatches(m, leaked); }), ErrorCode::kSplitLeak);
}

TEST(Rng, UniformHelpers) {
  Rng rng(1);
  double sum = 0.0;
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) {
    const double u = UniformUnit(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    ++counts[RandomIndex(rng, 7)];
  }
  EXPECT_NEAR(sum / 70000, 0.5, 0.005);
  for (int c : counts) EXPECT_NEAR(c, 10000, 3 * std::sqrt(70000.0 / 7 * 6 / 7));
}

}  // namespace
}  // namespace deathcast
