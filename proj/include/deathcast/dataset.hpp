#ifndef DEATHCAST_DATASET_HPP_
#define DEATHCAST_DATASET_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deathcast/features.hpp"
#include "deathcast/match.hpp"

namespace deathcast {

inline constexpr int kShardCapacity = 4000;
inline constexpr int kDefaultPeriodTicks = 4;
inline constexpr double kDefaultWindowSeconds = 5.0;
inline constexpr int kDefaultBatchSize = 128;
inline constexpr double kDefaultDropFraction = 0.5;

using Rng = std::mt19937_64;

// Uniform draws built directly on the engine's output so sequences do not
// depend on the standard library's distribution implementations.
double UniformUnit(Rng& rng);
std::size_t RandomIndex(Rng& rng, std::size_t n);
template <typename T>
void Shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[RandomIndex(rng, i)]);
  }
}

// Bit s set when slot s dies within the look-ahead window.
using LabelBits = std::uint16_t;
inline bool SlotLabel(LabelBits bits, int slot) { return (bits >> slot) & 1u; }

// label[slot] at time t is set iff a death of that slot falls in (t, t + window].
std::vector<LabelBits> LabelFrames(const MatchRecord& match, double window_seconds);
LabelBits LabelAt(const MatchRecord& match, double time, double window_seconds);

// Frame indices whose tick is congruent to the first frame's tick.
std::vector<int> Downsample(const MatchRecord& match, int period_ticks);

// Structure-of-arrays container for normalized, labeled frames. Each sample
// holds 10 * per_hero_count floats, slot-major.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(SchemaVariant variant, int per_hero_count)
      : variant_(variant), per_hero_count_(per_hero_count) {}

  void Add(std::span<const float> features, LabelBits labels, std::uint64_t match_hash,
           float game_time);
  void AddFrom(const SampleSet& other, std::size_t index);
  void Append(const SampleSet& other);
  void Reserve(std::size_t n);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  SchemaVariant variant() const { return variant_; }
  int per_hero_count() const { return per_hero_count_; }
  int sample_width() const { return kHeroCount * per_hero_count_; }

  std::span<const float> features(std::size_t i) const {
    return std::span<const float>(features_).subspan(i * sample_width(), sample_width());
  }
  LabelBits labels(std::size_t i) const { return labels_[i]; }
  std::uint64_t match_hash(std::size_t i) const { return hashes_[i]; }
  float game_time(std::size_t i) const { return times_[i]; }

  const std::vector<float>& raw_features() const { return features_; }

  bool operator==(const SampleSet&) const = default;

 private:
  SchemaVariant variant_ = SchemaVariant::kMinimal;
  int per_hero_count_ = 0;
  std::vector<float> features_;
  std::vector<LabelBits> labels_;
  std::vector<std::uint64_t> hashes_;
  std::vector<float> times_;
};

struct Shard {
  SampleSet samples;
  std::uint64_t checksum = 0;
};

// Strip pauses, downsample, extract, normalize and label one match.
SampleSet MatchToSamples(const MatchRecord& match, const FeatureSchema& schema,
                         const NormalizationStats& stats, int period_ticks,
                         double window_seconds);

// Samples whose ten labels are all false are dropped with probability
// drop_fraction; samples with any positive label are always kept.
SampleSet UndersampleNegatives(const SampleSet& samples, double drop_fraction,
                               std::uint64_t seed);

SampleSet ShuffleSamples(const SampleSet& samples, std::uint64_t seed);

// Produces match i on demand so large corpora never sit in memory at once.
// Must be safe to call from several threads.
using MatchLoader = std::function<MatchRecord(std::size_t)>;

// Min/max over the pause-stripped, downsampled frames of every match.
NormalizationStats ComputeMatchNormStats(std::size_t count, const MatchLoader& load,
                                         const FeatureSchema& schema, int period_ticks,
                                         int threads = 1);
NormalizationStats ComputeMatchNormStats(std::span<const MatchRecord> matches,
                                         const FeatureSchema& schema, int period_ticks,
                                         int threads = 1);

// MatchToSamples for every match, concatenated in the given order.
SampleSet BuildSamples(std::size_t count, const MatchLoader& load, const FeatureSchema& schema,
                       const NormalizationStats& stats, int period_ticks, double window_seconds,
                       int threads = 1);
SampleSet BuildSamples(std::span<const MatchRecord> matches, const FeatureSchema& schema,
                       const NormalizationStats& stats, int period_ticks, double window_seconds,
                       int threads = 1);

// Consecutive chunks of at most kShardCapacity samples.
std::vector<Shard> ChunkIntoShards(const SampleSet& samples);

std::vector<std::uint8_t> EncodeShard(const SampleSet& samples);
Shard DecodeShard(std::span<const std::uint8_t> bytes, const std::string& what = "shard");

// Writes consecutive chunks of at most 4000 samples as
// <dir>/<prefix>-NNNNN.shard and returns the paths in order.
std::vector<std::string> WriteShards(const SampleSet& samples, const std::string& dir,
                                     const std::string& prefix);
Shard ReadShard(const std::string& path);
Shard ReadShard(const std::string& path, SchemaVariant expected);

struct SplitManifest {
  std::uint64_t split_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t undersample_seed = 0;
  SchemaVariant variant = SchemaVariant::kMinimal;
  double window_seconds = kDefaultWindowSeconds;
  int period_ticks = kDefaultPeriodTicks;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::vector<std::string> train_shards;
  std::vector<std::string> validation_shards;

  bool operator==(const SplitManifest&) const = default;
};

// Partition by match id into 80/10/10 after a seeded shuffle of the sorted ids.
SplitManifest SplitMatches(std::vector<std::string> match_ids, std::uint64_t seed);

void SaveManifest(const SplitManifest& manifest, const std::string& path);
SplitManifest LoadManifest(const std::string& path);

// Throws kSplitLeak if any id belongs to the train or validation split.
void CheckNoTrainingMatches(const SplitManifest& manifest,
                            std::span<const std::string> match_ids);

struct BalancedBatch {
  int per_hero_count = 0;
  int selected_slot = 0;
  std::vector<float> features;  // batch_size * 10 * per_hero_count
  std::vector<LabelBits> labels;

  int size() const { return static_cast<int>(labels.size()); }
};

// In-memory set of shards with per-slot positive/negative index lists.
class ShardPool {
 public:
  explicit ShardPool(std::vector<Shard> shards);

  const std::vector<Shard>& shards() const { return shards_; }
  std::size_t sample_count() const;
  std::int64_t positives(int slot) const { return total_pos_[slot]; }
  std::int64_t negatives(int slot) const { return total_neg_[slot]; }
  const std::vector<std::uint32_t>& positive_indices(std::size_t shard, int slot) const {
    return pos_[shard][slot];
  }
  const std::vector<std::uint32_t>& negative_indices(std::size_t shard, int slot) const {
    return neg_[shard][slot];
  }

 private:
  std::vector<Shard> shards_;
  std::vector<std::array<std::vector<std::uint32_t>, kHeroCount>> pos_;
  std::vector<std::array<std::vector<std::uint32_t>, kHeroCount>> neg_;
  std::array<std::int64_t, kHeroCount> total_pos_{};
  std::array<std::int64_t, kHeroCount> total_neg_{};
};

// Picks a slot uniformly among slots that can be balanced, then draws
// batch_size/2 positives and batch_size/2 negatives for it from a random
// shard, topping up from further random shards when that one runs short.
BalancedBatch SampleBalancedBatch(const ShardPool& pool, int batch_size, Rng& rng);

}  // namespace deathcast

#endif  // DEATHCAST_DATASET_HPP_
