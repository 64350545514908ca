#include "deathcast/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "deathcast/binary_io.hpp"
#include "deathcast/error.hpp"
#include "deathcast/parallel.hpp"

namespace deathcast {
namespace {

constexpr std::uint32_t kShardMagic = 0x48534344;  // "DCSH"
constexpr std::uint32_t kShardVersion = 1;

std::vector<std::vector<double>> DeathTimesBySlot(const MatchRecord& match) {
  std::vector<std::vector<double>> out(kHeroCount);
  for (const DeathEvent& d : match.deaths) {
    if (d.slot >= 0 && d.slot < kHeroCount) out[d.slot].push_back(d.time);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

LabelBits LabelWithDeaths(const std::vector<std::vector<double>>& deaths, double t,
                          double window) {
  LabelBits bits = 0;
  for (int slot = 0; slot < kHeroCount; ++slot) {
    const auto& times = deaths[slot];
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it != times.end() && *it <= t + window) bits |= static_cast<LabelBits>(1u << slot);
  }
  return bits;
}

void CheckWindow(double window) {
  if (!(window > 0.0)) {
    throw Error(ErrorCode::kNonPositiveWindow, "label window must be positive");
  }
}

std::uint64_t ParseU64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kMalformedRecord, "manifest: bad integer '" + s + "'");
  }
  return v;
}

}  // namespace

double UniformUnit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t RandomIndex(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(rng()) * static_cast<unsigned __int128>(n)) >> 64);
}

std::vector<LabelBits> LabelFrames(const MatchRecord& match, double window_seconds) {
  CheckWindow(window_seconds);
  const auto deaths = DeathTimesBySlot(match);
  std::vector<LabelBits> out;
  out.reserve(match.frames.size());
  for (const TickFrame& f : match.frames) {
    out.push_back(LabelWithDeaths(deaths, f.game_time, window_seconds));
  }
  return out;
}

LabelBits LabelAt(const MatchRecord& match, double time, double window_seconds) {
  CheckWindow(window_seconds);
  return LabelWithDeaths(DeathTimesBySlot(match), time, window_seconds);
}

std::vector<int> Downsample(const MatchRecord& match, int period_ticks) {
  if (period_ticks < 1) {
    throw Error(ErrorCode::kInvalidConfig, "sampling period must be at least one tick");
  }
  std::vector<int> kept;
  if (match.frames.empty()) return kept;
  const std::int64_t anchor = match.frames.front().tick;
  for (int i = 0; i < static_cast<int>(match.frames.size()); ++i) {
    const std::int64_t offset = match.frames[i].tick - anchor;
    if (((offset % period_ticks) + period_ticks) % period_ticks == 0) kept.push_back(i);
  }
  return kept;
}

void SampleSet::Add(std::span<const float> features, LabelBits labels,
                    std::uint64_t match_hash, float game_time) {
  if (static_cast<int>(features.size()) != sample_width()) {
    throw Error(ErrorCode::kShapeMismatch, "sample width does not match the set");
  }
  features_.insert(features_.end(), features.begin(), features.end());
  labels_.push_back(labels);
  hashes_.push_back(match_hash);
  times_.push_back(game_time);
}

void SampleSet::AddFrom(const SampleSet& other, std::size_t index) {
  Add(other.features(index), other.labels(index), other.match_hash(index),
      other.game_time(index));
}

void SampleSet::Append(const SampleSet& other) {
  if (other.variant_ != variant_ || other.per_hero_count_ != per_hero_count_) {
    throw Error(ErrorCode::kSchemaMismatch, "cannot append samples of a different schema");
  }
  features_.insert(features_.end(), other.features_.begin(), other.features_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  hashes_.insert(hashes_.end(), other.hashes_.begin(), other.hashes_.end());
  times_.insert(times_.end(), other.times_.begin(), other.times_.end());
}

void SampleSet::Reserve(std::size_t n) {
  features_.reserve(n * sample_width());
  labels_.reserve(n);
  hashes_.reserve(n);
  times_.reserve(n);
}

SampleSet MatchToSamples(const MatchRecord& match, const FeatureSchema& schema,
                         const NormalizationStats& stats, int period_ticks,
                         double window_seconds) {
  if (stats.variant != schema.variant() || stats.size() != schema.per_hero_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "normalization stats belong to another schema");
  }
  const MatchRecord clean = StripPauses(match);
  const std::vector<int> kept = Downsample(clean, period_ticks);
  const std::vector<LabelBits> labels = LabelFrames(clean, window_seconds);
  const std::uint64_t hash = HashString(clean.match_id);

  SampleSet out(schema.variant(), schema.per_hero_count());
  out.Reserve(kept.size());
  HistoryState history;
  std::vector<float> buffer(static_cast<std::size_t>(out.sample_width()));
  for (int index : kept) {
    FrameFeatures f = ExtractFrame(clean, index, schema, history);
    NormalizeInPlace(f, stats);
    std::transform(f.values.begin(), f.values.end(), buffer.begin(),
                   [](double v) { return static_cast<float>(v); });
    out.Add(buffer, labels[index], hash, static_cast<float>(f.game_time));
  }
  return out;
}

SampleSet UndersampleNegatives(const SampleSet& samples, double drop_fraction,
                               std::uint64_t seed) {
  if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "drop fraction must lie in [0, 1)");
  }
  Rng rng(seed);
  SampleSet out(samples.variant(), samples.per_hero_count());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.labels(i) == 0 && UniformUnit(rng) < drop_fraction) continue;
    out.AddFrom(samples, i);
  }
  return out;
}

SampleSet ShuffleSamples(const SampleSet& samples, std::uint64_t seed) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  Shuffle(order, rng);
  SampleSet out(samples.variant(), samples.per_hero_count());
  out.Reserve(samples.size());
  for (std::size_t i : order) out.AddFrom(samples, i);
  return out;
}

NormalizationStats ComputeMatchNormStats(std::size_t count, const MatchLoader& load,
                                         const FeatureSchema& schema, int period_ticks,
                                         int threads) {
  const std::vector<NormStatsAccumulator> parts =
      ParallelMap<NormStatsAccumulator>(count, threads, [&](std::size_t i) {
        const MatchRecord clean = StripPauses(load(i));
        const std::vector<int> kept = Downsample(clean, period_ticks);
        NormStatsAccumulator acc(schema);
        for (const FrameFeatures& f : ExtractFrames(clean, kept, schema)) acc.Add(f);
        return acc;
      });
  NormStatsAccumulator total(schema);
  for (const NormStatsAccumulator& part : parts) total.Merge(part);
  return total.Finish();
}

NormalizationStats ComputeMatchNormStats(std::span<const MatchRecord> matches,
                                         const FeatureSchema& schema, int period_ticks,
                                         int threads) {
  return ComputeMatchNormStats(
      matches.size(), [&](std::size_t i) { return matches[i]; }, schema, period_ticks, threads);
}

SampleSet BuildSamples(std::size_t count, const MatchLoader& load, const FeatureSchema& schema,
                       const NormalizationStats& stats, int period_ticks, double window_seconds,
                       int threads) {
  const std::vector<SampleSet> parts =
      ParallelMap<SampleSet>(count, threads, [&](std::size_t i) {
        return MatchToSamples(load(i), schema, stats, period_ticks, window_seconds);
      });
  SampleSet out(schema.variant(), schema.per_hero_count());
  std::size_t total = 0;
  for (const SampleSet& part : parts) total += part.size();
  out.Reserve(total);
  for (const SampleSet& part : parts) out.Append(part);
  return out;
}

SampleSet BuildSamples(std::span<const MatchRecord> matches, const FeatureSchema& schema,
                       const NormalizationStats& stats, int period_ticks, double window_seconds,
                       int threads) {
  return BuildSamples(
      matches.size(), [&](std::size_t i) { return matches[i]; }, schema, stats, period_ticks,
      window_seconds, threads);
}

std::vector<Shard> ChunkIntoShards(const SampleSet& samples) {
  std::vector<Shard> shards;
  for (std::size_t start = 0; start < samples.size(); start += kShardCapacity) {
    const std::size_t end = std::min(samples.size(), start + kShardCapacity);
    Shard shard;
    shard.samples = SampleSet(samples.variant(), samples.per_hero_count());
    shard.samples.Reserve(end - start);
    for (std::size_t i = start; i < end; ++i) shard.samples.AddFrom(samples, i);
    shards.push_back(std::move(shard));
  }
  return shards;
}

std::vector<std::uint8_t> EncodeShard(const SampleSet& samples) {
  if (samples.size() > static_cast<std::size_t>(kShardCapacity)) {
    throw Error(ErrorCode::kShapeMismatch, "shard holds at most 4000 samples");
  }
  ByteWriter w;
  w.Put<std::uint32_t>(kShardMagic);
  w.Put<std::uint32_t>(kShardVersion);
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(samples.variant()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(samples.per_hero_count()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    w.PutSpan(samples.features(i));
    w.Put<std::uint16_t>(samples.labels(i));
    w.Put<std::uint64_t>(samples.match_hash(i));
    w.Put<float>(samples.game_time(i));
  }
  w.SealWithChecksum();
  return w.release();
}

Shard DecodeShard(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes);
  r.VerifyChecksum(what);
  if (r.Get<std::uint32_t>() != kShardMagic) {
    throw Error(ErrorCode::kSchemaMismatch, what + ": not a shard file");
  }
  if (r.Get<std::uint32_t>() != kShardVersion) {
    throw Error(ErrorCode::kVersionMismatch, what + ": unsupported shard version");
  }
  const auto variant_byte = r.Get<std::uint8_t>();
  if (variant_byte > static_cast<std::uint8_t>(SchemaVariant::kFull)) {
    throw Error(ErrorCode::kSchemaMismatch, what + ": unknown schema variant");
  }
  const auto variant = static_cast<SchemaVariant>(variant_byte);
  const auto per_hero = r.Get<std::uint32_t>();
  if (static_cast<int>(per_hero) != FeatureSchema::Get(variant).per_hero_count()) {
    throw Error(ErrorCode::kSchemaMismatch, what + ": feature width does not match variant");
  }
  const auto count = r.Get<std::uint32_t>();
  if (count > static_cast<std::uint32_t>(kShardCapacity)) {
    throw Error(ErrorCode::kSchemaMismatch, what + ": too many samples");
  }
  Shard shard;
  shard.samples = SampleSet(variant, static_cast<int>(per_hero));
  shard.samples.Reserve(count);
  std::vector<float> buffer(static_cast<std::size_t>(shard.samples.sample_width()));
  for (std::uint32_t i = 0; i < count; ++i) {
    r.GetSpan(std::span<float>(buffer));
    const auto labels = r.Get<std::uint16_t>();
    const auto hash = r.Get<std::uint64_t>();
    const auto time = r.Get<float>();
    shard.samples.Add(buffer, labels, hash, time);
  }
  if (!r.at_end()) throw Error(ErrorCode::kSchemaMismatch, what + ": trailing bytes");
  std::memcpy(&shard.checksum, bytes.data() + bytes.size() - sizeof(std::uint64_t),
              sizeof(std::uint64_t));
  return shard;
}

std::vector<std::string> WriteShards(const SampleSet& samples, const std::string& dir,
                                     const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  const std::vector<Shard> shards = ChunkIntoShards(samples);
  for (std::size_t index = 0; index < shards.size(); ++index) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s-%05zu.shard", prefix.c_str(), index);
    const std::string path = (std::filesystem::path(dir) / name).string();
    WriteFileBytes(path, EncodeShard(shards[index].samples));
    paths.push_back(path);
  }
  return paths;
}

Shard ReadShard(const std::string& path) { return DecodeShard(ReadFileBytes(path), path); }

Shard ReadShard(const std::string& path, SchemaVariant expected) {
  Shard shard = ReadShard(path);
  if (shard.samples.variant() != expected) {
    throw Error(ErrorCode::kSchemaMismatch,
                path + ": shard holds " + std::string(VariantName(shard.samples.variant())) +
                    " features, expected " + std::string(VariantName(expected)));
  }
  return shard;
}

SplitManifest SplitMatches(std::vector<std::string> match_ids, std::uint64_t seed) {
  std::sort(match_ids.begin(), match_ids.end());
  if (std::adjacent_find(match_ids.begin(), match_ids.end()) != match_ids.end()) {
    throw Error(ErrorCode::kInvalidConfig, "duplicate match id in corpus");
  }
  Rng rng(seed);
  Shuffle(match_ids, rng);
  const std::size_t n = match_ids.size();
  const auto n_train = static_cast<std::size_t>(std::floor(0.8 * n + 0.5));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::floor(0.1 * n + 0.5)));
  SplitManifest m;
  m.split_seed = seed;
  m.train.assign(match_ids.begin(), match_ids.begin() + n_train);
  m.validation.assign(match_ids.begin() + n_train, match_ids.begin() + n_train + n_val);
  m.test.assign(match_ids.begin() + n_train + n_val, match_ids.end());
  return m;
}

void SaveManifest(const SplitManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  char window[64];
  auto [end, ec] = std::to_chars(window, window + sizeof(window), m.window_seconds);
  out << "# deathcast manifest v1\n";
  out << "split_seed\t" << m.split_seed << '\n';
  out << "shuffle_seed\t" << m.shuffle_seed << '\n';
  out << "undersample_seed\t" << m.undersample_seed << '\n';
  out << "schema\t" << VariantName(m.variant) << '\n';
  out << "window_seconds\t" << std::string_view(window, end - window) << '\n';
  out << "period_ticks\t" << m.period_ticks << '\n';
  for (const auto& id : m.train) out << "match\ttrain\t" << id << '\n';
  for (const auto& id : m.validation) out << "match\tvalidation\t" << id << '\n';
  for (const auto& id : m.test) out << "match\ttest\t" << id << '\n';
  for (const auto& p : m.train_shards) out << "shard\ttrain\t" << p << '\n';
  for (const auto& p : m.validation_shards) out << "shard\tvalidation\t" << p << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

SplitManifest LoadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  SplitManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, '\t');) cols.push_back(col);
    const std::string& key = cols[0];
    auto need = [&](std::size_t n) {
      if (cols.size() != n) {
        throw Error(ErrorCode::kMalformedRecord, "manifest: bad line '" + line + "'");
      }
    };
    if (key == "split_seed") {
      need(2);
      m.split_seed = ParseU64(cols[1]);
    } else if (key == "shuffle_seed") {
      need(2);
      m.shuffle_seed = ParseU64(cols[1]);
    } else if (key == "undersample_seed") {
      need(2);
      m.undersample_seed = ParseU64(cols[1]);
    } else if (key == "schema") {
      need(2);
      m.variant = ParseVariant(cols[1]);
    } else if (key == "window_seconds") {
      need(2);
      m.window_seconds = std::stod(cols[1]);
    } else if (key == "period_ticks") {
      need(2);
      m.period_ticks = static_cast<int>(ParseU64(cols[1]));
    } else if (key == "match" || key == "shard") {
      need(3);
      std::vector<std::string>* dst = nullptr;
      if (cols[1] == "train") dst = key == "match" ? &m.train : &m.train_shards;
      if (cols[1] == "validation") dst = key == "match" ? &m.validation : &m.validation_shards;
      if (cols[1] == "test" && key == "match") dst = &m.test;
      if (dst == nullptr) {
        throw Error(ErrorCode::kMalformedRecord, "manifest: unknown split '" + cols[1] + "'");
      }
      dst->push_back(cols[2]);
    } else {
      throw Error(ErrorCode::kMalformedRecord, "manifest: unknown key '" + key + "'");
    }
  }
  std::set<std::string> seen;
  for (const auto* split : {&m.train, &m.validation, &m.test}) {
    for (const auto& id : *split) {
      if (!seen.insert(id).second) {
        throw Error(ErrorCode::kSplitLeak, "manifest: match " + id + " is in two splits");
      }
    }
  }
  return m;
}

void CheckNoTrainingMatches(const SplitManifest& manifest,
                            std::span<const std::string> match_ids) {
  const std::set<std::string> train(manifest.train.begin(), manifest.train.end());
  const std::set<std::string> val(manifest.validation.begin(), manifest.validation.end());
  for (const auto& id : match_ids) {
    if (train.contains(id) || val.contains(id)) {
      throw Error(ErrorCode::kSplitLeak,
                  "match " + id + " belongs to the " +
                      (train.contains(id) ? "train" : "validation") + " split");
    }
  }
}

ShardPool::ShardPool(std::vector<Shard> shards) : shards_(std::move(shards)) {
  pos_.resize(shards_.size());
  neg_.resize(shards_.size());
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    const SampleSet& set = shards_[s].samples;
    if (s > 0 && (set.variant() != shards_[0].samples.variant())) {
      throw Error(ErrorCode::kSchemaMismatch, "shard pool mixes schema variants");
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      for (int slot = 0; slot < kHeroCount; ++slot) {
        if (SlotLabel(set.labels(i), slot)) {
          pos_[s][slot].push_back(static_cast<std::uint32_t>(i));
        } else {
          neg_[s][slot].push_back(static_cast<std::uint32_t>(i));
        }
      }
    }
    for (int slot = 0; slot < kHeroCount; ++slot) {
      total_pos_[slot] += static_cast<std::int64_t>(pos_[s][slot].size());
      total_neg_[slot] += static_cast<std::int64_t>(neg_[s][slot].size());
    }
  }
}

std::size_t ShardPool::sample_count() const {
  std::size_t n = 0;
  for (const Shard& s : shards_) n += s.samples.size();
  return n;
}

BalancedBatch SampleBalancedBatch(const ShardPool& pool, int batch_size, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw Error(ErrorCode::kInvalidConfig, "batch size must be a positive even number");
  }
  const int half = batch_size / 2;
  std::vector<int> feasible;
  for (int slot = 0; slot < kHeroCount; ++slot) {
    if (pool.positives(slot) >= half && pool.negatives(slot) >= half) feasible.push_back(slot);
  }
  if (feasible.empty()) {
    throw Error(ErrorCode::kInsufficientPositives,
                "no slot has " + std::to_string(half) + " positive and negative samples");
  }
  const int slot = feasible[RandomIndex(rng, feasible.size())];

  const std::size_t n_shards = pool.shards().size();
  std::vector<std::size_t> order(n_shards);
  for (std::size_t i = 0; i < n_shards; ++i) order[i] = i;
  // First shard is uniform; the rest give a random top-up order.
  std::swap(order[0], order[RandomIndex(rng, n_shards)]);
  for (std::size_t i = n_shards; i > 2; --i) {
    std::swap(order[i - 1], order[1 + RandomIndex(rng, i - 1)]);
  }

  BalancedBatch batch;
  batch.per_hero_count = pool.shards().front().samples.per_hero_count();
  batch.selected_slot = slot;
  const int width = kHeroCount * batch.per_hero_count;
  batch.features.reserve(static_cast<std::size_t>(batch_size) * width);
  batch.labels.reserve(batch_size);

  auto draw = [&](bool positive) {
    int need = half;
    std::vector<std::uint32_t> candidates;
    for (std::size_t k = 0; k < n_shards && need > 0; ++k) {
      const std::size_t s = order[k];
      candidates = positive ? pool.positive_indices(s, slot) : pool.negative_indices(s, slot);
      const int take = std::min<int>(need, static_cast<int>(candidates.size()));
      // Partial Fisher-Yates: uniform sample without replacement.
      for (int i = 0; i < take; ++i) {
        std::swap(candidates[i], candidates[i + RandomIndex(rng, candidates.size() - i)]);
        const SampleSet& set = pool.shards()[s].samples;
        const auto f = set.features(candidates[i]);
        batch.features.insert(batch.features.end(), f.begin(), f.end());
        batch.labels.push_back(set.labels(candidates[i]));
      }
      need -= take;
    }
  };
  draw(true);
  draw(false);
  return batch;
}

}  // namespace deathcast
