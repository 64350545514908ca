#ifndef DEATHCAST_FEATURES_HPP_
#define DEATHCAST_FEATURES_HPP_

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deathcast/match.hpp"

namespace deathcast {

enum class SchemaVariant : std::uint8_t { kMinimal = 0, kMedium = 1, kFull = 2 };

std::string_view VariantName(SchemaVariant variant);
// Accepts "minimal", "medium", "full"; throws kInvalidConfig otherwise.
SchemaVariant ParseVariant(std::string_view name);

enum class FeatureCategory {
  kTime,
  kState,
  kStats,
  kItems,
  kAbilities,
  kHeroId,
  kPosition,
  kProximity,
  kTower,
  kVisibility,
  kHealth,  // the snapshot's own health field, used by the minimal set
};

std::string_view CategoryName(FeatureCategory category);

struct FeatureInfo {
  std::string name;
  FeatureCategory category;
};

inline constexpr int kHeroIdWidth = kDefaultRosterSize;
inline constexpr int kAllyProximityCount = kTeamSize - 1;
inline constexpr int kEnemyProximityCount = kTeamSize;
inline constexpr int kVisibilitySeconds = 10;

// Fixed per-hero feature layout for one of the three feature sets. The same
// order applies to every hero slot.
class FeatureSchema {
 public:
  static const FeatureSchema& Get(SchemaVariant variant);

  SchemaVariant variant() const { return variant_; }
  int per_hero_count() const { return static_cast<int>(features_.size()); }
  const std::vector<FeatureInfo>& features() const { return features_; }
  bool uses_hero_id() const { return uses_hero_id_; }

  // Index of each feature in the extended (full + health) layout.
  std::span<const int> source_indices() const { return source_; }

 private:
  explicit FeatureSchema(SchemaVariant variant);

  SchemaVariant variant_;
  std::vector<FeatureInfo> features_;
  std::vector<int> source_;
  bool uses_hero_id_ = false;
};

// One extracted frame: 10 per-hero vectors stored back to back, slot order.
struct FrameFeatures {
  double game_time = 0.0;
  int per_hero_count = 0;
  std::vector<double> values;

  std::span<const double> hero(int slot) const {
    return std::span<const double>(values).subspan(
        static_cast<std::size_t>(slot) * per_hero_count, per_hero_count);
  }
  std::span<double> hero(int slot) {
    return std::span<double>(values).subspan(
        static_cast<std::size_t>(slot) * per_hero_count, per_hero_count);
  }
};

// Order-dependent state carried from one processed frame to the next.
class HistoryState {
 public:
  struct HeroHistory {
    bool has_previous = false;
    double previous_time = 0.0;
    double pos_x = 0.0;
    double pos_y = 0.0;
    std::array<double, kAllyProximityCount> ally{};
    std::array<double, kEnemyProximityCount> enemy{};
    double ally_tower = 0.0;
    double enemy_tower = 0.0;
    // (game_time, visible_to_enemy) for processed frames in the last 10 s.
    std::deque<std::pair<double, bool>> visibility;
  };

  // Flag i is set when the hero was visible at some processed frame with
  // game_time in (now - i - 1, now - i].
  std::array<bool, kVisibilitySeconds> VisibilityFlags(int slot, double now) const;

  const HeroHistory& hero(int slot) const { return heroes_[slot]; }
  HeroHistory& hero(int slot) { return heroes_[slot]; }

  bool started() const { return started_; }
  double last_time() const { return last_time_; }
  void MarkProcessed(double game_time) {
    started_ = true;
    last_time_ = game_time;
  }

  int missing_tower_frames = 0;

 private:
  std::array<HeroHistory, kHeroCount> heroes_;
  bool started_ = false;
  double last_time_ = 0.0;
};

FrameFeatures ExtractFrame(const MatchRecord& match, int frame_index,
                           const FeatureSchema& schema, HistoryState& history);

// Extracts the given frames in order with a fresh history.
std::vector<FrameFeatures> ExtractFrames(const MatchRecord& match,
                                         std::span<const int> frame_indices,
                                         const FeatureSchema& schema,
                                         int* missing_tower_frames = nullptr);

struct NormalizationStats {
  SchemaVariant variant = SchemaVariant::kMinimal;
  std::vector<double> min;
  std::vector<double> max;

  int size() const { return static_cast<int>(min.size()); }
  bool operator==(const NormalizationStats&) const = default;
};

// Streaming min/max accumulator; Merge is associative so partial results from
// separate workers combine to the same stats.
class NormStatsAccumulator {
 public:
  explicit NormStatsAccumulator(const FeatureSchema& schema);

  void Add(const FrameFeatures& frame);
  void Merge(const NormStatsAccumulator& other);
  bool empty() const { return count_ == 0; }
  NormalizationStats Finish() const;

 private:
  SchemaVariant variant_;
  std::vector<double> min_;
  std::vector<double> max_;
  std::int64_t count_ = 0;
};

NormalizationStats ComputeNormStats(std::span<const FrameFeatures> frames,
                                    const FeatureSchema& schema);

// (x - min) / (max - min) clamped to [0, 1]; constant features map to 0.
FrameFeatures Normalize(const FrameFeatures& frame, const NormalizationStats& stats);
void NormalizeInPlace(FrameFeatures& frame, const NormalizationStats& stats);

void WriteNormStats(const NormalizationStats& stats, std::ostream& out);
NormalizationStats ReadNormStats(std::istream& in);
void SaveNormStats(const NormalizationStats& stats, const std::string& path);
NormalizationStats LoadNormStats(const std::string& path);

// Numbered listing used by `schema-dump`.
std::string DumpSchema(const FeatureSchema& schema);

}  // namespace deathcast

#endif  // DEATHCAST_FEATURES_HPP_
