#include "deathcast/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "deathcast/error.hpp"
#include "deathcast/text.hpp"

namespace deathcast {
namespace {

// Extended per-hero layout: the 287 full features followed by the snapshot's
// health field. Every schema is a selection from this layout.
constexpr int kTimeOffset = 0;
constexpr int kStateOffset = kTimeOffset + 1;
constexpr int kStatsOffset = kStateOffset + kStateAttrCount;
constexpr int kItemsOffset = kStatsOffset + kStatAttrCount;
constexpr int kAbilitiesOffset = kItemsOffset + 2 * kTrackedItemCount;
constexpr int kHeroIdOffset = kAbilitiesOffset + kMaxAbilities * kAbilityAttrCount;
constexpr int kPositionOffset = kHeroIdOffset + kHeroIdWidth;
constexpr int kProximityOffset = kPositionOffset + 4;
constexpr int kAllyProxOffset = kProximityOffset;
constexpr int kAllyProxChangeOffset = kAllyProxOffset + kAllyProximityCount;
constexpr int kEnemyProxOffset = kAllyProxChangeOffset + kAllyProximityCount;
constexpr int kEnemyProxChangeOffset = kEnemyProxOffset + kEnemyProximityCount;
constexpr int kTowerOffset = kEnemyProxChangeOffset + kEnemyProximityCount;
constexpr int kVisibilityOffset = kTowerOffset + 4;
constexpr int kFullCount = kVisibilityOffset + kVisibilitySeconds;
constexpr int kHealthIndex = kFullCount;
constexpr int kExtendedCount = kFullCount + 1;

static_assert(kFullCount == 287);
static_assert(kFullCount - kHeroIdWidth - kMaxAbilities * kAbilityAttrCount == 109);

std::vector<FeatureInfo> ExtendedLayout() {
  std::vector<FeatureInfo> out;
  out.reserve(kExtendedCount);
  auto add = [&out](std::string name, FeatureCategory c) {
    out.push_back({std::move(name), c});
  };
  add("time", FeatureCategory::kTime);
  for (auto n : kStateAttrNames) add("state." + std::string(n), FeatureCategory::kState);
  for (auto n : kStatAttrNames) add("stats." + std::string(n), FeatureCategory::kStats);
  for (auto n : kTrackedItemNames) {
    add("item." + std::string(n) + ".owned", FeatureCategory::kItems);
    add("item." + std::string(n) + ".cooldown", FeatureCategory::kItems);
  }
  for (int a = 1; a <= kMaxAbilities; ++a) {
    for (auto n : kAbilityAttrNames) {
      add("ability" + std::to_string(a) + "." + std::string(n), FeatureCategory::kAbilities);
    }
  }
  for (int i = 0; i < kHeroIdWidth; ++i) {
    add("hero_id." + std::to_string(i), FeatureCategory::kHeroId);
  }
  add("position.x", FeatureCategory::kPosition);
  add("position.x_change", FeatureCategory::kPosition);
  add("position.y", FeatureCategory::kPosition);
  add("position.y_change", FeatureCategory::kPosition);
  for (int i = 1; i <= kAllyProximityCount; ++i) {
    add("ally_proximity." + std::to_string(i), FeatureCategory::kProximity);
  }
  for (int i = 1; i <= kAllyProximityCount; ++i) {
    add("ally_proximity_change." + std::to_string(i), FeatureCategory::kProximity);
  }
  for (int i = 1; i <= kEnemyProximityCount; ++i) {
    add("enemy_proximity." + std::to_string(i), FeatureCategory::kProximity);
  }
  for (int i = 1; i <= kEnemyProximityCount; ++i) {
    add("enemy_proximity_change." + std::to_string(i), FeatureCategory::kProximity);
  }
  add("ally_tower_proximity", FeatureCategory::kTower);
  add("ally_tower_proximity_change", FeatureCategory::kTower);
  add("enemy_tower_proximity", FeatureCategory::kTower);
  add("enemy_tower_proximity_change", FeatureCategory::kTower);
  for (int i = 1; i <= kVisibilitySeconds; ++i) {
    add("visibility." + std::to_string(i), FeatureCategory::kVisibility);
  }
  add("health", FeatureCategory::kHealth);
  return out;
}

double Distance(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

// Distance to the nearest alive tower of `team`; 0 when none is known.
double NearestTower(const std::vector<Tower>& towers, int team, double x, double y) {
  double best = std::numeric_limits<double>::infinity();
  for (const Tower& t : towers) {
    if (t.team == team && t.alive) best = std::min(best, Distance(x, y, t.x, t.y));
  }
  return std::isfinite(best) ? best : 0.0;
}

double ParseDouble(std::string_view s) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kMalformedRecord, "bad number '" + std::string(s) + "'");
  }
  return x;
}

}  // namespace

std::string_view VariantName(SchemaVariant variant) {
  switch (variant) {
    case SchemaVariant::kMinimal: return "minimal";
    case SchemaVariant::kMedium: return "medium";
    case SchemaVariant::kFull: return "full";
  }
  return "unknown";
}

SchemaVariant ParseVariant(std::string_view name) {
  if (name == "minimal") return SchemaVariant::kMinimal;
  if (name == "medium") return SchemaVariant::kMedium;
  if (name == "full") return SchemaVariant::kFull;
  throw Error(ErrorCode::kInvalidConfig, "unknown schema variant '" + std::string(name) + "'");
}

std::string_view CategoryName(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::kTime: return "time";
    case FeatureCategory::kState: return "state";
    case FeatureCategory::kStats: return "stats";
    case FeatureCategory::kItems: return "items";
    case FeatureCategory::kAbilities: return "abilities";
    case FeatureCategory::kHeroId: return "hero_id";
    case FeatureCategory::kPosition: return "position";
    case FeatureCategory::kProximity: return "proximity";
    case FeatureCategory::kTower: return "tower";
    case FeatureCategory::kVisibility: return "visibility";
    case FeatureCategory::kHealth: return "state";
  }
  return "unknown";
}

FeatureSchema::FeatureSchema(SchemaVariant variant) : variant_(variant) {
  static const std::vector<FeatureInfo> extended = ExtendedLayout();
  switch (variant) {
    case SchemaVariant::kFull:
      for (int i = 0; i < kFullCount; ++i) source_.push_back(i);
      break;
    case SchemaVariant::kMedium:
      for (int i = 0; i < kFullCount; ++i) {
        const FeatureCategory c = extended[i].category;
        if (c != FeatureCategory::kAbilities && c != FeatureCategory::kHeroId) {
          source_.push_back(i);
        }
      }
      break;
    case SchemaVariant::kMinimal:
      source_ = {kHealthIndex, kStatsOffset + kStatTotalGoldIndex, kPositionOffset,
                 kPositionOffset + 2};
      for (int i = 0; i < kAllyProximityCount; ++i) source_.push_back(kAllyProxOffset + i);
      for (int i = 0; i < kEnemyProximityCount; ++i) source_.push_back(kEnemyProxOffset + i);
      source_.push_back(kTowerOffset);
      source_.push_back(kTowerOffset + 2);
      break;
  }
  for (int i : source_) {
    features_.push_back(extended[i]);
    if (extended[i].category == FeatureCategory::kHeroId) uses_hero_id_ = true;
  }
}

const FeatureSchema& FeatureSchema::Get(SchemaVariant variant) {
  static const FeatureSchema minimal(SchemaVariant::kMinimal);
  static const FeatureSchema medium(SchemaVariant::kMedium);
  static const FeatureSchema full(SchemaVariant::kFull);
  switch (variant) {
    case SchemaVariant::kMinimal: return minimal;
    case SchemaVariant::kMedium: return medium;
    case SchemaVariant::kFull: return full;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown schema variant");
}

std::array<bool, kVisibilitySeconds> HistoryState::VisibilityFlags(int slot,
                                                                   double now) const {
  std::array<bool, kVisibilitySeconds> flags{};
  for (const auto& [time, visible] : heroes_[slot].visibility) {
    if (!visible) continue;
    const double age = now - time;
    if (age < 0.0) continue;
    // age in [i, i + 1) belongs to the interval (now - i - 1, now - i].
    const int bucket = static_cast<int>(std::floor(age));
    if (bucket < kVisibilitySeconds) flags[bucket] = true;
  }
  return flags;
}

FrameFeatures ExtractFrame(const MatchRecord& match, int frame_index,
                           const FeatureSchema& schema, HistoryState& history) {
  if (frame_index < 0 || frame_index >= static_cast<int>(match.frames.size())) {
    throw Error(ErrorCode::kInvalidFrame,
                "frame index " + std::to_string(frame_index) + " out of range");
  }
  if (schema.uses_hero_id() && match.roster_size != kHeroIdWidth) {
    throw Error(ErrorCode::kSchemaMismatch,
                "roster size " + std::to_string(match.roster_size) +
                    " does not match the hero one-hot width 130");
  }
  const TickFrame& frame = match.frames[frame_index];
  if (frame.paused) {
    throw Error(ErrorCode::kInvalidFrame, "frame " + std::to_string(frame_index) + " is paused");
  }
  const double now = frame.game_time;
  if (history.started() && !(now > history.last_time())) {
    throw Error(ErrorCode::kInvalidFrame,
                "frame " + std::to_string(frame_index) + " does not advance game time");
  }
  if (!frame.towers) ++history.missing_tower_frames;

  FrameFeatures out;
  out.game_time = now;
  out.per_hero_count = schema.per_hero_count();
  out.values.resize(static_cast<std::size_t>(kHeroCount) * out.per_hero_count);

  std::array<double, kExtendedCount> ext;
  for (int slot = 0; slot < kHeroCount; ++slot) {
    const HeroSnapshot& h = frame.heroes[slot];
    if (h.state_attrs.size() != kStateAttrCount || h.stat_attrs.size() != kStatAttrCount) {
      throw Error(ErrorCode::kInvalidFrame, "attribute vector of wrong length");
    }
    HistoryState::HeroHistory& past = history.hero(slot);
    const double elapsed = past.has_previous ? now - past.previous_time : 0.0;
    auto rate = [&](double current, double previous) {
      return past.has_previous ? (current - previous) / elapsed : 0.0;
    };

    ext.fill(0.0);
    ext[kTimeOffset] = now;
    std::copy(h.state_attrs.begin(), h.state_attrs.end(), ext.begin() + kStateOffset);
    std::copy(h.stat_attrs.begin(), h.stat_attrs.end(), ext.begin() + kStatsOffset);
    for (const ItemState& item : h.items) {
      if (item.item_id < 0 || item.item_id >= kTrackedItemCount) {
        throw Error(ErrorCode::kInvalidFrame, "untracked item id");
      }
      ext[kItemsOffset + 2 * item.item_id] = 1.0;
      ext[kItemsOffset + 2 * item.item_id + 1] = item.cooldown_remaining;
    }
    for (std::size_t a = 0; a < h.abilities.size() && a < kMaxAbilities; ++a) {
      for (int k = 0; k < kAbilityAttrCount; ++k) {
        ext[kAbilitiesOffset + a * kAbilityAttrCount + k] = h.abilities[a][k];
      }
    }
    if (h.hero_id >= 0 && h.hero_id < kHeroIdWidth) ext[kHeroIdOffset + h.hero_id] = 1.0;

    ext[kPositionOffset] = h.pos_x;
    ext[kPositionOffset + 1] = rate(h.pos_x, past.pos_x);
    ext[kPositionOffset + 2] = h.pos_y;
    ext[kPositionOffset + 3] = rate(h.pos_y, past.pos_y);

    std::array<double, kAllyProximityCount> ally{};
    std::array<double, kEnemyProximityCount> enemy{};
    int na = 0;
    int ne = 0;
    for (int other = 0; other < kHeroCount; ++other) {
      if (other == slot) continue;
      const HeroSnapshot& o = frame.heroes[other];
      const double d = Distance(h.pos_x, h.pos_y, o.pos_x, o.pos_y);
      if (TeamOf(other) == TeamOf(slot)) {
        ally[na++] = d;
      } else {
        enemy[ne++] = d;
      }
    }
    std::sort(ally.begin(), ally.end());
    std::sort(enemy.begin(), enemy.end());
    for (int i = 0; i < kAllyProximityCount; ++i) {
      ext[kAllyProxOffset + i] = ally[i];
      ext[kAllyProxChangeOffset + i] = rate(ally[i], past.ally[i]);
    }
    for (int i = 0; i < kEnemyProximityCount; ++i) {
      ext[kEnemyProxOffset + i] = enemy[i];
      ext[kEnemyProxChangeOffset + i] = rate(enemy[i], past.enemy[i]);
    }

    double ally_tower = 0.0;
    double enemy_tower = 0.0;
    if (frame.towers) {
      ally_tower = NearestTower(*frame.towers, TeamOf(slot), h.pos_x, h.pos_y);
      enemy_tower = NearestTower(*frame.towers, 1 - TeamOf(slot), h.pos_x, h.pos_y);
    }
    ext[kTowerOffset] = ally_tower;
    ext[kTowerOffset + 1] = rate(ally_tower, past.ally_tower);
    ext[kTowerOffset + 2] = enemy_tower;
    ext[kTowerOffset + 3] = rate(enemy_tower, past.enemy_tower);

    past.visibility.emplace_back(now, h.visible_to_enemy);
    while (!past.visibility.empty() &&
           now - past.visibility.front().first >= kVisibilitySeconds) {
      past.visibility.pop_front();
    }
    const auto flags = history.VisibilityFlags(slot, now);
    for (int i = 0; i < kVisibilitySeconds; ++i) {
      ext[kVisibilityOffset + i] = flags[i] ? 1.0 : 0.0;
    }
    ext[kHealthIndex] = h.health;

    past.has_previous = true;
    past.previous_time = now;
    past.pos_x = h.pos_x;
    past.pos_y = h.pos_y;
    past.ally = ally;
    past.enemy = enemy;
    past.ally_tower = ally_tower;
    past.enemy_tower = enemy_tower;

    std::span<double> dst = out.hero(slot);
    const auto src = schema.source_indices();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double v = ext[src[i]];
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kInvalidFrame, "non-finite feature value");
      }
      dst[i] = v;
    }
  }
  history.MarkProcessed(now);
  return out;
}

std::vector<FrameFeatures> ExtractFrames(const MatchRecord& match,
                                         std::span<const int> frame_indices,
                                         const FeatureSchema& schema,
                                         int* missing_tower_frames) {
  HistoryState history;
  std::vector<FrameFeatures> out;
  out.reserve(frame_indices.size());
  for (int index : frame_indices) {
    out.push_back(ExtractFrame(match, index, schema, history));
  }
  if (missing_tower_frames != nullptr) *missing_tower_frames = history.missing_tower_frames;
  return out;
}

NormStatsAccumulator::NormStatsAccumulator(const FeatureSchema& schema)
    : variant_(schema.variant()),
      min_(schema.per_hero_count(), std::numeric_limits<double>::infinity()),
      max_(schema.per_hero_count(), -std::numeric_limits<double>::infinity()) {}

void NormStatsAccumulator::Add(const FrameFeatures& frame) {
  if (frame.per_hero_count != static_cast<int>(min_.size())) {
    throw Error(ErrorCode::kSchemaMismatch, "frame width does not match the schema");
  }
  for (int slot = 0; slot < kHeroCount; ++slot) {
    const auto v = frame.hero(slot);
    for (std::size_t k = 0; k < v.size(); ++k) {
      min_[k] = std::min(min_[k], v[k]);
      max_[k] = std::max(max_[k], v[k]);
    }
  }
  ++count_;
}

void NormStatsAccumulator::Merge(const NormStatsAccumulator& other) {
  if (other.variant_ != variant_) {
    throw Error(ErrorCode::kSchemaMismatch, "cannot merge stats of different schemas");
  }
  for (std::size_t k = 0; k < min_.size(); ++k) {
    min_[k] = std::min(min_[k], other.min_[k]);
    max_[k] = std::max(max_[k], other.max_[k]);
  }
  count_ += other.count_;
}

NormalizationStats NormStatsAccumulator::Finish() const {
  if (count_ == 0) throw Error(ErrorCode::kEmptyStream, "no frames to compute stats from");
  return NormalizationStats{variant_, min_, max_};
}

NormalizationStats ComputeNormStats(std::span<const FrameFeatures> frames,
                                    const FeatureSchema& schema) {
  NormStatsAccumulator acc(schema);
  for (const FrameFeatures& f : frames) acc.Add(f);
  return acc.Finish();
}

void NormalizeInPlace(FrameFeatures& frame, const NormalizationStats& stats) {
  if (frame.per_hero_count != stats.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "frame width does not match normalization stats");
  }
  for (int slot = 0; slot < kHeroCount; ++slot) {
    auto v = frame.hero(slot);
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double range = stats.max[k] - stats.min[k];
      if (!(range > 0.0)) {
        v[k] = 0.0;
        continue;
      }
      v[k] = std::clamp((v[k] - stats.min[k]) / range, 0.0, 1.0);
    }
  }
}

FrameFeatures Normalize(const FrameFeatures& frame, const NormalizationStats& stats) {
  FrameFeatures out = frame;
  NormalizeInPlace(out, stats);
  return out;
}

void WriteNormStats(const NormalizationStats& stats, std::ostream& out) {
  const FeatureSchema& schema = FeatureSchema::Get(stats.variant);
  if (schema.per_hero_count() != stats.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "stats width does not match the schema");
  }
  out << "# schema\t" << VariantName(stats.variant) << '\n';
  for (int k = 0; k < stats.size(); ++k) {
    out << schema.features()[k].name << '\t' << FormatShortest(stats.min[k]) << '\t'
        << FormatShortest(stats.max[k]) << '\n';
  }
}

NormalizationStats ReadNormStats(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# schema\t", 0) != 0) {
    throw Error(ErrorCode::kMalformedRecord, "normalization stats: missing schema header");
  }
  NormalizationStats stats;
  stats.variant = ParseVariant(line.substr(9));
  const FeatureSchema& schema = FeatureSchema::Get(stats.variant);
  int k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw Error(ErrorCode::kMalformedRecord, "normalization stats: bad line '" + line + "'");
    }
    if (k >= schema.per_hero_count() || line.substr(0, t1) != schema.features()[k].name) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "normalization stats: unexpected feature '" + line.substr(0, t1) + "'");
    }
    const double lo = ParseDouble(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    const double hi = ParseDouble(std::string_view(line).substr(t2 + 1));
    if (lo > hi) throw Error(ErrorCode::kMalformedRecord, "normalization stats: min > max");
    stats.min.push_back(lo);
    stats.max.push_back(hi);
    ++k;
  }
  if (k != schema.per_hero_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "normalization stats: wrong feature count");
  }
  return stats;
}

void SaveNormStats(const NormalizationStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  WriteNormStats(stats, out);
}

NormalizationStats LoadNormStats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return ReadNormStats(in);
}

std::string DumpSchema(const FeatureSchema& schema) {
  std::ostringstream out;
  int i = 1;
  for (const FeatureInfo& f : schema.features()) {
    out << i++ << '\t' << f.name << '\t' << CategoryName(f.category) << '\n';
  }
  return out.str();
}

}  // namespace deathcast
