#ifndef DEATHCAST_MATCH_HPP_
#define DEATHCAST_MATCH_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deathcast {

inline constexpr int kHeroCount = 10;
inline constexpr int kTeamSize = 5;
inline constexpr int kStateAttrCount = 21;
inline constexpr int kStatAttrCount = 17;
inline constexpr int kTrackedItemCount = 17;
inline constexpr int kMaxAbilities = 8;
inline constexpr int kAbilityAttrCount = 6;
inline constexpr int kDefaultRosterSize = 130;
inline constexpr double kDefaultTickInterval = 1.0 / 30.0;

inline constexpr std::array<std::string_view, kStateAttrCount> kStateAttrNames = {
    "Agility",  "AgilityTotal",   "Intellect",      "IntellectTotal",
    "Strength", "StrengthTotal",  "MagicalResistanceValue",
    "PhysicalArmorValue",         "Mana",           "MaxMana",
    "TauntCooldown",              "BKBChargesUsed", "AbilityPoints",
    "PrimaryAttribute",           "MoveSpeed",      "Health",
    "MaxHealth",                  "DamageMax",      "DamageMin",
    "lifeState",                  "TaggedAsVisibleByTeam"};

inline constexpr std::array<std::string_view, kStatAttrCount> kStatAttrNames = {
    "FirstBloodClaimed", "TeamFightParticipation", "Level",
    "Kills",             "Deaths",                 "Assists",
    "ObserverWardsPlaced", "SentryWardsPlaced",    "CreepsStacked",
    "CampsStacked",      "RunePickups",            "TowerKills",
    "RoshanKills",       "TotalEarnedGold",        "LastHitCount",
    "TotalEarnedXP",     "Stuns"};

inline constexpr std::array<std::string_view, kTrackedItemCount> kTrackedItemNames = {
    "BlinkDagger",   "BlackKingBar",  "MagicWand",     "QuellingBlade",
    "PowerTreads",   "HandOfMidas",   "HurricanePike", "ForceStaff",
    "AbyssalBlade",  "MaskOfMadness", "Nullifier",     "TravelBoots",
    "Dagon5",        "LotusOrb",      "TpScroll",      "SmokeOfDeceit",
    "Clarity"};

inline constexpr std::array<std::string_view, kAbilityAttrCount> kAbilityAttrNames = {
    "Level", "CastRange", "ManaCost", "Cooldown", "Activated", "ToggleState"};

inline constexpr int kStateHealthIndex = 15;
inline constexpr int kStatTotalGoldIndex = 13;

inline constexpr int TeamOf(int slot) { return slot < kTeamSize ? 0 : 1; }

struct ItemState {
  int item_id = 0;
  double cooldown_remaining = 0.0;
  bool operator==(const ItemState&) const = default;
};

using AbilityState = std::array<double, kAbilityAttrCount>;

struct HeroSnapshot {
  int slot = 0;
  int hero_id = 0;
  bool alive = true;
  double health = 0.0;
  double max_health = 0.0;
  double mana = 0.0;
  double max_mana = 0.0;
  double pos_x = 0.0;
  double pos_y = 0.0;
  bool visible_to_enemy = false;
  std::vector<double> state_attrs;  // kStateAttrNames order
  std::vector<double> stat_attrs;   // kStatAttrNames order
  std::vector<ItemState> items;
  std::vector<AbilityState> abilities;
  bool operator==(const HeroSnapshot&) const = default;
};

struct Tower {
  int team = 0;
  double x = 0.0;
  double y = 0.0;
  bool alive = true;
  bool operator==(const Tower&) const = default;
};

// heroes[s] always holds slot s; the parser reorders file entries by slot.
struct TickFrame {
  std::int64_t tick = 0;
  double game_time = 0.0;
  bool paused = false;
  std::array<HeroSnapshot, kHeroCount> heroes;
  std::optional<std::vector<Tower>> towers;
  bool operator==(const TickFrame&) const = default;
};

struct DeathEvent {
  int slot = 0;
  double time = 0.0;
  bool operator==(const DeathEvent&) const = default;
};

struct MatchRecord {
  std::string match_id;
  double tick_interval = kDefaultTickInterval;
  int roster_size = kDefaultRosterSize;
  // Tag of the synthetic generator that produced the match; empty otherwise.
  std::string generator;
  std::vector<TickFrame> frames;
  std::vector<DeathEvent> deaths;
  bool operator==(const MatchRecord&) const = default;
};

struct Violation {
  int frame = -1;  // -1 when not frame specific
  int slot = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string Summary() const;
};

// Line-delimited JSON: header line, one line per frame, final deaths line.
// Gzip-compressed input is detected from the stream magic.
MatchRecord ParseMatch(std::istream& source);
MatchRecord ParseMatchBytes(std::string_view bytes);
MatchRecord ReadMatchFile(const std::string& path);

void WriteMatch(const MatchRecord& match, std::ostream& sink);
std::string WriteMatchString(const MatchRecord& match);
// Paths ending in ".gz" are gzip-compressed.
void WriteMatchFile(const MatchRecord& match, const std::string& path);

MatchRecord StripPauses(const MatchRecord& match);

ValidationReport ValidateMatch(const MatchRecord& match);

}  // namespace deathcast

#endif  // DEATHCAST_MATCH_HPP_
