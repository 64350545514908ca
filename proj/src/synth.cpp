#include "deathcast/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "deathcast/binary_io.hpp"
#include "deathcast/error.hpp"
#include "deathcast/eval.hpp"
#include "deathcast/text.hpp"

namespace deathcast {
namespace {

struct TowerSite {
  int team;
  double fx;  // position as a fraction of the map size
  double fy;
};

// Every hero shares one health pool size so that absolute health, which the
// minimal schema sees, determines the low-health term.
constexpr double kMaxHealth = 1000.0;

constexpr TowerSite kTowerSites[] = {
    {0, 0.15, 0.15}, {0, 0.15, 0.45}, {0, 0.45, 0.15},
    {1, 0.85, 0.85}, {1, 0.85, 0.55}, {1, 0.55, 0.85},
};

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double Sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}


// Canonical key/value view of the config used for text I/O and hashing.
std::vector<std::pair<std::string, std::string>> ConfigEntries(const SynthConfig& c) {
  return {
      {"match_count", std::to_string(c.match_count)},
      {"frames_per_match", std::to_string(c.frames_per_match)},
      {"frame_stride_ticks", std::to_string(c.frame_stride_ticks)},
      {"tick_interval", FormatShortest(c.tick_interval)},
      {"roster_size", std::to_string(c.roster_size)},
      {"map_size", FormatShortest(c.map_size)},
      {"walk_speed", FormatShortest(c.walk_speed)},
      {"engage_radius", FormatShortest(c.engage_radius)},
      {"vision_radius", FormatShortest(c.vision_radius)},
      {"tower_radius", FormatShortest(c.tower_radius)},
      {"damage_per_enemy", FormatShortest(c.damage_per_enemy)},
      {"tower_damage", FormatShortest(c.tower_damage)},
      {"regeneration", FormatShortest(c.regeneration)},
      {"respawn_delay", FormatShortest(c.respawn_delay)},
      {"pause_probability", FormatShortest(c.pause_probability)},
      {"pause_frames", std::to_string(c.pause_frames)},
      {"hazard.base_rate", FormatShortest(c.hazard.base_rate)},
      {"hazard.peak_rate", FormatShortest(c.hazard.peak_rate)},
      {"hazard.bias", FormatShortest(c.hazard.bias)},
      {"hazard.low_health", FormatShortest(c.hazard.low_health)},
      {"hazard.enemies", FormatShortest(c.hazard.enemies)},
      {"hazard.tower", FormatShortest(c.hazard.tower)},
      {"hazard.visibility", FormatShortest(c.hazard.visibility)},
      {"seed", std::to_string(c.seed)},
  };
}

struct HeroMotion {
  double x = 0, y = 0;
  double target_x = 0, target_y = 0;
  double speed = 0;
  double health = 0, max_health = 0;
  double max_mana = 0;
  double gold = 0;
  double strength = 0, agility = 0, intellect = 0;
  int primary = 0;
};

int NearbyEnemies(const SynthConfig& cfg, const TickFrame& frame, int slot) {
  const HeroSnapshot& h = frame.heroes[slot];
  int n = 0;
  for (int o = 0; o < kHeroCount; ++o) {
    if (TeamOf(o) == TeamOf(slot)) continue;
    const HeroSnapshot& e = frame.heroes[o];
    if (std::hypot(h.pos_x - e.pos_x, h.pos_y - e.pos_y) < cfg.engage_radius) ++n;
  }
  return n;
}

bool InEnemyTowerRange(const SynthConfig& cfg, const TickFrame& frame, int slot) {
  if (!frame.towers) return false;
  const HeroSnapshot& h = frame.heroes[slot];
  for (const Tower& t : *frame.towers) {
    if (t.alive && t.team != TeamOf(slot) &&
        std::hypot(h.pos_x - t.x, h.pos_y - t.y) < cfg.tower_radius) {
      return true;
    }
  }
  return false;
}

void RequireGeneratedBy(const SynthConfig& cfg, const MatchRecord& match) {
  if (match.generator != cfg.GeneratorTag()) {
    throw Error(ErrorCode::kForeignMatch,
                match.match_id + " was not generated by this synthetic configuration");
  }
}

std::int64_t GameTicks(const SynthConfig& cfg, double game_time) {
  return std::llround(game_time / cfg.tick_interval);
}

// Visits every tick at which `slot` could die in (t, t + window], in time
// order, with the per-tick probability that applies there. The final frame
// has no following interval, and paused frames have none either.
void ForEachWindowTick(const SynthConfig& cfg, const MatchRecord& match, int frame_index,
                       int slot, double window_seconds,
                       const std::function<void(double)>& visit) {
  if (frame_index < 0 || frame_index >= static_cast<int>(match.frames.size())) {
    throw Error(ErrorCode::kInvalidFrame, "frame index out of range");
  }
  if (!(window_seconds > 0.0)) {
    throw Error(ErrorCode::kNonPositiveWindow, "window must be positive");
  }
  const double t = match.frames[frame_index].game_time;
  double last_death = -INFINITY;
  for (const DeathEvent& d : match.deaths) {
    if (d.slot == slot && d.time <= t) last_death = std::max(last_death, d.time);
  }
  const int last = static_cast<int>(match.frames.size()) - 1;
  for (int k = frame_index; k < last; ++k) {
    const TickFrame& frame = match.frames[k];
    if (frame.paused) continue;
    const std::int64_t g = GameTicks(cfg, frame.game_time);
    if (static_cast<double>(g + 1) * cfg.tick_interval > t + window_seconds) break;
    const double p = TickHazard(cfg, frame, slot);
    for (int j = 1; j <= cfg.frame_stride_ticks; ++j) {
      const double tau = static_cast<double>(g + j) * cfg.tick_interval;
      if (tau <= t) continue;
      if (tau > t + window_seconds) return;
      if (tau - last_death > cfg.respawn_delay) visit(p);
    }
  }
}

}  // namespace

void SynthConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (match_count < 0) fail("match_count must be non-negative");
  if (frames_per_match < 1) fail("frames_per_match must be positive");
  if (frame_stride_ticks < 1) fail("frame_stride_ticks must be positive");
  if (!(tick_interval > 0.0)) fail("tick_interval must be positive");
  if (roster_size < kHeroCount) fail("roster_size must cover ten distinct heroes");
  if (!(map_size > 0.0)) fail("map_size must be positive");
  for (double r : {walk_speed, engage_radius, vision_radius, tower_radius, damage_per_enemy,
                   tower_damage, regeneration, respawn_delay, pause_probability}) {
    if (!(r >= 0.0) || !std::isfinite(r)) fail("rates and radii must be non-negative");
  }
  if (pause_probability >= 1.0) fail("pause_probability must be below 1");
  if (pause_frames < 1) fail("pause_frames must be positive");
  if (hazard.base_rate < 0.0 || hazard.peak_rate < 0.0) fail("hazard rates must be non-negative");
  const double max_tick = hazard.base_rate + hazard.peak_rate;
  if (max_tick > 1.0) fail("per-tick death probability exceeds 1");
  const double per_sample = 1.0 - std::pow(1.0 - max_tick, frame_stride_ticks);
  if (per_sample > 0.5) fail("per-sample death probability can exceed 0.5");
}

std::string SynthConfig::GeneratorTag() const {
  std::ostringstream text;
  WriteSynthConfig(*this, text);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth-%016llx",
                static_cast<unsigned long long>(HashString(text.str())));
  return buf;
}

void WriteSynthConfig(const SynthConfig& cfg, std::ostream& out) {
  for (const auto& [key, value] : ConfigEntries(cfg)) out << key << '=' << value << '\n';
}

void ApplySetting(SynthConfig& cfg, const std::string& key, const std::string& value) {
  std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"match_count", [&](const std::string& v) { cfg.match_count = std::stoi(v); }},
      {"frames_per_match", [&](const std::string& v) { cfg.frames_per_match = std::stoi(v); }},
      {"frame_stride_ticks", [&](const std::string& v) { cfg.frame_stride_ticks = std::stoi(v); }},
      {"tick_interval", [&](const std::string& v) { cfg.tick_interval = std::stod(v); }},
      {"roster_size", [&](const std::string& v) { cfg.roster_size = std::stoi(v); }},
      {"map_size", [&](const std::string& v) { cfg.map_size = std::stod(v); }},
      {"walk_speed", [&](const std::string& v) { cfg.walk_speed = std::stod(v); }},
      {"engage_radius", [&](const std::string& v) { cfg.engage_radius = std::stod(v); }},
      {"vision_radius", [&](const std::string& v) { cfg.vision_radius = std::stod(v); }},
      {"tower_radius", [&](const std::string& v) { cfg.tower_radius = std::stod(v); }},
      {"damage_per_enemy", [&](const std::string& v) { cfg.damage_per_enemy = std::stod(v); }},
      {"tower_damage", [&](const std::string& v) { cfg.tower_damage = std::stod(v); }},
      {"regeneration", [&](const std::string& v) { cfg.regeneration = std::stod(v); }},
      {"respawn_delay", [&](const std::string& v) { cfg.respawn_delay = std::stod(v); }},
      {"pause_probability", [&](const std::string& v) { cfg.pause_probability = std::stod(v); }},
      {"pause_frames", [&](const std::string& v) { cfg.pause_frames = std::stoi(v); }},
      {"hazard.base_rate", [&](const std::string& v) { cfg.hazard.base_rate = std::stod(v); }},
      {"hazard.peak_rate", [&](const std::string& v) { cfg.hazard.peak_rate = std::stod(v); }},
      {"hazard.bias", [&](const std::string& v) { cfg.hazard.bias = std::stod(v); }},
      {"hazard.low_health", [&](const std::string& v) { cfg.hazard.low_health = std::stod(v); }},
      {"hazard.enemies", [&](const std::string& v) { cfg.hazard.enemies = std::stod(v); }},
      {"hazard.tower", [&](const std::string& v) { cfg.hazard.tower = std::stod(v); }},
      {"hazard.visibility", [&](const std::string& v) { cfg.hazard.visibility = std::stod(v); }},
      {"seed", [&](const std::string& v) { cfg.seed = std::stoull(v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) {
    throw Error(ErrorCode::kInvalidConfig, "synth config: unknown key '" + key + "'");
  }
  try {
    it->second(value);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidConfig, "synth config: bad value '" + value + "' for " + key);
  }
}

SynthConfig ReadSynthConfig(std::istream& in) {
  SynthConfig cfg;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig, "synth config: bad line '" + line + "'");
    }
    ApplySetting(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  cfg.Validate();
  return cfg;
}

void SaveSynthConfig(const SynthConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  out << "# generator " << cfg.GeneratorTag() << '\n';
  WriteSynthConfig(cfg, out);
}

SynthConfig LoadSynthConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return ReadSynthConfig(in);
}

double TickHazard(const SynthConfig& cfg, const TickFrame& frame, int slot) {
  const HazardCoefficients& c = cfg.hazard;
  if (c.peak_rate == 0.0) return c.base_rate;
  const HeroSnapshot& h = frame.heroes[slot];
  const double deficit = h.max_health > 0.0 ? 1.0 - h.health / h.max_health : 0.0;
  const double score = c.bias + c.low_health * deficit +
                       c.enemies * NearbyEnemies(cfg, frame, slot) +
                       c.tower * (InEnemyTowerRange(cfg, frame, slot) ? 1.0 : 0.0) +
                       c.visibility * (h.visible_to_enemy ? 1.0 : 0.0);
  return c.base_rate + c.peak_rate * Sigmoid(score);
}

std::uint64_t MatchSeed(const SynthConfig& cfg, int index) {
  return SplitMix64(cfg.seed ^ SplitMix64(static_cast<std::uint64_t>(index) + 1));
}

MatchRecord GenerateMatch(const SynthConfig& cfg, std::uint64_t match_seed) {
  cfg.Validate();
  Rng motion_rng(SplitMix64(match_seed ^ 0x6d6f74696f6eULL));
  Rng death_rng(SplitMix64(match_seed ^ 0x6465617468ULL));
  const double map = cfg.map_size;
  const double dt = cfg.frame_stride_ticks * cfg.tick_interval;

  MatchRecord m;
  char id[48];
  std::snprintf(id, sizeof(id), "synth-%016llx", static_cast<unsigned long long>(match_seed));
  m.match_id = id;
  m.tick_interval = cfg.tick_interval;
  m.roster_size = cfg.roster_size;
  m.generator = cfg.GeneratorTag();

  std::vector<int> roster(cfg.roster_size);
  for (int i = 0; i < cfg.roster_size; ++i) roster[i] = i;
  Shuffle(roster, motion_rng);

  std::vector<Tower> towers;
  for (const TowerSite& site : kTowerSites) {
    towers.push_back({site.team, site.fx * map, site.fy * map, true});
  }

  std::array<HeroMotion, kHeroCount> heroes;
  for (int s = 0; s < kHeroCount; ++s) {
    HeroMotion& h = heroes[s];
    const double base = TeamOf(s) == 0 ? 0.1 : 0.9;
    h.x = (base + 0.05 * (2.0 * UniformUnit(motion_rng) - 1.0)) * map;
    h.y = (base + 0.05 * (2.0 * UniformUnit(motion_rng) - 1.0)) * map;
    h.target_x = UniformUnit(motion_rng) * map;
    h.target_y = UniformUnit(motion_rng) * map;
    h.speed = cfg.walk_speed * (0.8 + 0.4 * UniformUnit(motion_rng));
    h.max_health = kMaxHealth;
    h.health = h.max_health;
    h.max_mana = 200.0 + 400.0 * UniformUnit(motion_rng);
    h.strength = 15.0 + 10.0 * UniformUnit(motion_rng);
    h.agility = 15.0 + 10.0 * UniformUnit(motion_rng);
    h.intellect = 15.0 + 10.0 * UniformUnit(motion_rng);
    h.primary = static_cast<int>(RandomIndex(motion_rng, 3));
  }

  std::array<double, kHeroCount> last_death;
  last_death.fill(-INFINITY);
  std::array<int, kHeroCount> death_count{};
  std::int64_t game_ticks = 0;
  int pause_left = 0;
  const int frames = cfg.frames_per_match;
  m.frames.reserve(frames);

  for (int f = 0; f < frames; ++f) {
    bool paused = false;
    if (pause_left > 0) {
      paused = true;
      --pause_left;
    } else if (f > 0 && f + cfg.pause_frames < frames - 1 && cfg.pause_probability > 0.0 &&
               UniformUnit(motion_rng) < cfg.pause_probability) {
      paused = true;
      pause_left = cfg.pause_frames - 1;
    }

    TickFrame frame;
    frame.tick = static_cast<std::int64_t>(f) * cfg.frame_stride_ticks;
    frame.game_time = static_cast<double>(game_ticks) * cfg.tick_interval;
    frame.paused = paused;
    frame.towers = towers;
    const double t = frame.game_time;
    for (int s = 0; s < kHeroCount; ++s) {
      const HeroMotion& h = heroes[s];
      HeroSnapshot& snap = frame.heroes[s];
      snap.slot = s;
      snap.hero_id = roster[s];
      snap.alive = !(t >= last_death[s] && t < last_death[s] + cfg.respawn_delay);
      snap.health = h.health;
      snap.max_health = h.max_health;
      snap.mana = h.max_mana;
      snap.max_mana = h.max_mana;
      snap.pos_x = h.x;
      snap.pos_y = h.y;
      snap.items = {{roster[s] % 14, 0.0}, {14, 0.0}};
      snap.abilities.assign(4, AbilityState{1.0, 600.0, 100.0, 0.0, 1.0, 0.0});
    }
    for (int s = 0; s < kHeroCount; ++s) {
      HeroSnapshot& snap = frame.heroes[s];
      bool seen = InEnemyTowerRange(cfg, frame, s);
      for (int o = 0; o < kHeroCount && !seen; ++o) {
        if (TeamOf(o) == TeamOf(s)) continue;
        seen = std::hypot(snap.pos_x - frame.heroes[o].pos_x,
                          snap.pos_y - frame.heroes[o].pos_y) < cfg.vision_radius;
      }
      snap.visible_to_enemy = seen;
      const HeroMotion& h = heroes[s];
      const double level = 1.0 + std::floor(t / 60.0);
      snap.state_attrs = {h.agility, h.agility + 2.0 * level, h.intellect, h.intellect + 2.0 * level,
                          h.strength, h.strength + 2.0 * level, 25.0, 3.0 + 0.3 * level,
                          h.max_mana, h.max_mana, 0.0, 0.0, 0.0, static_cast<double>(h.primary),
                          h.speed * 75.0, h.health, h.max_health, 60.0 + 3.0 * level,
                          50.0 + 3.0 * level, snap.alive ? 0.0 : 1.0, seen ? 1.0 : 0.0};
      snap.stat_attrs.assign(kStatAttrCount, 0.0);
      snap.stat_attrs[2] = level;
      snap.stat_attrs[4] = death_count[s];
      snap.stat_attrs[kStatTotalGoldIndex] = h.gold;
      snap.stat_attrs[14] = std::floor(h.gold / 40.0);
      snap.stat_attrs[15] = 6.0 * t;
    }

    if (!paused && f + 1 < frames) {
      for (int s = 0; s < kHeroCount; ++s) {
        const double p = TickHazard(cfg, frame, s);
        for (int j = 1; j <= cfg.frame_stride_ticks; ++j) {
          const double tau = static_cast<double>(game_ticks + j) * cfg.tick_interval;
          if (!(tau - last_death[s] > cfg.respawn_delay)) continue;
          if (p > 0.0 && UniformUnit(death_rng) < p) {
            m.deaths.push_back({s, tau});
            last_death[s] = tau;
            ++death_count[s];
          }
        }
      }

      // Exogenous motion and health: deaths never feed back into them.
      for (int s = 0; s < kHeroCount; ++s) {
        HeroMotion& h = heroes[s];
        const int enemies = NearbyEnemies(cfg, frame, s);
        const bool tower = InEnemyTowerRange(cfg, frame, s);
        const double change = cfg.regeneration * (enemies == 0 && !tower ? 1.0 : 0.0) -
                              cfg.damage_per_enemy * enemies -
                              (tower ? cfg.tower_damage : 0.0);
        h.health = std::clamp(h.health + change * h.max_health * dt, 0.0, h.max_health);
        // A drained hero retreats and heals fully; this is part of the
        // trajectory, not a consequence of any death.
        if (h.health <= 0.0) h.health = h.max_health;
        h.gold += dt * (1.5 + UniformUnit(motion_rng));
        const double dx = h.target_x - h.x;
        const double dy = h.target_y - h.y;
        const double dist = std::hypot(dx, dy);
        const double step = h.speed * dt;
        if (dist <= step) {
          h.x = h.target_x;
          h.y = h.target_y;
          h.target_x = UniformUnit(motion_rng) * map;
          h.target_y = UniformUnit(motion_rng) * map;
        } else {
          h.x += dx / dist * step;
          h.y += dy / dist * step;
        }
      }
      game_ticks += cfg.frame_stride_ticks;
    }
    m.frames.push_back(std::move(frame));
  }
  std::stable_sort(m.deaths.begin(), m.deaths.end(),
                   [](const DeathEvent& a, const DeathEvent& b) { return a.time < b.time; });
  return m;
}

std::vector<MatchRecord> GenerateCorpus(const SynthConfig& cfg) {
  std::vector<MatchRecord> out;
  out.reserve(cfg.match_count);
  for (int i = 0; i < cfg.match_count; ++i) out.push_back(GenerateMatch(cfg, MatchSeed(cfg, i)));
  return out;
}

double BayesProbability(const SynthConfig& cfg, const MatchRecord& match, int frame_index,
                        int slot, double window_seconds) {
  RequireGeneratedBy(cfg, match);
  double survival = 1.0;
  ForEachWindowTick(cfg, match, frame_index, slot, window_seconds,
                    [&survival](double p) { survival *= 1.0 - p; });
  return 1.0 - survival;
}

double MonteCarloProbability(const SynthConfig& cfg, const MatchRecord& match, int frame_index,
                             int slot, double window_seconds, int rollouts, std::uint64_t seed) {
  RequireGeneratedBy(cfg, match);
  std::vector<double> hazards;
  ForEachWindowTick(cfg, match, frame_index, slot, window_seconds,
                    [&hazards](double p) { hazards.push_back(p); });
  Rng rng(seed);
  int deaths = 0;
  for (int r = 0; r < rollouts; ++r) {
    for (double p : hazards) {
      if (UniformUnit(rng) < p) {
        ++deaths;
        break;
      }
    }
  }
  return rollouts > 0 ? static_cast<double>(deaths) / rollouts : 0.0;
}

DeathCountMoments ExpectedDeaths(const SynthConfig& cfg, const MatchRecord& match) {
  RequireGeneratedBy(cfg, match);
  DeathCountMoments out;
  for (std::size_t k = 0; k + 1 < match.frames.size(); ++k) {
    if (match.frames[k].paused) continue;
    for (int s = 0; s < kHeroCount; ++s) {
      const double p = TickHazard(cfg, match.frames[k], s);
      out.mean += cfg.frame_stride_ticks * p;
      out.variance += cfg.frame_stride_ticks * p * (1.0 - p);
    }
  }
  return out;
}

double BayesAveragePrecision(const SynthConfig& cfg, std::span<const MatchRecord> matches,
                             double window_seconds, int period_ticks) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const MatchRecord& raw : matches) {
    RequireGeneratedBy(cfg, raw);
    const MatchRecord m = StripPauses(raw);
    const std::vector<LabelBits> frame_labels = LabelFrames(m, window_seconds);
    for (int index : Downsample(m, period_ticks)) {
      for (int s = 0; s < kHeroCount; ++s) {
        scores.push_back(BayesProbability(cfg, m, index, s, window_seconds));
        labels.push_back(SlotLabel(frame_labels[index], s));
      }
    }
  }
  return AveragePrecision(BuildPrCurve(scores, labels));
}

}  // namespace deathcast
