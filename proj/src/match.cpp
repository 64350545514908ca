#include "deathcast/match.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "deathcast/error.hpp"
#include "gzip.hpp"
#include "json.hpp"

namespace deathcast {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

class RecordReader {
 public:
  RecordReader(const json& obj, std::string context)
      : obj_(obj), context_(std::move(context)) {}

  const json& Field(const char* name) const {
    auto it = obj_.find(name);
    if (it == obj_.end()) {
      throw Error(ErrorCode::kSchemaViolation,
                  context_ + ": missing field '" + name + "'");
    }
    return *it;
  }

  double Real(const char* name) const { return AsReal(Field(name), name); }

  std::int64_t Integer(const char* name) const {
    const json& v = Field(name);
    if (!v.is_number_integer()) Fail(name, "integer");
    return v.get<std::int64_t>();
  }

  bool Boolean(const char* name) const {
    const json& v = Field(name);
    if (!v.is_boolean()) Fail(name, "boolean");
    return v.get<bool>();
  }

  std::string String(const char* name) const {
    const json& v = Field(name);
    if (!v.is_string()) Fail(name, "string");
    return v.get<std::string>();
  }

  const json& Array(const char* name) const {
    const json& v = Field(name);
    if (!v.is_array()) Fail(name, "array");
    return v;
  }

  std::vector<double> Reals(const char* name) const {
    std::vector<double> out;
    for (const json& v : Array(name)) out.push_back(AsReal(v, name));
    return out;
  }

  bool Has(const char* name) const { return obj_.contains(name); }

  const std::string& context() const { return context_; }

 private:
  double AsReal(const json& v, const char* name) const {
    if (!v.is_number()) Fail(name, "number");
    return v.get<double>();
  }

  [[noreturn]] void Fail(const char* name, const char* kind) const {
    throw Error(ErrorCode::kSchemaViolation,
                context_ + ": field '" + name + "' is not a " + kind);
  }

  const json& obj_;
  std::string context_;
};

json ParseLine(const std::string& line, int line_number) {
  try {
    json obj = json::parse(line);
    if (!obj.is_object()) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line_number) + ": record is not an object");
    }
    return obj;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedRecord,
                "line " + std::to_string(line_number) + ": " + e.what());
  }
}

HeroSnapshot ParseHero(const json& obj, const std::string& context) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::kSchemaViolation, context + ": hero is not an object");
  }
  RecordReader r(obj, context);
  HeroSnapshot h;
  h.slot = static_cast<int>(r.Integer("slot"));
  h.hero_id = static_cast<int>(r.Integer("hero_id"));
  h.alive = r.Boolean("alive");
  h.health = r.Real("health");
  h.max_health = r.Real("max_health");
  h.mana = r.Real("mana");
  h.max_mana = r.Real("max_mana");
  h.pos_x = r.Real("pos_x");
  h.pos_y = r.Real("pos_y");
  h.visible_to_enemy = r.Boolean("visible_to_enemy");
  h.state_attrs = r.Reals("state_attrs");
  h.stat_attrs = r.Reals("stat_attrs");
  for (const json& item : r.Array("items")) {
    if (!item.is_object()) {
      throw Error(ErrorCode::kSchemaViolation, context + ": item is not an object");
    }
    RecordReader ir(item, context + " item");
    h.items.push_back({static_cast<int>(ir.Integer("item_id")),
                       ir.Real("cooldown_remaining")});
  }
  for (const json& ability : r.Array("abilities")) {
    if (!ability.is_array() || ability.size() != kAbilityAttrCount) {
      throw Error(ErrorCode::kSchemaViolation,
                  context + ": ability must be an array of 6 numbers");
    }
    AbilityState a{};
    for (int k = 0; k < kAbilityAttrCount; ++k) {
      if (!ability[k].is_number()) {
        throw Error(ErrorCode::kSchemaViolation,
                    context + ": ability attribute is not a number");
      }
      a[k] = ability[k].get<double>();
    }
    h.abilities.push_back(a);
  }
  return h;
}

TickFrame ParseFrame(const json& obj, int frame_index,
                     const std::array<int, kHeroCount>& hero_ids) {
  const std::string context = "frame " + std::to_string(frame_index);
  RecordReader r(obj, context);
  TickFrame f;
  f.tick = r.Integer("tick");
  f.game_time = r.Real("game_time");
  f.paused = r.Boolean("paused");
  const json& heroes = r.Array("heroes");
  if (heroes.size() != kHeroCount) {
    throw Error(ErrorCode::kSchemaViolation,
                context + ": expected 10 heroes, got " + std::to_string(heroes.size()));
  }
  std::array<bool, kHeroCount> seen{};
  for (const json& hero : heroes) {
    HeroSnapshot h = ParseHero(hero, context);
    if (h.slot < 0 || h.slot >= kHeroCount || seen[h.slot]) {
      throw Error(ErrorCode::kSchemaViolation,
                  context + ": hero slots are not a permutation of 0..9");
    }
    if (h.hero_id != hero_ids[h.slot]) {
      throw Error(ErrorCode::kSchemaViolation,
                  context + ": slot " + std::to_string(h.slot) +
                      " hero_id differs from header");
    }
    seen[h.slot] = true;
    f.heroes[h.slot] = std::move(h);
  }
  if (r.Has("towers")) {
    std::vector<Tower> towers;
    for (const json& t : r.Array("towers")) {
      if (!t.is_object()) {
        throw Error(ErrorCode::kSchemaViolation, context + ": tower is not an object");
      }
      RecordReader tr(t, context + " tower");
      towers.push_back({static_cast<int>(tr.Integer("team")), tr.Real("x"),
                        tr.Real("y"), tr.Boolean("alive")});
    }
    f.towers = std::move(towers);
  }
  return f;
}

ordered_json HeroToJson(const HeroSnapshot& h) {
  ordered_json o;
  o["slot"] = h.slot;
  o["hero_id"] = h.hero_id;
  o["alive"] = h.alive;
  o["health"] = h.health;
  o["max_health"] = h.max_health;
  o["mana"] = h.mana;
  o["max_mana"] = h.max_mana;
  o["pos_x"] = h.pos_x;
  o["pos_y"] = h.pos_y;
  o["visible_to_enemy"] = h.visible_to_enemy;
  o["state_attrs"] = h.state_attrs;
  o["stat_attrs"] = h.stat_attrs;
  ordered_json items = ordered_json::array();
  for (const ItemState& item : h.items) {
    items.push_back({{"item_id", item.item_id},
                     {"cooldown_remaining", item.cooldown_remaining}});
  }
  o["items"] = std::move(items);
  ordered_json abilities = ordered_json::array();
  for (const AbilityState& a : h.abilities) abilities.push_back(a);
  o["abilities"] = std::move(abilities);
  return o;
}

bool Finite(double x) { return std::isfinite(x); }

}  // namespace

std::string ValidationReport::Summary() const {
  std::ostringstream out;
  for (const Violation& v : violations) {
    if (v.frame >= 0) out << "frame " << v.frame << ": ";
    if (v.slot >= 0) out << "slot " << v.slot << ": ";
    out << v.message << '\n';
  }
  return out.str();
}

MatchRecord ParseMatchBytes(std::string_view bytes) {
  std::string inflated;
  if (internal::LooksGzipped(bytes)) {
    inflated = internal::GunzipOrThrow(bytes);
    bytes = inflated;
  }

  MatchRecord m;
  std::array<int, kHeroCount> hero_ids{};
  bool have_header = false;
  bool have_deaths = false;
  int line_number = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) end = bytes.size();
    std::string line(bytes.substr(pos, end - pos));
    pos = end + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (have_deaths) {
      throw Error(ErrorCode::kMalformedRecord,
                  "line " + std::to_string(line_number) + ": record after deaths line");
    }
    json obj = ParseLine(line, line_number);

    if (!have_header) {
      RecordReader r(obj, "header");
      m.match_id = r.String("match_id");
      m.tick_interval = r.Real("tick_interval");
      m.roster_size = static_cast<int>(r.Integer("roster_size"));
      const json& ids = r.Array("hero_ids");
      if (ids.size() != kHeroCount) {
        throw Error(ErrorCode::kSchemaViolation, "header: hero_ids must list 10 heroes");
      }
      for (int s = 0; s < kHeroCount; ++s) {
        if (!ids[s].is_number_integer()) {
          throw Error(ErrorCode::kSchemaViolation, "header: hero_ids entry is not an integer");
        }
        hero_ids[s] = ids[s].get<int>();
      }
      if (r.Has("generator")) m.generator = r.String("generator");
      have_header = true;
      continue;
    }

    if (obj.contains("deaths")) {
      RecordReader r(obj, "deaths");
      for (const json& d : r.Array("deaths")) {
        if (!d.is_object()) {
          throw Error(ErrorCode::kSchemaViolation, "deaths: entry is not an object");
        }
        RecordReader dr(d, "death");
        m.deaths.push_back({static_cast<int>(dr.Integer("slot")), dr.Real("time")});
      }
      have_deaths = true;
      continue;
    }

    m.frames.push_back(ParseFrame(obj, static_cast<int>(m.frames.size()), hero_ids));
  }

  if (!have_header) throw Error(ErrorCode::kEmptyMatch, "match file is empty");
  if (m.frames.empty()) throw Error(ErrorCode::kEmptyMatch, m.match_id + ": no frames");
  if (!have_deaths) throw Error(ErrorCode::kSchemaViolation, "missing final deaths line");

  ValidationReport report = ValidateMatch(m);
  if (!report.ok()) {
    throw Error(ErrorCode::kSchemaViolation, report.Summary());
  }
  return m;
}

MatchRecord ParseMatch(std::istream& source) {
  std::string bytes((std::istreambuf_iterator<char>(source)),
                    std::istreambuf_iterator<char>());
  return ParseMatchBytes(bytes);
}

MatchRecord ReadMatchFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return ParseMatch(in);
}

void WriteMatch(const MatchRecord& m, std::ostream& sink) {
  ordered_json header;
  header["match_id"] = m.match_id;
  header["tick_interval"] = m.tick_interval;
  header["roster_size"] = m.roster_size;
  ordered_json ids = ordered_json::array();
  for (int s = 0; s < kHeroCount; ++s) {
    ids.push_back(m.frames.empty() ? 0 : m.frames.front().heroes[s].hero_id);
  }
  header["hero_ids"] = std::move(ids);
  if (!m.generator.empty()) header["generator"] = m.generator;
  sink << header.dump() << '\n';

  for (const TickFrame& f : m.frames) {
    ordered_json frame;
    frame["tick"] = f.tick;
    frame["game_time"] = f.game_time;
    frame["paused"] = f.paused;
    ordered_json heroes = ordered_json::array();
    for (const HeroSnapshot& h : f.heroes) heroes.push_back(HeroToJson(h));
    frame["heroes"] = std::move(heroes);
    if (f.towers) {
      ordered_json towers = ordered_json::array();
      for (const Tower& t : *f.towers) {
        towers.push_back({{"team", t.team}, {"x", t.x}, {"y", t.y}, {"alive", t.alive}});
      }
      frame["towers"] = std::move(towers);
    }
    sink << frame.dump() << '\n';
  }

  ordered_json deaths = ordered_json::array();
  for (const DeathEvent& d : m.deaths) {
    deaths.push_back({{"slot", d.slot}, {"time", d.time}});
  }
  ordered_json tail;
  tail["deaths"] = std::move(deaths);
  sink << tail.dump() << '\n';
  if (!sink) throw Error(ErrorCode::kIo, "write failed for match " + m.match_id);
}

std::string WriteMatchString(const MatchRecord& match) {
  std::ostringstream out;
  WriteMatch(match, out);
  return std::move(out).str();
}

void WriteMatchFile(const MatchRecord& match, const std::string& path) {
  std::string text = WriteMatchString(match);
  if (path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
    text = internal::Gzip(text);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

MatchRecord StripPauses(const MatchRecord& match) {
  MatchRecord out;
  out.match_id = match.match_id;
  out.tick_interval = match.tick_interval;
  out.roster_size = match.roster_size;
  out.generator = match.generator;
  out.deaths = match.deaths;
  for (const TickFrame& f : match.frames) {
    if (!f.paused) out.frames.push_back(f);
  }
  if (out.frames.empty()) {
    throw Error(ErrorCode::kEmptyMatch, match.match_id + ": every frame is paused");
  }
  return out;
}

ValidationReport ValidateMatch(const MatchRecord& m) {
  ValidationReport report;
  auto add = [&report](int frame, int slot, std::string message) {
    report.violations.push_back({frame, slot, std::move(message)});
  };

  if (m.frames.empty()) {
    add(-1, -1, "match has no frames");
    return report;
  }
  if (!(m.tick_interval > 0.0) || !Finite(m.tick_interval)) {
    add(-1, -1, "tick_interval must be positive");
  }
  if (m.roster_size < 1) add(-1, -1, "roster_size must be positive");

  double last_time = -INFINITY;
  double last_unpaused_time = -INFINITY;
  for (int fi = 0; fi < static_cast<int>(m.frames.size()); ++fi) {
    const TickFrame& f = m.frames[fi];
    if (f.tick < 0) add(fi, -1, "negative tick");
    if (!Finite(f.game_time)) {
      add(fi, -1, "non-finite game_time");
    } else {
      if (f.game_time < last_time) add(fi, -1, "game_time decreases");
      if (!f.paused) {
        if (f.game_time <= last_unpaused_time) {
          add(fi, -1, "game_time of unpaused frames must strictly increase");
        }
        last_unpaused_time = f.game_time;
      }
      last_time = f.game_time;
    }

    for (int s = 0; s < kHeroCount; ++s) {
      const HeroSnapshot& h = f.heroes[s];
      if (h.slot != s) add(fi, s, "snapshot stored under the wrong slot");
      if (h.hero_id < 0 || h.hero_id >= m.roster_size) {
        add(fi, s, "hero_id outside roster");
      }
      if (h.hero_id != m.frames.front().heroes[s].hero_id) {
        add(fi, s, "hero_id changes across frames");
      }
      const double reals[] = {h.health, h.max_health, h.mana, h.max_mana, h.pos_x, h.pos_y};
      bool finite = true;
      for (double x : reals) finite = finite && Finite(x);
      if (!finite) {
        add(fi, s, "non-finite hero attribute");
        continue;
      }
      if (h.health < 0.0 || h.health > h.max_health) {
        add(fi, s, "health outside [0, max_health]");
      }
      if (h.mana < 0.0 || h.mana > h.max_mana) add(fi, s, "mana outside [0, max_mana]");
      if (h.state_attrs.size() != kStateAttrCount) {
        add(fi, s, "state_attrs must have 21 entries");
      }
      if (h.stat_attrs.size() != kStatAttrCount) {
        add(fi, s, "stat_attrs must have 17 entries");
      }
      for (double x : h.state_attrs) finite = finite && Finite(x);
      for (double x : h.stat_attrs) finite = finite && Finite(x);
      std::array<bool, kTrackedItemCount> owned{};
      for (const ItemState& item : h.items) {
        if (item.item_id < 0 || item.item_id >= kTrackedItemCount) {
          add(fi, s, "untracked item id " + std::to_string(item.item_id));
          continue;
        }
        if (owned[item.item_id]) add(fi, s, "duplicate item id");
        owned[item.item_id] = true;
        if (!(item.cooldown_remaining >= 0.0) || !Finite(item.cooldown_remaining)) {
          add(fi, s, "item cooldown must be a non-negative number");
        }
      }
      if (h.abilities.size() > kMaxAbilities) add(fi, s, "more than 8 abilities");
      for (const AbilityState& a : h.abilities) {
        for (double x : a) finite = finite && Finite(x);
      }
      if (!finite) add(fi, s, "non-finite attribute value");
    }

    if (f.towers) {
      for (const Tower& t : *f.towers) {
        if (t.team != 0 && t.team != 1) add(fi, -1, "tower team must be 0 or 1");
        if (!Finite(t.x) || !Finite(t.y)) add(fi, -1, "non-finite tower position");
      }
    }
  }

  const double first = m.frames.front().game_time;
  const double last = m.frames.back().game_time;
  std::array<double, kHeroCount> previous_death;
  previous_death.fill(-INFINITY);
  for (const DeathEvent& d : m.deaths) {
    if (d.slot < 0 || d.slot >= kHeroCount) {
      add(-1, d.slot, "death event slot outside 0..9");
      continue;
    }
    if (!Finite(d.time) || d.time < first || d.time > last) {
      add(-1, d.slot, "death time outside the match time range");
      continue;
    }
    if (d.time <= previous_death[d.slot]) {
      add(-1, d.slot, "death times for a slot must strictly increase");
    }
    previous_death[d.slot] = d.time;
  }
  return report;
}

}  // namespace deathcast
