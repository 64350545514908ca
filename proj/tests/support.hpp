#ifndef DEATHCAST_TESTS_SUPPORT_HPP_
#define DEATHCAST_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "deathcast/dataset.hpp"
#include "deathcast/match.hpp"
#include "deathcast/synth.hpp"
#include "deathcast/train.hpp"

namespace deathcast::testing {

inline double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int UniformInt(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct RandomMatchOptions {
  int min_frames = 5;
  int max_frames = 40;
  double pause_chance = 0.1;
  double tower_chance = 0.8;   // per match
  double death_rate = 0.3;     // expected deaths per frame
  int roster_size = kDefaultRosterSize;
};

// A valid match with arbitrary field values, used where round trips and
// structural properties matter more than realism.
inline MatchRecord RandomMatch(std::mt19937_64& rng, const RandomMatchOptions& opt = {}) {
  MatchRecord m;
  m.match_id = "rand-" + std::to_string(rng());
  m.tick_interval = 1.0 / 30.0;
  m.roster_size = opt.roster_size;
  if (UniformInt(rng, 0, 3) == 0) m.generator = "gen-" + std::to_string(rng() % 1000);

  std::vector<int> roster(opt.roster_size);
  std::iota(roster.begin(), roster.end(), 0);
  std::shuffle(roster.begin(), roster.end(), rng);

  const int frames = UniformInt(rng, opt.min_frames, opt.max_frames);
  const bool towers = Uniform(rng, 0, 1) < opt.tower_chance;
  std::vector<Tower> tower_list;
  for (int t = 0; t < 6; ++t) {
    tower_list.push_back({t % 2, Uniform(rng, 0, 100), Uniform(rng, 0, 100), Uniform(rng, 0, 1) < 0.8});
  }
  std::int64_t tick = UniformInt(rng, 0, 100);
  double time = Uniform(rng, 0, 60);
  for (int f = 0; f < frames; ++f) {
    TickFrame frame;
    const bool paused = f > 0 && f + 1 < frames && Uniform(rng, 0, 1) < opt.pause_chance;
    const int step = UniformInt(rng, 1, 6);
    if (f > 0) {
      tick += step;
      if (!paused) time += step * m.tick_interval;
    }
    frame.tick = tick;
    frame.game_time = time;
    frame.paused = paused;
    for (int s = 0; s < kHeroCount; ++s) {
      HeroSnapshot& h = frame.heroes[s];
      h.slot = s;
      h.hero_id = roster[s];
      h.alive = Uniform(rng, 0, 1) < 0.9;
      h.max_health = Uniform(rng, 200, 3000);
      h.health = Uniform(rng, 0, h.max_health);
      h.max_mana = Uniform(rng, 0, 2000);
      h.mana = Uniform(rng, 0, h.max_mana);
      h.pos_x = Uniform(rng, -8000, 8000);
      h.pos_y = Uniform(rng, -8000, 8000);
      h.visible_to_enemy = Uniform(rng, 0, 1) < 0.5;
      for (int k = 0; k < kStateAttrCount; ++k) h.state_attrs.push_back(Uniform(rng, -50, 500));
      for (int k = 0; k < kStatAttrCount; ++k) h.stat_attrs.push_back(Uniform(rng, 0, 1e4));
      std::vector<int> items(kTrackedItemCount);
      std::iota(items.begin(), items.end(), 0);
      std::shuffle(items.begin(), items.end(), rng);
      items.resize(UniformInt(rng, 0, 6));
      for (int id : items) h.items.push_back({id, Uniform(rng, 0, 1) < 0.5 ? 0.0 : Uniform(rng, 0, 90)});
      const int abilities = UniformInt(rng, 0, kMaxAbilities);
      for (int a = 0; a < abilities; ++a) {
        AbilityState st;
        for (double& v : st) v = Uniform(rng, 0, 100);
        h.abilities.push_back(st);
      }
    }
    if (towers) {
      for (Tower& t : tower_list) {
        if (t.alive && Uniform(rng, 0, 1) < 0.02) t.alive = false;
      }
      frame.towers = tower_list;
    }
    m.frames.push_back(std::move(frame));
  }
  const double first = m.frames.front().game_time;
  const double last = m.frames.back().game_time;
  const int deaths = static_cast<int>(std::round(opt.death_rate * frames * Uniform(rng, 0, 2)));
  std::vector<DeathEvent> events;
  for (int d = 0; d < deaths; ++d) events.push_back({UniformInt(rng, 0, kHeroCount - 1), Uniform(rng, first, last)});
  std::sort(events.begin(), events.end(),
            [](const DeathEvent& a, const DeathEvent& b) { return a.time < b.time; });
  // Drop exact duplicates per slot so per-slot times are strictly increasing.
  for (const DeathEvent& e : events) {
    bool dup = false;
    for (const DeathEvent& k : m.deaths) dup |= k.slot == e.slot && k.time == e.time;
    if (!dup) m.deaths.push_back(e);
  }
  return m;
}

// label[f] bit s set iff some death of s lies in (t_f, t_f + W]; plain
// double loop over frames and deaths.
inline std::vector<LabelBits> BruteForceLabels(const MatchRecord& m, double window) {
  std::vector<LabelBits> out(m.frames.size(), 0);
  for (std::size_t f = 0; f < m.frames.size(); ++f) {
    const double t = m.frames[f].game_time;
    for (const DeathEvent& d : m.deaths) {
      if (d.time > t && d.time <= t + window) out[f] |= static_cast<LabelBits>(1u << d.slot);
    }
  }
  return out;
}

// A small synthetic configuration for fast tests.
inline SynthConfig SmallSynth(int matches = 4, int frames = 400) {
  SynthConfig cfg;
  cfg.match_count = matches;
  cfg.frames_per_match = frames;
  return cfg;
}

struct TrainedModel {
  Checkpoint checkpoint;
  std::vector<MatchRecord> held_out;
};

// Trains a small minimal-schema model on the first `train` matches of a
// synthetic corpus and returns it with the remaining matches.
inline TrainedModel TrainSmallModel(const SynthConfig& synth, int train, std::int64_t steps) {
  std::vector<MatchRecord> corpus = GenerateCorpus(synth);
  const std::span<const MatchRecord> train_set(corpus.data(), train);
  const FeatureSchema& schema = FeatureSchema::Get(SchemaVariant::kMinimal);
  const NormalizationStats stats = ComputeMatchNormStats(train_set, schema, kDefaultPeriodTicks);
  const SampleSet samples = ShuffleSamples(
      UndersampleNegatives(BuildSamples(train_set, schema, stats, kDefaultPeriodTicks, 5.0), 0.5, 1),
      2);
  ShardPool pool(ChunkIntoShards(samples));
  TrainRunConfig run;
  run.model.shared_layers = {32, 16};
  run.model.final_layers = {64, 32};
  run.model.learning_rate = 1e-3;
  run.max_steps = steps;
  run.validation_interval = steps;
  TrainedModel out;
  out.checkpoint = Train(run, pool, pool, stats).best;
  out.held_out.assign(corpus.begin() + train, corpus.end());
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("deathcast-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace deathcast::testing

#endif  // DEATHCAST_TESTS_SUPPORT_HPP_
