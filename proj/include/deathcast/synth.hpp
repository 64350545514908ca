#ifndef DEATHCAST_SYNTH_HPP_
#define DEATHCAST_SYNTH_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deathcast/dataset.hpp"
#include "deathcast/match.hpp"

namespace deathcast {

// Weights of the logistic danger score. The per-tick death probability is
//   base_rate + peak_rate * sigmoid(bias + low_health * (1 - health/max_health)
//                                   + enemies * nearby_enemy_count
//                                   + tower * in_enemy_tower_range
//                                   + visibility * visible_to_enemy)
struct HazardCoefficients {
  double base_rate = 0.0;
  double peak_rate = 0.05;
  double bias = -11.0;
  double low_health = 9.0;
  double enemies = 2.5;
  double tower = 1.0;
  double visibility = 0.5;

  bool operator==(const HazardCoefficients&) const = default;
};

struct SynthConfig {
  int match_count = 250;
  int frames_per_match = 3000;
  int frame_stride_ticks = 4;  // ticks between recorded frames
  double tick_interval = kDefaultTickInterval;
  int roster_size = kDefaultRosterSize;

  double map_size = 100.0;
  double walk_speed = 1.0;          // map units per second
  double engage_radius = 12.0;      // enemies closer than this count as nearby
  double vision_radius = 18.0;      // visible_to_enemy when an enemy is this close
  double tower_radius = 12.0;
  double damage_per_enemy = 0.03;   // fraction of max health per second
  double tower_damage = 0.08;
  double regeneration = 0.02;
  double respawn_delay = 0.0;       // seconds a hero stays dead after dying

  double pause_probability = 0.0;   // chance per frame that a pause starts
  int pause_frames = 20;

  HazardCoefficients hazard;
  std::uint64_t seed = 7;

  void Validate() const;
  // FNV-1a of the canonical text form, used to tag generated matches.
  std::string GeneratorTag() const;
  bool operator==(const SynthConfig&) const = default;
};

// Sets one `key=value` entry; unknown keys and bad values throw
// kInvalidConfig. Keys match the names written by WriteSynthConfig.
void ApplySetting(SynthConfig& cfg, const std::string& key, const std::string& value);
void WriteSynthConfig(const SynthConfig& cfg, std::ostream& out);
SynthConfig ReadSynthConfig(std::istream& in);
void SaveSynthConfig(const SynthConfig& cfg, const std::string& path);
SynthConfig LoadSynthConfig(const std::string& path);

// Per-tick death probability for `slot` during the interval that follows
// `frame`, computed only from the frame's recorded fields.
double TickHazard(const SynthConfig& cfg, const TickFrame& frame, int slot);

// Seed of the i-th match of the corpus described by cfg.
std::uint64_t MatchSeed(const SynthConfig& cfg, int index);

MatchRecord GenerateMatch(const SynthConfig& cfg, std::uint64_t match_seed);
std::vector<MatchRecord> GenerateCorpus(const SynthConfig& cfg);

// Exact probability that `slot` dies in (t, t + window] given the recorded
// trajectory, where t is the game time of match.frames[frame_index].
double BayesProbability(const SynthConfig& cfg, const MatchRecord& match, int frame_index,
                        int slot, double window_seconds);

// Monte-Carlo estimate of the same quantity by re-drawing the death process
// along the recorded trajectory.
double MonteCarloProbability(const SynthConfig& cfg, const MatchRecord& match, int frame_index,
                             int slot, double window_seconds, int rollouts, std::uint64_t seed);

// Expected number of deaths and its variance for one generated match, given
// its trajectory. Only meaningful for respawn_delay == 0.
struct DeathCountMoments {
  double mean = 0.0;
  double variance = 0.0;
};
DeathCountMoments ExpectedDeaths(const SynthConfig& cfg, const MatchRecord& match);

// Average precision of Bayes probabilities against realized labels over the
// pause-stripped, downsampled frames of every match, all ten slots pooled.
double BayesAveragePrecision(const SynthConfig& cfg, std::span<const MatchRecord> matches,
                             double window_seconds, int period_ticks = kDefaultPeriodTicks);

}  // namespace deathcast

#endif  // DEATHCAST_SYNTH_HPP_
