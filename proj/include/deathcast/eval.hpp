#ifndef DEATHCAST_EVAL_HPP_
#define DEATHCAST_EVAL_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deathcast/dataset.hpp"
#include "deathcast/match.hpp"
#include "deathcast/model.hpp"

namespace deathcast {

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool operator==(const PrPoint&) const = default;
};

// One point per distinct score, thresholds strictly decreasing.
struct PrCurve {
  std::vector<PrPoint> points;
  std::int64_t positives = 0;
  std::int64_t total = 0;
  bool operator==(const PrCurve&) const = default;
};

// Labels are 0/1 bytes. Throws kLengthMismatch or kNoPositives.
PrCurve BuildPrCurve(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Step sum of (R_i - R_{i-1}) * P_i over the curve's points.
double AveragePrecision(const PrCurve& curve);

struct OperatingPoint {
  double threshold = 0.0;
  double precision = 0.0;  // NaN when nothing is predicted positive
  double recall = 0.0;
  bool precision_defined = false;
  std::int64_t predicted_positives = 0;
};

// Predicted positive iff score >= threshold.
OperatingPoint ThresholdMetrics(std::span<const double> scores,
                                std::span<const std::uint8_t> labels, double threshold);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
};

// Fractional ranks for ties; two-sided p-value from the t approximation with
// n - 2 degrees of freedom. Throws kConstantInput, kLengthMismatch, or
// kInvalidConfig when fewer than three points are given.
SpearmanResult Spearman(std::span<const double> x, std::span<const double> y);

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> FractionalRanks(std::span<const double> values);

// Model output on the pause-stripped, downsampled frames of one match.
struct MatchPredictions {
  std::string match_id;
  std::vector<double> game_times;
  std::vector<std::array<float, kHeroCount>> probabilities;
  std::vector<LabelBits> labels;
  std::vector<DeathEvent> deaths;
};

MatchPredictions PredictMatch(const Checkpoint& checkpoint, const MatchRecord& match,
                              int period_ticks);

// Predicts each match with up to `threads` workers; results come back in the
// input order regardless of scheduling.
std::vector<MatchPredictions> PredictMatches(const Checkpoint& checkpoint,
                                             std::span<const MatchRecord> matches,
                                             int period_ticks, int threads);
std::vector<MatchPredictions> PredictMatches(const Checkpoint& checkpoint, std::size_t count,
                                             const MatchLoader& load, int period_ticks,
                                             int threads);

struct EvalReport {
  std::int64_t sample_count = 0;
  std::int64_t positives = 0;
  double positive_rate = 0.0;
  double average_precision = 0.0;
  std::vector<OperatingPoint> operating_points;
  PrCurve curve;
};

inline constexpr double kReferenceThreshold = 0.9;

// Pools every (score, label) pair; no balancing.
EvalReport EvaluateScores(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          std::span<const double> thresholds);
EvalReport EvaluatePredictions(std::span<const MatchPredictions> predictions,
                               std::span<const double> thresholds);
EvalReport EvaluateTest(const Checkpoint& checkpoint, std::span<const MatchRecord> matches,
                        int period_ticks, std::span<const double> thresholds, int threads = 1);

inline constexpr double kDistributionHorizon = 20.0;

// Bin k < horizon holds samples whose next death is in (k, k + 1] seconds;
// the last bin holds samples with no death within the horizon.
struct TimeToDeathDistribution {
  struct Bin {
    std::string label;
    std::vector<double> values;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
  };
  std::vector<Bin> bins;

  std::int64_t total() const;
};

TimeToDeathDistribution TimeToDeath(std::span<const MatchPredictions> predictions,
                                    double horizon = kDistributionHorizon);

// Linear interpolation between order statistics; NaN for empty input.
double Quantile(std::vector<double> values, double q);

struct PredictionTimeline {
  double threshold = 0.5;
  double window_seconds = kDefaultWindowSeconds;
  std::vector<double> game_times;
  std::array<std::vector<double>, kHeroCount> probabilities;
  // Deaths are marked on the last sample at or before the death time.
  std::array<std::vector<int>, kHeroCount> death_flags;
  std::array<std::vector<double>, kHeroCount> death_times;
};

PredictionTimeline BuildTimeline(const MatchPredictions& predictions, double threshold,
                                 double window_seconds);
PredictionTimeline ExportTimeline(const Checkpoint& checkpoint, const MatchRecord& match,
                                  double threshold, int period_ticks);

void WriteTimeline(const PredictionTimeline& timeline, std::ostream& out);
void SaveTimeline(const PredictionTimeline& timeline, const std::string& path);

struct MispredictionCounts {
  std::int64_t false_negatives = 0;       // missed deaths
  std::int64_t near_false_positives = 0;  // alarm, death in (W, near_window]
  std::int64_t far_false_positives = 0;   // alarm, no death within near_window
  std::int64_t total() const {
    return false_negatives + near_false_positives + far_false_positives;
  }
  bool operator==(const MispredictionCounts&) const = default;
};

MispredictionCounts ClassifyMispredictions(const PredictionTimeline& timeline,
                                           double near_window = kDistributionHorizon);

// Rank correlation between each sampled hero's health and its predicted
// probability over one match, all slots pooled.
SpearmanResult HealthCorrelation(const MatchPredictions& predictions, const MatchRecord& match);

void WriteEvalReport(const EvalReport& report, std::ostream& out);
void WritePrCurve(const PrCurve& curve, std::ostream& out);
void WriteDistribution(const TimeToDeathDistribution& distribution, std::ostream& out);

}  // namespace deathcast

#endif  // DEATHCAST_EVAL_HPP_
