#include "deathcast/eval.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "deathcast/error.hpp"
#include "deathcast/text.hpp"
#include "deathcast/parallel.hpp"

namespace deathcast {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void CheckLengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch,
                "got " + std::to_string(a) + " scores and " + std::to_string(b) + " labels");
  }
}

std::int64_t CountPositives(std::span<const std::uint8_t> labels) {
  std::int64_t n = 0;
  for (std::uint8_t l : labels) n += l != 0;
  if (n == 0) throw Error(ErrorCode::kNoPositives, "no positive labels");
  return n;
}


}  // namespace

PrCurve BuildPrCurve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  CheckLengths(scores.size(), labels.size());
  PrCurve curve;
  curve.positives = CountPositives(labels);
  curve.total = static_cast<std::int64_t>(scores.size());

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      if (labels[order[i]]) ++tp; else ++fp;
    }
    curve.points.push_back({threshold, static_cast<double>(tp) / static_cast<double>(tp + fp),
                            static_cast<double>(tp) / static_cast<double>(curve.positives)});
  }
  return curve;
}

double AveragePrecision(const PrCurve& curve) {
  double ap = 0.0;
  double previous_recall = 0.0;
  for (const PrPoint& p : curve.points) {
    ap += (p.recall - previous_recall) * p.precision;
    previous_recall = p.recall;
  }
  return ap;
}

OperatingPoint ThresholdMetrics(std::span<const double> scores,
                                std::span<const std::uint8_t> labels, double threshold) {
  CheckLengths(scores.size(), labels.size());
  const std::int64_t positives = CountPositives(labels);
  std::int64_t tp = 0, predicted = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) {
      ++predicted;
      tp += labels[i] != 0;
    }
  }
  OperatingPoint op;
  op.threshold = threshold;
  op.predicted_positives = predicted;
  op.recall = static_cast<double>(tp) / static_cast<double>(positives);
  op.precision_defined = predicted > 0;
  op.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : kNaN;
  return op;
}

std::vector<double> FractionalRanks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share the mean 1-based rank.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

SpearmanResult Spearman(std::span<const double> x, std::span<const double> y) {
  CheckLengths(x.size(), y.size());
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorCode::kInvalidConfig, "spearman needs at least 3 points");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
  };
  if (constant(x) || constant(y)) throw Error(ErrorCode::kConstantInput, "input is constant");

  const std::vector<double> rx = FractionalRanks(x);
  const std::vector<double> ry = FractionalRanks(y);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  SpearmanResult out;
  out.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  if (std::abs(out.rho) >= 1.0) {
    out.p_value = 0.0;
  } else if (dof > 0) {
    const double t = out.rho * std::sqrt(dof / (1.0 - out.rho * out.rho));
    boost::math::students_t dist(dof);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return out;
}

MatchPredictions PredictMatch(const Checkpoint& checkpoint, const MatchRecord& match,
                              int period_ticks) {
  const FeatureSchema& schema = FeatureSchema::Get(checkpoint.config.variant);
  const SampleSet samples = MatchToSamples(match, schema, checkpoint.stats, period_ticks,
                                           checkpoint.config.window_seconds);
  const Mat<float> probs = PredictSamples(checkpoint.params, samples);
  const MatchRecord clean = StripPauses(match);

  MatchPredictions out;
  out.match_id = match.match_id;
  for (int index : Downsample(clean, period_ticks)) {
    out.game_times.push_back(clean.frames[index].game_time);
  }
  out.probabilities.resize(samples.size());
  out.labels.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (int s = 0; s < kHeroCount; ++s) out.probabilities[i][s] = probs(s, static_cast<int>(i));
    out.labels[i] = samples.labels(i);
  }
  out.deaths = clean.deaths;
  return out;
}

std::vector<MatchPredictions> PredictMatches(const Checkpoint& checkpoint,
                                             std::span<const MatchRecord> matches,
                                             int period_ticks, int threads) {
  return ParallelMap<MatchPredictions>(matches.size(), threads, [&](std::size_t i) {
    return PredictMatch(checkpoint, matches[i], period_ticks);
  });
}

std::vector<MatchPredictions> PredictMatches(const Checkpoint& checkpoint, std::size_t count,
                                             const MatchLoader& load, int period_ticks,
                                             int threads) {
  return ParallelMap<MatchPredictions>(count, threads, [&](std::size_t i) {
    return PredictMatch(checkpoint, load(i), period_ticks);
  });
}

EvalReport EvaluateScores(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          std::span<const double> thresholds) {
  EvalReport report;
  report.curve = BuildPrCurve(scores, labels);
  report.sample_count = report.curve.total;
  report.positives = report.curve.positives;
  report.positive_rate =
      static_cast<double>(report.positives) / static_cast<double>(report.sample_count);
  report.average_precision = AveragePrecision(report.curve);
  for (double t : thresholds) report.operating_points.push_back(ThresholdMetrics(scores, labels, t));
  return report;
}

EvalReport EvaluatePredictions(std::span<const MatchPredictions> predictions,
                               std::span<const double> thresholds) {
  std::vector<const MatchPredictions*> ordered;
  for (const MatchPredictions& p : predictions) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->match_id < b->match_id; });
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const MatchPredictions* p : ordered) {
    for (std::size_t i = 0; i < p->labels.size(); ++i) {
      for (int s = 0; s < kHeroCount; ++s) {
        scores.push_back(p->probabilities[i][s]);
        labels.push_back(SlotLabel(p->labels[i], s));
      }
    }
  }
  return EvaluateScores(scores, labels, thresholds);
}

EvalReport EvaluateTest(const Checkpoint& checkpoint, std::span<const MatchRecord> matches,
                        int period_ticks, std::span<const double> thresholds, int threads) {
  const std::vector<MatchPredictions> predictions =
      PredictMatches(checkpoint, matches, period_ticks, threads);
  return EvaluatePredictions(predictions, thresholds);
}

double Quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::int64_t TimeToDeathDistribution::total() const {
  std::int64_t n = 0;
  for (const Bin& b : bins) n += static_cast<std::int64_t>(b.values.size());
  return n;
}

TimeToDeathDistribution TimeToDeath(std::span<const MatchPredictions> predictions,
                                    double horizon) {
  const int bin_count = static_cast<int>(std::ceil(horizon));
  TimeToDeathDistribution out;
  for (int k = 0; k < bin_count; ++k) {
    out.bins.push_back({std::to_string(k) + "-" + std::to_string(k + 1), {}, 0, 0, 0});
  }
  out.bins.push_back({"none", {}, 0, 0, 0});

  for (const MatchPredictions& p : predictions) {
    std::array<std::vector<double>, kHeroCount> deaths;
    for (const DeathEvent& d : p.deaths) deaths[d.slot].push_back(d.time);
    for (auto& d : deaths) std::sort(d.begin(), d.end());
    for (std::size_t i = 0; i < p.game_times.size(); ++i) {
      const double t = p.game_times[i];
      for (int s = 0; s < kHeroCount; ++s) {
        auto next = std::upper_bound(deaths[s].begin(), deaths[s].end(), t);
        int bin = bin_count;
        if (next != deaths[s].end() && *next - t <= horizon) {
          bin = std::clamp(static_cast<int>(std::ceil(*next - t)) - 1, 0, bin_count - 1);
        }
        out.bins[bin].values.push_back(p.probabilities[i][s]);
      }
    }
  }
  for (auto& b : out.bins) {
    b.q25 = Quantile(b.values, 0.25);
    b.median = Quantile(b.values, 0.5);
    b.q75 = Quantile(b.values, 0.75);
  }
  return out;
}

PredictionTimeline BuildTimeline(const MatchPredictions& predictions, double threshold,
                                 double window_seconds) {
  PredictionTimeline tl;
  tl.threshold = threshold;
  tl.window_seconds = window_seconds;
  tl.game_times = predictions.game_times;
  const std::size_t n = tl.game_times.size();
  for (int s = 0; s < kHeroCount; ++s) {
    tl.probabilities[s].resize(n);
    tl.death_flags[s].assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) tl.probabilities[s][i] = predictions.probabilities[i][s];
  }
  for (const DeathEvent& d : predictions.deaths) {
    tl.death_times[d.slot].push_back(d.time);
    auto it = std::upper_bound(tl.game_times.begin(), tl.game_times.end(), d.time);
    if (it == tl.game_times.begin()) continue;
    ++tl.death_flags[d.slot][static_cast<std::size_t>(it - tl.game_times.begin()) - 1];
  }
  for (auto& d : tl.death_times) std::sort(d.begin(), d.end());
  return tl;
}

PredictionTimeline ExportTimeline(const Checkpoint& checkpoint, const MatchRecord& match,
                                  double threshold, int period_ticks) {
  return BuildTimeline(PredictMatch(checkpoint, match, period_ticks), threshold,
                       checkpoint.config.window_seconds);
}

SpearmanResult HealthCorrelation(const MatchPredictions& predictions, const MatchRecord& match) {
  if (predictions.match_id != match.match_id) {
    throw Error(ErrorCode::kLengthMismatch,
                "predictions for " + predictions.match_id + " do not belong to " + match.match_id);
  }
  const MatchRecord clean = StripPauses(match);
  // Downsampled game times are strictly increasing, so a merge walk finds
  // each predicted frame.
  std::vector<double> health, probability;
  std::size_t next = 0;
  for (const TickFrame& frame : clean.frames) {
    if (next < predictions.game_times.size() && frame.game_time == predictions.game_times[next]) {
      for (int s = 0; s < kHeroCount; ++s) {
        health.push_back(frame.heroes[s].health);
        probability.push_back(predictions.probabilities[next][s]);
      }
      ++next;
    }
  }
  if (next != predictions.game_times.size()) {
    throw Error(ErrorCode::kLengthMismatch, "predictions do not belong to this match");
  }
  return Spearman(health, probability);
}

void WriteTimeline(const PredictionTimeline& timeline, std::ostream& out) {
  out << "# threshold=" << FormatShortest(timeline.threshold)
      << " window_seconds=" << FormatShortest(timeline.window_seconds) << '\n';
  out << "game_time\tslot\tprobability\tdeath_flag\n";
  for (int s = 0; s < kHeroCount; ++s) {
    for (std::size_t i = 0; i < timeline.game_times.size(); ++i) {
      out << FormatShortest(timeline.game_times[i]) << '\t' << s << '\t'
          << FormatShortest(timeline.probabilities[s][i]) << '\t' << timeline.death_flags[s][i]
          << '\n';
    }
  }
}

void SaveTimeline(const PredictionTimeline& timeline, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  WriteTimeline(timeline, out);
}

MispredictionCounts ClassifyMispredictions(const PredictionTimeline& timeline,
                                           double near_window) {
  MispredictionCounts counts;
  const double w = timeline.window_seconds;
  for (int s = 0; s < kHeroCount; ++s) {
    const std::vector<double>& deaths = timeline.death_times[s];
    for (std::size_t i = 0; i < timeline.game_times.size(); ++i) {
      const double t = timeline.game_times[i];
      auto next = std::upper_bound(deaths.begin(), deaths.end(), t);
      const bool has_next = next != deaths.end();
      const bool label = has_next && *next <= t + w;
      const bool alarm = timeline.probabilities[s][i] >= timeline.threshold;
      if (label && !alarm) {
        ++counts.false_negatives;
      } else if (!label && alarm) {
        if (has_next && *next <= t + near_window) {
          ++counts.near_false_positives;
        } else {
          ++counts.far_false_positives;
        }
      }
    }
  }
  return counts;
}

void WriteEvalReport(const EvalReport& report, std::ostream& out) {
  out << "sample_count\t" << report.sample_count << '\n';
  out << "positives\t" << report.positives << '\n';
  out << "positive_rate\t" << FormatShortest(report.positive_rate) << '\n';
  out << "average_precision\t" << FormatShortest(report.average_precision) << '\n';
  for (const OperatingPoint& op : report.operating_points) {
    const std::string key = "threshold_" + FormatShortest(op.threshold);
    out << key << ".precision\t" << FormatShortest(op.precision) << '\n';
    out << key << ".precision_defined\t" << (op.precision_defined ? "true" : "false") << '\n';
    out << key << ".recall\t" << FormatShortest(op.recall) << '\n';
    out << key << ".predicted_positives\t" << op.predicted_positives << '\n';
  }
}

void WritePrCurve(const PrCurve& curve, std::ostream& out) {
  out << "recall\tprecision\n";
  for (const PrPoint& p : curve.points) {
    out << FormatShortest(p.recall) << '\t' << FormatShortest(p.precision) << '\n';
  }
}

void WriteDistribution(const TimeToDeathDistribution& distribution, std::ostream& out) {
  out << "bin\tq25\tmedian\tq75\tcount\n";
  for (const auto& b : distribution.bins) {
    out << b.label << '\t' << FormatShortest(b.q25) << '\t' << FormatShortest(b.median) << '\t'
        << FormatShortest(b.q75) << '\t' << b.values.size() << '\n';
  }
}

}  // namespace deathcast
