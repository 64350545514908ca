#include "deathcast/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "deathcast/error.hpp"
#include "deathcast/eval.hpp"
#include "deathcast/text.hpp"

namespace deathcast {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

[[noreturn]] void BadSetting(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::kInvalidConfig, "bad value '" + value + "' for " + key);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(value, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!value.empty() && value[0] == '-') BadSetting(key, value);
      out = std::stoull(value, &used);
    } else {
      out = static_cast<T>(std::stoll(value, &used));
    }
    if (used != value.size()) BadSetting(key, value);
    return out;
  } catch (const std::logic_error&) {
    BadSetting(key, value);
  }
}

std::vector<int> ParseIntList(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(ParseNumber<int>(key, item));
  }
  return out;
}

template <typename T>
const T& Pick(const std::vector<T>& choices, Rng& rng) {
  return choices[RandomIndex(rng, choices.size())];
}

}  // namespace

std::vector<int> ParseLayers(const std::string& text) { return ParseIntList("layers", text); }

std::string FormatLayers(const std::vector<int>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(layers[i]);
  }
  return out;
}

void TrainRunConfig::Validate() const {
  model.Validate();
  if (max_steps < 0) throw Error(ErrorCode::kInvalidConfig, "max_steps must be non-negative");
  if (validation_interval < 1) {
    throw Error(ErrorCode::kInvalidConfig, "validation_interval must be positive");
  }
}

void ApplySetting(TrainRunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "schema") {
    cfg.model.variant = ParseVariant(value);
  } else if (key == "shared_layers") {
    cfg.model.shared_layers = ParseIntList(key, value);
  } else if (key == "final_layers") {
    cfg.model.final_layers = ParseIntList(key, value);
  } else if (key == "learning_rate") {
    cfg.model.learning_rate = ParseNumber<double>(key, value);
  } else if (key == "batch_size") {
    cfg.model.batch_size = ParseNumber<int>(key, value);
  } else if (key == "seed") {
    cfg.model.seed = ParseNumber<std::uint64_t>(key, value);
  } else if (key == "window_seconds") {
    cfg.model.window_seconds = ParseNumber<double>(key, value);
  } else if (key == "max_steps") {
    cfg.max_steps = ParseNumber<std::int64_t>(key, value);
  } else if (key == "validation_interval") {
    cfg.validation_interval = ParseNumber<std::int64_t>(key, value);
  } else if (key == "sampler_seed") {
    cfg.sampler_seed = ParseNumber<std::uint64_t>(key, value);
  } else if (key == "checkpoint_dir") {
    cfg.checkpoint_dir = value;
  } else if (key == "manifest") {
    cfg.manifest_path = value;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown training setting '" + key + "'");
  }
}

double ValidationAveragePrecision(const ModelParams<float>& params, const ShardPool& validation) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const Shard& shard : validation.shards()) {
    const Mat<float> probs = PredictSamples(params, shard.samples);
    for (std::size_t i = 0; i < shard.samples.size(); ++i) {
      for (int s = 0; s < kHeroCount; ++s) {
        scores.push_back(probs(s, static_cast<Eigen::Index>(i)));
        labels.push_back(SlotLabel(shard.samples.labels(i), s));
      }
    }
  }
  return AveragePrecision(BuildPrCurve(scores, labels));
}

TrainResult Train(const TrainRunConfig& cfg, const ShardPool& train, const ShardPool& validation,
                  const NormalizationStats& stats) {
  cfg.Validate();
  if (stats.variant != cfg.model.variant) {
    throw Error(ErrorCode::kSchemaMismatch, "normalization stats belong to another schema");
  }
  Rng init_rng(cfg.model.seed);
  ModelParams<float> params = InitParams<float>(cfg.model, init_rng);
  AdamState<float> adam = AdamState<float>::For(params);
  Rng batch_rng(cfg.sampler_seed);

  TrainResult result;
  result.best = Checkpoint{cfg.model, params, stats, 0};
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    const BalancedBatch batch = SampleBalancedBatch(train, cfg.model.batch_size, batch_rng);
    const LossAndGrad<float> lg = ComputeLossAndGrad<float>(params, batch);
    AdamStep(params, adam, lg.gradients, cfg.model.learning_rate);
    loss_sum += lg.loss;
    ++loss_count;
    if (step % cfg.validation_interval == 0 || step == cfg.max_steps) {
      const double ap = ValidationAveragePrecision(params, validation);
      result.log.push_back({step, loss_sum / static_cast<double>(loss_count), ap});
      loss_sum = 0.0;
      loss_count = 0;
      if (ap > result.best_val_ap) {
        result.best_val_ap = ap;
        result.best = Checkpoint{cfg.model, params, stats, step};
      }
    }
  }
  return result;
}

void WriteMetricsLog(const std::vector<MetricsRow>& log, std::ostream& out) {
  for (const MetricsRow& row : log) {
    out << row.step << '\t' << FormatShortest(row.train_loss) << '\t' << FormatShortest(row.val_ap)
        << '\n';
  }
}

void SearchSpace::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (budget < 1) fail("search budget must be at least 1");
  if (shared_depths.empty() || final_depths.empty() || widths.empty() || batch_sizes.empty()) {
    fail("every search dimension needs at least one choice");
  }
  for (int d : shared_depths) if (d < 1) fail("shared depth must be at least 1");
  for (int d : final_depths) if (d < 0) fail("final depth must be non-negative");
  for (int w : widths) if (w < 1) fail("layer widths must be positive");
  for (int b : batch_sizes) if (b < 2 || b % 2) fail("batch sizes must be positive and even");
  if (!(min_learning_rate > 0.0) || !(max_learning_rate >= min_learning_rate)) {
    fail("learning-rate range must be positive and ordered");
  }
  if (steps_per_trial < 1 || validation_interval < 1) fail("step budgets must be positive");
}

void ApplySetting(SearchSpace& space, const std::string& key, const std::string& value) {
  if (key == "schema") {
    space.variant = ParseVariant(value);
  } else if (key == "shared_depths") {
    space.shared_depths = ParseIntList(key, value);
  } else if (key == "final_depths") {
    space.final_depths = ParseIntList(key, value);
  } else if (key == "widths") {
    space.widths = ParseIntList(key, value);
  } else if (key == "min_learning_rate") {
    space.min_learning_rate = ParseNumber<double>(key, value);
  } else if (key == "max_learning_rate") {
    space.max_learning_rate = ParseNumber<double>(key, value);
  } else if (key == "batch_sizes") {
    space.batch_sizes = ParseIntList(key, value);
  } else if (key == "window_seconds") {
    space.window_seconds = ParseNumber<double>(key, value);
  } else if (key == "budget") {
    space.budget = ParseNumber<int>(key, value);
  } else if (key == "steps_per_trial") {
    space.steps_per_trial = ParseNumber<std::int64_t>(key, value);
  } else if (key == "validation_interval") {
    space.validation_interval = ParseNumber<std::int64_t>(key, value);
  } else if (key == "seed") {
    space.seed = ParseNumber<std::uint64_t>(key, value);
  } else {
    throw Error(ErrorCode::kInvalidConfig, "unknown search setting '" + key + "'");
  }
}

ModelConfig SampleConfig(const SearchSpace& space, int index) {
  space.Validate();
  Rng rng(space.seed ^ (kGolden * static_cast<std::uint64_t>(index + 1)));
  ModelConfig cfg;
  cfg.variant = space.variant;
  cfg.window_seconds = space.window_seconds;
  const int shared_depth = Pick(space.shared_depths, rng);
  for (int i = 0; i < shared_depth; ++i) cfg.shared_layers.push_back(Pick(space.widths, rng));
  const int final_depth = Pick(space.final_depths, rng);
  for (int i = 0; i < final_depth; ++i) cfg.final_layers.push_back(Pick(space.widths, rng));
  const double lo = std::log(space.min_learning_rate);
  const double hi = std::log(space.max_learning_rate);
  cfg.learning_rate = std::exp(lo + (hi - lo) * UniformUnit(rng));
  cfg.batch_size = Pick(space.batch_sizes, rng);
  cfg.seed = rng();
  return cfg;
}

SearchResult RandomSearch(const SearchSpace& space, const ShardPool& train,
                          const ShardPool& validation, const NormalizationStats& stats) {
  space.Validate();
  SearchResult result;
  for (int i = 0; i < space.budget; ++i) {
    TrainRunConfig run;
    run.model = SampleConfig(space, i);
    run.max_steps = space.steps_per_trial;
    run.validation_interval = space.validation_interval;
    run.sampler_seed = run.model.seed ^ kGolden;
    const TrainResult trained = Train(run, train, validation, stats);
    result.ranked.push_back(
        {i, run.model, trained.best.params.parameter_count(), trained.best_val_ap});
  }
  std::sort(result.ranked.begin(), result.ranked.end(), [](const Trial& a, const Trial& b) {
    if (a.val_ap != b.val_ap) return a.val_ap > b.val_ap;
    if (a.parameter_count != b.parameter_count) return a.parameter_count < b.parameter_count;
    return a.index < b.index;
  });
  result.best = result.ranked.front().config;
  return result;
}

void WriteTrialTable(const SearchResult& result, std::ostream& out) {
  out << "rank\ttrial\tshared_layers\tfinal_layers\tlearning_rate\tbatch_size\tseed\tparameters"
         "\tval_ap\n";
  for (std::size_t r = 0; r < result.ranked.size(); ++r) {
    const Trial& t = result.ranked[r];
    out << r + 1 << '\t' << t.index << '\t' << FormatLayers(t.config.shared_layers) << '\t'
        << FormatLayers(t.config.final_layers) << '\t' << FormatShortest(t.config.learning_rate) << '\t'
        << t.config.batch_size << '\t' << t.config.seed << '\t' << t.parameter_count << '\t'
        << FormatShortest(t.val_ap) << '\n';
  }
}

}  // namespace deathcast
