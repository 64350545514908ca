#ifndef DEATHCAST_TRAIN_HPP_
#define DEATHCAST_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "deathcast/dataset.hpp"
#include "deathcast/model.hpp"

namespace deathcast {

struct TrainRunConfig {
  ModelConfig model = ModelConfig::Reference(SchemaVariant::kMinimal);
  std::int64_t max_steps = 200000;
  std::int64_t validation_interval = 1000;
  std::uint64_t sampler_seed = 11;
  std::string checkpoint_dir;
  std::string manifest_path;

  void Validate() const;
};

// Sets one `key=value` entry. Unknown keys and bad values throw
// kInvalidConfig.
void ApplySetting(TrainRunConfig& cfg, const std::string& key, const std::string& value);

struct MetricsRow {
  std::int64_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous row
  double val_ap = 0.0;
  bool operator==(const MetricsRow&) const = default;
};

struct TrainResult {
  Checkpoint best;
  double best_val_ap = -1.0;  // -1 when no validation point was reached
  std::vector<MetricsRow> log;
};

// Average precision over every slot of every validation sample.
double ValidationAveragePrecision(const ModelParams<float>& params, const ShardPool& validation);

// Balanced batches from `train`, Adam updates, and validation every
// validation_interval steps (and at max_steps). Keeps the parameters with the
// best validation AP; with max_steps == 0 the initial parameters are returned.
TrainResult Train(const TrainRunConfig& cfg, const ShardPool& train, const ShardPool& validation,
                  const NormalizationStats& stats);

void WriteMetricsLog(const std::vector<MetricsRow>& log, std::ostream& out);

struct SearchSpace {
  SchemaVariant variant = SchemaVariant::kMinimal;
  std::vector<int> shared_depths = {2, 3, 4};
  std::vector<int> final_depths = {1, 2, 3};
  std::vector<int> widths = {16, 32, 64, 128};
  double min_learning_rate = 1e-4;
  double max_learning_rate = 1e-2;
  std::vector<int> batch_sizes = {64, 128, 256};
  double window_seconds = kDefaultWindowSeconds;
  int budget = 8;
  std::int64_t steps_per_trial = 2000;
  std::int64_t validation_interval = 500;
  std::uint64_t seed = 1;

  void Validate() const;
};

void ApplySetting(SearchSpace& space, const std::string& key, const std::string& value);

// The i-th configuration drawn from the space; a pure function of
// (space, i) so re-runs sample identical configurations.
ModelConfig SampleConfig(const SearchSpace& space, int index);

struct Trial {
  int index = 0;
  ModelConfig config;
  std::size_t parameter_count = 0;
  double val_ap = 0.0;
};

struct SearchResult {
  std::vector<Trial> ranked;  // best first
  ModelConfig best;
};

// Ranked by validation AP, then fewer parameters, then lower index.
SearchResult RandomSearch(const SearchSpace& space, const ShardPool& train,
                          const ShardPool& validation, const NormalizationStats& stats);

void WriteTrialTable(const SearchResult& result, std::ostream& out);

// Comma-separated layer widths, e.g. "32,16". Empty text gives no layers.
std::vector<int> ParseLayers(const std::string& text);
std::string FormatLayers(const std::vector<int>& layers);

}  // namespace deathcast

#endif  // DEATHCAST_TRAIN_HPP_
