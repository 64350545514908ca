#ifndef DEATHCAST_MODEL_HPP_
#define DEATHCAST_MODEL_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deathcast/dataset.hpp"
#include "deathcast/features.hpp"

namespace deathcast {

struct ModelConfig {
  SchemaVariant variant = SchemaVariant::kMinimal;
  std::vector<int> shared_layers;
  std::vector<int> final_layers;
  double learning_rate = 1e-3;
  int batch_size = kDefaultBatchSize;
  std::uint64_t seed = 1;
  double window_seconds = kDefaultWindowSeconds;

  int input_width() const { return FeatureSchema::Get(variant).per_hero_count(); }
  int encoding_width() const { return shared_layers.empty() ? 0 : shared_layers.back(); }
  int head_input_width() const { return kHeroCount * encoding_width(); }

  // Throws kInvalidArchitecture for empty shared stacks or zero-width layers.
  void Validate() const;

  // Reference architecture and learning rate for each feature set.
  static ModelConfig Reference(SchemaVariant variant);

  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> weight;  // out x in
  Vec<Scalar> bias;
};

// Shared encoder stored once and applied to all ten heroes, then the
// concatenation head. head.back() is the 10-unit output layer.
template <typename Scalar>
struct ModelParams {
  std::vector<DenseLayer<Scalar>> shared;
  std::vector<DenseLayer<Scalar>> head;

  std::size_t parameter_count() const;
  ModelParams ZerosLike() const;
  bool SameShape(const ModelParams& other) const;

  template <typename To>
  ModelParams<To> Cast() const {
    ModelParams<To> out;
    for (const auto& l : shared) out.shared.push_back({l.weight.template cast<To>(), l.bias.template cast<To>()});
    for (const auto& l : head) out.head.push_back({l.weight.template cast<To>(), l.bias.template cast<To>()});
    return out;
  }

  // Every tensor in storage order: shared layers, then head layers, each as
  // weight followed by bias.
  template <typename Fn>
  void ForEachTensor(Fn&& fn) {
    for (auto& l : shared) { fn(l.weight.data(), l.weight.size()); fn(l.bias.data(), l.bias.size()); }
    for (auto& l : head) { fn(l.weight.data(), l.weight.size()); fn(l.bias.data(), l.bias.size()); }
  }
  template <typename Fn>
  void ForEachTensor(Fn&& fn) const {
    for (const auto& l : shared) { fn(l.weight.data(), l.weight.size()); fn(l.bias.data(), l.bias.size()); }
    for (const auto& l : head) { fn(l.weight.data(), l.weight.size()); fn(l.bias.data(), l.bias.size()); }
  }

  bool operator==(const ModelParams& other) const;
};

template <typename Scalar>
using Gradients = ModelParams<Scalar>;

template <typename Scalar>
struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  ModelParams<Scalar> first_moment;
  ModelParams<Scalar> second_moment;
  std::int64_t step = 0;

  static AdamState For(const ModelParams<Scalar>& params) {
    return AdamState{params.ZerosLike(), params.ZerosLike(), 0};
  }
};

template <typename Scalar>
struct ForwardTrace {
  int batch = 0;
  // Encoder tensors have 10 * batch columns: column b * 10 + s is hero s of
  // sample b.
  std::vector<Mat<Scalar>> shared_pre;
  std::vector<Mat<Scalar>> shared_act;
  std::vector<Mat<Scalar>> head_pre;
  std::vector<Mat<Scalar>> head_act;
  Mat<Scalar> logits;         // 10 x batch
  Mat<Scalar> probabilities;  // 10 x batch
};

// Per-hero inputs as a per_hero_count x (10 * batch) matrix, copied from the
// sample-major float layout used by shards and batches.
template <typename Scalar>
Mat<Scalar> HeroInputs(std::span<const float> features, int per_hero_count);

template <typename Scalar>
ModelParams<Scalar> InitParams(const ModelConfig& cfg, Rng& rng);

// Applies the shared encoder to each column independently.
template <typename Scalar>
Mat<Scalar> Encode(const ModelParams<Scalar>& params, const Mat<Scalar>& hero_inputs);

// Returns 10 x batch probabilities. trace may be null.
template <typename Scalar>
Mat<Scalar> Forward(const ModelParams<Scalar>& params, const Mat<Scalar>& hero_inputs,
                    ForwardTrace<Scalar>* trace = nullptr);

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  Gradients<Scalar> gradients;
};

// Mean binary cross-entropy on the selected slot's output only; the other
// nine outputs contribute no error.
template <typename Scalar>
LossAndGrad<Scalar> ComputeLossAndGrad(const ModelParams<Scalar>& params,
                                       const Mat<Scalar>& hero_inputs,
                                       std::span<const LabelBits> labels, int selected_slot);

template <typename Scalar>
LossAndGrad<Scalar> ComputeLossAndGrad(const ModelParams<Scalar>& params,
                                       const BalancedBatch& batch);

template <typename Scalar>
void AdamStep(ModelParams<Scalar>& params, AdamState<Scalar>& state,
              const Gradients<Scalar>& gradients, double learning_rate);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::size_t parameter_count = 0;
  bool passed = false;
};

using GradientFn = std::function<LossAndGrad<double>(
    const ModelParams<double>&, const Mat<double>&, std::span<const LabelBits>, int)>;

// Compares analytic gradients with central differences over every parameter
// on one random batch, at double precision. `analytic` defaults to
// ComputeLossAndGrad<double>.
GradientCheckReport GradientCheck(const ModelConfig& cfg, double tolerance, std::uint64_t seed,
                                  int batch_size = 4, GradientFn analytic = {});

// Small configuration used for numerical verification.
ModelConfig GradientCheckConfig();

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  NormalizationStats stats;
  std::int64_t step = 0;
};

std::vector<std::uint8_t> EncodeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DecodeCheckpoint(std::span<const std::uint8_t> bytes,
                            const std::string& what = "checkpoint");
void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint LoadCheckpoint(const std::string& path);
// Throws kVersionMismatch when the stored schema variant differs.
Checkpoint LoadCheckpoint(const std::string& path, SchemaVariant expected);

// Probabilities (10 x n) for n samples, evaluated in chunks.
Mat<float> PredictSamples(const ModelParams<float>& params, const SampleSet& samples);

}  // namespace deathcast

#endif  // DEATHCAST_MODEL_HPP_
