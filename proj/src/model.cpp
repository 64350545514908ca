#include "deathcast/model.hpp"

#include <algorithm>
#include <cmath>

#include "deathcast/binary_io.hpp"
#include "deathcast/error.hpp"

namespace deathcast {
namespace {

constexpr std::uint32_t kCheckpointMagic = 0x504b4344;  // "DCKP"
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
Mat<Scalar> Relu(const Mat<Scalar>& z) {
  return z.cwiseMax(Scalar(0));
}

template <typename Scalar>
Mat<Scalar> ReluBackward(const Mat<Scalar>& upstream, const Mat<Scalar>& pre) {
  return (pre.array() > Scalar(0)).select(upstream, Scalar(0));
}

template <typename Scalar>
Mat<Scalar> Affine(const DenseLayer<Scalar>& layer, const Mat<Scalar>& input) {
  Mat<Scalar> z = layer.weight * input;
  z.colwise() += layer.bias;
  return z;
}

template <typename Scalar>
Scalar Sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// log(1 + exp(z)) without overflow.
template <typename Scalar>
Scalar Softplus(Scalar z) {
  return std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename Scalar>
DenseLayer<Scalar> GlorotLayer(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  DenseLayer<Scalar> layer{Mat<Scalar>(fan_out, fan_in), Vec<Scalar>::Zero(fan_out)};
  // Filled row by row so the draw order matches the checkpoint blob order.
  for (int r = 0; r < fan_out; ++r) {
    for (int c = 0; c < fan_in; ++c) {
      layer.weight(r, c) = static_cast<Scalar>((2.0 * UniformUnit(rng) - 1.0) * bound);
    }
  }
  return layer;
}

template <typename Scalar>
void CheckShapes(const ModelParams<Scalar>& params, const Mat<Scalar>& hero_inputs) {
  if (params.shared.empty() || params.head.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "model has no layers");
  }
  if (hero_inputs.rows() != params.shared.front().weight.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                "input width " + std::to_string(hero_inputs.rows()) + " does not match model " +
                    std::to_string(params.shared.front().weight.cols()));
  }
  if (hero_inputs.cols() % kHeroCount != 0) {
    throw Error(ErrorCode::kShapeMismatch, "input columns are not a multiple of 10 heroes");
  }
  if (params.head.front().weight.cols() != kHeroCount * params.shared.back().weight.rows() ||
      params.head.back().weight.rows() != kHeroCount) {
    throw Error(ErrorCode::kShapeMismatch, "head does not match encoder width");
  }
}

void PutLayer(ByteWriter& w, const DenseLayer<float>& layer) {
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.Put<float>(layer.weight(r, c));
  }
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.Put<float>(layer.bias(r));
}

DenseLayer<float> GetLayer(ByteReader& r, int fan_in, int fan_out) {
  DenseLayer<float> layer{Mat<float>(fan_out, fan_in), Vec<float>(fan_out)};
  for (int i = 0; i < fan_out; ++i) {
    for (int j = 0; j < fan_in; ++j) layer.weight(i, j) = r.Get<float>();
  }
  for (int i = 0; i < fan_out; ++i) layer.bias(i) = r.Get<float>();
  return layer;
}

}  // namespace

void ModelConfig::Validate() const {
  if (shared_layers.empty()) {
    throw Error(ErrorCode::kInvalidArchitecture, "at least one shared layer is required");
  }
  for (int w : shared_layers) {
    if (w <= 0) throw Error(ErrorCode::kInvalidArchitecture, "zero-width shared layer");
  }
  for (int w : final_layers) {
    if (w <= 0) throw Error(ErrorCode::kInvalidArchitecture, "zero-width final layer");
  }
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw Error(ErrorCode::kInvalidArchitecture, "batch size must be a positive even number");
  }
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArchitecture, "learning rate must be positive");
  }
}

ModelConfig ModelConfig::Reference(SchemaVariant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.batch_size = 128;
  switch (variant) {
    case SchemaVariant::kMinimal:
      cfg.learning_rate = 3.06e-5;
      cfg.shared_layers = {200, 100, 60, 20};
      cfg.final_layers = {150, 75};
      break;
    case SchemaVariant::kMedium:
      cfg.learning_rate = 7.48e-5;
      cfg.shared_layers = {256, 128, 64};
      cfg.final_layers = {1024, 512, 256, 128, 64, 32};
      break;
    case SchemaVariant::kFull:
      cfg.learning_rate = 6.15e-5;
      cfg.shared_layers = {256, 128, 64};
      cfg.final_layers = {1024, 512, 256, 128, 64, 32};
      break;
  }
  return cfg;
}

template <typename Scalar>
std::size_t ModelParams<Scalar>::parameter_count() const {
  std::size_t n = 0;
  ForEachTensor([&n](const Scalar*, Eigen::Index size) { n += static_cast<std::size_t>(size); });
  return n;
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::ZerosLike() const {
  ModelParams out;
  for (const auto& l : shared) {
    out.shared.push_back({Mat<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                          Vec<Scalar>::Zero(l.bias.size())});
  }
  for (const auto& l : head) {
    out.head.push_back({Mat<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                        Vec<Scalar>::Zero(l.bias.size())});
  }
  return out;
}

template <typename Scalar>
bool ModelParams<Scalar>::SameShape(const ModelParams& other) const {
  auto same = [](const std::vector<DenseLayer<Scalar>>& a,
                 const std::vector<DenseLayer<Scalar>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols() ||
          a[i].bias.size() != b[i].bias.size()) {
        return false;
      }
    }
    return true;
  };
  return same(shared, other.shared) && same(head, other.head);
}

template <typename Scalar>
bool ModelParams<Scalar>::operator==(const ModelParams& other) const {
  if (!SameShape(other)) return false;
  auto equal = [](const std::vector<DenseLayer<Scalar>>& a,
                  const std::vector<DenseLayer<Scalar>>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].weight != b[i].weight || a[i].bias != b[i].bias) return false;
    }
    return true;
  };
  return equal(shared, other.shared) && equal(head, other.head);
}

template <typename Scalar>
Mat<Scalar> HeroInputs(std::span<const float> features, int per_hero_count) {
  if (per_hero_count <= 0 || features.size() % (kHeroCount * per_hero_count) != 0) {
    throw Error(ErrorCode::kShapeMismatch, "feature buffer is not a whole number of samples");
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(features.size() / per_hero_count);
  Eigen::Map<const Mat<float>> view(features.data(), per_hero_count, cols);
  return view.template cast<Scalar>();
}

template <typename Scalar>
ModelParams<Scalar> InitParams(const ModelConfig& cfg, Rng& rng) {
  cfg.Validate();
  ModelParams<Scalar> params;
  int fan_in = cfg.input_width();
  for (int width : cfg.shared_layers) {
    params.shared.push_back(GlorotLayer<Scalar>(fan_in, width, rng));
    fan_in = width;
  }
  fan_in = cfg.head_input_width();
  for (int width : cfg.final_layers) {
    params.head.push_back(GlorotLayer<Scalar>(fan_in, width, rng));
    fan_in = width;
  }
  params.head.push_back(GlorotLayer<Scalar>(fan_in, kHeroCount, rng));
  return params;
}

template <typename Scalar>
Mat<Scalar> Encode(const ModelParams<Scalar>& params, const Mat<Scalar>& hero_inputs) {
  if (params.shared.empty() || hero_inputs.rows() != params.shared.front().weight.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "input width does not match the encoder");
  }
  Mat<Scalar> a = hero_inputs;
  for (const auto& layer : params.shared) a = Relu<Scalar>(Affine(layer, a));
  return a;
}

template <typename Scalar>
Mat<Scalar> Forward(const ModelParams<Scalar>& params, const Mat<Scalar>& hero_inputs,
                    ForwardTrace<Scalar>* trace) {
  CheckShapes(params, hero_inputs);
  const Eigen::Index batch = hero_inputs.cols() / kHeroCount;

  std::vector<Mat<Scalar>> local_pre;
  std::vector<Mat<Scalar>> local_act;
  Mat<Scalar> a = hero_inputs;
  for (const auto& layer : params.shared) {
    Mat<Scalar> z = Affine(layer, a);
    a = Relu<Scalar>(z);
    if (trace != nullptr) {
      trace->shared_pre.push_back(std::move(z));
      trace->shared_act.push_back(a);
    }
  }
  // Concatenate the ten encodings of each sample: a d x (10 * batch) matrix
  // read column-major is exactly the (10 * d) x batch head input.
  Mat<Scalar> h = Eigen::Map<const Mat<Scalar>>(a.data(), a.rows() * kHeroCount, batch);
  for (std::size_t k = 0; k + 1 < params.head.size(); ++k) {
    Mat<Scalar> z = Affine(params.head[k], h);
    if (trace != nullptr) trace->head_act.push_back(h);
    h = Relu<Scalar>(z);
    if (trace != nullptr) trace->head_pre.push_back(std::move(z));
  }
  if (trace != nullptr) trace->head_act.push_back(h);
  Mat<Scalar> logits = Affine(params.head.back(), h);
  Mat<Scalar> probs = logits.unaryExpr([](Scalar z) { return Sigmoid(z); });
  if (trace != nullptr) {
    trace->batch = static_cast<int>(batch);
    trace->logits = std::move(logits);
    trace->probabilities = probs;
  }
  return probs;
}

template <typename Scalar>
LossAndGrad<Scalar> ComputeLossAndGrad(const ModelParams<Scalar>& params,
                                       const Mat<Scalar>& hero_inputs,
                                       std::span<const LabelBits> labels, int selected_slot) {
  if (selected_slot < 0 || selected_slot >= kHeroCount) {
    throw Error(ErrorCode::kShapeMismatch, "selected slot outside 0..9");
  }
  ForwardTrace<Scalar> trace;
  Forward(params, hero_inputs, &trace);
  const int batch = trace.batch;
  if (static_cast<int>(labels.size()) != batch || batch == 0) {
    throw Error(ErrorCode::kShapeMismatch, "label count does not match batch size");
  }

  LossAndGrad<Scalar> out;
  out.gradients = params.ZerosLike();
  Mat<Scalar> dz = Mat<Scalar>::Zero(kHeroCount, batch);
  Scalar loss = 0;
  for (int b = 0; b < batch; ++b) {
    const Scalar z = trace.logits(selected_slot, b);
    const Scalar y = SlotLabel(labels[b], selected_slot) ? Scalar(1) : Scalar(0);
    loss += Softplus(z) - y * z;
    dz(selected_slot, b) = (trace.probabilities(selected_slot, b) - y) / Scalar(batch);
  }
  out.loss = loss / Scalar(batch);

  // Head, output layer first. head_act[k] is the input to head layer k.
  for (int k = static_cast<int>(params.head.size()) - 1; k >= 0; --k) {
    const Mat<Scalar>& input = trace.head_act[k];
    out.gradients.head[k].weight.noalias() = dz * input.transpose();
    out.gradients.head[k].bias = dz.rowwise().sum();
    Mat<Scalar> upstream = params.head[k].weight.transpose() * dz;
    dz = k > 0 ? ReluBackward<Scalar>(upstream, trace.head_pre[k - 1]) : std::move(upstream);
  }

  // dz is now the gradient w.r.t. the concatenated encodings; viewing it as
  // d x (10 * batch) routes each slot's share back through the one encoder.
  const Eigen::Index d = params.shared.back().weight.rows();
  Mat<Scalar> da = Eigen::Map<const Mat<Scalar>>(dz.data(), d, kHeroCount * batch);
  for (int l = static_cast<int>(params.shared.size()) - 1; l >= 0; --l) {
    Mat<Scalar> dzl = ReluBackward<Scalar>(da, trace.shared_pre[l]);
    const Mat<Scalar>& input = l > 0 ? trace.shared_act[l - 1] : hero_inputs;
    out.gradients.shared[l].weight.noalias() = dzl * input.transpose();
    out.gradients.shared[l].bias = dzl.rowwise().sum();
    if (l > 0) da = params.shared[l].weight.transpose() * dzl;
  }
  return out;
}

template <typename Scalar>
LossAndGrad<Scalar> ComputeLossAndGrad(const ModelParams<Scalar>& params,
                                       const BalancedBatch& batch) {
  return ComputeLossAndGrad(params, HeroInputs<Scalar>(batch.features, batch.per_hero_count),
                            batch.labels, batch.selected_slot);
}

template <typename Scalar>
void AdamStep(ModelParams<Scalar>& params, AdamState<Scalar>& state,
              const Gradients<Scalar>& gradients, double learning_rate) {
  if (!params.SameShape(gradients) || !params.SameShape(state.first_moment) ||
      !params.SameShape(state.second_moment)) {
    throw Error(ErrorCode::kShapeMismatch, "gradient or moment shapes differ from parameters");
  }
  bool finite = true;
  gradients.ForEachTensor([&finite](const Scalar* g, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) finite = finite && std::isfinite(g[i]);
  });
  if (!finite) throw Error(ErrorCode::kNonFiniteGradient, "gradient has non-finite entries");

  ++state.step;
  using Adam = AdamState<Scalar>;
  const double c1 = 1.0 - std::pow(Adam::kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(Adam::kBeta2, static_cast<double>(state.step));

  std::vector<Scalar*> p_ptr, m_ptr, v_ptr;
  std::vector<const Scalar*> g_ptr;
  std::vector<Eigen::Index> sizes;
  params.ForEachTensor([&](Scalar* p, Eigen::Index n) { p_ptr.push_back(p); sizes.push_back(n); });
  state.first_moment.ForEachTensor([&](Scalar* p, Eigen::Index) { m_ptr.push_back(p); });
  state.second_moment.ForEachTensor([&](Scalar* p, Eigen::Index) { v_ptr.push_back(p); });
  gradients.ForEachTensor([&](const Scalar* p, Eigen::Index) { g_ptr.push_back(p); });

  const Scalar b1 = static_cast<Scalar>(Adam::kBeta1);
  const Scalar b2 = static_cast<Scalar>(Adam::kBeta2);
  const Scalar step_size = static_cast<Scalar>(learning_rate / c1);
  const Scalar inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const Scalar eps = static_cast<Scalar>(Adam::kEpsilon);
  for (std::size_t t = 0; t < p_ptr.size(); ++t) {
    for (Eigen::Index i = 0; i < sizes[t]; ++i) {
      const Scalar g = g_ptr[t][i];
      m_ptr[t][i] = b1 * m_ptr[t][i] + (1 - b1) * g;
      v_ptr[t][i] = b2 * v_ptr[t][i] + (1 - b2) * g * g;
      p_ptr[t][i] -= step_size * m_ptr[t][i] / (std::sqrt(v_ptr[t][i]) * inv_sqrt_c2 + eps);
    }
  }
}

ModelConfig GradientCheckConfig() {
  ModelConfig cfg;
  cfg.variant = SchemaVariant::kMinimal;
  cfg.shared_layers = {8, 4};
  cfg.final_layers = {8};
  cfg.batch_size = 4;
  return cfg;
}

GradientCheckReport GradientCheck(const ModelConfig& cfg, double tolerance, std::uint64_t seed,
                                  int batch_size, GradientFn analytic) {
  if (!analytic) {
    analytic = [](const ModelParams<double>& p, const Mat<double>& x,
                  std::span<const LabelBits> y, int slot) {
      return ComputeLossAndGrad<double>(p, x, y, slot);
    };
  }
  Rng rng(seed);
  ModelParams<double> params = InitParams<double>(cfg, rng);
  // Non-zero biases so their gradients are exercised away from init.
  params.ForEachTensor([&rng](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] += 0.1 * (2.0 * UniformUnit(rng) - 1.0);
  });
  Mat<double> inputs(cfg.input_width(), static_cast<Eigen::Index>(kHeroCount) * batch_size);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = UniformUnit(rng);
  std::vector<LabelBits> labels(batch_size);
  for (auto& l : labels) l = static_cast<LabelBits>(rng() & 0x3ff);
  const int slot = static_cast<int>(RandomIndex(rng, kHeroCount));

  const auto result = analytic(params, inputs, labels, slot);
  std::vector<const double*> grads;
  result.gradients.ForEachTensor([&grads](const double* g, Eigen::Index) { grads.push_back(g); });

  constexpr double kStep = 1e-6;
  GradientCheckReport report;
  report.tolerance = tolerance;
  std::size_t tensor = 0;
  params.ForEachTensor([&](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double saved = p[i];
      p[i] = saved + kStep;
      const double up = ComputeLossAndGrad<double>(params, inputs, labels, slot).loss;
      p[i] = saved - kStep;
      const double down = ComputeLossAndGrad<double>(params, inputs, labels, slot).loss;
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double exact = grads[tensor][i];
      const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-6});
      report.max_relative_error =
          std::max(report.max_relative_error, std::abs(numeric - exact) / scale);
    }
    ++tensor;
  });
  report.parameter_count = params.parameter_count();
  report.passed = report.max_relative_error < tolerance;
  return report;
}

std::vector<std::uint8_t> EncodeCheckpoint(const Checkpoint& ckpt) {
  const ModelConfig& cfg = ckpt.config;
  cfg.Validate();
  if (ckpt.stats.variant != cfg.variant || ckpt.stats.size() != cfg.input_width()) {
    throw Error(ErrorCode::kSchemaMismatch, "normalization stats do not match the model schema");
  }
  ByteWriter w;
  w.Put<std::uint32_t>(kCheckpointMagic);
  w.Put<std::uint32_t>(kCheckpointVersion);
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(cfg.variant));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(cfg.shared_layers.size()));
  for (int x : cfg.shared_layers) w.Put<std::uint32_t>(static_cast<std::uint32_t>(x));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(cfg.final_layers.size()));
  for (int x : cfg.final_layers) w.Put<std::uint32_t>(static_cast<std::uint32_t>(x));
  w.Put<std::uint64_t>(cfg.seed);
  w.Put<std::int64_t>(ckpt.step);
  w.Put<double>(cfg.learning_rate);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(cfg.batch_size));
  w.Put<double>(cfg.window_seconds);

  Rng unused(0);
  const ModelParams<float> shape = InitParams<float>(cfg, unused);
  if (!shape.SameShape(ckpt.params)) {
    throw Error(ErrorCode::kShapeMismatch, "parameters do not match the configuration");
  }
  for (const auto& l : ckpt.params.shared) PutLayer(w, l);
  for (const auto& l : ckpt.params.head) PutLayer(w, l);

  w.Put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.stats.size()));
  for (int k = 0; k < ckpt.stats.size(); ++k) {
    w.Put<double>(ckpt.stats.min[k]);
    w.Put<double>(ckpt.stats.max[k]);
  }
  w.SealWithChecksum();
  return w.release();
}

Checkpoint DecodeCheckpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes);
  r.VerifyChecksum(what);
  if (r.Get<std::uint32_t>() != kCheckpointMagic) {
    throw Error(ErrorCode::kVersionMismatch, what + ": not a checkpoint");
  }
  if (r.Get<std::uint32_t>() != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch, what + ": unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ModelConfig& cfg = ckpt.config;
  const auto variant = r.Get<std::uint8_t>();
  if (variant > static_cast<std::uint8_t>(SchemaVariant::kFull)) {
    throw Error(ErrorCode::kVersionMismatch, what + ": unknown schema variant");
  }
  cfg.variant = static_cast<SchemaVariant>(variant);
  const auto n_shared = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_shared; ++i) cfg.shared_layers.push_back(r.Get<std::uint32_t>());
  const auto n_final = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_final; ++i) cfg.final_layers.push_back(r.Get<std::uint32_t>());
  cfg.seed = r.Get<std::uint64_t>();
  ckpt.step = r.Get<std::int64_t>();
  cfg.learning_rate = r.Get<double>();
  cfg.batch_size = static_cast<int>(r.Get<std::uint32_t>());
  cfg.window_seconds = r.Get<double>();
  cfg.Validate();

  int fan_in = cfg.input_width();
  for (int width : cfg.shared_layers) {
    ckpt.params.shared.push_back(GetLayer(r, fan_in, width));
    fan_in = width;
  }
  fan_in = cfg.head_input_width();
  for (int width : cfg.final_layers) {
    ckpt.params.head.push_back(GetLayer(r, fan_in, width));
    fan_in = width;
  }
  ckpt.params.head.push_back(GetLayer(r, fan_in, kHeroCount));

  const auto n_stats = r.Get<std::uint32_t>();
  if (static_cast<int>(n_stats) != cfg.input_width()) {
    throw Error(ErrorCode::kSchemaMismatch, what + ": normalization stats width mismatch");
  }
  ckpt.stats.variant = cfg.variant;
  for (std::uint32_t k = 0; k < n_stats; ++k) {
    ckpt.stats.min.push_back(r.Get<double>());
    ckpt.stats.max.push_back(r.Get<double>());
  }
  if (!r.at_end()) throw Error(ErrorCode::kSchemaMismatch, what + ": trailing bytes");
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path) {
  WriteFileBytes(path, EncodeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::string& path) {
  return DecodeCheckpoint(ReadFileBytes(path), path);
}

Checkpoint LoadCheckpoint(const std::string& path, SchemaVariant expected) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (ckpt.config.variant != expected) {
    throw Error(ErrorCode::kVersionMismatch,
                path + ": checkpoint was trained on " +
                    std::string(VariantName(ckpt.config.variant)) + " features, expected " +
                    std::string(VariantName(expected)));
  }
  return ckpt;
}

Mat<float> PredictSamples(const ModelParams<float>& params, const SampleSet& samples) {
  constexpr std::size_t kChunk = 2048;
  Mat<float> out(kHeroCount, static_cast<Eigen::Index>(samples.size()));
  const auto& raw = samples.raw_features();
  const std::size_t width = samples.sample_width();
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, samples.size() - start);
    const std::span<const float> chunk(raw.data() + start * width, n * width);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        Forward<float>(params, HeroInputs<float>(chunk, samples.per_hero_count()));
  }
  return out;
}

#define DEATHCAST_INSTANTIATE(Scalar)                                                         \
  template struct ModelParams<Scalar>;                                                        \
  template Mat<Scalar> HeroInputs<Scalar>(std::span<const float>, int);                       \
  template ModelParams<Scalar> InitParams<Scalar>(const ModelConfig&, Rng&);                  \
  template Mat<Scalar> Encode<Scalar>(const ModelParams<Scalar>&, const Mat<Scalar>&);        \
  template Mat<Scalar> Forward<Scalar>(const ModelParams<Scalar>&, const Mat<Scalar>&,        \
                                       ForwardTrace<Scalar>*);                                \
  template LossAndGrad<Scalar> ComputeLossAndGrad<Scalar>(                                    \
      const ModelParams<Scalar>&, const Mat<Scalar>&, std::span<const LabelBits>, int);       \
  template LossAndGrad<Scalar> ComputeLossAndGrad<Scalar>(const ModelParams<Scalar>&,         \
                                                          const BalancedBatch&);              \
  template void AdamStep<Scalar>(ModelParams<Scalar>&, AdamState<Scalar>&,                    \
                                 const Gradients<Scalar>&, double);

DEATHCAST_INSTANTIATE(float)
DEATHCAST_INSTANTIATE(double)

#undef DEATHCAST_INSTANTIATE

}  // namespace deathcast
