#include <gtest/gtest.h>

#include <cmath>

#include "deathcast/error.hpp"
#include "deathcast/model.hpp"
#include "support.hpp"

namespace deathcast {
namespace {

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

Mat<double> RandomInputs(Rng& rng, int width, int batch) {
  Mat<double> x(width, kHeroCount * batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = UniformUnit(rng);
  return x;
}

std::vector<double> Dense(const DenseLayer<double>& l, const std::vector<double>& in, bool relu) {
  std::vector<double> out(l.weight.rows());
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    double z = l.bias(r);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) z += l.weight(r, c) * in[c];
    out[r] = relu ? std::max(0.0, z) : z;
  }
  return out;
}

// Plain loops over one sample: encode each hero, concatenate, run the head.
std::vector<double> LoopForward(const ModelParams<double>& p, const Mat<double>& x, int sample) {
  std::vector<double> concat;
  for (int s = 0; s < kHeroCount; ++s) {
    std::vector<double> a(x.rows());
    for (Eigen::Index k = 0; k < x.rows(); ++k) a[k] = x(k, sample * kHeroCount + s);
    for (const auto& l : p.shared) a = Dense(l, a, true);
    concat.insert(concat.end(), a.begin(), a.end());
  }
  for (std::size_t k = 0; k < p.head.size(); ++k) {
    concat = Dense(p.head[k], concat, k + 1 < p.head.size());
  }
  for (double& z : concat) z = 1.0 / (1.0 + std::exp(-z));
  return concat;
}

std::vector<double> Flatten(const ModelParams<double>& p) {
  std::vector<double> out;
  p.ForEachTensor([&out](const double* d, Eigen::Index n) { out.insert(out.end(), d, d + n); });
  return out;
}

TEST(Model, ForwardMatchesLoops) {
  ModelConfig cfg = GradientCheckConfig();
  cfg.final_layers = {8, 6};
  Rng rng(1);
  const auto params = InitParams<double>(cfg, rng);
  const Mat<double> x = RandomInputs(rng, cfg.input_width(), 5);
  const Mat<double> probs = Forward(params, x);
  ASSERT_EQ(probs.rows(), 10);
  ASSERT_EQ(probs.cols(), 5);
  for (int b = 0; b < 5; ++b) {
    const auto expected = LoopForward(params, x, b);
    for (int s = 0; s < kHeroCount; ++s) EXPECT_NEAR(probs(s, b), expected[s], 1e-12);
  }
}

TEST(Model, LossIsSelectedSlotCrossEntropy) {
  const ModelConfig cfg = GradientCheckConfig();
  Rng rng(2);
  const auto params = InitParams<double>(cfg, rng);
  const Mat<double> x = RandomInputs(rng, cfg.input_width(), 6);
  const std::vector<LabelBits> labels = {0x001, 0x3ff, 0x010, 0x000, 0x008, 0x2a8};
  const int slot = 3;
  const Mat<double> probs = Forward(params, x);
  double loss = 0.0;
  for (int b = 0; b < 6; ++b) {
    const double p = probs(slot, b);
    loss -= SlotLabel(labels[b], slot) ? std::log(p) : std::log(1.0 - p);
  }
  EXPECT_NEAR(ComputeLossAndGrad<double>(params, x, labels, slot).loss, loss / 6, 1e-12);
}

TEST(Model, GradientCheckPasses) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const GradientCheckReport r = GradientCheck(GradientCheckConfig(), 1e-4, seed);
    EXPECT_TRUE(r.passed) << r.max_relative_error;
    EXPECT_GT(r.parameter_count, 0u);
  }
}

TEST(Model, GradientCheckCatchesWrongGradients) {
  GradientFn scaled = [](const ModelParams<double>& p, const Mat<double>& x,
                         std::span<const LabelBits> y, int slot) {
    auto out = ComputeLossAndGrad<double>(p, x, y, slot);
    out.gradients.shared.front().weight *= 1.01;
    return out;
  };
  EXPECT_FALSE(GradientCheck(GradientCheckConfig(), 1e-4, 1, 4, scaled).passed);
}

TEST(Model, OtherSlotLabelsDoNotMatter) {
  const ModelConfig cfg = GradientCheckConfig();
  Rng rng(3);
  const auto params = InitParams<double>(cfg, rng);
  const Mat<double> x = RandomInputs(rng, cfg.input_width(), 8);
  for (int slot = 0; slot < kHeroCount; ++slot) {
    std::vector<LabelBits> a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = static_cast<LabelBits>(rng() & 0x3ff);
      const LabelBits own = a[i] & (1u << slot);
      b[i] = static_cast<LabelBits>(((rng() & 0x3ff) & ~(1u << slot)) | own);
    }
    const auto la = ComputeLossAndGrad<double>(params, x, a, slot);
    const auto lb = ComputeLossAndGrad<double>(params, x, b, slot);
    EXPECT_EQ(la.loss, lb.loss);
    EXPECT_EQ(Flatten(la.gradients), Flatten(lb.gradients));
  }
}

TEST(Model, EncoderIsSlotInvariant) {
  const ModelConfig cfg = ModelConfig::Reference(SchemaVariant::kMedium);
  Rng rng(4);
  const auto params = InitParams<float>(cfg, rng);
  Mat<float> x(cfg.input_width(), kHeroCount);
  for (Eigen::Index i = 0; i < x.rows(); ++i) x.col(0)(i) = static_cast<float>(UniformUnit(rng));
  for (int s = 1; s < kHeroCount; ++s) x.col(s) = x.col(0);
  const Mat<float> enc = Encode(params, x);
  for (int s = 1; s < kHeroCount; ++s) EXPECT_TRUE(enc.col(s) == enc.col(0));
}

TEST(Model, AdamMatchesHandComputation) {
  ModelParams<double> p;
  p.shared.push_back({Mat<double>::Constant(1, 2, 0.5), Vec<double>::Constant(1, -0.25)});
  AdamState<double> state = AdamState<double>::For(p);
  ModelParams<double> g = p.ZerosLike();
  const double lr = 0.01;
  double w = 0.5, m = 0.0, v = 0.0;
  const double grads[] = {0.3, -1.2, 0.05};
  for (int t = 1; t <= 3; ++t) {
    g.shared[0].weight(0, 0) = grads[t - 1];
    AdamStep(p, state, g, lr);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    w -= lr * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p.shared[0].weight(0, 0), w, 1e-12);
    EXPECT_EQ(p.shared[0].weight(0, 1), 0.5);
  }
  EXPECT_EQ(state.step, 3);

  g.shared[0].bias(0) = NAN;
  EXPECT_EQ(CodeOf([&] { AdamStep(p, state, g, lr); }), ErrorCode::kNonFiniteGradient);
  ModelParams<double> other;
  EXPECT_EQ(CodeOf([&] { AdamStep(p, state, other, lr); }), ErrorCode::kShapeMismatch);
}

TEST(Model, ArchitectureValidation) {
  ModelConfig cfg = GradientCheckConfig();
  cfg.shared_layers.clear();
  EXPECT_EQ(CodeOf([&] { cfg.Validate(); }), ErrorCode::kInvalidArchitecture);
  cfg = GradientCheckConfig();
  cfg.final_layers = {8, 0};
  EXPECT_EQ(CodeOf([&] { cfg.Validate(); }), ErrorCode::kInvalidArchitecture);
  cfg = GradientCheckConfig();
  cfg.batch_size = 7;
  EXPECT_EQ(CodeOf([&] { cfg.Validate(); }), ErrorCode::kInvalidArchitecture);
  cfg = GradientCheckConfig();
  cfg.final_layers.clear();
  EXPECT_NO_THROW(cfg.Validate());
}

TEST(Model, ReferenceShapes) {
  const ModelConfig full = ModelConfig::Reference(SchemaVariant::kFull);
  EXPECT_EQ(full.input_width(), 287);
  EXPECT_EQ(full.head_input_width(), 640);
  EXPECT_EQ(ModelConfig::Reference(SchemaVariant::kMedium).head_input_width(), 640);
  EXPECT_EQ(ModelConfig::Reference(SchemaVariant::kMinimal).head_input_width(), 200);

  Rng rng(5);
  const auto params = InitParams<float>(full, rng);
  EXPECT_EQ(params.head.front().weight.cols(), 640);
  EXPECT_EQ(params.head.back().weight.rows(), 10);
  std::size_t expected = 0;
  int fan_in = 287;
  for (int w : full.shared_layers) expected += static_cast<std::size_t>(fan_in + 1) * w, fan_in = w;
  fan_in = 640;
  for (int w : full.final_layers) expected += static_cast<std::size_t>(fan_in + 1) * w, fan_in = w;
  expected += static_cast<std::size_t>(fan_in + 1) * 10;
  EXPECT_EQ(params.parameter_count(), expected);
}

TEST(Model, InitIsSeeded) {
  const ModelConfig cfg = GradientCheckConfig();
  Rng a(9), b(9), c(10);
  EXPECT_TRUE(InitParams<float>(cfg, a) == InitParams<float>(cfg, b));
  Rng d(9);
  EXPECT_FALSE(InitParams<float>(cfg, d) == InitParams<float>(cfg, c));
}

Checkpoint RandomCheckpoint(std::uint64_t seed) {
  Checkpoint ck;
  ck.config = GradientCheckConfig();
  ck.config.seed = seed;
  ck.config.learning_rate = 0.00123;
  Rng rng(seed);
  ck.params = InitParams<float>(ck.config, rng);
  ck.stats.variant = ck.config.variant;
  for (int k = 0; k < ck.config.input_width(); ++k) {
    ck.stats.min.push_back(-UniformUnit(rng));
    ck.stats.max.push_back(UniformUnit(rng) * 100);
  }
  ck.step = static_cast<std::int64_t>(seed * 7);
  return ck;
}

TEST(Checkpoint, RoundTrip) {
  const Checkpoint ck = RandomCheckpoint(3);
  testing::TempDir dir("ckpt");
  SaveCheckpoint(ck, dir / "m.ckpt");
  const Checkpoint back = LoadCheckpoint(dir / "m.ckpt", SchemaVariant::kMinimal);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_TRUE(back.params == ck.params);
  EXPECT_EQ(back.stats, ck.stats);
  EXPECT_EQ(back.step, ck.step);
  EXPECT_EQ(EncodeCheckpoint(back), EncodeCheckpoint(ck));
  EXPECT_EQ(CodeOf([&] { LoadCheckpoint(dir / "m.ckpt", SchemaVariant::kFull); }),
            ErrorCode::kVersionMismatch);
  EXPECT_EQ(CodeOf([&] { LoadCheckpoint(dir / "missing.ckpt"); }), ErrorCode::kIo);
}

TEST(Checkpoint, Corruption) {
  auto bytes = EncodeCheckpoint(RandomCheckpoint(4));
  bytes[bytes.size() / 3] ^= 1;
  EXPECT_EQ(CodeOf([&] { DecodeCheckpoint(bytes); }), ErrorCode::kChecksumMismatch);
  bytes.resize(4);
  EXPECT_EQ(CodeOf([&] { DecodeCheckpoint(bytes); }), ErrorCode::kChecksumMismatch);
}

TEST(Model, PredictSamplesMatchesForward) {
  const ModelConfig cfg = GradientCheckConfig();
  Rng rng(6);
  const auto params = InitParams<float>(cfg, rng);
  SampleSet set(cfg.variant, cfg.input_width());
  std::vector<float> f(kHeroCount * cfg.input_width());
  for (int i = 0; i < 1500; ++i) {
    for (float& x : f) x = static_cast<float>(UniformUnit(rng));
    set.Add(f, 0, 0, 0.0f);
  }
  const Mat<float> probs = PredictSamples(params, set);
  const Mat<float> direct = Forward(params, HeroInputs<float>(set.raw_features(), cfg.input_width()));
  ASSERT_EQ(probs.cols(), 1500);
  EXPECT_LT((probs - direct).cwiseAbs().maxCoeff(), 1e-6f);
}

}  // namespace
}  // namespace deathcast
