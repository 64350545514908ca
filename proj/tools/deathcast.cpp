// Command line front end: synth, ingest, extract, train, search, eval,
// predict and schema-dump.

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "deathcast/dataset.hpp"
#include "deathcast/error.hpp"
#include "deathcast/eval.hpp"
#include "deathcast/features.hpp"
#include "deathcast/match.hpp"
#include "deathcast/model.hpp"
#include "deathcast/parallel.hpp"
#include "deathcast/synth.hpp"
#include "deathcast/text.hpp"
#include "deathcast/train.hpp"

namespace fs = std::filesystem;
using namespace deathcast;

namespace {

constexpr char kEnvPrefix[] = "DEATHCAST_";
constexpr char kStoreIndex[] = "index.tsv";
constexpr char kManifestFile[] = "manifest.tsv";
constexpr char kNormStatsFile[] = "norm_stats.tsv";
constexpr char kSynthSidecar[] = "synth.cfg";

using Settings = std::vector<std::pair<std::string, std::string>>;

Settings ReadSettingsFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  Settings out;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig,
                  path + ":" + std::to_string(number) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

int ParseIntValue(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used == value.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::kInvalidConfig, "bad value '" + value + "' for " + key);
}

double ParseDoubleValue(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::kInvalidConfig, "bad value '" + value + "' for " + key);
}

std::uint64_t ParseSeedValue(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] != '-') {
      const std::uint64_t v = std::stoull(value, &used);
      if (used == value.size()) return v;
    }
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::kInvalidConfig, "bad value '" + value + "' for " + key);
}

// Flags that map onto config-file keys. Values given on the command line or
// through DEATHCAST_<KEY> take precedence over the --config file.
class SettingFlags {
 public:
  void Add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    Binding& b = bindings_.emplace_back();
    b.key = key;
    std::string env = kEnvPrefix + key;
    std::transform(env.begin(), env.end(), env.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    b.option = app->add_option(flag, b.value, help)->envname(env);
  }

  Settings Given() const {
    Settings out;
    for (const Binding& b : bindings_) {
      if (b.option->count() > 0) out.emplace_back(b.key, b.value);
    }
    return out;
  }

 private:
  struct Binding {
    std::string key;
    std::string value;
    CLI::Option* option = nullptr;
  };
  std::deque<Binding> bindings_;
};

struct Command {
  CLI::App* app = nullptr;
  SettingFlags flags;
  std::string config_path;
  std::vector<std::string> inputs;
  std::string out;
  std::string data;
  std::string store;
  std::string checkpoint;

  void AddConfig() {
    app->add_option("--config", config_path, "key=value settings file")
        ->envname(std::string(kEnvPrefix) + "CONFIG");
  }

  // Config file entries first, then flag and environment overrides.
  Settings Resolve() const {
    Settings s;
    if (!config_path.empty()) s = ReadSettingsFile(config_path);
    for (auto& kv : flags.Given()) s.push_back(kv);
    return s;
  }
};

int DefaultThreads() {
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::string SafeFileName(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

bool IsMatchFile(const fs::path& p) {
  const std::string name = p.filename().string();
  auto ends = [&](const std::string& suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends(".jsonl") || ends(".jsonl.gz") || ends(".json") || ends(".json.gz");
}

std::vector<std::string> ExpandInputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const std::string& input : inputs) {
    if (fs::is_directory(input)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::directory_iterator(input)) {
        if (entry.is_regular_file() && IsMatchFile(entry.path())) found.push_back(entry.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(input)) {
      files.push_back(input);
    } else {
      throw Error(ErrorCode::kIo, "no such file or directory: " + input);
    }
  }
  return files;
}

void EnsureDirectory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir + ": " + ec.message());
}

std::ofstream OpenOutput(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  return out;
}

struct StoreEntry {
  std::string id;
  std::string path;
};

std::vector<StoreEntry> LoadStore(const std::string& dir) {
  const fs::path index = fs::path(dir) / kStoreIndex;
  std::ifstream in(index);
  if (!in) throw Error(ErrorCode::kIo, "cannot open match store index " + index.string());
  std::vector<StoreEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    StoreEntry e;
    std::string file;
    if (!std::getline(fields, e.id, '\t') || !std::getline(fields, file, '\t')) {
      throw Error(ErrorCode::kSchemaViolation, index.string() + ": bad line '" + line + "'");
    }
    e.path = (fs::path(dir) / file).string();
    out.push_back(std::move(e));
  }
  return out;
}

std::map<std::string, std::string> StorePaths(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (StoreEntry& e : LoadStore(dir)) out.emplace(std::move(e.id), std::move(e.path));
  return out;
}

MatchLoader FileLoader(const std::vector<std::string>& paths) {
  return [&paths](std::size_t i) { return ReadMatchFile(paths[i]); };
}

std::vector<std::string> PathsFor(const std::map<std::string, std::string>& store,
                                  const std::vector<std::string>& ids) {
  std::vector<std::string> paths;
  for (const std::string& id : ids) {
    auto it = store.find(id);
    if (it == store.end()) {
      throw Error(ErrorCode::kSchemaViolation, "match " + id + " is not in the store");
    }
    paths.push_back(it->second);
  }
  return paths;
}

std::string ResolveInDir(const std::string& dir, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? name : (fs::path(dir) / p).string();
}

std::vector<Shard> LoadShards(const std::string& dir, const std::vector<std::string>& names,
                              SchemaVariant variant) {
  std::vector<Shard> shards;
  for (const std::string& name : names) shards.push_back(ReadShard(ResolveInDir(dir, name), variant));
  return shards;
}


// ---------------------------------------------------------------------------

int RunSynth(const Command& cmd) {
  SynthConfig cfg;
  int threads = DefaultThreads();
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "threads") {
      threads = ParseIntValue(key, value);
    } else {
      ApplySetting(cfg, key, value);
    }
  }
  cfg.Validate();
  EnsureDirectory(cmd.out);
  const std::vector<std::string> ids =
      ParallelMap<std::string>(static_cast<std::size_t>(cfg.match_count), threads,
                               [&](std::size_t i) {
                                 const MatchRecord m =
                                     GenerateMatch(cfg, MatchSeed(cfg, static_cast<int>(i)));
                                 WriteMatchFile(m, (fs::path(cmd.out) /
                                                    (SafeFileName(m.match_id) + ".jsonl.gz"))
                                                       .string());
                                 return m.match_id;
                               });
  SaveSynthConfig(cfg, (fs::path(cmd.out) / kSynthSidecar).string());
  std::cout << "generated\t" << ids.size() << "\n" << "generator\t" << cfg.GeneratorTag() << '\n';
  return 0;
}

int RunIngest(const Command& cmd) {
  int threads = DefaultThreads();
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "threads") {
      threads = ParseIntValue(key, value);
    } else {
      throw Error(ErrorCode::kInvalidConfig, "unknown ingest setting '" + key + "'");
    }
  }
  const std::vector<std::string> files = ExpandInputs(cmd.inputs);
  if (files.empty()) throw Error(ErrorCode::kInvalidConfig, "no match files given");
  EnsureDirectory(cmd.store);

  struct Ingested {
    std::string id;
    std::string file;
    std::size_t frames = 0;
    std::size_t deaths = 0;
  };
  // Each file is parsed once and rewritten in canonical form; the index is
  // only replaced after every file has been accepted.
  const std::vector<Ingested> parsed =
      ParallelMap<Ingested>(files.size(), threads, [&](std::size_t i) {
        try {
          const MatchRecord m = ReadMatchFile(files[i]);
          Ingested out{m.match_id, SafeFileName(m.match_id) + ".jsonl.gz", m.frames.size(),
                       m.deaths.size()};
          WriteMatchFile(m, (fs::path(cmd.store) / (".partial." + out.file)).string());
          return out;
        } catch (const Error& e) {
          throw Error(e.code(), files[i] + ": " + e.what());
        }
      });
  std::map<std::string, std::size_t> by_id;
  std::set<std::string> names;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (!by_id.emplace(parsed[i].id, i).second) {
      throw Error(ErrorCode::kSchemaViolation, "duplicate match id " + parsed[i].id);
    }
    if (!names.insert(parsed[i].file).second) {
      throw Error(ErrorCode::kSchemaViolation, "match ids collide after sanitizing: " + parsed[i].id);
    }
  }
  for (const Ingested& m : parsed) {
    fs::rename(fs::path(cmd.store) / (".partial." + m.file), fs::path(cmd.store) / m.file);
  }
  std::ofstream index = OpenOutput((fs::path(cmd.store) / kStoreIndex).string());
  index << "# match_id\tfile\tframes\tdeaths\n";
  for (const auto& [id, i] : by_id) {
    index << id << '\t' << parsed[i].file << '\t' << parsed[i].frames << '\t' << parsed[i].deaths
          << '\n';
  }
  std::cout << "ingested\t" << parsed.size() << '\n';
  return 0;
}

int RunExtract(const Command& cmd) {
  SchemaVariant variant = SchemaVariant::kMinimal;
  double window = kDefaultWindowSeconds;
  int period = kDefaultPeriodTicks;
  std::uint64_t seed = 1;
  double drop = kDefaultDropFraction;
  int threads = DefaultThreads();
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "schema") variant = ParseVariant(value);
    else if (key == "window_seconds") window = ParseDoubleValue(key, value);
    else if (key == "period_ticks") period = ParseIntValue(key, value);
    else if (key == "seed") seed = ParseSeedValue(key, value);
    else if (key == "drop_fraction") drop = ParseDoubleValue(key, value);
    else if (key == "threads") threads = ParseIntValue(key, value);
    else throw Error(ErrorCode::kInvalidConfig, "unknown extract setting '" + key + "'");
  }
  if (!(window > 0.0)) throw Error(ErrorCode::kNonPositiveWindow, "window must be positive");
  if (period < 1) throw Error(ErrorCode::kInvalidConfig, "period_ticks must be positive");

  const auto store = StorePaths(cmd.store);
  std::vector<std::string> ids;
  for (const auto& [id, path] : store) ids.push_back(id);
  SplitManifest manifest = SplitMatches(ids, seed);
  manifest.shuffle_seed = seed + 1;
  manifest.undersample_seed = seed + 2;
  manifest.variant = variant;
  manifest.window_seconds = window;
  manifest.period_ticks = period;
  if (manifest.train.empty() || manifest.validation.empty()) {
    throw Error(ErrorCode::kInsufficientPositives,
                "too few matches to form training and validation splits");
  }

  const FeatureSchema& schema = FeatureSchema::Get(variant);
  const std::vector<std::string> train_paths = PathsFor(store, manifest.train);
  const std::vector<std::string> val_paths = PathsFor(store, manifest.validation);
  const NormalizationStats stats = ComputeMatchNormStats(
      train_paths.size(), FileLoader(train_paths), schema, period, threads);

  EnsureDirectory(cmd.out);
  for (const auto& entry : fs::directory_iterator(cmd.out)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() == ".shard" &&
        (name.rfind("train-", 0) == 0 || name.rfind("validation-", 0) == 0)) {
      fs::remove(entry.path());
    }
  }
  auto build = [&](const std::vector<std::string>& paths, const std::string& prefix) {
    const SampleSet samples = ShuffleSamples(
        UndersampleNegatives(BuildSamples(paths.size(), FileLoader(paths), schema, stats, period,
                                          window, threads),
                             drop, manifest.undersample_seed),
        manifest.shuffle_seed);
    std::vector<std::string> names;
    for (const std::string& p : WriteShards(samples, cmd.out, prefix)) {
      names.push_back(fs::path(p).filename().string());
    }
    std::cout << prefix << "_samples\t" << samples.size() << '\n';
    return names;
  };
  manifest.train_shards = build(train_paths, "train");
  manifest.validation_shards = build(val_paths, "validation");
  SaveNormStats(stats, (fs::path(cmd.out) / kNormStatsFile).string());
  SaveManifest(manifest, (fs::path(cmd.out) / kManifestFile).string());
  std::cout << "train_matches\t" << manifest.train.size() << "\nvalidation_matches\t"
            << manifest.validation.size() << "\ntest_matches\t" << manifest.test.size() << '\n';
  return 0;
}

struct LoadedData {
  SplitManifest manifest;
  NormalizationStats stats;
};

LoadedData LoadData(const std::string& dir) {
  LoadedData d;
  d.manifest = LoadManifest((fs::path(dir) / kManifestFile).string());
  d.stats = LoadNormStats((fs::path(dir) / kNormStatsFile).string());
  if (d.stats.variant != d.manifest.variant) {
    throw Error(ErrorCode::kSchemaMismatch, "normalization stats and manifest disagree on schema");
  }
  return d;
}

void CheckMatchesManifest(const SplitManifest& m, SchemaVariant variant, double window) {
  if (variant != m.variant) {
    throw Error(ErrorCode::kSchemaMismatch, "requested schema " + std::string(VariantName(variant)) +
                                                " but shards hold " +
                                                std::string(VariantName(m.variant)));
  }
  if (window != m.window_seconds) {
    throw Error(ErrorCode::kSchemaMismatch, "requested window differs from the shards' labels");
  }
}

void WriteTrainConfig(const ModelConfig& m, std::ostream& out) {
  out << "schema=" << VariantName(m.variant) << '\n'
      << "shared_layers=" << FormatLayers(m.shared_layers) << '\n'
      << "final_layers=" << FormatLayers(m.final_layers) << '\n'
      << "learning_rate=" << FormatShortest(m.learning_rate) << '\n'
      << "batch_size=" << m.batch_size << '\n'
      << "seed=" << m.seed << '\n'
      << "window_seconds=" << FormatShortest(m.window_seconds) << '\n';
}

int RunTrain(const Command& cmd) {
  const LoadedData data = LoadData(cmd.data);
  const Settings settings = cmd.Resolve();
  TrainRunConfig cfg;
  SchemaVariant variant = data.manifest.variant;
  for (const auto& [key, value] : settings) {
    if (key == "schema") variant = ParseVariant(value);
  }
  cfg.model = ModelConfig::Reference(variant);
  cfg.model.window_seconds = data.manifest.window_seconds;
  for (const auto& [key, value] : settings) {
    if (key == "threads") continue;  // the step loop is sequential
    ApplySetting(cfg, key, value);
  }
  CheckMatchesManifest(data.manifest, cfg.model.variant, cfg.model.window_seconds);
  cfg.Validate();

  const ShardPool train(LoadShards(cmd.data, data.manifest.train_shards, variant));
  const ShardPool validation(LoadShards(cmd.data, data.manifest.validation_shards, variant));
  const TrainResult result = Train(cfg, train, validation, data.stats);

  EnsureDirectory(cmd.out);
  SaveCheckpoint(result.best, (fs::path(cmd.out) / "model.ckpt").string());
  std::ofstream log = OpenOutput((fs::path(cmd.out) / "metrics.tsv").string());
  WriteMetricsLog(result.log, log);
  std::ofstream used = OpenOutput((fs::path(cmd.out) / "train.cfg").string());
  WriteTrainConfig(cfg.model, used);
  used << "max_steps=" << cfg.max_steps << "\nvalidation_interval=" << cfg.validation_interval
       << "\nsampler_seed=" << cfg.sampler_seed << '\n';
  std::cout << "best_step\t" << result.best.step << "\nbest_val_ap\t"
            << FormatShortest(result.best_val_ap) << '\n';
  return 0;
}

int RunSearch(const Command& cmd) {
  const LoadedData data = LoadData(cmd.data);
  SearchSpace space;
  space.variant = data.manifest.variant;
  space.window_seconds = data.manifest.window_seconds;
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "threads") continue;
    ApplySetting(space, key, value);
  }
  CheckMatchesManifest(data.manifest, space.variant, space.window_seconds);
  const ShardPool train(LoadShards(cmd.data, data.manifest.train_shards, space.variant));
  const ShardPool validation(LoadShards(cmd.data, data.manifest.validation_shards, space.variant));
  const SearchResult result = RandomSearch(space, train, validation, data.stats);

  EnsureDirectory(cmd.out);
  std::ofstream table = OpenOutput((fs::path(cmd.out) / "trials.tsv").string());
  WriteTrialTable(result, table);
  std::ofstream best = OpenOutput((fs::path(cmd.out) / "best.cfg").string());
  WriteTrainConfig(result.best, best);
  WriteTrialTable(result, std::cout);
  return 0;
}

int RunEval(const Command& cmd) {
  const LoadedData data = LoadData(cmd.data);
  int threads = DefaultThreads();
  int period = data.manifest.period_ticks;
  std::vector<double> thresholds = {0.5, kReferenceThreshold};
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "threads") threads = ParseIntValue(key, value);
    else if (key == "period_ticks") period = ParseIntValue(key, value);
    else if (key == "threshold") thresholds.push_back(ParseDoubleValue(key, value));
    else throw Error(ErrorCode::kInvalidConfig, "unknown eval setting '" + key + "'");
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const Checkpoint checkpoint = LoadCheckpoint(cmd.checkpoint, data.manifest.variant);
  std::vector<std::string> paths;
  std::vector<std::string> ids;
  if (!cmd.inputs.empty()) {
    paths = ExpandInputs(cmd.inputs);
    for (const std::string& p : paths) ids.push_back(ReadMatchFile(p).match_id);
  } else {
    if (cmd.store.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "eval needs --store or explicit match files");
    }
    ids = data.manifest.test;
    paths = PathsFor(StorePaths(cmd.store), ids);
  }
  CheckNoTrainingMatches(data.manifest, ids);
  if (paths.empty()) throw Error(ErrorCode::kEmptyStream, "no test matches to evaluate");

  const std::vector<MatchPredictions> predictions =
      PredictMatches(checkpoint, paths.size(), FileLoader(paths), period, threads);
  const EvalReport report = EvaluatePredictions(predictions, thresholds);
  const TimeToDeathDistribution distribution = TimeToDeath(predictions);

  EnsureDirectory(cmd.out);
  std::ofstream report_out = OpenOutput((fs::path(cmd.out) / "report.txt").string());
  WriteEvalReport(report, report_out);
  std::ofstream curve_out = OpenOutput((fs::path(cmd.out) / "pr_curve.tsv").string());
  WritePrCurve(report.curve, curve_out);
  std::ofstream dist_out = OpenOutput((fs::path(cmd.out) / "distribution.tsv").string());
  WriteDistribution(distribution, dist_out);
  WriteEvalReport(report, std::cout);
  return 0;
}

int RunPredict(const Command& cmd) {
  int period = kDefaultPeriodTicks;
  double threshold = 0.5;
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "period_ticks") period = ParseIntValue(key, value);
    else if (key == "threshold") threshold = ParseDoubleValue(key, value);
    else if (key == "threads") continue;
    else throw Error(ErrorCode::kInvalidConfig, "unknown predict setting '" + key + "'");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "threshold must lie in (0, 1)");
  }
  const Checkpoint checkpoint = LoadCheckpoint(cmd.checkpoint);
  const MatchRecord match = ReadMatchFile(cmd.inputs.front());
  const MatchPredictions predictions = PredictMatch(checkpoint, match, period);
  const PredictionTimeline timeline =
      BuildTimeline(predictions, threshold, checkpoint.config.window_seconds);
  if (!fs::path(cmd.out).parent_path().empty()) EnsureDirectory(fs::path(cmd.out).parent_path().string());
  SaveTimeline(timeline, cmd.out);

  const MispredictionCounts counts = ClassifyMispredictions(timeline);
  std::cout << "samples\t" << timeline.game_times.size() << '\n'
            << "false_negatives\t" << counts.false_negatives << '\n'
            << "near_false_positives\t" << counts.near_false_positives << '\n'
            << "far_false_positives\t" << counts.far_false_positives << '\n';
  try {
    const SpearmanResult health = HealthCorrelation(predictions, match);
    std::cout << "health_spearman_rho\t" << FormatShortest(health.rho) << '\n'
              << "health_spearman_p\t" << FormatShortest(health.p_value) << '\n';
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConstantInput && e.code() != ErrorCode::kInvalidConfig) throw;
    std::cout << "health_spearman_rho\tnan\nhealth_spearman_p\tnan\n";
  }
  return 0;
}

int RunSchemaDump(const Command& cmd) {
  std::string name = cmd.inputs.empty() ? std::string() : cmd.inputs.front();
  for (const auto& [key, value] : cmd.Resolve()) {
    if (key == "schema" && name.empty()) name = value;
  }
  if (name.empty()) throw Error(ErrorCode::kInvalidConfig, "schema-dump needs a schema variant");
  std::cout << DumpSchema(FeatureSchema::Get(ParseVariant(name)));
  return 0;
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kInvalidArchitecture:
      return 2;
    case ErrorCode::kInsufficientPositives:
      return 4;
    case ErrorCode::kIo:
      return 5;
    default:
      return 3;
  }
}

void PrintError(std::string_view kind, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  std::replace(flat.begin(), flat.end(), '\t', ' ');
  std::cerr << "error\t" << kind << '\t' << flat << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Death micro-prediction pipeline"};
  app.require_subcommand(1);

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    return c;
  };

  Command& synth = add("synth", "generate synthetic matches");
  synth.AddConfig();
  synth.app->add_option("--out", synth.out, "output directory")->required();
  synth.flags.Add(synth.app, "--matches", "match_count", "number of matches");
  synth.flags.Add(synth.app, "--frames", "frames_per_match", "frames per match");
  synth.flags.Add(synth.app, "--seed", "seed", "corpus seed");
  synth.flags.Add(synth.app, "--threads", "threads", "worker threads");

  Command& ingest = add("ingest", "validate match files into a match store");
  ingest.AddConfig();
  ingest.app->add_option("inputs", ingest.inputs, "match files or directories")->required();
  ingest.app->add_option("--store", ingest.store, "match store directory")->required();
  ingest.flags.Add(ingest.app, "--threads", "threads", "worker threads");

  Command& extract = add("extract", "split matches and write shards and norm stats");
  extract.AddConfig();
  extract.app->add_option("--store", extract.store, "match store directory")->required();
  extract.app->add_option("--out", extract.out, "data directory")->required();
  extract.flags.Add(extract.app, "--schema", "schema", "minimal, medium or full");
  extract.flags.Add(extract.app, "--window-seconds", "window_seconds", "label window");
  extract.flags.Add(extract.app, "--period-ticks", "period_ticks", "sampling period");
  extract.flags.Add(extract.app, "--seed", "seed", "split seed");
  extract.flags.Add(extract.app, "--drop-fraction", "drop_fraction", "negative undersampling");
  extract.flags.Add(extract.app, "--threads", "threads", "worker threads");

  Command& train = add("train", "train a model on extracted shards");
  train.AddConfig();
  train.app->add_option("--data", train.data, "data directory from extract")->required();
  train.app->add_option("--out", train.out, "run directory")->required();
  train.flags.Add(train.app, "--schema", "schema", "minimal, medium or full");
  train.flags.Add(train.app, "--window-seconds", "window_seconds", "label window");
  train.flags.Add(train.app, "--seed", "seed", "initialization seed");
  train.flags.Add(train.app, "--sampler-seed", "sampler_seed", "batch sampling seed");
  train.flags.Add(train.app, "--max-steps", "max_steps", "training steps");
  train.flags.Add(train.app, "--validation-interval", "validation_interval", "steps between validations");
  train.flags.Add(train.app, "--learning-rate", "learning_rate", "Adam learning rate");
  train.flags.Add(train.app, "--batch-size", "batch_size", "balanced batch size");
  train.flags.Add(train.app, "--shared-layers", "shared_layers", "encoder widths, e.g. 32,16");
  train.flags.Add(train.app, "--final-layers", "final_layers", "head widths, e.g. 64,32");
  train.flags.Add(train.app, "--threads", "threads", "ignored; training is sequential");

  Command& search = add("search", "random hyperparameter search");
  search.AddConfig();
  search.app->add_option("--data", search.data, "data directory from extract")->required();
  search.app->add_option("--out", search.out, "search directory")->required();
  search.flags.Add(search.app, "--schema", "schema", "minimal, medium or full");
  search.flags.Add(search.app, "--window-seconds", "window_seconds", "label window");
  search.flags.Add(search.app, "--seed", "seed", "search seed");
  search.flags.Add(search.app, "--budget", "budget", "number of trials");
  search.flags.Add(search.app, "--steps-per-trial", "steps_per_trial", "training steps per trial");
  search.flags.Add(search.app, "--threads", "threads", "ignored; trials run in order");

  Command& eval = add("eval", "evaluate a checkpoint on held-out matches");
  eval.AddConfig();
  eval.app->add_option("inputs", eval.inputs, "match files (default: the manifest's test split)");
  eval.app->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval.app->add_option("--data", eval.data, "data directory from extract")->required();
  eval.app->add_option("--store", eval.store, "match store directory");
  eval.app->add_option("--out", eval.out, "report directory")->required();
  eval.flags.Add(eval.app, "--threshold", "threshold", "extra operating point");
  eval.flags.Add(eval.app, "--period-ticks", "period_ticks", "sampling period");
  eval.flags.Add(eval.app, "--threads", "threads", "worker threads");

  Command& predict = add("predict", "write a per-hero probability timeline for one match");
  predict.AddConfig();
  predict.app->add_option("match", predict.inputs, "match file")->required()->expected(1);
  predict.app->add_option("--checkpoint", predict.checkpoint, "checkpoint file")->required();
  predict.app->add_option("--out", predict.out, "timeline file")->required();
  predict.flags.Add(predict.app, "--threshold", "threshold", "alarm threshold");
  predict.flags.Add(predict.app, "--period-ticks", "period_ticks", "sampling period");
  predict.flags.Add(predict.app, "--threads", "threads", "ignored");

  Command& dump = add("schema-dump", "list the features of a schema variant");
  dump.app->alias("schema_dump");
  dump.AddConfig();
  dump.app->add_option("variant", dump.inputs, "minimal, medium or full")->expected(0, 1);
  dump.flags.Add(dump.app, "--schema", "schema", "minimal, medium or full");

  const std::map<std::string, int (*)(const Command&)> runners = {
      {"synth", RunSynth},     {"ingest", RunIngest}, {"extract", RunExtract},
      {"train", RunTrain},     {"search", RunSearch}, {"eval", RunEval},
      {"predict", RunPredict}, {"schema-dump", RunSchemaDump},
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    PrintError("usage", e.what());
    return 2;
  }

  try {
    for (auto& [name, command] : commands) {
      if (command.app->parsed()) return runners.at(name)(command);
    }
    return 2;
  } catch (const Error& e) {
    PrintError(ErrorCodeName(e.code()), e.what());
    return ExitCodeFor(e.code());
  } catch (const fs::filesystem_error& e) {
    PrintError(ErrorCodeName(ErrorCode::kIo), e.what());
    return 5;
  } catch (const std::exception& e) {
    PrintError("internal", e.what());
    return 1;
  }
}
