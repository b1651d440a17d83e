/*
 * Copyright 2026 The loft Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "loft/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "loft/digest.hpp"
#include "loft/embedstore.hpp"
#include "loft/error.hpp"
#include "loft/evalkit.hpp"
#include "loft/kernels.hpp"
#include "loft/trainer.hpp"
#include "loft/zeroshot.hpp"

namespace loft {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// Split directory layout.
constexpr const char* kPoolFile = "pool.lftb";
constexpr const char* kLabeledFile = "labeled.json";
constexpr const char* kUnlabeledFile = "unlabeled.json";
constexpr const char* kTestFile = "test.json";
constexpr const char* kTruthFile = "truth.json";
// Run directory layout.
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kTrainLogFile = "trainlog.jsonl";
constexpr const char* kStage1File = "stage1_kept.json";
constexpr const char* kReportFile = "report.json";
constexpr const char* kReliabilityFile = "reliability.csv";
constexpr const char* kSweepFile = "sweep.csv";

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

void WriteJson(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

// Provenance record written once per run directory.
class RunManifest {
 public:
  RunManifest(std::string command, const std::vector<std::string>& argv)
      : start_(Clock::now()) {
    doc_["tool"] = "loft";
    doc_["version"] = kToolVersion;
    doc_["command"] = std::move(command);
    doc_["argv"] = argv;
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
    doc_["timings"] = json::object();
  }

  void Input(const std::string& role, const fs::path& path) {
    doc_["inputs"][role] = {{"path", path.string()}, {"sha256", Sha256FileHex(path)}};
  }
  void Output(const std::string& role, const fs::path& path) {
    doc_["outputs"][role] = {{"path", path.filename().string()},
                             {"sha256", Sha256FileHex(path)}};
  }
  void Timing(const std::string& phase, double seconds) {
    doc_["timings"][phase] = seconds;
  }
  json& operator[](const std::string& key) { return doc_[key]; }

  // A directory keeps one manifest. When another command's manifest is
  // already there, this record is nested under the command name instead.
  void Write(const fs::path& path) {
    doc_["timings"]["total_seconds"] = Seconds(start_);
    if (fs::exists(path)) {
      json existing = ReadJson(path);
      const std::string command = doc_["command"];
      if (existing.is_object() && existing.value("command", "") != command) {
        existing[command] = doc_;
        WriteJson(existing, path);
        return;
      }
    }
    WriteJson(doc_, path);
  }

 private:
  json doc_;
  Clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Split directories.

struct SplitDir {
  DatasetBundle bundle;
  IndexSet labeled;
  IndexSet unlabeled;
  IndexSet test;
  SealedTruth truth;
};

SplitDir LoadSplit(const fs::path& dir) {
  SplitDir s;
  s.bundle = ReadBundle(dir / kPoolFile);
  s.labeled = s.bundle.IndicesOf(ReadIdList(dir / kLabeledFile));
  s.unlabeled = s.bundle.IndicesOf(ReadIdList(dir / kUnlabeledFile));
  s.test = s.bundle.IndicesOf(ReadIdList(dir / kTestFile));
  s.truth = SealedTruth::FromJson(ReadJson(dir / kTruthFile));
  return s;
}

void RecordSplitInputs(RunManifest& manifest, const fs::path& dir) {
  for (const char* f : {kPoolFile, kLabeledFile, kUnlabeledFile, kTestFile, kTruthFile}) {
    manifest.Input(std::string("split/") + f, dir / f);
  }
}

std::vector<const EmbeddingRecord*> Pointers(const DatasetBundle& bundle,
                                             const IndexSet& indices) {
  std::vector<const EmbeddingRecord*> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(&bundle.records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Training flags shared by `train` and `sweep`.

struct TrainFlags {
  std::string split;
  std::string mode = "loft";
  TrainConfig cfg;
  std::string prototypes;
  std::string temperature = "100";
  bool serial = false;
  double resolved_temperature = kDefaultZeroShotTemperature;
};

void AddTrainFlags(CLI::App* app, TrainFlags& f) {
  TrainConfig& c = f.cfg;
  app->add_option("--split", f.split, "Split directory")->required()->check(CLI::ExistingDirectory);
  app->add_option("--mode", f.mode, "supervised | loft | loft-ow")
      ->check(CLI::IsMember({"supervised", "supervised_only", "loft", "loft-ow", "loft_ow"}))
      ->capture_default_str();
  app->add_option("--c-u", c.loss.c_u, "Confidence cutoff for hard pseudo-labels")
      ->capture_default_str();
  app->add_option("--c-ood", c.loss.c_ood, "Confidence cutoff for OOD rejection")
      ->capture_default_str();
  app->add_option("--t-hc", c.t_hc, "Zero-shot high-confidence threshold")
      ->capture_default_str();
  app->add_option("--tau", c.loss.tau, "Logit adjustment strength")->capture_default_str();
  app->add_option("--lambda1", c.loss.lambda1)->capture_default_str();
  app->add_option("--lambda2", c.loss.lambda2)->capture_default_str();
  app->add_flag("--adjust-confidence", c.loss.adjust_confidence,
                "Masks from prior-adjusted weak logits");
  app->add_option("--iters", c.iterations)->capture_default_str();
  app->add_option("--seed", c.seed)->capture_default_str();
  app->add_option("--batch-labeled", c.batch_labeled)->capture_default_str();
  app->add_option("--batch-unlabeled", c.batch_unlabeled)->capture_default_str();
  app->add_option("--lr", c.learning_rate)->capture_default_str();
  app->add_option("--momentum", c.momentum)->capture_default_str();
  app->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  app->add_flag("--cosine", c.cosine_schedule, "Cosine learning-rate decay");
  app->add_option("--eval-every", c.eval_every)->capture_default_str();
  app->add_flag("--adapter", c.adapter.enabled, "Residual bottleneck adapter");
  app->add_option("--adapter-rank", c.adapter.rank)->capture_default_str();
  app->add_option("--prototypes", f.prototypes, "Prototype file (required for loft-ow)")
      ->check(CLI::ExistingFile);
  app->add_option("--temperature", f.temperature,
                  "Zero-shot temperature, or 'auto' to fit it on the labeled split")
      ->capture_default_str();
  app->add_flag("--serial", f.serial, "Use the serial reference kernels");
}

// Validates the flags and fills in the mode and execution policy.
TrainConfig ResolveConfig(TrainFlags& f) {
  f.cfg.mode = ParseTrainMode(f.mode);
  f.cfg.exec = f.serial ? Exec::kSerial : Exec::kParallel;
  if (f.cfg.mode == TrainMode::kLoftOw && f.prototypes.empty()) {
    throw Error(ErrorKind::kParameter, "--mode loft-ow requires --prototypes");
  }
  f.cfg.Validate();
  return f.cfg;
}

// "auto" picks the smallest temperature at which 95% of the labeled split
// passes the t_hc filter.
std::optional<PrototypeBank> LoadPrototypes(TrainFlags& f, const SplitDir& split,
                                            double t_hc) {
  if (f.prototypes.empty()) return std::nullopt;
  PrototypeBank raw = ReadPrototypes(f.prototypes);
  if (raw.classes() != split.bundle.classes || raw.dim() != split.bundle.dim) {
    throw Error(ErrorKind::kFormat, "prototype file shape " + std::to_string(raw.classes()) +
                                        "x" + std::to_string(raw.dim()) +
                                        " does not match the split");
  }
  if (f.temperature == "auto") {
    f.resolved_temperature =
        CalibrateTemperature(split.bundle, split.labeled, raw.prototypes(), t_hc);
  } else {
    std::size_t used = 0;
    try {
      f.resolved_temperature = std::stod(f.temperature, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != f.temperature.size() || !(f.resolved_temperature > 0.0)) {
      throw Error(ErrorKind::kParameter,
                  "--temperature must be a positive number or 'auto'");
    }
  }
  return PrototypeBank(raw.prototypes(), f.resolved_temperature);
}

TrainData MakeTrainData(const SplitDir& split, const PrototypeBank* bank) {
  TrainData data;
  data.bundle = &split.bundle;
  data.labeled = split.labeled;
  data.unlabeled = split.unlabeled;
  data.test = split.test;
  data.truth = &split.truth;
  data.prototypes = bank;
  return data;
}

EvalReport EvaluateHead(const ClassifierHead& head, const SplitDir& split,
                        const EvalOptions& options,
                        const std::vector<const EmbeddingRecord*>& ood) {
  const auto test = Pointers(split.bundle, split.test);
  const auto counts = ClassCounts(split.bundle, split.labeled);
  return Evaluate(head, test, counts, options, ood);
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  SynthParams params;
  std::string output;
  std::string prototypes;
  std::size_t probe_per_class = 50;
  std::string orthogonal_to;
};

// Generator parameters recorded in a synthetic bundle's manifest.
SynthParams SynthParamsOf(const DatasetBundle& bundle, const std::string& path) {
  const json& m = bundle.manifest;
  if (m.value("source", "") != "synthetic" || !m.contains("generator")) {
    throw Error(ErrorKind::kFormat, path + " is not a synthetic bundle");
  }
  SynthParams p;
  p.classes = m["generator"].at("classes").get<std::size_t>();
  p.dim = m["generator"].at("dim").get<std::size_t>();
  p.per_class = m["generator"].at("per_class").get<std::size_t>();
  p.separation = m["generator"].at("separation").get<double>();
  p.seed = m.at("seed").get<std::uint64_t>();
  return p;
}

void RunSynth(SynthFlags f, const std::vector<std::string>& argv, std::ostream& out,
              const CLI::App& app) {
  RunManifest manifest("synth", argv);
  std::optional<SynthParams> id_params;
  if (!f.orthogonal_to.empty()) {
    Require(f.prototypes.empty(), ErrorKind::kParameter,
            "--prototypes cannot be combined with --orthogonal-to");
    manifest.Input("orthogonal_to", f.orthogonal_to);
    id_params = SynthParamsOf(ReadBundle(f.orthogonal_to), f.orthogonal_to);
    if (app.count("--dim") == 0) f.params.dim = id_params->dim;
  }
  const fs::path path = f.output;
  if (path.has_parent_path()) EnsureDir(path.parent_path());
  manifest["seed"] = f.params.seed;
  manifest["config"] = {{"classes", f.params.classes},
                        {"dim", f.params.dim},
                        {"per_class", f.params.per_class},
                        {"separation", f.params.separation},
                        {"seed", f.params.seed},
                        {"probe_per_class", f.probe_per_class}};
  if (id_params) {
    manifest["config"]["orthogonal_to"] = {{"classes", id_params->classes},
                                           {"dim", id_params->dim},
                                           {"separation", id_params->separation},
                                           {"seed", id_params->seed}};
  }
  auto t0 = Clock::now();
  const DatasetBundle bundle =
      id_params ? SynthOodDataset(*id_params, f.params) : SynthDataset(f.params);
  WriteBundle(bundle, path);
  manifest.Timing("synth_seconds", Seconds(t0));
  manifest.Output("bundle", path);
  if (!f.prototypes.empty()) {
    const auto bank = PrototypeBank::FromVectors(SynthProbeMeans(f.params, f.probe_per_class));
    WritePrototypes(bank, bundle.class_names, f.prototypes);
    manifest.Output("prototypes", f.prototypes);
  }
  manifest.Write(fs::path(path.string() + ".manifest.json"));
  out << "wrote " << bundle.records.size() << " records to " << path.string() << '\n';
}

// ---------------------------------------------------------------------------
// split

struct SplitFlags {
  std::string data;
  SplitSpec spec;
  std::string gamma_u = "consistent";
  std::string ood_pool;
  double ood_ratio = 0.0;
  std::string out_dir;
};

void ParseGammaU(const std::string& value, SplitSpec& spec) {
  if (value == "consistent") {
    spec.regime = UnlabeledRegime::kConsistent;
  } else if (value == "uniform") {
    spec.regime = UnlabeledRegime::kUniform;
  } else if (value == "reversed") {
    spec.regime = UnlabeledRegime::kReversed;
  } else {
    std::size_t used = 0;
    double ratio = 0.0;
    try {
      ratio = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size()) {
      throw Error(ErrorKind::kParameter,
                  "--gamma-u must be consistent, uniform, reversed or a number; got '" +
                      value + "'");
    }
    spec.regime = UnlabeledRegime::kRatio;
    spec.gamma_u = ratio;
  }
}

double EffectiveGammaU(const SplitSpec& spec) {
  switch (spec.regime) {
    case UnlabeledRegime::kConsistent: return spec.gamma_l;
    case UnlabeledRegime::kUniform: return 1.0;
    case UnlabeledRegime::kReversed: return 1.0 / spec.gamma_l;
    case UnlabeledRegime::kRatio: return spec.gamma_u;
  }
  return spec.gamma_l;
}

void RunSplit(SplitFlags f, const std::vector<std::string>& argv, std::ostream& out) {
  if (f.ood_ratio > 0.0 && f.ood_pool.empty()) {
    throw Error(ErrorKind::kParameter, "--ood-ratio > 0 requires --ood-pool");
  }
  Require(f.ood_ratio >= 0.0 && f.ood_ratio < 1.0, ErrorKind::kParameter,
          "--ood-ratio must lie in [0, 1)");
  ParseGammaU(f.gamma_u, f.spec);
  f.spec.Validate();

  RunManifest manifest("split", argv);
  const fs::path dir = f.out_dir;
  EnsureDir(dir);
  manifest.Input("data", f.data);

  auto t0 = Clock::now();
  const DatasetBundle source = ReadBundle(f.data);
  LongTailSplit split = MakeLongTailSplit(source, f.spec);
  DatasetBundle pool_bundle = std::move(split.bundle);
  IndexSet unlabeled = split.unlabeled;
  std::size_t n_ood = 0;
  if (!f.ood_pool.empty() && f.ood_ratio > 0.0) {
    manifest.Input("ood_pool", f.ood_pool);
    const DatasetBundle ood = ReadBundle(f.ood_pool);
    MixedPool mixed = MixOod(pool_bundle, unlabeled, ood, f.ood_ratio, f.spec.seed);
    pool_bundle = std::move(mixed.bundle);
    unlabeled = std::move(mixed.pool);
    n_ood = mixed.n_ood;
  }
  manifest.Timing("split_seconds", Seconds(t0));

  WriteBundle(pool_bundle, dir / kPoolFile);
  const auto labeled_ids = pool_bundle.Ids(split.labeled);
  const auto unlabeled_ids = pool_bundle.Ids(unlabeled);
  const auto test_ids = pool_bundle.Ids(split.test);
  WriteIdList(labeled_ids, dir / kLabeledFile);
  WriteIdList(unlabeled_ids, dir / kUnlabeledFile);
  WriteIdList(test_ids, dir / kTestFile);
  WriteJson(split.truth.ToJson(), dir / kTruthFile);
  for (const char* file : {kPoolFile, kLabeledFile, kUnlabeledFile, kTestFile, kTruthFile}) {
    manifest.Output(file, dir / file);
  }

  const std::string regime =
      f.spec.regime == UnlabeledRegime::kRatio ? "ratio" : f.gamma_u;
  manifest["seed"] = f.spec.seed;
  manifest["config"] = {{"n1", f.spec.n1},
                        {"gamma_l", f.spec.gamma_l},
                        {"m1", f.spec.m1},
                        {"regime", regime},
                        {"gamma_u", EffectiveGammaU(f.spec)},
                        {"test_per_class", f.spec.test_per_class},
                        {"unlabeled_fraction", f.spec.unlabeled_fraction},
                        {"ood_ratio", f.ood_ratio},
                        {"seed", f.spec.seed}};
  manifest["labeled_counts"] = LabeledCounts(f.spec, source.classes);
  manifest["unlabeled_counts"] = UnlabeledCounts(f.spec, source.classes);
  manifest["sizes"] = {{"labeled", labeled_ids.size()},
                       {"unlabeled", unlabeled_ids.size()},
                       {"test", test_ids.size()},
                       {"ood_injected", n_ood}};
  manifest.Write(dir / kManifestFile);
  out << "labeled " << labeled_ids.size() << ", unlabeled " << unlabeled_ids.size()
      << " (" << n_ood << " OOD), test " << test_ids.size() << '\n';
}

// ---------------------------------------------------------------------------
// train

struct TrainCmdFlags {
  TrainFlags train;
  std::string resume;
  std::string out_dir;
};

void RunTrain(TrainCmdFlags f, const std::vector<std::string>& argv, std::ostream& out,
              const CLI::App& app) {
  RunManifest manifest("train", argv);
  const fs::path dir = f.out_dir;
  const SplitDir split = LoadSplit(f.train.split);
  RecordSplitInputs(manifest, f.train.split);

  std::optional<Checkpoint> resume;
  TrainConfig cfg;
  if (!f.resume.empty()) {
    manifest.Input("resume", f.resume);
    resume = LoadCheckpoint(f.resume);
    cfg = resume->config;
    // Only the iteration budget may change on resume.
    if (app.count("--iters") > 0) cfg.iterations = f.train.cfg.iterations;
    if (app.count("--serial") > 0) cfg.exec = Exec::kSerial;
    cfg.Validate();
    resume->config = cfg;
    f.train.mode = TrainModeName(cfg.mode);
    if (cfg.mode == TrainMode::kLoftOw && f.train.prototypes.empty()) {
      throw Error(ErrorKind::kParameter, "--mode loft-ow requires --prototypes");
    }
  } else {
    cfg = ResolveConfig(f.train);
  }
  const auto bank = LoadPrototypes(f.train, split, cfg.t_hc);
  if (bank) manifest.Input("prototypes", f.train.prototypes);
  EnsureDir(dir);

  const TrainData data = MakeTrainData(split, bank ? &*bank : nullptr);
  auto t0 = Clock::now();
  std::unique_ptr<Trainer> trainer =
      resume ? std::make_unique<Trainer>(data, *resume) : std::make_unique<Trainer>(data, cfg);
  manifest.Timing("init_seconds", Seconds(t0));
  t0 = Clock::now();
  try {
    trainer->RunToCompletion();
  } catch (const DivergenceError& e) {
    trainer->log().Write(dir / kTrainLogFile);
    json ids = e.batch_ids();
    WriteJson({{"error", e.what()}, {"step", e.step()}, {"batch_ids", ids}},
              dir / "divergence.json");
    throw;
  }
  manifest.Timing("train_seconds", Seconds(t0));

  SaveCheckpoint(trainer->MakeCheckpoint(), dir / kCheckpointFile);
  trainer->log().Write(dir / kTrainLogFile);
  manifest.Output("checkpoint", dir / kCheckpointFile);
  manifest.Output("trainlog", dir / kTrainLogFile);
  if (cfg.mode == TrainMode::kLoftOw) {
    WriteIdList(split.bundle.Ids(trainer->pool()), dir / kStage1File);
    manifest.Output("stage1_kept", dir / kStage1File);
  }

  json config = ToJson(cfg);
  config["prototypes_temperature"] = f.train.resolved_temperature;
  manifest["config"] = config;
  manifest["seed"] = cfg.seed;
  manifest["pool_size"] = trainer->pool().size();
  manifest.Write(dir / kManifestFile);

  const auto& entries = trainer->log().entries();
  out << "trained " << trainer->optimizer().step << " steps";
  if (!entries.empty() && entries.back().test_accuracy) {
    out << ", test accuracy " << std::fixed << std::setprecision(4)
        << *entries.back().test_accuracy;
  }
  out << '\n';
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  std::string checkpoint;
  std::string split;
  std::string ood_bundle;
  GroupThresholds thresholds;
  std::size_t bins = kDefaultEceBins;
  std::string out_dir;
};

void RunEval(const EvalFlags& f, const std::vector<std::string>& argv, std::ostream& out) {
  RunManifest manifest("eval", argv);
  const fs::path dir = f.out_dir;
  manifest.Input("checkpoint", f.checkpoint);
  const Checkpoint ckpt = LoadCheckpoint(f.checkpoint);
  const SplitDir split = LoadSplit(f.split);
  RecordSplitInputs(manifest, f.split);
  Require(ckpt.head.classes() == split.bundle.classes && ckpt.head.dim() == split.bundle.dim,
          ErrorKind::kFormat, "checkpoint shape does not match the split");

  DatasetBundle ood;
  if (!f.ood_bundle.empty()) {
    manifest.Input("ood_bundle", f.ood_bundle);
    ood = ReadBundle(f.ood_bundle);
    Require(ood.dim == split.bundle.dim, ErrorKind::kFormat,
            "OOD bundle dimension does not match the split");
  }
  IndexSet all_ood(ood.records.size());
  for (std::size_t i = 0; i < all_ood.size(); ++i) all_ood[i] = i;

  EvalOptions options;
  options.thresholds = f.thresholds;
  options.n_bins = f.bins;
  auto t0 = Clock::now();
  const EvalReport report =
      EvaluateHead(ckpt.head, split, options, Pointers(ood, all_ood));
  json doc = ToJson(report);

  // Filtering audit, when the checkpoint's run kept its stage-1 survivors.
  const fs::path kept_path = fs::path(f.checkpoint).parent_path() / kStage1File;
  std::size_t n_ood = 0;
  for (std::size_t i : split.unlabeled) {
    if (split.bundle.records[i].label == kOodTruth) ++n_ood;
  }
  if (n_ood > 0 && fs::exists(kept_path)) {
    manifest.Input("stage1_kept", kept_path);
    const IndexSet kept = split.bundle.IndicesOf(ReadIdList(kept_path));
    const OodFilterAudit audit = AuditOodFiltering(ckpt.head, split.bundle, split.unlabeled,
                                                   kept, ckpt.config.loss.c_ood);
    doc["ood_filtering"] = {{"n_ood", audit.n_ood},
                            {"removed_stage1", audit.removed_stage1},
                            {"removed_stage2", audit.removed_stage2},
                            {"removed_fraction", audit.removed_fraction()},
                            {"id_kept", audit.id_kept},
                            {"id_total", audit.id_total}};
  }
  manifest.Timing("eval_seconds", Seconds(t0));

  EnsureDir(dir);
  WriteJson(doc, dir / kReportFile);
  WriteReliabilityCsv(report.bins, dir / kReliabilityFile);
  manifest.Output("report", dir / kReportFile);
  manifest.Output("reliability", dir / kReliabilityFile);
  manifest["config"] = {{"many_threshold", f.thresholds.many},
                        {"few_threshold", f.thresholds.few},
                        {"bins", f.bins}};
  manifest["seed"] = ckpt.config.seed;
  manifest.Write(dir / kManifestFile);
  out << "accuracy " << std::fixed << std::setprecision(4) << report.accuracy()
      << ", ece " << report.ece << '\n';
}

// ---------------------------------------------------------------------------
// sweep

struct SweepFlags {
  TrainFlags train;
  std::string param = "c_u";
  std::string grid;
  std::string out_dir;
};

// "a:b:step", inclusive of b up to rounding.
std::vector<double> ParseGrid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(ErrorKind::kParameter, "--grid: bad number '" + item + "'");
    }
    parts.push_back(v);
  }
  if (parts.size() == 1) return parts;
  Require(parts.size() == 3, ErrorKind::kParameter, "--grid must be a:b:step or a single value");
  const double a = parts[0], b = parts[1], step = parts[2];
  Require(step > 0.0 && b >= a, ErrorKind::kParameter, "--grid needs step > 0 and b >= a");
  const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = std::round((a + static_cast<double>(i) * step) * 1e10) / 1e10;
  }
  return values;
}

struct SweepPoint {
  double value = 0.0;
  double accuracy = 0.0;
};

void RunSweep(SweepFlags f, const std::vector<std::string>& argv, std::ostream& out) {
  Require(f.param == "c_u" || f.param == "c_ood", ErrorKind::kParameter,
          "--param must be c_u or c_ood");
  const std::vector<double> values = ParseGrid(f.grid);
  TrainConfig base = ResolveConfig(f.train);
  base.exec = Exec::kSerial;  // parallelism is across grid points

  RunManifest manifest("sweep", argv);
  const fs::path dir = f.out_dir;
  const SplitDir split = LoadSplit(f.train.split);
  RecordSplitInputs(manifest, f.train.split);
  const auto bank = LoadPrototypes(f.train, split, base.t_hc);
  if (bank) manifest.Input("prototypes", f.train.prototypes);
  // Validate every grid point before any work.
  std::vector<TrainConfig> configs(values.size(), base);
  for (std::size_t i = 0; i < values.size(); ++i) {
    (f.param == "c_u" ? configs[i].loss.c_u : configs[i].loss.c_ood) = values[i];
    configs[i].Validate();
  }
  EnsureDir(dir);

  const TrainData data = MakeTrainData(split, bank ? &*bank : nullptr);
  std::vector<SweepPoint> points(values.size());
  std::vector<std::exception_ptr> failures(values.size());
  std::vector<double> seconds(values.size());
  auto t0 = Clock::now();
  const auto n = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    const auto i = static_cast<std::size_t>(p);
    try {
      const auto start = Clock::now();
      char name[32];
      std::snprintf(name, sizeof(name), "point_%02zu", i);
      const fs::path point_dir = dir / name;
      EnsureDir(point_dir);
      Trainer trainer(data, configs[i]);
      trainer.RunToCompletion();
      SaveCheckpoint(trainer.MakeCheckpoint(), point_dir / kCheckpointFile);
      trainer.log().Write(point_dir / kTrainLogFile);
      const EvalReport report = EvaluateHead(trainer.head(), split, EvalOptions{}, {});
      WriteJson(ToJson(report), point_dir / kReportFile);
      points[i] = {values[i], report.accuracy()};
      seconds[i] = Seconds(start);

      json m = {{"tool", "loft"},
                {"version", kToolVersion},
                {"command", "sweep-point"},
                {"argv", argv},
                {"seed", configs[i].seed},
                {"config", ToJson(configs[i])},
                {"swept", {{"param", f.param}, {"value", values[i]}}},
                {"outputs",
                 {{"checkpoint", {{"path", kCheckpointFile},
                                  {"sha256", Sha256FileHex(point_dir / kCheckpointFile)}}},
                  {"trainlog", {{"path", kTrainLogFile},
                                {"sha256", Sha256FileHex(point_dir / kTrainLogFile)}}},
                  {"report", {{"path", kReportFile},
                              {"sha256", Sha256FileHex(point_dir / kReportFile)}}}}},
                {"timings", {{"total_seconds", seconds[i]}}}};
      WriteJson(m, point_dir / kManifestFile);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  manifest.Timing("sweep_seconds", Seconds(t0));

  {
    std::ofstream csv(dir / kSweepFile);
    if (!csv) throw Error(ErrorKind::kIo, "cannot write sweep.csv");
    csv << "value,accuracy\n" << std::setprecision(17);
    for (const auto& pt : points) csv << pt.value << ',' << pt.accuracy << '\n';
  }
  manifest.Output("sweep", dir / kSweepFile);
  json config = ToJson(base);
  config["prototypes_temperature"] = f.train.resolved_temperature;
  manifest["config"] = config;
  manifest["sweep"] = {{"param", f.param}, {"grid", f.grid}, {"values", values}};
  manifest["seed"] = base.seed;
  manifest.Write(dir / kManifestFile);
  for (const auto& pt : points) {
    out << f.param << '=' << pt.value << " accuracy " << std::fixed << std::setprecision(4)
        << pt.accuracy << '\n';
    out.unsetf(std::ios::fixed);
  }
}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter:
    case ErrorKind::kContract:
    case ErrorKind::kCapacity:
      return kExitUsage;
    case ErrorKind::kDegenerateInput:
    case ErrorKind::kDegeneratePrior:
    case ErrorKind::kDivergence:
      return kExitNumerical;
    case ErrorKind::kFormat:
    case ErrorKind::kMigration:
    case ErrorKind::kIo:
      return kExitIo;
  }
  return kExitUsage;
}

void ApplyThreadLimit() {
  const char* env = std::getenv("LOFT_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long threads = std::strtol(env, &end, 10);
  if (*end != '\0' || threads < 0) {
    throw Error(ErrorKind::kParameter, std::string("LOFT_THREADS: bad value '") + env + "'");
  }
  SetThreadLimit(static_cast<int>(threads));
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-tailed semi-supervised training over frozen embeddings", "loft"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthFlags synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic embedding bundle");
  synth_cmd->add_option("--classes", synth.params.classes)->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--dim", synth.params.dim)->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--per-class", synth.params.per_class)->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--separation", synth.params.separation)
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--seed", synth.params.seed)->capture_default_str();
  synth_cmd->add_option("-o,--output", synth.output, "Bundle file")->required();
  synth_cmd->add_option("--prototypes", synth.prototypes, "Also write probe-mean prototypes");
  synth_cmd->add_option("--probe-per-class", synth.probe_per_class)
      ->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--orthogonal-to", synth.orthogonal_to,
                        "Synthetic bundle whose class span the clusters avoid (OOD pool)")
      ->check(CLI::ExistingFile);

  SplitFlags split;
  CLI::App* split_cmd = app.add_subcommand("split", "Build a long-tailed split");
  split_cmd->add_option("--data", split.data, "Source bundle")->required()
      ->check(CLI::ExistingFile);
  split_cmd->add_option("--n1", split.spec.n1)->check(CLI::PositiveNumber)
      ->capture_default_str();
  split_cmd->add_option("--gamma-l", split.spec.gamma_l)->capture_default_str();
  split_cmd->add_option("--m1", split.spec.m1)->capture_default_str();
  split_cmd->add_option("--gamma-u", split.gamma_u, "consistent | uniform | reversed | <ratio>")
      ->capture_default_str();
  split_cmd->add_option("--test-per-class", split.spec.test_per_class)->capture_default_str();
  split_cmd->add_option("--unlabeled-fraction", split.spec.unlabeled_fraction)
      ->capture_default_str();
  split_cmd->add_option("--ood-pool", split.ood_pool, "Bundle to draw OOD records from")
      ->check(CLI::ExistingFile);
  split_cmd->add_option("--ood-ratio", split.ood_ratio, "OOD share of the unlabeled pool")
      ->capture_default_str();
  split_cmd->add_option("--seed", split.spec.seed)->capture_default_str();
  split_cmd->add_option("--out", split.out_dir, "Split directory")->required();

  TrainCmdFlags train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a classifier head");
  AddTrainFlags(train_cmd, train.train);
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out_dir, "Run directory")->required();

  EvalFlags eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval.split)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--ood-bundle", eval.ood_bundle, "Held-out OOD records")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--many-threshold", eval.thresholds.many)->capture_default_str();
  eval_cmd->add_option("--few-threshold", eval.thresholds.few)->capture_default_str();
  eval_cmd->add_option("--bins", eval.bins)->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--out", eval.out_dir, "Run directory")->required();

  SweepFlags sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a parameter grid");
  AddTrainFlags(sweep_cmd, sweep.train);
  sweep_cmd->add_option("--param", sweep.param, "c_u | c_ood")
      ->check(CLI::IsMember({"c_u", "c_ood"}))->capture_default_str();
  sweep_cmd->add_option("--grid", sweep.grid, "a:b:step")->required();
  sweep_cmd->add_option("--out", sweep.out_dir, "Sweep directory")->required();

  std::vector<std::string> argv = {"loft"};
  argv.insert(argv.end(), args.begin(), args.end());
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    ApplyThreadLimit();
    if (*synth_cmd) {
      RunSynth(synth, argv, out, *synth_cmd);
    } else if (*split_cmd) {
      RunSplit(split, argv, out);
    } else if (*train_cmd) {
      RunTrain(train, argv, out, *train_cmd);
    } else if (*eval_cmd) {
      RunEval(eval, argv, out);
    } else if (*sweep_cmd) {
      RunSweep(sweep, argv, out);
    }
  } catch (const Error& e) {
    err << "loft: " << e.what() << '\n';
    return ExitCodeFor(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "loft: " << e.what() << '\n';
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "loft: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "loft: internal error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

}  // namespace loft
