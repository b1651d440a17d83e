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

#include "loft/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bytes.hpp"
#include "loft/digest.hpp"
#include "loft/error.hpp"
#include "loft/evalkit.hpp"

namespace loft {

const char* TrainModeName(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSupervisedOnly:
      return "supervised";
    case TrainMode::kLoft:
      return "loft";
    case TrainMode::kLoftOw:
      return "loft-ow";
  }
  return "?";
}

TrainMode ParseTrainMode(const std::string& name) {
  if (name == "supervised" || name == "supervised_only") return TrainMode::kSupervisedOnly;
  if (name == "loft") return TrainMode::kLoft;
  if (name == "loft-ow" || name == "loft_ow") return TrainMode::kLoftOw;
  throw Error(ErrorKind::kParameter, "unknown mode '" + name + "'");
}

void TrainConfig::Validate() const {
  loss.Validate();
  Require(iterations >= 1, ErrorKind::kParameter, "iterations must be >= 1");
  Require(batch_labeled >= 1 && batch_unlabeled >= 1, ErrorKind::kParameter,
          "batch sizes must be >= 1");
  Require(eval_every >= 1, ErrorKind::kParameter, "eval_every must be >= 1");
  Require(t_hc > 0.0 && t_hc < 1.0, ErrorKind::kParameter, "t_HC must lie in (0, 1)");
  Require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::kParameter,
          "learning rate must be positive");
  Require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kParameter,
          "momentum must lie in [0, 1)");
  Require(weight_decay >= 0.0, ErrorKind::kParameter, "weight decay must be >= 0");
}

nlohmann::json ToJson(const TrainConfig& c) {
  return {{"mode", TrainModeName(c.mode)},
          {"tau", c.loss.tau},
          {"c_u", c.loss.c_u},
          {"c_ood", c.loss.c_ood},
          {"lambda1", c.loss.lambda1},
          {"lambda2", c.loss.lambda2},
          {"adjust_confidence", c.loss.adjust_confidence},
          {"t_hc", c.t_hc},
          {"iterations", c.iterations},
          {"batch_labeled", c.batch_labeled},
          {"batch_unlabeled", c.batch_unlabeled},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"cosine_schedule", c.cosine_schedule},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"adapter", {{"enabled", c.adapter.enabled}, {"rank", c.adapter.rank}}}};
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j) {
  TrainConfig c;
  c.mode = ParseTrainMode(j.at("mode").get<std::string>());
  c.loss.tau = j.at("tau").get<double>();
  c.loss.c_u = j.at("c_u").get<double>();
  c.loss.c_ood = j.at("c_ood").get<double>();
  c.loss.lambda1 = j.at("lambda1").get<double>();
  c.loss.lambda2 = j.at("lambda2").get<double>();
  c.loss.adjust_confidence = j.at("adjust_confidence").get<bool>();
  c.t_hc = j.at("t_hc").get<double>();
  c.iterations = j.at("iterations").get<std::uint64_t>();
  c.batch_labeled = j.at("batch_labeled").get<std::size_t>();
  c.batch_unlabeled = j.at("batch_unlabeled").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.cosine_schedule = j.at("cosine_schedule").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<std::uint64_t>();
  c.adapter.enabled = j.at("adapter").at("enabled").get<bool>();
  c.adapter.rank = j.at("adapter").at("rank").get<std::size_t>();
  return c;
}

// ---------------------------------------------------------------------------

nlohmann::json ToJson(const TrainLogEntry& e) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"step", e.step},
          {"loss_s", e.loss_s},
          {"loss_u", e.loss_u},
          {"n_hard", e.stats.n_hard},
          {"n_soft", e.stats.n_soft},
          {"n_ood_dropped", e.stats.n_ood_dropped},
          {"mean_msp", e.stats.mean_msp},
          {"test_accuracy", opt(e.test_accuracy)},
          {"pseudo_label_accuracy", opt(e.pseudo_label_accuracy)},
          {"n_pseudo_labeled", e.n_pseudo_labeled}};
}

void TrainLog::Append(const TrainLogEntry& entry) {
  Require(entries_.empty() || entry.step > entries_.back().step,
          ErrorKind::kContract, "train log steps must strictly increase");
  entries_.push_back(entry);
}

std::string TrainLog::ToJsonLines() const {
  std::string out;
  for (const auto& e : entries_) {
    out += ToJson(e).dump();
    out += '\n';
  }
  return out;
}

void TrainLog::Write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << ToJsonLines();
}

bool TrainLog::operator==(const TrainLog& o) const {
  return ToJsonLines() == o.ToJsonLines();
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kCheckpointMagic = "LFTC";
}  // namespace

std::vector<std::uint8_t> EncodeCheckpoint(const Checkpoint& ckpt) {
  const auto& head = ckpt.head;
  bytes::Writer w;
  w.Raw(kCheckpointMagic);
  w.Put<std::uint32_t>(kCheckpointVersion);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(head.classes()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(head.dim()));
  w.Put<std::uint8_t>(head.adapter().enabled ? 1 : 0);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(head.adapter().rank));
  w.Put<std::uint64_t>(ckpt.opt.step);
  w.Put<double>(ckpt.opt.learning_rate);
  w.Put<double>(ckpt.opt.momentum);
  w.Put<double>(ckpt.opt.weight_decay);
  w.Put<std::uint64_t>(head.params().size());
  for (auto block : head.params().Blocks()) {
    for (double x : block) w.Put<double>(x);
  }
  for (auto block : ckpt.opt.velocity.Blocks()) {
    for (double x : block) w.Put<double>(x);
  }
  w.String(ckpt.rng_state);
  w.String(ToJson(ckpt.config).dump());
  const auto digest = Sha256(w.bytes());
  w.bytes().insert(w.bytes().end(), digest.begin(), digest.end());
  return std::move(w.bytes());
}

Checkpoint DecodeCheckpoint(std::span<const std::uint8_t> data) {
  if (data.size() < 4 + 32) throw FormatError("checkpoint too short", 0);
  bytes::Reader r(data.first(data.size() - 32));
  if (r.Raw(4, "magic") != kCheckpointMagic) {
    throw FormatError("bad magic, expected LFTC", 0);
  }
  const auto version = r.Get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kMigration,
                "checkpoint version " + std::to_string(version) +
                    " cannot be loaded by version " +
                    std::to_string(kCheckpointVersion));
  }
  const auto expected = Sha256(data.first(data.size() - 32));
  if (!std::equal(expected.begin(), expected.end(), data.end() - 32)) {
    throw FormatError("checkpoint digest mismatch (corrupted file)",
                      data.size() - 32);
  }

  const auto classes = r.Get<std::uint32_t>("classes");
  const auto dim = r.Get<std::uint32_t>("dim");
  AdapterConfig adapter;
  adapter.enabled = r.Get<std::uint8_t>("adapter flag") != 0;
  adapter.rank = r.Get<std::uint32_t>("adapter rank");
  if (!adapter.enabled) adapter.rank = 32;
  Checkpoint ckpt;
  ckpt.head = ClassifierHead(classes, dim, adapter);
  ckpt.opt.step = r.Get<std::uint64_t>("step");
  ckpt.opt.learning_rate = r.Get<double>("learning rate");
  ckpt.opt.momentum = r.Get<double>("momentum");
  ckpt.opt.weight_decay = r.Get<double>("weight decay");
  ckpt.opt.velocity = HeadParams::Zeros(classes, dim, ckpt.head.adapter());
  const auto count_offset = r.offset();
  const auto n_params = r.Get<std::uint64_t>("parameter count");
  if (n_params != ckpt.head.params().size()) {
    throw FormatError("parameter count does not match header shape", count_offset);
  }
  for (auto block : ckpt.head.params().Blocks()) {
    for (double& x : block) x = r.Get<double>("parameters");
  }
  for (auto block : ckpt.opt.velocity.Blocks()) {
    for (double& x : block) x = r.Get<double>("momentum buffers");
  }
  ckpt.rng_state = r.String("rng state");
  const auto cfg_offset = r.offset();
  const auto cfg_text = r.String("config");
  const auto cfg_json = nlohmann::json::parse(cfg_text, nullptr, false);
  if (cfg_json.is_discarded()) throw FormatError("config is not JSON", cfg_offset);
  ckpt.config = TrainConfigFromJson(cfg_json);
  if (r.remaining() != 0) throw FormatError("trailing bytes", r.offset());
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  bytes::WriteFile(path, EncodeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(bytes::ReadFile(path));
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainData& data, const TrainConfig& cfg)
    : data_(data),
      cfg_(cfg),
      head_(1, 1),
      rng_(MakeRng(cfg.seed, Stream::kTrainSampler)) {
  cfg_.Validate();
  Require(data_.bundle != nullptr, ErrorKind::kContract, "no bundle");
  head_ = ClassifierHead(data_.bundle->classes, data_.bundle->dim, cfg_.adapter,
                         cfg_.seed);
  opt_ = OptimizerState::For(head_, cfg_.learning_rate, cfg_.momentum,
                             cfg_.weight_decay);
  Init();
}

Trainer::Trainer(const TrainData& data, const Checkpoint& ckpt)
    : data_(data), cfg_(ckpt.config), head_(ckpt.head), opt_(ckpt.opt) {
  cfg_.Validate();
  Require(data_.bundle != nullptr, ErrorKind::kContract, "no bundle");
  Require(head_.classes() == data_.bundle->classes && head_.dim() == data_.bundle->dim,
          ErrorKind::kContract, "checkpoint shape does not match the bundle");
  std::istringstream in(ckpt.rng_state);
  in >> rng_;
  Require(!in.fail(), ErrorKind::kFormat, "unreadable RNG state in checkpoint");
  Init();
}

void Trainer::Init() {
  const auto& bundle = *data_.bundle;
  Require(!data_.labeled.empty(), ErrorKind::kContract, "empty labeled split");
  prior_ = ComputeClassPrior(bundle, data_.labeled);
  for (std::size_t i : data_.unlabeled) {
    Require(i < bundle.records.size() && !IsClassLabel(bundle.records[i].label),
            ErrorKind::kContract, "unlabeled split holds a labeled record");
  }
  switch (cfg_.mode) {
    case TrainMode::kSupervisedOnly:
      break;
    case TrainMode::kLoft:
      pool_ = data_.unlabeled;
      break;
    case TrainMode::kLoftOw: {
      Require(data_.prototypes != nullptr, ErrorKind::kContract,
              "loft-ow mode requires a prototype bank");
      pool_ = FilteredIndices(
          Stage1Filter(bundle, data_.unlabeled, *data_.prototypes, cfg_.t_hc));
      break;
    }
  }
}

void Trainer::Run(std::uint64_t steps) {
  for (std::uint64_t s = 0; s < steps && !Done(); ++s) Step();
}

void Trainer::RunToCompletion() {
  while (!Done()) Step();
}

void Trainer::Step() {
  const auto& records = data_.bundle->records;
  std::vector<const EmbeddingRecord*> labeled_batch(cfg_.batch_labeled);
  for (auto& r : labeled_batch) {
    r = &records[data_.labeled[UniformIndex(rng_, data_.labeled.size())]];
  }
  std::vector<const EmbeddingRecord*> unlabeled_batch;
  if (cfg_.mode != TrainMode::kSupervisedOnly && !pool_.empty()) {
    unlabeled_batch.resize(cfg_.batch_unlabeled);
    for (auto& r : unlabeled_batch) {
      r = &records[pool_[UniformIndex(rng_, pool_.size())]];
    }
  }

  LossResult total;
  double loss_s = 0.0;
  double loss_u = 0.0;
  UnlabeledBatchStats stats;
  {
    TrainingScope scope;
    const auto sup = SupervisedLoss(head_, labeled_batch, prior_, cfg_.loss.tau, cfg_.exec);
    const auto unl = UnlabeledLoss(head_, unlabeled_batch, cfg_.loss,
                                   cfg_.mode == TrainMode::kLoftOw, cfg_.exec, &prior_);
    loss_s = sup.loss;
    loss_u = unl.loss;
    stats = unl.stats;
    total = TotalLoss(sup, unl);
    if (!std::isfinite(total.loss)) {
      std::vector<std::uint64_t> ids;
      for (const auto* r : labeled_batch) ids.push_back(r->id);
      for (const auto* r : unlabeled_batch) ids.push_back(r->id);
      throw DivergenceError("non-finite loss", opt_.step, std::move(ids));
    }
    double scale = 1.0;
    if (cfg_.cosine_schedule) {
      scale = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(opt_.step) /
                                    static_cast<double>(cfg_.iterations)));
    }
    ApplyGradients(head_, opt_, total.grads, scale);
  }

  if (opt_.step % cfg_.eval_every == 0 || opt_.step == cfg_.iterations) {
    log_.Append(Evaluate(loss_s, loss_u, stats));
  }
}

TrainLogEntry Trainer::Evaluate(double loss_s, double loss_u,
                                const UnlabeledBatchStats& stats) const {
  TrainLogEntry e;
  e.step = opt_.step;
  e.loss_s = loss_s;
  e.loss_u = loss_u;
  e.stats = stats;
  const auto& records = data_.bundle->records;
  if (!data_.test.empty()) {
    std::vector<const EmbeddingRecord*> test;
    for (std::size_t i : data_.test) test.push_back(&records[i]);
    const auto pred = Predict(head_, test);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      hits += IsClassLabel(test[i]->label) &&
              pred.labels[i] == static_cast<std::size_t>(test[i]->label);
    }
    e.test_accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  }
  if (!pool_.empty()) {
    std::vector<const EmbeddingRecord*> pool;
    for (std::size_t i : pool_) pool.push_back(&records[i]);
    const auto pred = Predict(head_, pool);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double msp = pred.confidences[i];
      if (!(msp > cfg_.loss.c_u)) continue;
      if (cfg_.mode == TrainMode::kLoftOw && !(msp > cfg_.loss.c_ood)) continue;
      ++e.n_pseudo_labeled;
      if (data_.truth != nullptr) {
        const auto truth = data_.truth->TryReveal(pool[i]->id);
        hits += truth && IsClassLabel(*truth) &&
                pred.labels[i] == static_cast<std::size_t>(*truth);
      }
    }
    if (data_.truth != nullptr && e.n_pseudo_labeled > 0) {
      e.pseudo_label_accuracy =
          static_cast<double>(hits) / static_cast<double>(e.n_pseudo_labeled);
    }
  }
  return e;
}

Checkpoint Trainer::MakeCheckpoint() const {
  std::ostringstream out;
  out << rng_;
  return Checkpoint{cfg_, head_, opt_, out.str()};
}

TrainResult Train(const TrainData& data, const TrainConfig& cfg) {
  Trainer trainer(data, cfg);
  trainer.RunToCompletion();
  return {trainer.head(), trainer.optimizer(), trainer.log(), trainer.pool()};
}

}  // namespace loft
