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

// Training loop for the three modes (supervised only, LoFT, LoFT-OW),
// checkpointing and the line-delimited JSON training log.
//
// Each step draws one labeled and one unlabeled batch with replacement from
// a seeded stream, evaluates the total objective on the current head and
// applies one optimizer update. In open-world mode the unlabeled pool is first
// reduced, once, to the records the zero-shot classifier accepts with
// confidence above t_hc.

#ifndef LOFT_TRAINER_HPP_
#define LOFT_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "loft/embedstore.hpp"
#include "loft/head.hpp"
#include "loft/losses.hpp"
#include "loft/random.hpp"
#include "loft/zeroshot.hpp"

namespace loft {

enum class TrainMode { kSupervisedOnly, kLoft, kLoftOw };

const char* TrainModeName(TrainMode mode);
TrainMode ParseTrainMode(const std::string& name);

struct TrainConfig {
  LossConfig loss;
  TrainMode mode = TrainMode::kLoft;
  double t_hc = kDefaultHighConfidenceThreshold;
  std::uint64_t iterations = 1000;
  std::size_t batch_labeled = 32;
  std::size_t batch_unlabeled = 64;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool cosine_schedule = false;
  std::uint64_t seed = 1;
  std::uint64_t eval_every = 100;
  AdapterConfig adapter;
  Exec exec = Exec::kParallel;

  void Validate() const;
};

nlohmann::json ToJson(const TrainConfig& cfg);
TrainConfig TrainConfigFromJson(const nlohmann::json& j);

struct TrainLogEntry {
  std::uint64_t step = 0;  // optimizer steps completed
  double loss_s = 0.0;
  double loss_u = 0.0;
  UnlabeledBatchStats stats;
  std::optional<double> test_accuracy;
  // Accuracy of hard pseudo-labels over the pool, against sealed truth.
  std::optional<double> pseudo_label_accuracy;
  std::size_t n_pseudo_labeled = 0;
};

class TrainLog {
 public:
  // Throws kContract unless entry.step exceeds the last logged step.
  void Append(const TrainLogEntry& entry);
  const std::vector<TrainLogEntry>& entries() const { return entries_; }
  std::string ToJsonLines() const;
  void Write(const std::filesystem::path& path) const;

  bool operator==(const TrainLog& o) const;

 private:
  std::vector<TrainLogEntry> entries_;
};

nlohmann::json ToJson(const TrainLogEntry& e);

// Inputs of a run. The bundle must outlive the trainer.
struct TrainData {
  const DatasetBundle* bundle = nullptr;
  IndexSet labeled;
  IndexSet unlabeled;
  IndexSet test;
  const SealedTruth* truth = nullptr;        // evaluation only
  const PrototypeBank* prototypes = nullptr; // required for kLoftOw
};

struct Checkpoint {
  TrainConfig config;
  ClassifierHead head{1, 1};
  OptimizerState opt;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> EncodeCheckpoint(const Checkpoint& ckpt);
// Throws FormatError on corruption (bad magic, truncation, digest mismatch)
// and kMigration on a version mismatch.
Checkpoint DecodeCheckpoint(std::span<const std::uint8_t> bytes);
void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

class Trainer {
 public:
  Trainer(const TrainData& data, const TrainConfig& cfg);
  // Continues a run from a checkpoint taken on the same data.
  Trainer(const TrainData& data, const Checkpoint& ckpt);

  // Runs up to `steps` more steps without exceeding cfg.iterations.
  void Run(std::uint64_t steps);
  void RunToCompletion();
  bool Done() const { return opt_.step >= cfg_.iterations; }

  const TrainConfig& config() const { return cfg_; }
  const ClassifierHead& head() const { return head_; }
  const OptimizerState& optimizer() const { return opt_; }
  const TrainLog& log() const { return log_; }
  const ClassPrior& prior() const { return prior_; }
  // D_U, or the stage-1 survivors in open-world mode.
  const IndexSet& pool() const { return pool_; }

  Checkpoint MakeCheckpoint() const;

 private:
  void Init();
  void Step();
  TrainLogEntry Evaluate(double loss_s, double loss_u,
                         const UnlabeledBatchStats& stats) const;

  TrainData data_;
  TrainConfig cfg_;
  ClassifierHead head_;
  OptimizerState opt_;
  Rng rng_;
  ClassPrior prior_;
  IndexSet pool_;
  TrainLog log_;
};

struct TrainResult {
  ClassifierHead head;
  OptimizerState opt;
  TrainLog log;
  IndexSet pool;
};

TrainResult Train(const TrainData& data, const TrainConfig& cfg);

}  // namespace loft

#endif  // LOFT_TRAINER_HPP_
