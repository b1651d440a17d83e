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

// Evaluation metrics: Many/Medium/Few accuracy, expected calibration error
// with reliability bins, and the MSP-based OOD detection block (AUROC,
// AP-in, AP-out, FPR at 95% TPR).

#ifndef LOFT_EVALKIT_HPP_
#define LOFT_EVALKIT_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "loft/embedstore.hpp"
#include "loft/head.hpp"
#include "loft/losses.hpp"

namespace loft {

// Classes with more than `many` training samples are Many, fewer than `few`
// are Few, everything else Medium.
struct GroupThresholds {
  double many = 100.0;
  double few = 20.0;
};

enum class ClassGroup { kMany, kMedium, kFew };
ClassGroup GroupOf(std::size_t train_count, const GroupThresholds& thresholds);

struct GroupAccuracy {
  double overall = 0.0;
  // nullopt when the group has no test samples.
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::size_t n_many = 0;
  std::size_t n_medium = 0;
  std::size_t n_few = 0;
};

GroupAccuracy ComputeGroupAccuracy(std::span<const std::size_t> predictions,
                                   std::span<const Label> labels,
                                   std::span<const std::size_t> train_counts,
                                   const GroupThresholds& thresholds = {});

struct ReliabilityBin {
  double low = 0.0;   // exclusive
  double high = 0.0;  // inclusive
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct ReliabilityBins {
  std::size_t n_bins = 0;
  std::vector<ReliabilityBin> bins;
};

struct CalibrationResult {
  double ece = 0.0;
  ReliabilityBins bins;
};

inline constexpr std::size_t kDefaultEceBins = 15;

// Equal-width bins over (0, 1]; bin b covers (b/n, (b+1)/n].
// ECE = sum_b (n_b / N) |acc_b - conf_b|.
CalibrationResult ExpectedCalibrationError(std::span<const double> confidences,
                                           const std::vector<bool>& correct,
                                           std::size_t n_bins = kDefaultEceBins);

struct OodMetrics {
  double auroc = 0.0;  // in-distribution as the positive class
  double ap_in = 0.0;
  double ap_out = 0.0;
  double fpr_at_95tpr = 0.0;

  double auroc_ood_positive() const { return 1.0 - auroc; }
};

// Higher score means more in-distribution.
double Auroc(std::span<const double> positives, std::span<const double> negatives);
double AveragePrecision(std::span<const double> positives,
                        std::span<const double> negatives);
double FprAtTpr(std::span<const double> scores_id,
                std::span<const double> scores_ood, double tpr = 0.95);
OodMetrics ComputeOodMetrics(std::span<const double> scores_id,
                             std::span<const double> scores_ood);

struct EvalOptions {
  GroupThresholds thresholds;
  std::size_t n_bins = kDefaultEceBins;
};

struct EvalReport {
  std::size_t n_test = 0;
  GroupAccuracy groups;
  double ece = 0.0;
  ReliabilityBins bins;
  std::optional<OodMetrics> ood;

  double accuracy() const { return groups.overall; }
};

struct Predictions {
  std::vector<std::size_t> labels;
  std::vector<double> confidences;  // MSP of raw logits
};

Predictions Predict(const ClassifierHead& head, RecordBatch records);

// Test records must be labeled. OOD metrics are reported when `ood` is
// non-empty, scoring both sets by raw-logit MSP.
EvalReport Evaluate(const ClassifierHead& head, RecordBatch test,
                    std::span<const std::size_t> train_counts,
                    const EvalOptions& options = {}, RecordBatch ood = {});

nlohmann::json ToJson(const EvalReport& report);
EvalReport EvalReportFromJson(const nlohmann::json& j);
void WriteReliabilityCsv(const ReliabilityBins& bins,
                         const std::filesystem::path& path);

// Share of injected OOD records removed by the two filtering stages.
struct OodFilterAudit {
  std::size_t n_ood = 0;
  std::size_t removed_stage1 = 0;
  std::size_t removed_stage2 = 0;
  std::size_t id_kept = 0;     // in-distribution records surviving both stages
  std::size_t id_total = 0;

  double removed_fraction() const {
    return n_ood == 0 ? 0.0
                      : static_cast<double>(removed_stage1 + removed_stage2) /
                            static_cast<double>(n_ood);
  }
};

// `pool` is the contaminated unlabeled pool, `kept` its stage-1 survivors.
// Reads the kOodTruth labels, so this is evaluation-only.
OodFilterAudit AuditOodFiltering(const ClassifierHead& head,
                                 const DatasetBundle& bundle,
                                 const IndexSet& pool, const IndexSet& kept,
                                 double c_ood);

}  // namespace loft

#endif  // LOFT_EVALKIT_HPP_
