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

#include "loft/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "loft/error.hpp"
#include "loft/kernels.hpp"

namespace loft {

namespace {

void RequireScores(std::span<const double> scores, const char* name) {
  Require(!scores.empty(), ErrorKind::kContract,
          std::string(name) + " scores must be non-empty");
  for (double s : scores) {
    Require(!std::isnan(s), ErrorKind::kContract,
            std::string("NaN in ") + name + " scores");
  }
}

std::vector<double> Negated(std::span<const double> s) {
  std::vector<double> out(s.size());
  std::transform(s.begin(), s.end(), out.begin(), [](double x) { return -x; });
  return out;
}

nlohmann::json OptionalJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> OptionalFromJson(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

ClassGroup GroupOf(std::size_t train_count, const GroupThresholds& t) {
  const auto c = static_cast<double>(train_count);
  if (c > t.many) return ClassGroup::kMany;
  if (c < t.few) return ClassGroup::kFew;
  return ClassGroup::kMedium;
}

GroupAccuracy ComputeGroupAccuracy(std::span<const std::size_t> predictions,
                                   std::span<const Label> labels,
                                   std::span<const std::size_t> train_counts,
                                   const GroupThresholds& thresholds) {
  Require(thresholds.many > thresholds.few && thresholds.few >= 1.0,
          ErrorKind::kParameter, "group thresholds need many > few >= 1");
  Require(predictions.size() == labels.size(), ErrorKind::kContract,
          "predictions and labels differ in length");
  Require(!labels.empty(), ErrorKind::kContract, "no test samples");
  std::size_t correct[3] = {0, 0, 0};
  std::size_t total[3] = {0, 0, 0};
  std::size_t all_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Require(IsClassLabel(labels[i]) &&
                static_cast<std::size_t>(labels[i]) < train_counts.size(),
            ErrorKind::kContract, "test label out of range");
    const auto g = static_cast<int>(GroupOf(train_counts[labels[i]], thresholds));
    const bool hit = predictions[i] == static_cast<std::size_t>(labels[i]);
    ++total[g];
    correct[g] += hit;
    all_correct += hit;
  }
  auto rate = [&](int g) -> std::optional<double> {
    if (total[g] == 0) return std::nullopt;
    return static_cast<double>(correct[g]) / static_cast<double>(total[g]);
  };
  GroupAccuracy acc;
  acc.overall = static_cast<double>(all_correct) / static_cast<double>(labels.size());
  acc.many = rate(static_cast<int>(ClassGroup::kMany));
  acc.medium = rate(static_cast<int>(ClassGroup::kMedium));
  acc.few = rate(static_cast<int>(ClassGroup::kFew));
  acc.n_many = total[static_cast<int>(ClassGroup::kMany)];
  acc.n_medium = total[static_cast<int>(ClassGroup::kMedium)];
  acc.n_few = total[static_cast<int>(ClassGroup::kFew)];
  return acc;
}

CalibrationResult ExpectedCalibrationError(std::span<const double> confidences,
                                           const std::vector<bool>& correct,
                                           std::size_t n_bins) {
  Require(!confidences.empty(), ErrorKind::kContract, "ECE of empty input");
  Require(confidences.size() == correct.size(), ErrorKind::kContract,
          "confidences and correctness flags differ in length");
  Require(n_bins >= 1, ErrorKind::kParameter, "n_bins must be >= 1");

  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::size_t> hits(n_bins, 0), counts(n_bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    Require(c > 0.0 && c <= 1.0, ErrorKind::kContract,
            "confidence outside (0, 1]");
    auto b = static_cast<std::ptrdiff_t>(std::ceil(c * static_cast<double>(n_bins))) - 1;
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(n_bins) - 1);
    conf_sum[b] += c;
    hits[b] += correct[i];
    ++counts[b];
  }

  CalibrationResult result;
  result.bins.n_bins = n_bins;
  const auto n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    ReliabilityBin bin;
    bin.low = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.high = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    bin.count = counts[b];
    if (counts[b] > 0) {
      const auto nb = static_cast<double>(counts[b]);
      bin.mean_confidence = conf_sum[b] / nb;
      bin.accuracy = static_cast<double>(hits[b]) / nb;
      result.ece += (nb / n) * std::abs(bin.accuracy - bin.mean_confidence);
    }
    result.bins.bins.push_back(bin);
  }
  return result;
}

double Auroc(std::span<const double> positives, std::span<const double> negatives) {
  RequireScores(positives, "positive");
  RequireScores(negatives, "negative");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  // Mid-ranks (1-based) over tie groups.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      group_pos += items[j].positive;
      ++j;
    }
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += mid_rank * static_cast<double>(group_pos);
    i = j;
  }
  const auto np = static_cast<double>(positives.size());
  const auto nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double AveragePrecision(std::span<const double> positives,
                        std::span<const double> negatives) {
  RequireScores(positives, "positive");
  RequireScores(negatives, "negative");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score > b.score; });
  const auto np = static_cast<double>(positives.size());
  double ap = 0.0;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      (items[j].positive ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / np;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double FprAtTpr(std::span<const double> scores_id,
                std::span<const double> scores_ood, double tpr) {
  RequireScores(scores_id, "in-distribution");
  RequireScores(scores_ood, "ood");
  Require(tpr > 0.0 && tpr <= 1.0, ErrorKind::kParameter, "tpr must lie in (0, 1]");
  std::vector<double> sorted(scores_id.begin(), scores_id.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Highest threshold t (accepting score >= t) whose TPR reaches `tpr`.
  const auto n = sorted.size();
  auto needed = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(n) - 1e-9));
  needed = std::clamp<std::size_t>(needed, 1, n);
  const double threshold = sorted[needed - 1];
  const auto false_pos = std::count_if(scores_ood.begin(), scores_ood.end(),
                                       [&](double s) { return s >= threshold; });
  return static_cast<double>(false_pos) / static_cast<double>(scores_ood.size());
}

OodMetrics ComputeOodMetrics(std::span<const double> scores_id,
                             std::span<const double> scores_ood) {
  OodMetrics m;
  m.auroc = Auroc(scores_id, scores_ood);
  m.ap_in = AveragePrecision(scores_id, scores_ood);
  const auto neg_id = Negated(scores_id);
  const auto neg_ood = Negated(scores_ood);
  m.ap_out = AveragePrecision(neg_ood, neg_id);
  m.fpr_at_95tpr = FprAtTpr(scores_id, scores_ood, 0.95);
  return m;
}

Predictions Predict(const ClassifierHead& head, RecordBatch records) {
  std::vector<EmbeddingView> views;
  views.reserve(records.size());
  for (const auto* r : records) views.emplace_back(r->weak);
  const auto acts = ForwardBatch(head, views, Exec::kParallel);
  Predictions out;
  out.labels.resize(records.size());
  out.confidences.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto probs = Softmax(acts.logits.row(i));
    out.labels[i] = Argmax(probs);
    out.confidences[i] = Msp(probs);
  }
  return out;
}

EvalReport Evaluate(const ClassifierHead& head, RecordBatch test,
                    std::span<const std::size_t> train_counts,
                    const EvalOptions& options, RecordBatch ood) {
  Require(!test.empty(), ErrorKind::kContract, "empty test split");
  Require(train_counts.size() == head.classes(), ErrorKind::kContract,
          "train_counts must have K entries");
  const auto pred = Predict(head, test);
  std::vector<Label> labels;
  labels.reserve(test.size());
  std::vector<bool> correct(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    Require(IsClassLabel(test[i]->label), ErrorKind::kContract,
            "test record " + std::to_string(test[i]->id) + " is not labeled");
    labels.push_back(test[i]->label);
    correct[i] = pred.labels[i] == static_cast<std::size_t>(test[i]->label);
  }

  EvalReport report;
  report.n_test = test.size();
  report.groups =
      ComputeGroupAccuracy(pred.labels, labels, train_counts, options.thresholds);
  auto calibration = ExpectedCalibrationError(pred.confidences, correct, options.n_bins);
  report.ece = calibration.ece;
  report.bins = std::move(calibration.bins);
  if (!ood.empty()) {
    const auto ood_pred = Predict(head, ood);
    report.ood = ComputeOodMetrics(pred.confidences, ood_pred.confidences);
  }
  return report;
}

nlohmann::json ToJson(const EvalReport& r) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : r.bins.bins) {
    bins.push_back({{"low", b.low},
                    {"high", b.high},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy},
                    {"count", b.count}});
  }
  nlohmann::json j = {
      {"n_test", r.n_test},
      {"accuracy", r.groups.overall},
      {"groups",
       {{"many", OptionalJson(r.groups.many)},
        {"medium", OptionalJson(r.groups.medium)},
        {"few", OptionalJson(r.groups.few)},
        {"n_many", r.groups.n_many},
        {"n_medium", r.groups.n_medium},
        {"n_few", r.groups.n_few}}},
      {"ece", r.ece},
      {"n_bins", r.bins.n_bins},
      {"bins", bins},
      {"ood", nullptr}};
  if (r.ood) {
    j["ood"] = {{"auroc", r.ood->auroc},
                {"auroc_ood_positive", r.ood->auroc_ood_positive()},
                {"ap_in", r.ood->ap_in},
                {"ap_out", r.ood->ap_out},
                {"fpr_at_95tpr", r.ood->fpr_at_95tpr}};
  }
  return j;
}

EvalReport EvalReportFromJson(const nlohmann::json& j) {
  EvalReport r;
  r.n_test = j.at("n_test").get<std::size_t>();
  r.groups.overall = j.at("accuracy").get<double>();
  const auto& g = j.at("groups");
  r.groups.many = OptionalFromJson(g.at("many"));
  r.groups.medium = OptionalFromJson(g.at("medium"));
  r.groups.few = OptionalFromJson(g.at("few"));
  r.groups.n_many = g.at("n_many").get<std::size_t>();
  r.groups.n_medium = g.at("n_medium").get<std::size_t>();
  r.groups.n_few = g.at("n_few").get<std::size_t>();
  r.ece = j.at("ece").get<double>();
  r.bins.n_bins = j.at("n_bins").get<std::size_t>();
  for (const auto& b : j.at("bins")) {
    r.bins.bins.push_back({b.at("low").get<double>(), b.at("high").get<double>(),
                           b.at("mean_confidence").get<double>(),
                           b.at("accuracy").get<double>(),
                           b.at("count").get<std::size_t>()});
  }
  if (!j.at("ood").is_null()) {
    const auto& o = j.at("ood");
    r.ood = OodMetrics{o.at("auroc").get<double>(), o.at("ap_in").get<double>(),
                       o.at("ap_out").get<double>(),
                       o.at("fpr_at_95tpr").get<double>()};
  }
  return r;
}

void WriteReliabilityCsv(const ReliabilityBins& bins,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "bin_low,bin_high,mean_conf,acc,count\n";
  for (const auto& b : bins.bins) {
    out << b.low << ',' << b.high << ',' << b.mean_confidence << ','
        << b.accuracy << ',' << b.count << '\n';
  }
}

OodFilterAudit AuditOodFiltering(const ClassifierHead& head,
                                 const DatasetBundle& bundle,
                                 const IndexSet& pool, const IndexSet& kept,
                                 double c_ood) {
  Require(!TrainingScope::Active(), ErrorKind::kContract,
          "OOD audit reads ground truth and cannot run inside training");
  const std::unordered_set<std::size_t> kept_set(kept.begin(), kept.end());
  OodFilterAudit audit;
  for (std::size_t i : pool) {
    const auto& r = bundle.records.at(i);
    const bool is_ood = r.label == kOodTruth;
    if (is_ood) {
      ++audit.n_ood;
    } else {
      ++audit.id_total;
    }
    if (!kept_set.contains(i)) {
      audit.removed_stage1 += is_ood;
      continue;
    }
    const auto probs = Softmax(head.Forward(std::span<const float>(r.weak)));
    const bool passes = OodMask(probs, c_ood);
    if (is_ood && !passes) ++audit.removed_stage2;
    if (!is_ood && passes) ++audit.id_kept;
  }
  return audit;
}

}  // namespace loft
