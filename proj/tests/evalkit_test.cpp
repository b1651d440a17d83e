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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "loft/error.hpp"
#include "oracles.hpp"

namespace loft {
namespace {

// Direct step-sum AP for tie-free scores: mean over positives of the
// precision at that positive's rank.
double RankAp(const std::vector<double>& pos, const std::vector<double>& neg) {
  double total = 0;
  for (double p : pos) {
    double above_pos = 0, above_neg = 0;
    for (double q : pos) above_pos += q >= p;
    for (double q : neg) above_neg += q >= p;
    total += above_pos / (above_pos + above_neg);
  }
  return total / static_cast<double>(pos.size());
}

std::vector<double> Draw(std::size_t n, double mean, std::mt19937_64& rng) {
  std::normal_distribution<double> g(mean, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

TEST(Groups, Thresholds) {
  EXPECT_EQ(GroupOf(101, {}), ClassGroup::kMany);
  EXPECT_EQ(GroupOf(100, {}), ClassGroup::kMedium);
  EXPECT_EQ(GroupOf(20, {}), ClassGroup::kMedium);
  EXPECT_EQ(GroupOf(19, {}), ClassGroup::kFew);
}

TEST(Groups, AccuracyPerGroup) {
  const std::vector<std::size_t> counts = {150, 50, 5};
  const std::vector<Label> labels = {0, 0, 1, 1, 1, 2};
  const std::vector<std::size_t> preds = {0, 1, 1, 1, 0, 2};
  const auto g = ComputeGroupAccuracy(preds, labels, counts);
  EXPECT_DOUBLE_EQ(g.overall, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(*g.many, 0.5);
  EXPECT_DOUBLE_EQ(*g.medium, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*g.few, 1.0);
  EXPECT_EQ(g.n_many + g.n_medium + g.n_few, 6u);
}

TEST(Groups, EmptyGroupIsUndefined) {
  const std::vector<std::size_t> counts = {150, 120};
  const std::vector<Label> labels = {0, 1};
  const std::vector<std::size_t> preds = {0, 0};
  const auto g = ComputeGroupAccuracy(preds, labels, counts);
  EXPECT_TRUE(g.many.has_value());
  EXPECT_FALSE(g.medium.has_value());
  EXPECT_FALSE(g.few.has_value());
  EXPECT_EQ(g.n_medium, 0u);
}

TEST(Groups, RandomGuessingIsChance) {
  std::mt19937_64 rng(2);
  const std::size_t k = 10;
  std::vector<std::size_t> counts(k);
  for (std::size_t c = 0; c < k; ++c) counts[c] = 5 + 30 * c;
  std::vector<Label> labels;
  std::vector<std::size_t> preds;
  for (int i = 0; i < 30000; ++i) {
    labels.push_back(static_cast<Label>(rng() % k));
    preds.push_back(rng() % k);
  }
  const auto g = ComputeGroupAccuracy(preds, labels, counts);
  for (auto v : {g.many, g.medium, g.few}) {
    ASSERT_TRUE(v.has_value());
    EXPECT_NEAR(*v, 0.1, 0.02);
  }
}

TEST(Groups, Errors) {
  const std::vector<std::size_t> counts = {10, 10};
  const std::vector<Label> labels = {0, 5};
  const std::vector<std::size_t> preds = {0, 0};
  EXPECT_THROW(ComputeGroupAccuracy(preds, labels, counts), Error);
  const std::vector<std::size_t> short_preds = {0};
  const std::vector<Label> ok = {0, 1};
  EXPECT_THROW(ComputeGroupAccuracy(short_preds, ok, counts), Error);
  EXPECT_THROW(ComputeGroupAccuracy(preds, ok, counts, {10, 20}), Error);
}

TEST(Ece, WorkedExamples) {
  // {0.9 x10, 6 correct} and {0.6 x10, 9 correct}: 0.5 * 0.3 + 0.5 * 0.3.
  std::vector<double> two_bins(10, 0.9);
  two_bins.resize(20, 0.6);
  std::vector<bool> hits(20, false);
  for (int i = 0; i < 6; ++i) hits[i] = true;
  for (int i = 10; i < 19; ++i) hits[i] = true;
  EXPECT_NEAR(ExpectedCalibrationError(two_bins, hits).ece, 0.30, 1e-12);

  // Bin (0.8, 0.9]: conf 0.9, acc 1/2; bin (0.6, 0.7]: conf 0.65, acc 1.
  // ECE = 0.5 * 0.4 + 0.5 * 0.35.
  const std::vector<double> conf = {0.9, 0.9, 0.6 + 0.05, 0.6 + 0.05};
  const auto r = ExpectedCalibrationError(conf, {true, false, true, true}, 10);
  EXPECT_NEAR(r.ece, 0.375, 1e-12);

  const std::vector<double> calibrated(5, 0.8);
  EXPECT_NEAR(ExpectedCalibrationError(calibrated, {true, true, true, true, false}).ece, 0.0,
              1e-15);

  const std::vector<double> sure(7, 1.0);
  EXPECT_DOUBLE_EQ(ExpectedCalibrationError(sure, std::vector<bool>(7, false)).ece, 1.0);
}

TEST(Ece, BinsPartitionTheInput) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> conf;
  std::vector<bool> correct;
  for (int i = 0; i < 999; ++i) {
    conf.push_back(1.0 - u(rng));
    correct.push_back(u(rng) < conf.back());
  }
  const auto r = ExpectedCalibrationError(conf, correct);
  EXPECT_EQ(r.bins.bins.size(), kDefaultEceBins);
  std::size_t total = 0;
  double weighted = 0;
  for (const auto& b : r.bins.bins) {
    total += b.count;
    if (b.count) {
      EXPECT_GT(b.mean_confidence, b.low);
      EXPECT_LE(b.mean_confidence, b.high);
    }
    weighted += b.count * std::abs(b.accuracy - b.mean_confidence);
  }
  EXPECT_EQ(total, 999u);
  EXPECT_NEAR(r.ece, weighted / 999, 1e-12);
  EXPECT_GE(r.ece, 0.0);
  EXPECT_LE(r.ece, 1.0);
}

TEST(Ece, EdgeOfBinIsInclusiveAbove) {
  const std::vector<double> conf = {0.5};
  const auto r = ExpectedCalibrationError(conf, {true}, 2);
  EXPECT_EQ(r.bins.bins[0].count, 1u);
  EXPECT_THROW(ExpectedCalibrationError(std::vector<double>{0.0}, {true}), Error);
  EXPECT_THROW(ExpectedCalibrationError(std::vector<double>{}, {}), Error);
}

TEST(Auroc, WorkedExample) {
  const std::vector<double> id = {0.9, 0.8, 0.4};
  const std::vector<double> ood = {0.7, 0.3};
  EXPECT_NEAR(Auroc(id, ood), 5.0 / 6.0, 1e-15);
  const std::vector<double> tied = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(Auroc(tied, tied), 0.5);
}

TEST(Auroc, MatchesPairCountAndIsAntisymmetric) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 20, m = 1 + rng() % 20;
    std::vector<double> id(n), ood(m);
    // Coarse grid so ties occur.
    for (double& x : id) x = static_cast<double>(rng() % 7) / 7.0;
    for (double& x : ood) x = static_cast<double>(rng() % 7) / 7.0;
    const double a = Auroc(id, ood);
    EXPECT_EQ(a, oracle::PairAuroc(id, ood));
    EXPECT_NEAR(Auroc(ood, id), 1.0 - a, 1e-12);
  }
}

TEST(Ood, PerfectSeparation) {
  const std::vector<double> id = {0.9, 0.95, 0.99};
  const std::vector<double> ood = {0.2, 0.3};
  const auto m = ComputeOodMetrics(id, ood);
  EXPECT_DOUBLE_EQ(m.auroc, 1.0);
  EXPECT_DOUBLE_EQ(m.auroc_ood_positive(), 0.0);
  EXPECT_DOUBLE_EQ(m.ap_in, 1.0);
  EXPECT_DOUBLE_EQ(m.ap_out, 1.0);
  EXPECT_DOUBLE_EQ(m.fpr_at_95tpr, 0.0);
}

TEST(Ood, AveragePrecisionMatchesRankFormula) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto id = Draw(1 + rng() % 40, 1.0, rng);
    const auto ood = Draw(1 + rng() % 40, 0.0, rng);
    EXPECT_NEAR(AveragePrecision(id, ood), RankAp(id, ood), 1e-12);
  }
}

TEST(Ood, FprAtTprWorkedExample) {
  // 20 ID scores 1..20: TPR >= 0.95 needs the top 19, threshold 2.
  std::vector<double> id;
  for (int i = 1; i <= 20; ++i) id.push_back(i);
  const std::vector<double> ood = {0.5, 1.5, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(FprAtTpr(id, ood), 0.5);
  EXPECT_DOUBLE_EQ(FprAtTpr(id, ood, 1.0), 0.75);
}

TEST(Ood, FprIsMonotoneUnderIdShifts) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    auto id = Draw(50, 0.5, rng);
    const auto ood = Draw(60, 0.0, rng);
    double prev = FprAtTpr(id, ood);
    for (int s = 0; s < 5; ++s) {
      for (double& x : id) x += 0.3;
      const double cur = FprAtTpr(id, ood);
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(Ood, NanIsRejected) {
  const std::vector<double> id = {0.5, std::nan("")};
  const std::vector<double> ood = {0.1};
  try {
    ComputeOodMetrics(id, ood);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
  EXPECT_THROW(Auroc(ood, std::vector<double>{}), Error);
}

std::vector<EmbeddingRecord> Labeled(std::size_t n, std::size_t d, std::size_t k,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::RandomRecords(n, d, k, true, rng);
}

TEST(Evaluate, ZeroHeadIsChanceAndLowConfidence) {
  ClassifierHead head(4, 6);
  const auto test = Labeled(400, 6, 4, 7);
  const std::vector<std::size_t> counts(4, 50);
  const auto r = Evaluate(head, oracle::Ptrs(test), counts);
  std::size_t zeros = 0;
  for (const auto& rec : test) zeros += rec.label == 0;
  // All logits tie, so every prediction is class 0.
  EXPECT_DOUBLE_EQ(r.accuracy(), static_cast<double>(zeros) / 400);
  EXPECT_NEAR(r.accuracy(), 0.25, 0.06);
  EXPECT_NEAR(r.ece, std::abs(r.accuracy() - 0.25), 1e-12);
  EXPECT_FALSE(r.ood.has_value());
}

TEST(Evaluate, EqualsManualComposition) {
  std::mt19937_64 rng(8);
  ClassifierHead head(5, 6, {true, 3}, 2);
  oracle::Randomize(head.params(), rng, 0.7);
  const auto test = Labeled(300, 6, 5, 9);
  auto ood = Labeled(120, 6, 5, 10);
  for (auto& r : ood) r.label = kOodTruth;
  const std::vector<std::size_t> counts = {200, 90, 40, 15, 3};
  const auto report = Evaluate(head, oracle::Ptrs(test), counts, {}, oracle::Ptrs(ood));

  std::vector<std::size_t> preds;
  std::vector<Label> labels;
  std::vector<double> conf, ood_conf;
  std::vector<bool> correct;
  for (const auto& r : test) {
    const auto p = oracle::Softmax(oracle::Logits(head.params(), true, r.weak));
    preds.push_back(oracle::FirstArgmax(p));
    labels.push_back(r.label);
    conf.push_back(static_cast<double>(oracle::Max(p)));
    correct.push_back(preds.back() == static_cast<std::size_t>(r.label));
  }
  for (const auto& r : ood) {
    ood_conf.push_back(
        static_cast<double>(oracle::Max(oracle::Softmax(oracle::Logits(head.params(), true, r.weak)))));
  }
  const auto groups = ComputeGroupAccuracy(preds, labels, counts);
  EXPECT_DOUBLE_EQ(report.accuracy(), groups.overall);
  EXPECT_EQ(report.groups.few, groups.few);
  EXPECT_EQ(report.n_test, 300u);
  EXPECT_NEAR(report.ece, ExpectedCalibrationError(conf, correct).ece, 1e-9);
  ASSERT_TRUE(report.ood.has_value());
  EXPECT_NEAR(report.ood->auroc, Auroc(conf, ood_conf), 1e-9);
}

TEST(Evaluate, JsonRoundTripAndCsv) {
  std::mt19937_64 rng(11);
  ClassifierHead head(3, 4);
  oracle::Randomize(head.params(), rng, 1.0);
  const auto test = Labeled(90, 4, 3, 12);
  auto ood = Labeled(30, 4, 3, 13);
  for (auto& r : ood) r.label = kOodTruth;
  const std::vector<std::size_t> counts = {150, 30, 4};
  const auto report = Evaluate(head, oracle::Ptrs(test), counts, {}, oracle::Ptrs(ood));
  const auto back = EvalReportFromJson(nlohmann::json::parse(ToJson(report).dump()));
  EXPECT_EQ(ToJson(back), ToJson(report));
  EXPECT_EQ(back.groups.medium, report.groups.medium);
  EXPECT_EQ(back.ood->fpr_at_95tpr, report.ood->fpr_at_95tpr);

  const auto path = std::filesystem::temp_directory_path() / "loft_reliability_test.csv";
  WriteReliabilityCsv(report.bins, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "bin_low,bin_high,mean_conf,acc,count");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, kDefaultEceBins);
  std::filesystem::remove(path);
}

TEST(Evaluate, UnlabeledTestRecordIsRejected) {
  ClassifierHead head(2, 2);
  std::vector<EmbeddingRecord> test(1);
  test[0].weak = test[0].strong = {1, 0};
  const std::vector<std::size_t> counts = {1, 1};
  EXPECT_THROW(Evaluate(head, oracle::Ptrs(test), counts), Error);
}

TEST(Audit, CountsStagesAndRefusesTrainingScope) {
  DatasetBundle bundle;
  bundle.dim = 2;
  bundle.classes = 2;
  // Head logits = z, so MSP grows with |z0 - z1|.
  auto add = [&](Label label, float a, float b) {
    EmbeddingRecord r;
    r.id = bundle.records.size();
    r.label = label;
    r.weak = r.strong = {a, b};
    bundle.records.push_back(r);
  };
  add(kUnlabeled, 5, 0);   // ID kept, confident
  add(kUnlabeled, 0, 0);   // ID kept, not confident
  add(kOodTruth, 0, 0);    // OOD kept, removed at stage 2
  add(kOodTruth, 4, 0);    // OOD kept, survives
  add(kOodTruth, 1, 1);    // OOD removed at stage 1
  ClassifierHead head(2, 2);
  head.params().weight(0, 0) = head.params().weight(1, 1) = 1.0;
  const IndexSet pool = {0, 1, 2, 3, 4};
  const IndexSet kept = {0, 1, 2, 3};
  const auto a = AuditOodFiltering(head, bundle, pool, kept, 0.6);
  EXPECT_EQ(a.n_ood, 3u);
  EXPECT_EQ(a.removed_stage1, 1u);
  EXPECT_EQ(a.removed_stage2, 1u);
  EXPECT_EQ(a.id_total, 2u);
  EXPECT_EQ(a.id_kept, 1u);
  EXPECT_DOUBLE_EQ(a.removed_fraction(), 2.0 / 3.0);

  TrainingScope scope;
  EXPECT_THROW(AuditOodFiltering(head, bundle, pool, kept, 0.6), Error);
}

}  // namespace
}  // namespace loft
