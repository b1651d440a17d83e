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

#include "loft/losses.hpp"

#include <algorithm>
#include <cmath>

#include "loft/error.hpp"

namespace loft {

namespace {

std::vector<EmbeddingView> WeakViews(RecordBatch batch) {
  std::vector<EmbeddingView> views;
  views.reserve(batch.size());
  for (const auto* r : batch) views.emplace_back(r->weak);
  return views;
}

std::vector<EmbeddingView> StrongViews(RecordBatch batch) {
  std::vector<EmbeddingView> views;
  views.reserve(batch.size());
  for (const auto* r : batch) views.emplace_back(r->strong);
  return views;
}

void RequireFiniteLogits(const Matrix& logits) {
  for (double x : logits.flat()) {
    if (!std::isfinite(x)) throw Error(ErrorKind::kContract, "non-finite logit");
  }
}

double LogSumExp(std::span<const double> x) {
  const double top = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - top);
  return top + std::log(s);
}

// Non-throwing softmax for use inside parallel regions (logits pre-checked).
void SoftmaxRow(std::span<const double> logits, std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - top);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
}

double OrderedSum(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

std::vector<double> LogPrior(const ClassPrior& prior, std::size_t classes) {
  Require(prior.probs.size() == classes, ErrorKind::kContract,
          "prior has " + std::to_string(prior.probs.size()) +
              " components, head has " + std::to_string(classes));
  std::vector<double> log_prior(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    if (!(prior.probs[k] > 0.0)) {
      throw Error(ErrorKind::kDegeneratePrior,
                  "prior component " + std::to_string(k) + " is zero");
    }
    log_prior[k] = std::log(prior.probs[k]);
  }
  return log_prior;
}

}  // namespace

void LossConfig::Validate() const {
  Require(std::isfinite(tau) && tau >= 0.0, ErrorKind::kParameter, "tau must be >= 0");
  Require(c_u > 0.0 && c_u < 1.0, ErrorKind::kParameter, "c_u must lie in (0, 1)");
  Require(c_ood > 0.0 && c_ood < 1.0, ErrorKind::kParameter,
          "c_ood must lie in (0, 1)");
  Require(std::isfinite(lambda1) && lambda1 >= 0.0, ErrorKind::kParameter,
          "lambda1 must be >= 0");
  Require(std::isfinite(lambda2) && lambda2 >= 0.0, ErrorKind::kParameter,
          "lambda2 must be >= 0");
}

bool ConfidenceMask(std::span<const double> probs_weak, double c_u) {
  return Msp(probs_weak) > c_u;
}

bool OodMask(std::span<const double> probs_weak, double c_ood) {
  return Msp(probs_weak) > c_ood;
}

LossResult SupervisedLoss(const ClassifierHead& head, RecordBatch batch,
                          const ClassPrior& prior, double tau, Exec exec) {
  Require(!batch.empty(), ErrorKind::kContract, "empty labeled batch");
  Require(std::isfinite(tau) && tau >= 0.0, ErrorKind::kParameter, "tau must be >= 0");
  const std::size_t K = head.classes();
  for (const auto* r : batch) {
    Require(IsClassLabel(r->label) && static_cast<std::size_t>(r->label) < K,
            ErrorKind::kContract,
            "record " + std::to_string(r->id) + " is not labeled");
  }
  std::vector<double> shift(K, 0.0);
  if (tau > 0.0) {
    shift = LogPrior(prior, K);
    for (double& s : shift) s *= tau;
  } else {
    Require(prior.probs.size() == K, ErrorKind::kContract, "prior size mismatch");
  }

  const auto inputs = WeakViews(batch);
  const auto acts = ForwardBatch(head, inputs, exec);
  RequireFiniteLogits(acts.logits);

  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dlogits(n, K);
  std::vector<double> losses(n);
  ForEachSample(n, exec, [&](std::size_t i) {
    std::vector<double> adjusted(K);
    for (std::size_t k = 0; k < K; ++k) adjusted[k] = acts.logits(i, k) + shift[k];
    const auto y = static_cast<std::size_t>(batch[i]->label);
    losses[i] = LogSumExp(adjusted) - adjusted[y];
    auto dl = dlogits.row(i);
    SoftmaxRow(adjusted, dl);
    dl[y] -= 1.0;
    for (double& v : dl) v *= inv_n;
  });

  LossResult result;
  result.loss = OrderedSum(losses) * inv_n;
  result.grads = HeadParams::Zeros(K, head.dim(), head.adapter());
  BackwardBatch(head, inputs, acts, dlogits, result.grads, exec);
  return result;
}

UnlabeledLossResult UnlabeledLoss(const ClassifierHead& head, RecordBatch batch,
                                  const LossConfig& cfg, bool open_world,
                                  Exec exec, const ClassPrior* prior) {
  cfg.Validate();
  const std::size_t K = head.classes();
  for (const auto* r : batch) {
    Require(!IsClassLabel(r->label), ErrorKind::kContract,
            "labeled record " + std::to_string(r->id) + " in unlabeled batch");
  }
  UnlabeledLossResult result;
  result.grads = HeadParams::Zeros(K, head.dim(), head.adapter());
  const std::size_t n = batch.size();
  if (n == 0) return result;

  std::vector<double> confidence_shift(K, 0.0);
  if (cfg.adjust_confidence) {
    Require(prior != nullptr, ErrorKind::kContract,
            "adjust_confidence requires a class prior");
    confidence_shift = LogPrior(*prior, K);
    for (double& s : confidence_shift) s *= cfg.tau;
  }

  // Targets: forward only, never differentiated.
  const auto weak_acts = ForwardBatch(head, WeakViews(batch), exec);
  RequireFiniteLogits(weak_acts.logits);
  const auto strong_inputs = StrongViews(batch);
  const auto strong_acts = ForwardBatch(head, strong_inputs, exec);
  RequireFiniteLogits(strong_acts.logits);

  enum : unsigned char { kSoft = 0, kHard = 1, kDropped = 2 };
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dlogits(n, K);
  std::vector<double> losses(n, 0.0);
  std::vector<double> msps(n, 0.0);
  std::vector<unsigned char> kinds(n, kSoft);
  ForEachSample(n, exec, [&](std::size_t i) {
    std::vector<double> p_weak(K);
    SoftmaxRow(weak_acts.logits.row(i), p_weak);
    double confidence;
    if (cfg.adjust_confidence) {
      std::vector<double> adjusted(K), p_adj(K);
      for (std::size_t k = 0; k < K; ++k) {
        adjusted[k] = weak_acts.logits(i, k) + confidence_shift[k];
      }
      SoftmaxRow(adjusted, p_adj);
      confidence = Msp(p_adj);
    } else {
      confidence = Msp(p_weak);
    }
    msps[i] = confidence;
    const bool keep = !open_world || confidence > cfg.c_ood;
    const bool hard = confidence > cfg.c_u;
    auto dl = dlogits.row(i);
    if (!keep) {
      kinds[i] = kDropped;
      return;  // dl stays zero
    }
    const auto s = strong_acts.logits.row(i);
    const double lse = LogSumExp(s);
    SoftmaxRow(s, dl);  // dl <- q
    if (hard) {
      kinds[i] = kHard;
      const std::size_t y_hat = Argmax(p_weak);
      losses[i] = cfg.lambda1 * (lse - s[y_hat]);
      dl[y_hat] -= 1.0;
      for (double& v : dl) v *= cfg.lambda1 * inv_n;
    } else {
      double ce = 0.0;
      for (std::size_t k = 0; k < K; ++k) ce += p_weak[k] * (lse - s[k]);
      losses[i] = cfg.lambda2 * ce;
      for (std::size_t k = 0; k < K; ++k) {
        dl[k] = (dl[k] - p_weak[k]) * cfg.lambda2 * inv_n;
      }
    }
  });

  result.loss = OrderedSum(losses) * inv_n;
  for (std::size_t i = 0; i < n; ++i) {
    result.stats.mean_msp += msps[i];
    switch (kinds[i]) {
      case kHard:
        ++result.stats.n_hard;
        break;
      case kSoft:
        ++result.stats.n_soft;
        break;
      default:
        ++result.stats.n_ood_dropped;
    }
  }
  result.stats.mean_msp *= inv_n;
  BackwardBatch(head, strong_inputs, strong_acts, dlogits, result.grads, exec);
  return result;
}

LossResult TotalLoss(const LossResult& supervised,
                     const UnlabeledLossResult& unlabeled) {
  Require(supervised.grads.SameShape(unlabeled.grads), ErrorKind::kContract,
          "loss terms computed on differently shaped heads");
  LossResult total;
  total.loss = supervised.loss + unlabeled.loss;
  total.grads = supervised.grads;
  total.grads += unlabeled.grads;
  return total;
}

}  // namespace loft
