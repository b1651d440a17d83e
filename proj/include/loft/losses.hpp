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

// Training objectives and masks.
//
//   supervised:   mean_i CE(y_i, f(W(x_i)) + tau * log prior)
//   confidence:   M     = [MSP(f(W(x))) > c_u]
//   ood:          M_ood = [MSP(f(W(x))) > c_ood]     (open world only)
//   unlabeled:    mean_i M_ood * ( lambda1 * M       * CE(argmax p_w, f(A(x)))
//                                + lambda2 * (1 - M) * CE(p_w,        f(A(x))) )
//   total:        supervised + unlabeled
//
// p_w = softmax(f(W(x))) is a fixed target: no gradient flows through the
// weak view. The unlabeled mean divides by the full batch size, masked
// samples included.

#ifndef LOFT_LOSSES_HPP_
#define LOFT_LOSSES_HPP_

#include <span>
#include <vector>

#include "loft/embedstore.hpp"
#include "loft/head.hpp"
#include "loft/kernels.hpp"

namespace loft {

struct LossConfig {
  double tau = 1.0;
  double c_u = 0.6;
  double c_ood = 0.6;
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  // Compute mask confidences from prior-adjusted weak logits instead of raw
  // ones. Off by default; targets always use raw logits.
  bool adjust_confidence = false;

  void Validate() const;
};

struct UnlabeledBatchStats {
  std::size_t n_hard = 0;
  std::size_t n_soft = 0;
  std::size_t n_ood_dropped = 0;
  double mean_msp = 0.0;
};

struct LossResult {
  double loss = 0.0;
  HeadGradients grads;
};

struct UnlabeledLossResult {
  double loss = 0.0;
  HeadGradients grads;
  UnlabeledBatchStats stats;
};

using RecordBatch = std::span<const EmbeddingRecord* const>;

bool ConfidenceMask(std::span<const double> probs_weak, double c_u);
bool OodMask(std::span<const double> probs_weak, double c_ood);

// Weak views are used. Throws kContract for unlabeled records or an empty
// batch, kDegeneratePrior for a zero prior component when tau > 0.
LossResult SupervisedLoss(const ClassifierHead& head, RecordBatch batch,
                          const ClassPrior& prior, double tau,
                          Exec exec = Exec::kParallel);

// Throws kContract when the batch holds a labeled record. `prior` is only
// read when cfg.adjust_confidence is set.
UnlabeledLossResult UnlabeledLoss(const ClassifierHead& head, RecordBatch batch,
                                  const LossConfig& cfg, bool open_world,
                                  Exec exec = Exec::kParallel,
                                  const ClassPrior* prior = nullptr);

// Sum of both terms. Throws kContract on mismatched gradient shapes.
LossResult TotalLoss(const LossResult& supervised,
                     const UnlabeledLossResult& unlabeled);

}  // namespace loft

#endif  // LOFT_LOSSES_HPP_
