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

// Serial reference kernels. Kept deliberately naive: one sample at a time,
// gradients accumulated directly into the output.

#include <algorithm>
#include <vector>

#include "loft/error.hpp"
#include "loft/kernels.hpp"

namespace loft::serial {

BatchActivations ForwardBatch(const ClassifierHead& head,
                              std::span<const EmbeddingView> inputs) {
  const std::size_t n = inputs.size();
  const std::size_t d = head.dim();
  const std::size_t K = head.classes();
  const std::size_t r = head.adapter().rank;
  BatchActivations acts{Matrix(n, d), Matrix(n, r), Matrix(n, K)};
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    Require(inputs[i].size() == d, ErrorKind::kContract,
            "embedding dimension does not match head");
    std::copy(inputs[i].begin(), inputs[i].end(), z.begin());
    auto hidden = acts.hidden.row(i);
    head.Features(z, hidden, acts.pre.row(i));
    for (std::size_t k = 0; k < K; ++k) {
      double s = head.params().bias[k];
      const auto w = head.params().weight.row(k);
      for (std::size_t j = 0; j < d; ++j) s += w[j] * hidden[j];
      acts.logits(i, k) = s;
    }
  }
  return acts;
}

void BackwardBatch(const ClassifierHead& head,
                   std::span<const EmbeddingView> inputs,
                   const BatchActivations& acts, const Matrix& dlogits,
                   HeadGradients& grads) {
  const auto& p = head.params();
  const std::size_t d = head.dim();
  const std::size_t K = head.classes();
  const std::size_t r = head.adapter().rank;
  Require(grads.SameShape(p), ErrorKind::kContract, "gradient shape mismatch");
  Require(dlogits.rows() == inputs.size() && dlogits.cols() == K,
          ErrorKind::kContract, "dlogits shape mismatch");
  std::vector<double> dh(d);
  std::vector<double> dpre(r);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto dl = dlogits.row(i);
    const auto h = acts.hidden.row(i);
    for (std::size_t k = 0; k < K; ++k) {
      grads.bias[k] += dl[k];
      for (std::size_t j = 0; j < d; ++j) grads.weight(k, j) += dl[k] * h[j];
    }
    if (r == 0) continue;
    const auto pre = acts.pre.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += p.weight(k, j) * dl[k];
      dh[j] = s;
    }
    for (std::size_t j = 0; j < d; ++j) {
      grads.up_bias[j] += dh[j];
      for (std::size_t m = 0; m < r; ++m) {
        grads.up(j, m) += dh[j] * std::max(pre[m], 0.0);
      }
    }
    for (std::size_t m = 0; m < r; ++m) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += p.up(j, m) * dh[j];
      dpre[m] = pre[m] > 0.0 ? s : 0.0;
    }
    for (std::size_t m = 0; m < r; ++m) {
      grads.down_bias[m] += dpre[m];
      for (std::size_t j = 0; j < d; ++j) {
        grads.down(m, j) += dpre[m] * static_cast<double>(inputs[i][j]);
      }
    }
  }
}

}  // namespace loft::serial
