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

// OpenMP kernels. The backward pass runs in two phases: per-sample
// back-propagation to the adapter (parallel over samples), then outer-product
// accumulation (parallel over parameter rows, samples summed in order).

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "loft/error.hpp"
#include "loft/kernels.hpp"

namespace loft {

void SetThreadLimit(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

namespace parallel {

BatchActivations ForwardBatch(const ClassifierHead& head,
                              std::span<const EmbeddingView> inputs) {
  const std::size_t n = inputs.size();
  const std::size_t d = head.dim();
  const std::size_t K = head.classes();
  const std::size_t r = head.adapter().rank;
  for (const auto& z : inputs) {
    Require(z.size() == d, ErrorKind::kContract,
            "embedding dimension does not match head");
  }
  BatchActivations acts{Matrix(n, d), Matrix(n, r), Matrix(n, K)};
  ForEachSample(n, Exec::kParallel, [&](std::size_t i) {
    std::vector<double> z(inputs[i].begin(), inputs[i].end());
    auto hidden = acts.hidden.row(i);
    head.Features(z, hidden, acts.pre.row(i));
    for (std::size_t k = 0; k < K; ++k) {
      double s = head.params().bias[k];
      const auto w = head.params().weight.row(k);
      for (std::size_t j = 0; j < d; ++j) s += w[j] * hidden[j];
      acts.logits(i, k) = s;
    }
  });
  return acts;
}

void BackwardBatch(const ClassifierHead& head,
                   std::span<const EmbeddingView> inputs,
                   const BatchActivations& acts, const Matrix& dlogits,
                   HeadGradients& grads) {
  const auto& p = head.params();
  const std::size_t n = inputs.size();
  const std::size_t d = head.dim();
  const std::size_t K = head.classes();
  const std::size_t r = head.adapter().rank;
  Require(grads.SameShape(p), ErrorKind::kContract, "gradient shape mismatch");
  Require(dlogits.rows() == n && dlogits.cols() == K, ErrorKind::kContract,
          "dlogits shape mismatch");

  const auto rows_k = static_cast<std::ptrdiff_t>(K);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t kk = 0; kk < rows_k; ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    auto gw = grads.weight.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double dl = dlogits(i, k);
      grads.bias[k] += dl;
      const auto h = acts.hidden.row(i);
      for (std::size_t j = 0; j < d; ++j) gw[j] += dl * h[j];
    }
  }
  if (r == 0) return;

  Matrix dh(n, d);
  Matrix dpre(n, r);
  ForEachSample(n, Exec::kParallel, [&](std::size_t i) {
    const auto dl = dlogits.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += p.weight(k, j) * dl[k];
      dh(i, j) = s;
    }
    for (std::size_t m = 0; m < r; ++m) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += p.up(j, m) * dh(i, j);
      dpre(i, m) = acts.pre(i, m) > 0.0 ? s : 0.0;
    }
  });

  const auto rows_d = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < rows_d; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    auto gu = grads.up.row(j);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = dh(i, j);
      grads.up_bias[j] += g;
      const auto pre = acts.pre.row(i);
      for (std::size_t m = 0; m < r; ++m) gu[m] += g * std::max(pre[m], 0.0);
    }
  }

  const auto rows_r = static_cast<std::ptrdiff_t>(r);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t mm = 0; mm < rows_r; ++mm) {
    const auto m = static_cast<std::size_t>(mm);
    auto gd = grads.down.row(m);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = dpre(i, m);
      grads.down_bias[m] += g;
      const auto z = inputs[i];
      for (std::size_t j = 0; j < d; ++j) gd[j] += g * static_cast<double>(z[j]);
    }
  }
}

}  // namespace parallel
}  // namespace loft
