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

// Batched forward/backward kernels for the classifier head.
//
// Two implementations live side by side: a plain serial reference
// (kernels_serial.cpp) and an OpenMP version (kernels_omp.cpp). Both sum every
// gradient element over samples in ascending sample order, so the two agree
// bit for bit and results do not depend on the thread count.

#ifndef LOFT_KERNELS_HPP_
#define LOFT_KERNELS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "loft/head.hpp"
#include "loft/matrix.hpp"

namespace loft {

enum class Exec { kSerial, kParallel };

using EmbeddingView = std::span<const float>;

// Per-sample forward intermediates kept for the backward pass.
struct BatchActivations {
  Matrix hidden;  // n x d, features fed to the linear map
  Matrix pre;     // n x r, adapter pre-activations (0 columns without adapter)
  Matrix logits;  // n x K
};

// Runs fn(i) for every i in [0, n). Under kParallel, iterations are spread
// over OpenMP threads and fn must only write sample-local state.
template <typename Fn>
void ForEachSample(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::kSerial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

namespace serial {
BatchActivations ForwardBatch(const ClassifierHead& head,
                              std::span<const EmbeddingView> inputs);
void BackwardBatch(const ClassifierHead& head,
                   std::span<const EmbeddingView> inputs,
                   const BatchActivations& acts, const Matrix& dlogits,
                   HeadGradients& grads);
}  // namespace serial

namespace parallel {
BatchActivations ForwardBatch(const ClassifierHead& head,
                              std::span<const EmbeddingView> inputs);
void BackwardBatch(const ClassifierHead& head,
                   std::span<const EmbeddingView> inputs,
                   const BatchActivations& acts, const Matrix& dlogits,
                   HeadGradients& grads);
}  // namespace parallel

// Throws kContract when an input's dimension differs from the head's.
inline BatchActivations ForwardBatch(const ClassifierHead& head,
                                     std::span<const EmbeddingView> inputs,
                                     Exec exec) {
  return exec == Exec::kSerial ? serial::ForwardBatch(head, inputs)
                               : parallel::ForwardBatch(head, inputs);
}

// grads += sum_i d(dlogits_i . logits_i)/d(params). `grads` must already have
// the head's shape.
inline void BackwardBatch(const ClassifierHead& head,
                          std::span<const EmbeddingView> inputs,
                          const BatchActivations& acts, const Matrix& dlogits,
                          HeadGradients& grads, Exec exec) {
  if (exec == Exec::kSerial) {
    serial::BackwardBatch(head, inputs, acts, dlogits, grads);
  } else {
    parallel::BackwardBatch(head, inputs, acts, dlogits, grads);
  }
}

// Caps the OpenMP team size; 0 leaves the runtime default.
void SetThreadLimit(int threads);

}  // namespace loft

#endif  // LOFT_KERNELS_HPP_
