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

// The trainable classifier f over frozen embeddings: an optional residual
// bottleneck adapter followed by a linear map to K logits, plus the
// softmax/MSP helpers and the SGD-with-momentum optimizer.

#ifndef LOFT_HEAD_HPP_
#define LOFT_HEAD_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "loft/matrix.hpp"

namespace loft {

struct AdapterConfig {
  bool enabled = false;
  std::size_t rank = 32;

  bool operator==(const AdapterConfig&) const = default;
};

// All trainable blocks. Adapter blocks are empty when the adapter is off.
// The same type holds gradients and momentum buffers.
struct HeadParams {
  Matrix weight;                   // K x d
  std::vector<double> bias;        // K
  Matrix down;                     // r x d
  std::vector<double> down_bias;   // r
  Matrix up;                       // d x r
  std::vector<double> up_bias;     // d

  static HeadParams Zeros(std::size_t classes, std::size_t dim,
                          const AdapterConfig& adapter);

  std::vector<std::span<double>> Blocks();
  std::vector<std::span<const double>> Blocks() const;
  std::size_t size() const;
  bool SameShape(const HeadParams& other) const;
  bool AllFinite() const;

  HeadParams& operator+=(const HeadParams& other);
  bool operator==(const HeadParams&) const = default;
};

using HeadGradients = HeadParams;

class ClassifierHead {
 public:
  // W and b start at zero. Adapter down-projection is drawn from
  // N(0, 1/d) with `init_seed`; the up-projection starts at zero so the
  // adapter is initially the identity.
  ClassifierHead(std::size_t classes, std::size_t dim,
                 AdapterConfig adapter = {}, std::uint64_t init_seed = 0);

  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  const AdapterConfig& adapter() const { return adapter_; }
  HeadParams& params() { return params_; }
  const HeadParams& params() const { return params_; }

  // Features fed to the linear map. `pre` receives the adapter
  // pre-activations (size r) and may be empty when the adapter is off.
  void Features(std::span<const double> z, std::span<double> hidden,
                std::span<double> pre) const;

  // logits = W * features(z) + b. Throws kContract on a dimension mismatch.
  std::vector<double> Forward(std::span<const double> z) const;
  std::vector<double> Forward(std::span<const float> z) const;

 private:
  std::size_t classes_;
  std::size_t dim_;
  AdapterConfig adapter_;
  HeadParams params_;
};

// Max-shifted softmax. Throws kContract on non-finite logits.
std::vector<double> Softmax(std::span<const double> logits);
void SoftmaxInPlace(std::span<double> logits);
double Msp(std::span<const double> probs);
// First index of the maximum.
std::size_t Argmax(std::span<const double> values);

struct OptimizerState {
  std::uint64_t step = 0;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  HeadParams velocity;

  static OptimizerState For(const ClassifierHead& head, double learning_rate,
                            double momentum, double weight_decay);
  bool operator==(const OptimizerState&) const = default;
};

// v <- momentum * v + g
// p <- p - lr * (v + weight_decay * p)   (weight decay on matrices only)
// `lr_scale` multiplies the learning rate for this step (schedules).
// Throws DivergenceError carrying the step index on a non-finite gradient.
void ApplyGradients(ClassifierHead& head, OptimizerState& opt,
                    const HeadGradients& grads, double lr_scale = 1.0);

}  // namespace loft

#endif  // LOFT_HEAD_HPP_
