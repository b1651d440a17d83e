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

#include "loft/head.hpp"

#include <algorithm>
#include <cmath>

#include "loft/error.hpp"
#include "loft/random.hpp"

namespace loft {

HeadParams HeadParams::Zeros(std::size_t classes, std::size_t dim,
                             const AdapterConfig& adapter) {
  HeadParams p;
  p.weight = Matrix(classes, dim);
  p.bias.assign(classes, 0.0);
  if (adapter.enabled) {
    p.down = Matrix(adapter.rank, dim);
    p.down_bias.assign(adapter.rank, 0.0);
    p.up = Matrix(dim, adapter.rank);
    p.up_bias.assign(dim, 0.0);
  }
  return p;
}

std::vector<std::span<double>> HeadParams::Blocks() {
  return {weight.flat(), bias, down.flat(), down_bias, up.flat(), up_bias};
}

std::vector<std::span<const double>> HeadParams::Blocks() const {
  return {weight.flat(), bias, down.flat(), down_bias, up.flat(), up_bias};
}

std::size_t HeadParams::size() const {
  std::size_t n = 0;
  for (auto b : Blocks()) n += b.size();
  return n;
}

bool HeadParams::SameShape(const HeadParams& o) const {
  return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
         bias.size() == o.bias.size() && down.rows() == o.down.rows() &&
         down.cols() == o.down.cols() && down_bias.size() == o.down_bias.size() &&
         up.rows() == o.up.rows() && up.cols() == o.up.cols() &&
         up_bias.size() == o.up_bias.size();
}

bool HeadParams::AllFinite() const {
  for (auto b : Blocks()) {
    for (double x : b) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

HeadParams& HeadParams::operator+=(const HeadParams& o) {
  Require(SameShape(o), ErrorKind::kContract, "gradient shape mismatch");
  auto dst = Blocks();
  auto src = o.Blocks();
  for (std::size_t b = 0; b < dst.size(); ++b) {
    for (std::size_t i = 0; i < dst[b].size(); ++i) dst[b][i] += src[b][i];
  }
  return *this;
}

ClassifierHead::ClassifierHead(std::size_t classes, std::size_t dim,
                               AdapterConfig adapter, std::uint64_t init_seed)
    : classes_(classes), dim_(dim), adapter_(adapter) {
  Require(classes >= 1 && dim >= 1, ErrorKind::kParameter,
          "head needs K >= 1 and d >= 1");
  Require(!adapter.enabled || adapter.rank >= 1, ErrorKind::kParameter,
          "adapter rank must be >= 1");
  if (!adapter_.enabled) adapter_.rank = 0;
  params_ = HeadParams::Zeros(classes, dim, adapter_);
  if (adapter_.enabled) {
    Rng rng = MakeRng(init_seed, Stream::kAdapterInit);
    NormalSampler normal;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& x : params_.down.flat()) x = scale * normal(rng);
  }
}

void ClassifierHead::Features(std::span<const double> z, std::span<double> hidden,
                              std::span<double> pre) const {
  std::copy(z.begin(), z.end(), hidden.begin());
  if (!adapter_.enabled) return;
  const std::size_t r = adapter_.rank;
  for (std::size_t m = 0; m < r; ++m) {
    double s = params_.down_bias[m];
    const auto row = params_.down.row(m);
    for (std::size_t j = 0; j < dim_; ++j) s += row[j] * z[j];
    pre[m] = s;
  }
  for (std::size_t j = 0; j < dim_; ++j) {
    double s = params_.up_bias[j];
    const auto row = params_.up.row(j);
    for (std::size_t m = 0; m < r; ++m) s += row[m] * std::max(pre[m], 0.0);
    hidden[j] += s;
  }
}

std::vector<double> ClassifierHead::Forward(std::span<const double> z) const {
  Require(z.size() == dim_, ErrorKind::kContract,
          "embedding dimension " + std::to_string(z.size()) +
              " does not match head dimension " + std::to_string(dim_));
  std::vector<double> hidden(dim_);
  std::vector<double> pre(adapter_.rank);
  Features(z, hidden, pre);
  std::vector<double> logits(classes_);
  for (std::size_t k = 0; k < classes_; ++k) {
    double s = params_.bias[k];
    const auto row = params_.weight.row(k);
    for (std::size_t j = 0; j < dim_; ++j) s += row[j] * hidden[j];
    logits[k] = s;
  }
  return logits;
}

std::vector<double> ClassifierHead::Forward(std::span<const float> z) const {
  std::vector<double> zd(z.begin(), z.end());
  return Forward(std::span<const double>(zd));
}

void SoftmaxInPlace(std::span<double> logits) {
  Require(!logits.empty(), ErrorKind::kContract, "softmax of empty vector");
  double top = logits[0];
  for (double x : logits) {
    Require(std::isfinite(x), ErrorKind::kContract, "softmax of non-finite logit");
    top = std::max(top, x);
  }
  double sum = 0.0;
  for (double& x : logits) {
    x = std::exp(x - top);
    sum += x;
  }
  for (double& x : logits) x /= sum;
}

std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  SoftmaxInPlace(p);
  return p;
}

double Msp(std::span<const double> probs) {
  return *std::max_element(probs.begin(), probs.end());
}

std::size_t Argmax(std::span<const double> values) {
  return static_cast<std::size_t>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

OptimizerState OptimizerState::For(const ClassifierHead& head,
                                   double learning_rate, double momentum,
                                   double weight_decay) {
  Require(learning_rate > 0.0 && std::isfinite(learning_rate),
          ErrorKind::kParameter, "learning rate must be positive");
  Require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kParameter,
          "momentum must lie in [0, 1)");
  Require(weight_decay >= 0.0 && std::isfinite(weight_decay),
          ErrorKind::kParameter, "weight decay must be >= 0");
  OptimizerState opt;
  opt.learning_rate = learning_rate;
  opt.momentum = momentum;
  opt.weight_decay = weight_decay;
  opt.velocity = HeadParams::Zeros(head.classes(), head.dim(), head.adapter());
  return opt;
}

void ApplyGradients(ClassifierHead& head, OptimizerState& opt,
                    const HeadGradients& grads, double lr_scale) {
  auto& params = head.params();
  Require(grads.SameShape(params) && opt.velocity.SameShape(params),
          ErrorKind::kContract, "optimizer shapes do not match the head");
  if (!grads.AllFinite()) {
    throw DivergenceError("non-finite gradient", opt.step);
  }
  const double lr = opt.learning_rate * lr_scale;
  auto p = params.Blocks();
  auto v = opt.velocity.Blocks();
  auto g = grads.Blocks();
  // Blocks 0, 2, 4 are matrices; 1, 3, 5 are biases.
  for (std::size_t b = 0; b < p.size(); ++b) {
    const double decay = (b % 2 == 0) ? opt.weight_decay : 0.0;
    for (std::size_t i = 0; i < p[b].size(); ++i) {
      v[b][i] = opt.momentum * v[b][i] + g[b][i];
      p[b][i] -= lr * (v[b][i] + decay * p[b][i]);
    }
  }
  ++opt.step;
  if (!params.AllFinite()) {
    throw DivergenceError("non-finite parameters after update", opt.step - 1);
  }
}

}  // namespace loft
