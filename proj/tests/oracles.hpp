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

// Independent reference implementations used as test oracles. Everything
// here is written from the defining formulas in long double and shares no
// code with the library beyond its data types.

#ifndef LOFT_TESTS_ORACLES_HPP_
#define LOFT_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "loft/embedstore.hpp"
#include "loft/head.hpp"
#include "loft/losses.hpp"

namespace loft::oracle {

using Vec = std::vector<long double>;

inline Vec Logits(const HeadParams& p, bool adapter, const std::vector<float>& z) {
  const std::size_t d = z.size();
  Vec h(d);
  for (std::size_t j = 0; j < d; ++j) h[j] = z[j];
  if (adapter) {
    const std::size_t r = p.down.rows();
    Vec act(r);
    for (std::size_t m = 0; m < r; ++m) {
      long double s = p.down_bias[m];
      for (std::size_t j = 0; j < d; ++j) s += (long double)p.down(m, j) * z[j];
      act[m] = s > 0 ? s : 0;
    }
    for (std::size_t j = 0; j < d; ++j) {
      long double s = p.up_bias[j];
      for (std::size_t m = 0; m < r; ++m) s += (long double)p.up(j, m) * act[m];
      h[j] += s;
    }
  }
  const std::size_t k_count = p.weight.rows();
  Vec out(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    long double s = p.bias[k];
    for (std::size_t j = 0; j < d; ++j) s += (long double)p.weight(k, j) * h[j];
    out[k] = s;
  }
  return out;
}

inline Vec Softmax(const Vec& x) {
  long double mx = x[0];
  for (auto v : x) mx = std::max(mx, v);
  Vec e(x.size());
  long double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (e[i] = std::exp(x[i] - mx));
  for (auto& v : e) v /= sum;
  return e;
}

// -sum_k q_k log softmax(x)_k
inline long double CrossEntropy(const Vec& q, const Vec& x) {
  long double mx = x[0];
  for (auto v : x) mx = std::max(mx, v);
  long double sum = 0;
  for (auto v : x) sum += std::exp(v - mx);
  const long double lse = mx + std::log(sum);
  long double ce = 0;
  for (std::size_t k = 0; k < x.size(); ++k) ce -= q[k] * (x[k] - lse);
  return ce;
}

inline std::size_t FirstArgmax(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) if (v[i] > v[best]) best = i;
  return best;
}

inline long double Max(const Vec& v) { return *std::max_element(v.begin(), v.end()); }

inline long double SupervisedLoss(const HeadParams& p, bool adapter,
                                  const std::vector<EmbeddingRecord>& batch,
                                  const std::vector<double>& prior, double tau) {
  long double total = 0;
  for (const auto& r : batch) {
    Vec x = Logits(p, adapter, r.weak);
    if (tau != 0.0) {
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += tau * std::log((long double)prior[k]);
    }
    Vec y(x.size(), 0);
    y[static_cast<std::size_t>(r.label)] = 1;
    total += CrossEntropy(y, x);
  }
  return total / batch.size();
}

// Targets and masks computed once from `base` (stop-gradient), so the loss
// as a function of `p` only moves through the strong-view logits.
struct UnlabeledTargets {
  std::vector<Vec> soft;
  std::vector<std::size_t> hard;
  std::vector<int> mask;
  std::vector<int> keep;
};

inline UnlabeledTargets FixTargets(const HeadParams& base, bool adapter,
                                   const std::vector<EmbeddingRecord>& batch,
                                   const LossConfig& cfg, bool open_world) {
  UnlabeledTargets t;
  for (const auto& r : batch) {
    Vec pw = Softmax(Logits(base, adapter, r.weak));
    const long double msp = Max(pw);
    t.hard.push_back(FirstArgmax(pw));
    t.mask.push_back(msp > cfg.c_u ? 1 : 0);
    t.keep.push_back(!open_world || msp > cfg.c_ood ? 1 : 0);
    t.soft.push_back(std::move(pw));
  }
  return t;
}

inline long double UnlabeledLoss(const HeadParams& p, bool adapter,
                                 const std::vector<EmbeddingRecord>& batch,
                                 const LossConfig& cfg, const UnlabeledTargets& t) {
  long double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!t.keep[i]) continue;
    const Vec xs = Logits(p, adapter, batch[i].strong);
    if (t.mask[i]) {
      Vec y(xs.size(), 0);
      y[t.hard[i]] = 1;
      total += cfg.lambda1 * CrossEntropy(y, xs);
    } else {
      total += cfg.lambda2 * CrossEntropy(t.soft[i], xs);
    }
  }
  return total / batch.size();
}

// Central differences over every parameter, h = 1e-4.
inline HeadParams FiniteDifference(const HeadParams& base,
                                   const std::function<long double(const HeadParams&)>& f,
                                   double h = 1e-4) {
  HeadParams grad = base;
  HeadParams probe = base;
  auto gb = grad.Blocks();
  auto pb = probe.Blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t i = 0; i < pb[b].size(); ++i) {
      const double orig = pb[b][i];
      pb[b][i] = orig + h;
      const long double up = f(probe);
      pb[b][i] = orig - h;
      const long double down = f(probe);
      pb[b][i] = orig;
      gb[b][i] = static_cast<double>((up - down) / (2.0L * h));
    }
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double RelativeError(const HeadParams& a, const HeadParams& b) {
  long double diff = 0, na = 0, nb = 0;
  const auto ab = a.Blocks();
  const auto bb = b.Blocks();
  for (std::size_t k = 0; k < ab.size(); ++k) {
    for (std::size_t i = 0; i < ab[k].size(); ++i) {
      const long double x = ab[k][i], y = bb[k][i];
      diff += (x - y) * (x - y);
      na += x * x;
      nb += y * y;
    }
  }
  const long double den = std::sqrt(std::max(na, nb));
  return den == 0 ? 0.0 : static_cast<double>(std::sqrt(diff) / den);
}

// ---------------------------------------------------------------------------
// Random instances.

inline std::vector<float> RandomVector(std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(n(rng));
  return v;
}

inline void Randomize(HeadParams& p, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto block : p.Blocks()) for (double& x : block) x = n(rng);
}

inline std::vector<EmbeddingRecord> RandomRecords(std::size_t n, std::size_t d, std::size_t k,
                                                  bool labeled, std::mt19937_64& rng) {
  std::vector<EmbeddingRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = i;
    out[i].label = labeled ? static_cast<Label>(rng() % k) : kUnlabeled;
    out[i].weak = RandomVector(d, rng);
    out[i].strong = out[i].weak;
    auto noise = RandomVector(d, rng, 0.5);
    for (std::size_t j = 0; j < d; ++j) out[i].strong[j] += noise[j];
  }
  return out;
}

inline std::vector<const EmbeddingRecord*> Ptrs(const std::vector<EmbeddingRecord>& v) {
  std::vector<const EmbeddingRecord*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

// Exhaustive pair count: P(id > ood) + 0.5 P(id == ood).
inline double PairAuroc(const std::vector<double>& id, const std::vector<double>& ood) {
  double wins = 0;
  for (double a : id) {
    for (double b : ood) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}


// ---------------------------------------------------------------------------
// Gradient-check instances.

enum class Objective { kSupervised, kUnlabeled, kOpenWorld, kTotal };

inline const char* ObjectiveName(Objective o) {
  switch (o) {
    case Objective::kSupervised: return "supervised";
    case Objective::kUnlabeled: return "unlabeled";
    case Objective::kOpenWorld: return "open-world";
    case Objective::kTotal: return "total";
  }
  return "?";
}

struct GradCheckResult {
  double rel_error = 0.0;
  double grad_norm = 0.0;
};

// Smallest |pre-activation| over the inputs; finite differences straddle the
// ReLU kink when this is below the step size.
inline double MinAbsPre(const HeadParams& p, const std::vector<EmbeddingRecord>& batch) {
  double best = 1e300;
  for (const auto& r : batch) {
    for (const auto* z : {&r.weak, &r.strong}) {
      for (std::size_t m = 0; m < p.down.rows(); ++m) {
        long double s = p.down_bias[m];
        for (std::size_t j = 0; j < z->size(); ++j) s += (long double)p.down(m, j) * (*z)[j];
        best = std::min(best, static_cast<double>(std::fabs(s)));
      }
    }
  }
  return best;
}

// One random instance: K in [2, 5], d in [2, 8], adapter on for odd seeds.
inline GradCheckResult RunGradCheck(Objective objective, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t K = 2 + rng() % 4;
  const std::size_t d = 2 + rng() % 7;
  const bool adapter = seed % 2 == 1;
  const std::size_t rank = 1 + rng() % 4;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ClassifierHead head(K, d, {adapter, rank}, seed);
  std::vector<EmbeddingRecord> labeled, unlabeled;
  for (int attempt = 0;; ++attempt) {
    Randomize(head.params(), rng, 0.8);
    labeled = RandomRecords(3 + rng() % 6, d, K, true, rng);
    unlabeled = RandomRecords(3 + rng() % 8, d, K, false, rng);
    if (!adapter || (MinAbsPre(head.params(), labeled) > 1e-3 &&
                     MinAbsPre(head.params(), unlabeled) > 1e-3)) {
      break;
    }
  }

  std::vector<double> prior(K);
  double total = 0;
  for (double& v : prior) total += (v = 0.05 + unit(rng));
  for (double& v : prior) v /= total;
  const double tau = 2.0 * unit(rng);
  LossConfig cfg;
  cfg.tau = tau;
  cfg.c_u = 0.2 + 0.7 * unit(rng);
  cfg.c_ood = 0.2 + 0.6 * unit(rng);
  cfg.lambda1 = 0.1 + 2.0 * unit(rng);
  cfg.lambda2 = 0.1 + 2.0 * unit(rng);
  const bool open_world = objective == Objective::kOpenWorld;
  const auto lab_ptrs = Ptrs(labeled);
  const auto unl_ptrs = Ptrs(unlabeled);
  const ClassPrior class_prior{prior};

  HeadGradients analytic;
  switch (objective) {
    case Objective::kSupervised:
      analytic = SupervisedLoss(head, lab_ptrs, class_prior, tau, Exec::kSerial).grads;
      break;
    case Objective::kUnlabeled:
    case Objective::kOpenWorld:
      analytic = UnlabeledLoss(head, unl_ptrs, cfg, open_world, Exec::kSerial).grads;
      break;
    case Objective::kTotal:
      analytic = TotalLoss(SupervisedLoss(head, lab_ptrs, class_prior, tau, Exec::kSerial),
                           UnlabeledLoss(head, unl_ptrs, cfg, false, Exec::kSerial))
                     .grads;
      break;
  }

  const auto targets = FixTargets(head.params(), adapter, unlabeled, cfg, open_world);
  auto f = [&](const HeadParams& p) -> long double {
    long double v = 0;
    if (objective == Objective::kSupervised || objective == Objective::kTotal) {
      v += SupervisedLoss(p, adapter, labeled, prior, tau);
    }
    if (objective != Objective::kSupervised) {
      v += UnlabeledLoss(p, adapter, unlabeled, cfg, targets);
    }
    return v;
  };
  const HeadParams numeric = FiniteDifference(head.params(), f);
  GradCheckResult out;
  out.rel_error = RelativeError(analytic, numeric);
  long double n2 = 0;
  for (auto block : analytic.Blocks()) for (double x : block) n2 += (long double)x * x;
  out.grad_norm = static_cast<double>(std::sqrt(n2));
  return out;
}

}  // namespace loft::oracle

#endif  // LOFT_TESTS_ORACLES_HPP_
