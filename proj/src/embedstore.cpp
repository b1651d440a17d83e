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

#include "loft/embedstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "loft/error.hpp"
#include "loft/random.hpp"

namespace loft {

namespace {

bool BitEqualFloats(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) {
      return false;
    }
  }
  return true;
}

std::vector<double> RandomUnitVector(std::size_t dim, Rng& rng,
                                     NormalSampler& normal) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

void ValidateSynthParams(const SynthParams& p) {
  Require(p.classes >= 2, ErrorKind::kParameter, "classes must be >= 2");
  Require(p.dim >= 2, ErrorKind::kParameter, "dim must be >= 2");
  Require(p.per_class >= 1, ErrorKind::kParameter, "per_class must be >= 1");
  Require(std::isfinite(p.separation) && p.separation >= 0.0,
          ErrorKind::kParameter, "separation must be finite and >= 0");
}

thread_local int training_scope_depth = 0;

}  // namespace

bool BitEqual(const EmbeddingRecord& a, const EmbeddingRecord& b) {
  return a.id == b.id && a.label == b.label && BitEqualFloats(a.weak, b.weak) &&
         BitEqualFloats(a.strong, b.strong);
}

bool BitEqual(const DatasetBundle& a, const DatasetBundle& b) {
  if (a.dim != b.dim || a.classes != b.classes ||
      a.class_names != b.class_names || a.manifest != b.manifest ||
      a.records.size() != b.records.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (!BitEqual(a.records[i], b.records[i])) return false;
  }
  return true;
}

void DatasetBundle::Validate() const {
  Require(dim > 0, ErrorKind::kContract, "bundle dimension must be > 0");
  Require(class_names.size() == classes, ErrorKind::kContract,
          "class_names size must equal K");
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    Require(seen.insert(r.id).second, ErrorKind::kContract,
            "duplicate record id " + std::to_string(r.id));
    Require(r.weak.size() == dim && r.strong.size() == dim, ErrorKind::kFormat,
            "record " + std::to_string(r.id) + " has wrong dimension");
    Require(r.label == kUnlabeled || r.label == kOodTruth ||
                (r.label >= 0 && static_cast<std::size_t>(r.label) < classes),
            ErrorKind::kContract,
            "record " + std::to_string(r.id) + " has label out of range");
    for (std::size_t j = 0; j < dim; ++j) {
      Require(std::isfinite(r.weak[j]) && std::isfinite(r.strong[j]),
              ErrorKind::kContract,
              "record " + std::to_string(r.id) + " has non-finite component");
    }
  }
}

std::vector<std::uint64_t> DatasetBundle::Ids(
    std::span<const std::size_t> indices) const {
  std::vector<std::uint64_t> ids;
  ids.reserve(indices.size());
  for (std::size_t i : indices) ids.push_back(records.at(i).id);
  return ids;
}

IndexSet DatasetBundle::IndicesOf(std::span<const std::uint64_t> ids) const {
  std::unordered_map<std::uint64_t, std::size_t> where;
  where.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) where[records[i].id] = i;
  IndexSet out;
  out.reserve(ids.size());
  for (std::uint64_t id : ids) {
    auto it = where.find(id);
    Require(it != where.end(), ErrorKind::kContract,
            "unknown record id " + std::to_string(id));
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> SynthCenters(const SynthParams& params) {
  ValidateSynthParams(params);
  Rng rng = MakeRng(params.seed, Stream::kSynthCenters);
  NormalSampler normal;
  std::vector<std::vector<double>> centers;
  centers.reserve(params.classes);
  for (std::size_t k = 0; k < params.classes; ++k) {
    auto c = RandomUnitVector(params.dim, rng, normal);
    for (double& x : c) x *= params.separation;
    centers.push_back(std::move(c));
  }
  return centers;
}

namespace {

// Unit-variance isotropic noise around each center; the strong view adds
// N(0, 0.5^2) on top of the weak one.
DatasetBundle SampleAroundCenters(const std::vector<std::vector<double>>& centers,
                                  const SynthParams& params) {
  Rng rng = MakeRng(params.seed, Stream::kSynthNoise);
  NormalSampler normal;
  constexpr double kNoiseScale = 1.0;
  constexpr double kStrongExtra = 0.5 * kNoiseScale;

  DatasetBundle bundle;
  bundle.dim = params.dim;
  bundle.classes = params.classes;
  bundle.records.reserve(params.classes * params.per_class);
  std::uint64_t next_id = 0;
  for (std::size_t k = 0; k < params.classes; ++k) {
    bundle.class_names.push_back("class_" + std::to_string(k));
    for (std::size_t i = 0; i < params.per_class; ++i) {
      EmbeddingRecord r;
      r.id = next_id++;
      r.label = static_cast<Label>(k);
      r.weak.resize(params.dim);
      r.strong.resize(params.dim);
      for (std::size_t j = 0; j < params.dim; ++j) {
        const double w = centers[k][j] + kNoiseScale * normal(rng);
        r.weak[j] = static_cast<float>(w);
        r.strong[j] = static_cast<float>(w + kStrongExtra * normal(rng));
      }
      bundle.records.push_back(std::move(r));
    }
  }
  bundle.manifest = {
      {"source", "synthetic"},
      {"seed", params.seed},
      {"generator",
       {{"classes", params.classes},
        {"dim", params.dim},
        {"per_class", params.per_class},
        {"separation", params.separation}}}};
  return bundle;
}

}  // namespace

DatasetBundle SynthDataset(const SynthParams& params) {
  return SampleAroundCenters(SynthCenters(params), params);
}

std::vector<std::vector<double>> SynthOodCenters(const SynthParams& id_params,
                                                 const SynthParams& ood_params) {
  ValidateSynthParams(ood_params);
  Require(ood_params.dim == id_params.dim, ErrorKind::kParameter,
          "OOD and in-distribution dimensions differ");
  Require(id_params.classes < id_params.dim, ErrorKind::kParameter,
          "OOD clusters need dim > classes");
  // Orthonormal basis of span(ID centers), modified Gram-Schmidt.
  std::vector<std::vector<double>> basis;
  for (auto c : SynthCenters(id_params)) {
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) dot += c[j] * b[j];
      for (std::size_t j = 0; j < c.size(); ++j) c[j] -= dot * b[j];
    }
    double norm = 0.0;
    for (double x : c) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) continue;
    for (double& x : c) x /= norm;
    basis.push_back(std::move(c));
  }
  Rng rng = MakeRng(ood_params.seed, Stream::kSynthCenters);
  NormalSampler normal;
  std::vector<std::vector<double>> centers;
  centers.reserve(ood_params.classes);
  while (centers.size() < ood_params.classes) {
    auto c = RandomUnitVector(ood_params.dim, rng, normal);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) dot += c[j] * b[j];
        for (std::size_t j = 0; j < c.size(); ++j) c[j] -= dot * b[j];
      }
    }
    double norm = 0.0;
    for (double x : c) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : c) x *= ood_params.separation / norm;
    centers.push_back(std::move(c));
  }
  return centers;
}

DatasetBundle SynthOodDataset(const SynthParams& id_params,
                              const SynthParams& ood_params) {
  DatasetBundle bundle =
      SampleAroundCenters(SynthOodCenters(id_params, ood_params), ood_params);
  bundle.manifest["generator"]["orthogonal_to"] = {
      {"classes", id_params.classes},
      {"dim", id_params.dim},
      {"separation", id_params.separation},
      {"seed", id_params.seed}};
  return bundle;
}

std::vector<std::vector<double>> SynthProbeMeans(const SynthParams& params,
                                                 std::size_t probe_per_class) {
  Require(probe_per_class >= 1, ErrorKind::kParameter,
          "probe_per_class must be >= 1");
  const auto centers = SynthCenters(params);
  Rng rng = MakeRng(params.seed, Stream::kSynthProbe);
  NormalSampler normal;
  std::vector<std::vector<double>> means(params.classes,
                                         std::vector<double>(params.dim, 0.0));
  for (std::size_t k = 0; k < params.classes; ++k) {
    for (std::size_t i = 0; i < probe_per_class; ++i) {
      for (std::size_t j = 0; j < params.dim; ++j) {
        // Probe samples are rounded to f32 like stored embeddings.
        means[k][j] += static_cast<float>(centers[k][j] + normal(rng));
      }
    }
    for (double& x : means[k]) x /= static_cast<double>(probe_per_class);
  }
  return means;
}

// ---------------------------------------------------------------------------

void SplitSpec::Validate() const {
  Require(n1 >= 1, ErrorKind::kParameter, "n1 must be >= 1");
  Require(std::isfinite(gamma_l) && gamma_l >= 1.0, ErrorKind::kParameter,
          "gamma_l must be >= 1");
  if (regime == UnlabeledRegime::kRatio) {
    Require(std::isfinite(gamma_u) && gamma_u > 0.0, ErrorKind::kParameter,
            "gamma_u must be > 0");
  }
  Require(unlabeled_fraction > 0.0 && unlabeled_fraction <= 1.0,
          ErrorKind::kParameter, "unlabeled fraction must lie in (0, 1]");
}

std::vector<std::size_t> ExponentialProfile(std::size_t top, double ratio,
                                            std::size_t classes) {
  Require(classes >= 1, ErrorKind::kParameter, "classes must be >= 1");
  Require(std::isfinite(ratio) && ratio >= 1.0, ErrorKind::kParameter,
          "profile ratio must be >= 1");
  std::vector<std::size_t> counts(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    const double exponent =
        classes == 1 ? 0.0
                     : -static_cast<double>(k) / static_cast<double>(classes - 1);
    const double value = static_cast<double>(top) * std::pow(ratio, exponent);
    counts[k] = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(value + 0.5)));
  }
  return counts;
}

std::vector<std::size_t> LabeledCounts(const SplitSpec& spec, std::size_t classes) {
  spec.Validate();
  return ExponentialProfile(spec.n1, spec.gamma_l, classes);
}

std::vector<std::size_t> UnlabeledCounts(const SplitSpec& spec,
                                         std::size_t classes) {
  spec.Validate();
  if (spec.m1 == 0) return std::vector<std::size_t>(classes, 0);
  double ratio = 1.0;
  switch (spec.regime) {
    case UnlabeledRegime::kConsistent:
      ratio = spec.gamma_l;
      break;
    case UnlabeledRegime::kUniform:
      ratio = 1.0;
      break;
    case UnlabeledRegime::kReversed:
      ratio = 1.0 / spec.gamma_l;
      break;
    case UnlabeledRegime::kRatio:
      ratio = spec.gamma_u;
      break;
  }
  // The largest class always holds m1 samples. A ratio below one puts it last.
  std::vector<std::size_t> counts;
  if (ratio >= 1.0) {
    counts = ExponentialProfile(spec.m1, ratio, classes);
  } else {
    counts = ExponentialProfile(spec.m1, 1.0 / ratio, classes);
    std::reverse(counts.begin(), counts.end());
  }
  if (spec.unlabeled_fraction < 1.0) {
    for (auto& c : counts) {
      c = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                       spec.unlabeled_fraction * static_cast<double>(c) + 0.5)));
    }
  }
  return counts;
}

Label SealedTruth::Reveal(std::uint64_t id) const {
  Require(!TrainingScope::Active(), ErrorKind::kContract,
          "sealed ground truth read inside a training step");
  auto it = labels_.find(id);
  Require(it != labels_.end(), ErrorKind::kContract,
          "no sealed label for id " + std::to_string(id));
  return it->second;
}

std::optional<Label> SealedTruth::TryReveal(std::uint64_t id) const {
  Require(!TrainingScope::Active(), ErrorKind::kContract,
          "sealed ground truth read inside a training step");
  auto it = labels_.find(id);
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

const std::map<std::uint64_t, Label>& SealedTruth::entries() const {
  Require(!TrainingScope::Active(), ErrorKind::kContract,
          "sealed ground truth read inside a training step");
  return labels_;
}

nlohmann::json SealedTruth::ToJson() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [id, label] : entries()) pairs.push_back({id, label});
  return pairs;
}

SealedTruth SealedTruth::FromJson(const nlohmann::json& j) {
  SealedTruth truth;
  for (const auto& pair : j) {
    truth.Seal(pair.at(0).get<std::uint64_t>(), pair.at(1).get<Label>());
  }
  return truth;
}

TrainingScope::TrainingScope() { ++training_scope_depth; }
TrainingScope::~TrainingScope() { --training_scope_depth; }
bool TrainingScope::Active() { return training_scope_depth > 0; }

LongTailSplit MakeLongTailSplit(const DatasetBundle& bundle,
                                const SplitSpec& spec) {
  spec.Validate();
  const std::size_t K = bundle.classes;
  Require(K >= 2, ErrorKind::kParameter, "split needs K >= 2");
  const auto labeled_counts = LabeledCounts(spec, K);
  const auto unlabeled_counts = UnlabeledCounts(spec, K);

  std::vector<IndexSet> by_class(K);
  for (std::size_t i = 0; i < bundle.records.size(); ++i) {
    const Label y = bundle.records[i].label;
    if (IsClassLabel(y) && static_cast<std::size_t>(y) < K) by_class[y].push_back(i);
  }

  Rng rng = MakeRng(spec.seed, Stream::kSplitShuffle);
  LongTailSplit split;
  split.bundle = bundle;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t need =
        labeled_counts[k] + unlabeled_counts[k] + spec.test_per_class;
    if (by_class[k].size() < need) {
      throw Error(ErrorKind::kCapacity,
                  "class " + std::to_string(k) + " has " +
                      std::to_string(by_class[k].size()) + " samples, needs " +
                      std::to_string(need));
    }
    Shuffle(by_class[k], rng);
    auto it = by_class[k].begin();
    split.labeled.insert(split.labeled.end(), it, it + labeled_counts[k]);
    it += labeled_counts[k];
    split.unlabeled.insert(split.unlabeled.end(), it, it + unlabeled_counts[k]);
    it += unlabeled_counts[k];
    split.test.insert(split.test.end(), it, it + spec.test_per_class);
  }
  for (std::size_t i : split.unlabeled) {
    auto& r = split.bundle.records[i];
    split.truth.Seal(r.id, r.label);
    r.label = kUnlabeled;
  }
  return split;
}

MixedPool MixOod(const DatasetBundle& bundle, const IndexSet& unlabeled,
                 const DatasetBundle& ood_pool, double ratio,
                 std::uint64_t seed) {
  Require(std::isfinite(ratio) && ratio >= 0.0 && ratio < 1.0,
          ErrorKind::kParameter, "ood ratio must lie in [0, 1)");
  if (ood_pool.dim != bundle.dim) {
    throw Error(ErrorKind::kFormat,
                "ood pool dimension " + std::to_string(ood_pool.dim) +
                    " does not match bundle dimension " +
                    std::to_string(bundle.dim));
  }
  const auto n_ood = static_cast<std::size_t>(std::llround(
      ratio * static_cast<double>(unlabeled.size()) / (1.0 - ratio)));

  MixedPool mixed;
  mixed.bundle = bundle;
  mixed.pool = unlabeled;
  mixed.n_ood = n_ood;
  if (n_ood == 0) return mixed;

  Require(n_ood <= ood_pool.records.size(), ErrorKind::kCapacity,
          "ood pool holds " + std::to_string(ood_pool.records.size()) +
              " records, needs " + std::to_string(n_ood));
  Rng rng = MakeRng(seed, Stream::kOodMix);
  IndexSet order(ood_pool.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Shuffle(order, rng);

  std::uint64_t next_id = 0;
  for (const auto& r : bundle.records) next_id = std::max(next_id, r.id + 1);
  for (std::size_t j = 0; j < n_ood; ++j) {
    EmbeddingRecord r = ood_pool.records[order[j]];
    r.id = next_id++;
    r.label = kOodTruth;
    mixed.pool.push_back(mixed.bundle.records.size());
    mixed.bundle.records.push_back(std::move(r));
  }
  Shuffle(mixed.pool, rng);
  mixed.bundle.manifest["ood_mix"] = {{"ratio", ratio},
                                      {"seed", seed},
                                      {"n_ood", n_ood},
                                      {"ood_source", ood_pool.manifest}};
  return mixed;
}

std::vector<std::size_t> ClassCounts(const DatasetBundle& bundle,
                                     const IndexSet& labeled) {
  std::vector<std::size_t> counts(bundle.classes, 0);
  for (std::size_t i : labeled) {
    Require(i < bundle.records.size(), ErrorKind::kContract, "index out of range");
    const Label y = bundle.records[i].label;
    Require(IsClassLabel(y) && static_cast<std::size_t>(y) < bundle.classes,
            ErrorKind::kContract,
            "record " + std::to_string(bundle.records[i].id) +
                " is not labeled");
    ++counts[y];
  }
  return counts;
}

ClassPrior ComputeClassPrior(const DatasetBundle& bundle,
                             const IndexSet& labeled) {
  Require(!labeled.empty(), ErrorKind::kContract,
          "class prior needs a non-empty labeled set");
  const auto counts = ClassCounts(bundle, labeled);
  ClassPrior prior;
  prior.probs.resize(counts.size());
  const double total = static_cast<double>(labeled.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    prior.probs[k] = static_cast<double>(counts[k]) / total;
  }
  return prior;
}

}  // namespace loft
