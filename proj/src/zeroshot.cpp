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

#include "loft/zeroshot.hpp"

#include <cmath>

#include "loft/error.hpp"
#include "loft/head.hpp"
#include "loft/kernels.hpp"

namespace loft {

PrototypeBank::PrototypeBank(Matrix prototypes, double temperature)
    : prototypes_(std::move(prototypes)),
      unit_(prototypes_.rows(), prototypes_.cols()),
      temperature_(temperature) {
  Require(prototypes_.rows() >= 1 && prototypes_.cols() >= 1,
          ErrorKind::kParameter, "prototype bank must be non-empty");
  Require(std::isfinite(temperature) && temperature > 0.0, ErrorKind::kParameter,
          "temperature must be positive");
  for (std::size_t k = 0; k < prototypes_.rows(); ++k) {
    double norm2 = 0.0;
    for (double x : prototypes_.row(k)) norm2 += x * x;
    const double norm = std::sqrt(norm2);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorKind::kDegenerateInput,
                  "prototype " + std::to_string(k) + " has zero norm");
    }
    for (std::size_t j = 0; j < prototypes_.cols(); ++j) {
      unit_(k, j) = prototypes_(k, j) / norm;
    }
  }
}

PrototypeBank PrototypeBank::FromVectors(
    const std::vector<std::vector<double>>& rows, double temperature) {
  Require(!rows.empty(), ErrorKind::kParameter, "no prototypes");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Require(rows[k].size() == m.cols(), ErrorKind::kParameter,
            "prototypes differ in dimension");
    std::copy(rows[k].begin(), rows[k].end(), m.row(k).begin());
  }
  return PrototypeBank(std::move(m), temperature);
}

std::vector<double> ZeroShotPredict(std::span<const double> z,
                                    const PrototypeBank& bank) {
  Require(z.size() == bank.dim(), ErrorKind::kContract,
          "embedding dimension does not match prototypes");
  double norm2 = 0.0;
  for (double x : z) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0)) throw Error(ErrorKind::kDegenerateInput, "zero-norm embedding");
  std::vector<double> scores(bank.classes());
  for (std::size_t k = 0; k < bank.classes(); ++k) {
    double dot = 0.0;
    const auto w = bank.unit_prototypes().row(k);
    for (std::size_t j = 0; j < z.size(); ++j) dot += z[j] * w[j];
    scores[k] = bank.temperature() * (dot / norm);
  }
  SoftmaxInPlace(scores);
  return scores;
}

std::vector<double> ZeroShotPredict(std::span<const float> z,
                                    const PrototypeBank& bank) {
  std::vector<double> zd(z.begin(), z.end());
  return ZeroShotPredict(std::span<const double>(zd), bank);
}

std::vector<FilteredRecord> Stage1Filter(const DatasetBundle& bundle,
                                         const IndexSet& candidates,
                                         const PrototypeBank& bank, double t_hc) {
  Require(t_hc > 0.0 && t_hc < 1.0, ErrorKind::kParameter,
          "t_HC must lie in (0, 1)");
  Require(bundle.dim == bank.dim(), ErrorKind::kContract,
          "prototype dimension does not match bundle");
  std::vector<FilteredRecord> scored(candidates.size());
  std::vector<unsigned char> degenerate(candidates.size(), 0);
  ForEachSample(candidates.size(), Exec::kParallel, [&](std::size_t i) {
    const auto& weak = bundle.records[candidates[i]].weak;
    double norm2 = 0.0;
    for (float x : weak) norm2 += static_cast<double>(x) * x;
    if (!(norm2 > 0.0)) {
      degenerate[i] = 1;  // a zero vector carries no confidence; drop it
      return;
    }
    const auto probs = ZeroShotPredict(std::span<const float>(weak), bank);
    const std::size_t top = Argmax(probs);
    scored[i] = {candidates[i], static_cast<Label>(top), probs[top]};
  });
  std::vector<FilteredRecord> kept;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (!degenerate[i] && scored[i].confidence > t_hc) kept.push_back(scored[i]);
  }
  return kept;
}

double CalibrateTemperature(const DatasetBundle& bundle, const IndexSet& reference,
                            const Matrix& prototypes, double t_hc, double keep) {
  Require(!reference.empty(), ErrorKind::kContract, "empty reference set");
  Require(keep > 0.0 && keep <= 1.0, ErrorKind::kParameter,
          "keep fraction must lie in (0, 1]");
  const auto needed = static_cast<std::size_t>(
      std::ceil(keep * static_cast<double>(reference.size()) - 1e-9));
  auto passes = [&](double temperature) {
    return Stage1Filter(bundle, reference, PrototypeBank(prototypes, temperature), t_hc)
               .size() >= needed;
  };
  double lo = std::log(kMinTemperature);
  double hi = std::log(kMaxTemperature);
  if (passes(kMinTemperature)) return kMinTemperature;
  if (!passes(kMaxTemperature)) {
    throw Error(ErrorKind::kDegenerateInput,
                "no temperature up to " + std::to_string(kMaxTemperature) +
                    " keeps the requested share of the reference set");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (passes(std::exp(mid)) ? hi : lo) = mid;
  }
  return std::exp(hi);
}

IndexSet FilteredIndices(std::span<const FilteredRecord> kept) {
  IndexSet out;
  out.reserve(kept.size());
  for (const auto& r : kept) out.push_back(r.index);
  return out;
}

void WritePrototypes(const PrototypeBank& bank,
                     const std::vector<std::string>& class_names,
                     const std::filesystem::path& path) {
  DatasetBundle b;
  b.dim = bank.dim();
  b.classes = bank.classes();
  b.class_names = class_names;
  if (b.class_names.empty()) {
    for (std::size_t k = 0; k < b.classes; ++k) {
      b.class_names.push_back("class_" + std::to_string(k));
    }
  }
  b.manifest = {{"source", "prototypes"}};
  for (std::size_t k = 0; k < bank.classes(); ++k) {
    EmbeddingRecord r;
    r.id = k;
    r.label = static_cast<Label>(k);
    const auto row = bank.prototypes().row(k);
    r.weak.assign(row.begin(), row.end());
    r.strong = r.weak;
    b.records.push_back(std::move(r));
  }
  WriteBundle(b, path);
}

PrototypeBank ReadPrototypes(const std::filesystem::path& path,
                             double temperature) {
  const DatasetBundle b = ReadBundle(path);
  if (b.records.size() != b.classes) {
    throw Error(ErrorKind::kFormat, "prototype file must hold exactly K records");
  }
  Matrix m(b.classes, b.dim);
  std::vector<bool> seen(b.classes, false);
  for (const auto& r : b.records) {
    if (!IsClassLabel(r.label) || seen[r.label]) {
      throw Error(ErrorKind::kFormat, "prototype labels must be a permutation of 0..K-1");
    }
    seen[r.label] = true;
    std::copy(r.weak.begin(), r.weak.end(), m.row(r.label).begin());
  }
  return PrototypeBank(std::move(m), temperature);
}

}  // namespace loft
