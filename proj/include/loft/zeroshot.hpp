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

// Prototype-based zero-shot classification and the high-confidence filter
// that produces the cleaned unlabeled pool used in open-world training.

#ifndef LOFT_ZEROSHOT_HPP_
#define LOFT_ZEROSHOT_HPP_

#include <filesystem>
#include <span>
#include <vector>

#include "loft/embedstore.hpp"
#include "loft/matrix.hpp"

namespace loft {

inline constexpr double kDefaultZeroShotTemperature = 100.0;
inline constexpr double kDefaultHighConfidenceThreshold = 0.95;

class PrototypeBank {
 public:
  // One prototype per row. Throws kDegenerateInput on a zero-norm prototype.
  PrototypeBank(Matrix prototypes,
                double temperature = kDefaultZeroShotTemperature);
  static PrototypeBank FromVectors(const std::vector<std::vector<double>>& rows,
                                   double temperature = kDefaultZeroShotTemperature);

  std::size_t classes() const { return prototypes_.rows(); }
  std::size_t dim() const { return prototypes_.cols(); }
  double temperature() const { return temperature_; }
  const Matrix& prototypes() const { return prototypes_; }
  const Matrix& unit_prototypes() const { return unit_; }

 private:
  Matrix prototypes_;
  Matrix unit_;
  double temperature_;
};

// softmax(temperature * [cos(z, w_1), ..., cos(z, w_K)]).
std::vector<double> ZeroShotPredict(std::span<const double> z,
                                    const PrototypeBank& bank);
std::vector<double> ZeroShotPredict(std::span<const float> z,
                                    const PrototypeBank& bank);

struct FilteredRecord {
  std::size_t index = 0;      // index into the source bundle
  Label provisional = 0;      // zero-shot argmax, metadata only
  double confidence = 0.0;    // zero-shot MSP on the weak view
};

// Keeps the records of `candidates` whose weak-view zero-shot MSP exceeds
// t_hc (strictly). Order of `candidates` is preserved.
std::vector<FilteredRecord> Stage1Filter(const DatasetBundle& bundle,
                                         const IndexSet& candidates,
                                         const PrototypeBank& bank, double t_hc);

inline constexpr double kMinTemperature = 1e-2;
inline constexpr double kMaxTemperature = 1e4;

// Smallest temperature in [kMinTemperature, kMaxTemperature] (to bisection
// precision) at which at least `keep` of the `reference` records pass
// Stage1Filter at t_hc. The per-record MSP is non-decreasing in the
// temperature, so the pass count is monotone. Throws kDegenerateInput when
// even kMaxTemperature falls short.
double CalibrateTemperature(const DatasetBundle& bundle, const IndexSet& reference,
                            const Matrix& prototypes, double t_hc,
                            double keep = 0.95);

IndexSet FilteredIndices(std::span<const FilteredRecord> kept);

// Prototype file: bundle layout with n = K, label = class index, strong view
// duplicated from the weak view.
void WritePrototypes(const PrototypeBank& bank,
                     const std::vector<std::string>& class_names,
                     const std::filesystem::path& path);
PrototypeBank ReadPrototypes(const std::filesystem::path& path,
                             double temperature = kDefaultZeroShotTemperature);

}  // namespace loft

#endif  // LOFT_ZEROSHOT_HPP_
