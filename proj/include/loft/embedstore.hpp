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

// Embedding data model: records holding a (weak, strong) embedding pair, the
// bundle container, long-tailed split construction and OOD contamination.
//
// Records are stored single precision; every consumer promotes to double.

#ifndef LOFT_EMBEDSTORE_HPP_
#define LOFT_EMBEDSTORE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace loft {

using Label = std::int32_t;
inline constexpr Label kUnlabeled = -1;
inline constexpr Label kOodTruth = -2;

inline bool IsClassLabel(Label label) { return label >= 0; }

struct EmbeddingRecord {
  std::uint64_t id = 0;
  Label label = kUnlabeled;
  std::vector<float> weak;    // embedding of the weakly augmented view
  std::vector<float> strong;  // embedding of the strongly augmented view
};

// Bit-exact comparison (distinguishes +0 from -0).
bool BitEqual(const EmbeddingRecord& a, const EmbeddingRecord& b);

using IndexSet = std::vector<std::size_t>;

struct DatasetBundle {
  std::vector<EmbeddingRecord> records;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<std::string> class_names;
  // Free-form provenance. Serialized alongside class_names.
  nlohmann::json manifest = nlohmann::json::object();

  // Throws kContract/kFormat on any invariant violation: dimension
  // consistency, finiteness, label range, unique ids.
  void Validate() const;

  std::vector<std::uint64_t> Ids(std::span<const std::size_t> indices) const;
  // Map from record id to its index. Throws kContract on unknown ids.
  IndexSet IndicesOf(std::span<const std::uint64_t> ids) const;
};

bool BitEqual(const DatasetBundle& a, const DatasetBundle& b);

struct ClassPrior {
  std::vector<double> probs;
};

// ---------------------------------------------------------------------------
// Synthetic Gaussian-mixture embeddings.

struct SynthParams {
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t per_class = 100;
  double separation = 5.0;
  std::uint64_t seed = 1;
};

// Class k is centered at a random unit vector scaled by `separation`, with
// unit isotropic noise. The strong view is the weak view plus N(0, 0.5^2)
// noise. Records are emitted class-major with ids 0..K*per_class-1.
DatasetBundle SynthDataset(const SynthParams& params);

// The class centers SynthDataset uses for `params` (K x d, row k = center k).
std::vector<std::vector<double>> SynthCenters(const SynthParams& params);

// Gaussian clusters for use as an OOD pool against SynthDataset(id_params):
// centers are random directions projected onto the orthogonal complement of
// the in-distribution centers' span, scaled by ood_params.separation. Noise
// follows SynthDataset. Requires equal dims and id_params.classes < dim.
DatasetBundle SynthOodDataset(const SynthParams& id_params,
                              const SynthParams& ood_params);
std::vector<std::vector<double>> SynthOodCenters(const SynthParams& id_params,
                                                 const SynthParams& ood_params);

// Per-class means of a held-out probe set drawn around the same centers as
// SynthDataset(params), from an independent noise stream. Used as stand-in
// text prototypes for synthetic data.
std::vector<std::vector<double>> SynthProbeMeans(const SynthParams& params,
                                                 std::size_t probe_per_class);

// ---------------------------------------------------------------------------
// Long-tailed splits.

enum class UnlabeledRegime { kConsistent, kUniform, kReversed, kRatio };

struct SplitSpec {
  std::size_t n1 = 50;        // max labeled per class
  double gamma_l = 10.0;      // labeled imbalance ratio
  std::size_t m1 = 400;       // max unlabeled per class
  UnlabeledRegime regime = UnlabeledRegime::kConsistent;
  double gamma_u = 10.0;      // only read when regime == kRatio
  std::size_t test_per_class = 0;  // balanced test set drawn after the rest
  double unlabeled_fraction = 1.0;  // keeps round(f * M_k), at least 1
  std::uint64_t seed = 1;

  void Validate() const;
};

// Exponential profile round_half_up(top * ratio^(-k/(K-1))), floored at 1.
std::vector<std::size_t> ExponentialProfile(std::size_t top, double ratio,
                                            std::size_t classes);
std::vector<std::size_t> LabeledCounts(const SplitSpec& spec, std::size_t classes);
std::vector<std::size_t> UnlabeledCounts(const SplitSpec& spec,
                                         std::size_t classes);

// Ground-truth labels of records whose label was stripped. Reads are refused
// while a TrainingScope is active on the calling thread, so training code can
// never consume them.
class SealedTruth {
 public:
  void Seal(std::uint64_t id, Label label) { labels_[id] = label; }
  // Throws kContract inside a TrainingScope or for unknown ids.
  Label Reveal(std::uint64_t id) const;
  std::optional<Label> TryReveal(std::uint64_t id) const;
  std::size_t size() const { return labels_.size(); }
  const std::map<std::uint64_t, Label>& entries() const;

  nlohmann::json ToJson() const;
  static SealedTruth FromJson(const nlohmann::json& j);

 private:
  std::map<std::uint64_t, Label> labels_;
};

// RAII marker for code that must not see sealed labels.
class TrainingScope {
 public:
  TrainingScope();
  ~TrainingScope();
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;
  static bool Active();
};

struct LongTailSplit {
  DatasetBundle bundle;  // copy of the input with unlabeled labels stripped
  IndexSet labeled;
  IndexSet unlabeled;
  IndexSet test;
  SealedTruth truth;     // true labels of `unlabeled`
};

// Per class (in a seeded shuffled order): the first N_k records become
// labeled, the next M_k unlabeled and the next test_per_class test.
LongTailSplit MakeLongTailSplit(const DatasetBundle& bundle, const SplitSpec& spec);

struct MixedPool {
  DatasetBundle bundle;  // input bundle with OOD records appended
  IndexSet pool;         // shuffled unlabeled + OOD indices into `bundle`
  std::size_t n_ood = 0;
};

// Injects round(ratio * |U| / (1 - ratio)) records sampled without
// replacement from `ood_pool`, relabeled kOodTruth with fresh ids.
// ratio must lie in [0, 1).
MixedPool MixOod(const DatasetBundle& bundle, const IndexSet& unlabeled,
                 const DatasetBundle& ood_pool, double ratio, std::uint64_t seed);

// Empirical label distribution of `labeled`. Every indexed record must carry
// a class label.
ClassPrior ComputeClassPrior(const DatasetBundle& bundle, const IndexSet& labeled);
std::vector<std::size_t> ClassCounts(const DatasetBundle& bundle,
                                     const IndexSet& labeled);

// ---------------------------------------------------------------------------
// Binary bundle format (little endian):
//   "LFTB" | u32 version=1 | u32 d | u32 K | u64 n
//   n x { u64 id | i32 label | f32[d] weak | f32[d] strong }
//   u64 manifest_len | manifest JSON {class_names, ...}

inline constexpr std::uint32_t kBundleVersion = 1;

std::vector<std::uint8_t> EncodeBundle(const DatasetBundle& bundle);
DatasetBundle DecodeBundle(std::span<const std::uint8_t> bytes);
void WriteBundle(const DatasetBundle& bundle, const std::filesystem::path& path);
DatasetBundle ReadBundle(const std::filesystem::path& path);

// Split files are JSON arrays of record ids.
void WriteIdList(std::span<const std::uint64_t> ids,
                 const std::filesystem::path& path);
std::vector<std::uint64_t> ReadIdList(const std::filesystem::path& path);

}  // namespace loft

#endif  // LOFT_EMBEDSTORE_HPP_
