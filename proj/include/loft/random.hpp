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

// Seed stream splitting.
//
// Every random decision in the engine draws from a std::mt19937_64 seeded by
// DeriveSeed(user_seed, stream). Streams are fixed small integers, so adding a
// new consumer never perturbs the draws of an existing one. The mixing
// function is splitmix64 applied to (seed, stream) in sequence.

#ifndef LOFT_RANDOM_HPP_
#define LOFT_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace loft {

using Rng = std::mt19937_64;

enum class Stream : std::uint64_t {
  kSynthCenters = 1,
  kSynthNoise = 2,
  kSynthProbe = 3,
  kSplitShuffle = 4,
  kOodMix = 5,
  kTrainSampler = 6,
  kAdapterInit = 7,
};

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t seed, Stream stream) {
  return SplitMix64(SplitMix64(seed) ^ static_cast<std::uint64_t>(stream));
}

inline Rng MakeRng(std::uint64_t seed, Stream stream) {
  return Rng(DeriveSeed(seed, stream));
}

// Uniform integer in [0, n). Implemented directly on the engine output so the
// sequence does not depend on the standard library's distribution internals.
inline std::uint64_t UniformIndex(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % n;
}

// Standard normal via Box-Muller, portable across standard libraries.
class NormalSampler {
 public:
  double operator()(Rng& rng);

 private:
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// In-place Fisher-Yates with UniformIndex.
template <typename Container>
void Shuffle(Container& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = UniformIndex(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace loft

#endif  // LOFT_RANDOM_HPP_
