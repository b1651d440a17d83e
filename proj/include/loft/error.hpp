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

#ifndef LOFT_ERROR_HPP_
#define LOFT_ERROR_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace loft {

enum class ErrorKind {
  kParameter,       // invalid shape or hyper-parameter
  kContract,        // violated precondition on an argument
  kCapacity,        // not enough samples to realise a split
  kFormat,          // malformed file or mismatched dimension
  kDegenerateInput, // zero-norm vectors and the like
  kDegeneratePrior, // log of a zero prior component
  kDivergence,      // non-finite loss or gradient during training
  kMigration,       // checkpoint version mismatch
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed binary input. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::uint64_t offset)
      : Error(ErrorKind::kFormat,
              message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Training produced a non-finite value. `step` is the optimizer step at which
// it was detected; `batch_ids` are the record ids involved, when known.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, std::uint64_t step,
                  std::vector<std::uint64_t> batch_ids = {})
      : Error(ErrorKind::kDivergence,
              message + " at step " + std::to_string(step)),
        step_(step),
        batch_ids_(std::move(batch_ids)) {}

  std::uint64_t step() const { return step_; }
  const std::vector<std::uint64_t>& batch_ids() const { return batch_ids_; }

 private:
  std::uint64_t step_;
  std::vector<std::uint64_t> batch_ids_;
};

inline void Require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace loft

#endif  // LOFT_ERROR_HPP_
