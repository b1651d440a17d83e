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

#include "loft/error.hpp"

namespace loft {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter:
      return "parameter error";
    case ErrorKind::kContract:
      return "contract error";
    case ErrorKind::kCapacity:
      return "capacity error";
    case ErrorKind::kFormat:
      return "format error";
    case ErrorKind::kDegenerateInput:
      return "degenerate input";
    case ErrorKind::kDegeneratePrior:
      return "degenerate prior";
    case ErrorKind::kDivergence:
      return "training diverged";
    case ErrorKind::kMigration:
      return "migration error";
    case ErrorKind::kIo:
      return "i/o error";
  }
  return "error";
}

}  // namespace loft
