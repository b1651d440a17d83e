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

// Command-line front end: `loft synth|split|train|eval|sweep`.
//
// Exit codes: 0 success, 2 usage or parameter errors, 3 numerical failure
// (divergence, degenerate prior or input), 4 I/O or format errors.

#ifndef LOFT_CLI_HPP_
#define LOFT_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace loft {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

inline constexpr const char* kToolVersion = "0.1.0";

// `args` excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace loft

#endif  // LOFT_CLI_HPP_
