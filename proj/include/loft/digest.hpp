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

// SHA-256 digests (OpenSSL) for run manifests and checkpoint integrity.

#ifndef LOFT_DIGEST_HPP_
#define LOFT_DIGEST_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace loft {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest Sha256(std::span<const std::uint8_t> data);
std::string ToHex(std::span<const std::uint8_t> data);
std::string Sha256FileHex(const std::filesystem::path& path);

}  // namespace loft

#endif  // LOFT_DIGEST_HPP_
