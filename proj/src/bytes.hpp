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

// Little-endian byte encoding shared by the bundle and checkpoint formats.

#ifndef LOFT_SRC_BYTES_HPP_
#define LOFT_SRC_BYTES_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loft/error.hpp"

namespace loft::bytes {

class Writer {
 public:
  void Raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  template <typename T>
  void Put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }

  void String(std::string_view s) {
    Put<std::uint64_t>(s.size());
    Raw(s);
  }

  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint64_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  void Need(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      throw FormatError(std::string("truncated input while reading ") + what,
                        pos_);
    }
  }

  std::string Raw(std::size_t n, const char* what) {
    Need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T Get(const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    Need(sizeof(T), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string String(const char* what) {
    const auto n = Get<std::uint64_t>(what);
    Need(n, what);
    return Raw(static_cast<std::size_t>(n), what);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path,
               std::span<const std::uint8_t> data);

}  // namespace loft::bytes

#endif  // LOFT_SRC_BYTES_HPP_
