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

#include <fstream>
#include <iterator>

#include "bytes.hpp"
#include "loft/embedstore.hpp"
#include "loft/error.hpp"

namespace loft {

namespace bytes {

std::vector<std::uint8_t> ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFile(const std::filesystem::path& path,
               std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace bytes

namespace {
constexpr std::string_view kBundleMagic = "LFTB";
}  // namespace

std::vector<std::uint8_t> EncodeBundle(const DatasetBundle& bundle) {
  bundle.Validate();
  bytes::Writer w;
  w.Raw(kBundleMagic);
  w.Put<std::uint32_t>(kBundleVersion);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(bundle.dim));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(bundle.classes));
  w.Put<std::uint64_t>(bundle.records.size());
  for (const auto& r : bundle.records) {
    w.Put<std::uint64_t>(r.id);
    w.Put<std::int32_t>(r.label);
    for (float x : r.weak) w.Put<float>(x);
    for (float x : r.strong) w.Put<float>(x);
  }
  nlohmann::json manifest = bundle.manifest;
  manifest["class_names"] = bundle.class_names;
  w.String(manifest.dump());
  return std::move(w.bytes());
}

DatasetBundle DecodeBundle(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.Raw(4, "magic") != kBundleMagic) {
    throw FormatError("bad magic, expected LFTB", 0);
  }
  const auto version_offset = r.offset();
  const auto version = r.Get<std::uint32_t>("version");
  if (version != kBundleVersion) {
    throw FormatError("unsupported bundle version " + std::to_string(version),
                      version_offset);
  }
  DatasetBundle bundle;
  bundle.dim = r.Get<std::uint32_t>("dimension");
  bundle.classes = r.Get<std::uint32_t>("class count");
  const auto count_offset = r.offset();
  const auto n = r.Get<std::uint64_t>("record count");
  if (bundle.dim == 0) throw FormatError("dimension must be > 0", count_offset - 8);

  const std::uint64_t record_bytes = 8 + 4 + 8 * static_cast<std::uint64_t>(bundle.dim);
  if (n > r.remaining() / record_bytes) {
    throw FormatError("header declares " + std::to_string(n) +
                          " records but payload is truncated",
                      count_offset);
  }
  bundle.records.resize(n);
  for (auto& rec : bundle.records) {
    rec.id = r.Get<std::uint64_t>("record id");
    const auto label_offset = r.offset();
    rec.label = r.Get<std::int32_t>("record label");
    if (rec.label < kOodTruth ||
        (rec.label >= 0 && static_cast<std::size_t>(rec.label) >= bundle.classes)) {
      throw FormatError("label " + std::to_string(rec.label) + " out of range",
                        label_offset);
    }
    rec.weak.resize(bundle.dim);
    rec.strong.resize(bundle.dim);
    for (float& x : rec.weak) x = r.Get<float>("weak view");
    for (float& x : rec.strong) x = r.Get<float>("strong view");
  }

  const auto manifest_offset = r.offset();
  const std::string text = r.String("manifest");
  nlohmann::json manifest = nlohmann::json::parse(text, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw FormatError("manifest is not a JSON object", manifest_offset);
  }
  if (manifest.contains("class_names")) {
    try {
      bundle.class_names = manifest["class_names"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw FormatError("manifest class_names is not a list of strings", manifest_offset);
    }
    manifest.erase("class_names");
  }
  if (bundle.class_names.size() != bundle.classes) {
    throw FormatError("manifest class_names has wrong length", manifest_offset);
  }
  bundle.manifest = std::move(manifest);
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after manifest", r.offset());
  }
  try {
    bundle.Validate();
  } catch (const Error& e) {
    throw FormatError(e.what(), 0);
  }
  return bundle;
}

void WriteBundle(const DatasetBundle& bundle, const std::filesystem::path& path) {
  bytes::WriteFile(path, EncodeBundle(bundle));
}

DatasetBundle ReadBundle(const std::filesystem::path& path) {
  return DecodeBundle(bytes::ReadFile(path));
}

void WriteIdList(std::span<const std::uint64_t> ids,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << nlohmann::json(std::vector<std::uint64_t>(ids.begin(), ids.end())).dump()
      << "\n";
}

std::vector<std::uint64_t> ReadIdList(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw Error(ErrorKind::kFormat, path.string() + " is not a JSON id list");
  }
  std::vector<std::uint64_t> ids;
  ids.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) {
      throw Error(ErrorKind::kFormat, path.string() + " holds a non-integer id");
    }
    ids.push_back(v.get<std::uint64_t>());
  }
  return ids;
}

}  // namespace loft
