// Copyright 2026 The QANA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Model file.
//
//   "QANA"  u32 version
//   str     architecture (key=value text)
//   u32     metadata count, then (str key, str value) pairs
//   u32     parameter count, then per parameter:
//             str name, u8 trainable, u32 rank, u32 dims[rank],
//             float32 LE values
//   u64     FNV-1a of every preceding byte
//
// Strings are u32 length + bytes. Loading checks the magic and version
// first, then the checksum, then the structure; nothing is returned from a
// file that fails any check.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "qana/arch.hpp"
#include "qana/config.hpp"
#include "qana/snn.hpp"

namespace qana {

inline constexpr std::uint32_t kModelVersion = 1;

using ModelMetadata = std::map<std::string, std::string>;

struct ModelFile {
  QanaModel<float> model;
  ModelMetadata metadata;  // training provenance: seed, epochs, accuracy, ...
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string encode_model(const QanaModel<float>& model, const ModelMetadata& metadata = {}) {
  std::string out = "QANA";
  detail::put_le<std::uint32_t>(out, kModelVersion);
  detail::put_str(out, encode_arch(model.config));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    detail::put_str(out, k);
    detail::put_str(out, v);
  }
  const auto& entries = model.params.entries();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    detail::put_str(out, e.name);
    out.push_back(e.trainable ? 1 : 0);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : e.value.data()) detail::put_le<float>(out, v);
  }
  detail::put_le<std::uint64_t>(out, fnv1a(out));
  return out;
}

inline ModelFile decode_model(const std::string& bytes, const std::string& what = "model") {
  if (bytes.size() < 8 || bytes.compare(0, 4, "QANA") != 0) throw Error(Errc::corrupt, what + ": not a QANA model file");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kModelVersion)
    throw Error(Errc::version_mismatch, what + ": model format version " + std::to_string(version) +
                                            " is not supported (expected " + std::to_string(kModelVersion) + ")");
  if (bytes.size() < 16) throw Error(Errc::corrupt, what + ": truncated");
  const std::string body = bytes.substr(0, bytes.size() - 8);
  if (detail::get_le<std::uint64_t>(bytes.data() + body.size()) != fnv1a(body))
    throw Error(Errc::corrupt, what + ": checksum mismatch (truncated or modified file)");

  detail::Reader r(body, what);
  r.get<std::uint32_t>();  // magic
  r.get<std::uint32_t>();  // version
  ModelFile mf;
  try {
    mf.model.config = decode_arch(r.str());
  } catch (const Error& e) {
    throw Error(Errc::corrupt, what + ": bad architecture block: " + e.what());
  }
  for (auto n = r.get<std::uint32_t>(); n > 0; --n) {
    auto k = r.str();
    mf.metadata[k] = r.str();
  }
  for (auto n = r.get<std::uint32_t>(); n > 0; --n) {
    auto name = r.str();
    const bool trainable = r.get<std::uint8_t>() != 0;
    Shape shape;
    for (auto rank = r.get<std::uint32_t>(); rank > 0; --rank) shape.push_back(r.get<std::uint32_t>());
    const std::size_t count = shape_size(shape);
    r.need(count * sizeof(float));
    std::vector<float> values(count);
    for (auto& v : values) v = r.get<float>();
    if (mf.model.params.contains(name)) throw Error(Errc::corrupt, what + ": duplicate parameter '" + name + "'");
    mf.model.params.add(name, Tensor(std::move(shape), std::move(values)), trainable);
  }
  if (!r.done()) throw Error(Errc::corrupt, what + ": trailing bytes");

  // The stored parameters must be exactly those the architecture defines.
  const auto expected = init_model<float>(mf.model.config, 0);
  const auto& want = expected.params.entries();
  const auto& got = mf.model.params.entries();
  if (want.size() != got.size()) throw Error(Errc::corrupt, what + ": parameter count does not match the architecture");
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i].name != got[i].name || want[i].value.shape() != got[i].value.shape())
      throw Error(Errc::corrupt, what + ": parameter '" + got[i].name + "' does not match the architecture");
  return mf;
}

inline void save_model(const std::filesystem::path& path, const QanaModel<float>& model, const ModelMetadata& metadata = {}) {
  detail::write_file(path, encode_model(model, metadata));
}

inline ModelFile load_model(const std::filesystem::path& path) { return decode_model(detail::read_file(path), path.string()); }

}  // namespace qana
