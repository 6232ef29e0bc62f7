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

// On-disk datasets.
//
//   <dir>/images/<file>.png|.raw
//   <dir>/labels.csv   source_id,filename,label
//   <dir>/splits.csv   source_id,split            (train|val|test)
//
// Preprocessed splits are stored as a "QDS1" bundle: magic, u32 version,
// u32 count, then per sample i32 label, u8 synthetic flag, u32 id length,
// id bytes and 64*64*3 little-endian float32 pixels.

#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qana/data.hpp"
#include "qana/image_io.hpp"

namespace qana {

struct LabelRow {
  std::string source_id;
  std::string filename;
  int label = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::vector<std::string>& header) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != header)
    throw Error(Errc::io, path.string() + ": expected header '" + [&] {
      std::string h;
      for (const auto& c : header) h += (h.empty() ? "" : ",") + c;
      return h;
    }() + "'");
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(Errc::io, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                std::to_string(header.size()) + " fields");
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline void check_csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n\r") != std::string::npos)
    throw Error(Errc::invalid_argument, "csv field may not contain separators or quotes: '" + v + "'");
}

}  // namespace detail

inline std::vector<LabelRow> read_labels(const std::filesystem::path& dir) {
  std::vector<LabelRow> out;
  for (auto& cells : detail::read_csv(dir / "labels.csv", {"source_id", "filename", "label"})) {
    LabelRow r{cells[0], cells[1], 0};
    try {
      r.label = std::stoi(cells[2]);
    } catch (const std::exception&) {
      throw Error(Errc::io, "labels.csv: bad label '" + cells[2] + "' for " + cells[0]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_labels(const std::filesystem::path& dir, const std::vector<LabelRow>& rows) {
  std::string text = "source_id,filename,label\n";
  for (const auto& r : rows) {
    detail::check_csv_field(r.source_id);
    detail::check_csv_field(r.filename);
    text += r.source_id + "," + r.filename + "," + std::to_string(r.label) + "\n";
  }
  detail::write_file(dir / "labels.csv", text);
}

inline std::map<std::string, Split> read_splits(const std::filesystem::path& path) {
  std::map<std::string, Split> out;
  for (auto& cells : detail::read_csv(path, {"source_id", "split"})) {
    Split s;
    if (cells[1] == "train") s = Split::train;
    else if (cells[1] == "val") s = Split::val;
    else if (cells[1] == "test") s = Split::test;
    else throw Error(Errc::io, path.string() + ": unknown split '" + cells[1] + "'");
    out[cells[0]] = s;
  }
  return out;
}

inline void write_splits(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<Split>& splits) {
  std::string text = "source_id,split\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    detail::check_csv_field(ids[i]);
    text += ids[i] + "," + std::string(split_name(splits[i])) + "\n";
  }
  detail::write_file(path, text);
}

inline constexpr std::uint32_t kBundleVersion = 1;

inline std::string encode_bundle(const std::vector<ImageSample>& samples) {
  std::string out = "QDS1";
  detail::put_le<std::uint32_t>(out, kBundleVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.pixels.size() != kImageElements) throw ShapeError("encode_bundle", "sample elements", s.pixels.size(), kImageElements);
    detail::put_le<std::int32_t>(out, s.label);
    out.push_back(s.synthetic ? 1 : 0);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.source_id.size()));
    out += s.source_id;
    for (float v : s.pixels.data()) detail::put_le<float>(out, v);
  }
  return out;
}

inline std::vector<ImageSample> decode_bundle(const std::string& bytes, const std::string& what = "bundle") {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw Error(Errc::corrupt, what + ": truncated bundle");
  };
  need(12);
  if (bytes.compare(0, 4, "QDS1") != 0) throw Error(Errc::corrupt, what + ": not a QDS1 bundle");
  pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;
  if (version != kBundleVersion)
    throw Error(Errc::version_mismatch, what + ": bundle version " + std::to_string(version) + ", expected " +
                                            std::to_string(kBundleVersion));
  const auto count = detail::get_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;
  std::vector<ImageSample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    need(9);
    ImageSample s;
    s.label = detail::get_le<std::int32_t>(bytes.data() + pos);
    s.synthetic = bytes[pos + 4] != 0;
    const auto id_len = detail::get_le<std::uint32_t>(bytes.data() + pos + 5);
    pos += 9;
    need(id_len + 4 * kImageElements);
    s.source_id = bytes.substr(pos, id_len);
    pos += id_len;
    std::vector<float> px(kImageElements);
    for (auto& v : px) {
      v = detail::get_le<float>(bytes.data() + pos);
      pos += 4;
    }
    s.pixels = Tensor({kImageSize, kImageSize, kImageChannels}, std::move(px));
    out.push_back(std::move(s));
  }
  if (pos != bytes.size()) throw Error(Errc::corrupt, what + ": trailing bytes after bundle");
  return out;
}

inline void save_bundle(const std::filesystem::path& path, const std::vector<ImageSample>& samples) {
  detail::write_file(path, encode_bundle(samples));
}

inline std::vector<ImageSample> load_bundle(const std::filesystem::path& path) {
  return decode_bundle(detail::read_file(path), path.string());
}

}  // namespace qana
