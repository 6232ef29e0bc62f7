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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qana {

enum class Errc {
  shape_mismatch,
  invalid_argument,
  config,
  io,
  decode,
  corrupt,
  version_mismatch,
  unsupported_layer,
  overflow,
  divergence,
  empty_input,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::config: return "config";
    case Errc::io: return "io";
    case Errc::decode: return "decode";
    case Errc::corrupt: return "corrupt";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::unsupported_layer: return "unsupported_layer";
    case Errc::overflow: return "overflow";
    case Errc::divergence: return "divergence";
    case Errc::empty_input: return "empty_input";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code;
/// what() is "<code>: <message>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Shape errors name the operation, the offending dimension and both extents.
class ShapeError : public Error {
 public:
  ShapeError(std::string_view op, std::string_view dimension, std::size_t got, std::size_t expected)
      : Error(Errc::shape_mismatch, std::string(op) + ": dimension '" + std::string(dimension) +
                                        "' is " + std::to_string(got) + ", expected " +
                                        std::to_string(expected)),
        dimension_(dimension) {}

  const std::string& dimension() const noexcept { return dimension_; }

 private:
  std::string dimension_;
};

}  // namespace qana
