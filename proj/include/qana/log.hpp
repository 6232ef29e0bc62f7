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


// Leveled logging to stderr. The level comes from QANA_LOG_LEVEL
// (error, warn, info, debug); the default is info.

#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>

namespace qana::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level parse_level(std::string_view s) {
  if (s == "error") return Level::error;
  if (s == "warn" || s == "warning") return Level::warn;
  if (s == "debug") return Level::debug;
  return Level::info;
}

inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("QANA_LOG_LEVEL");
    return env ? parse_level(env) : Level::info;
  }();
  return level;
}

inline void write(Level level, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] %.*s\n", tags[static_cast<int>(level)], static_cast<int>(msg.size()), msg.data());
}

inline void error(std::string_view msg) { write(Level::error, msg); }
inline void warn(std::string_view msg) { write(Level::warn, msg); }
inline void info(std::string_view msg) { write(Level::info, msg); }
inline void debug(std::string_view msg) { write(Level::debug, msg); }

}  // namespace qana::log
