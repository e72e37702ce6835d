// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <sstream>
#include <string>

namespace cl4ac::log {

enum class Level { kInfo, kWarning };

using Sink = std::function<void(Level, const std::string&)>;

// Replaces the process-wide sink. The default writes to stderr.
void set_sink(Sink sink);
void emit(Level level, const std::string& message);

template <typename... Args>
void info(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  emit(Level::kInfo, os.str());
}

template <typename... Args>
void warn(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  emit(Level::kWarning, os.str());
}

}  // namespace cl4ac::log
