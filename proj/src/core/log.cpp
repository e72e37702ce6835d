// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "core/log.hpp"

#include <iostream>
#include <mutex>

namespace cl4ac::log {
namespace {

std::mutex g_mutex;

Sink& sink() {
  static Sink s = [](Level level, const std::string& msg) {
    std::cerr << (level == Level::kWarning ? "WARNING: " : "") << msg << '\n';
  };
  return s;
}

}  // namespace

void set_sink(Sink s) {
  std::lock_guard<std::mutex> lock(g_mutex);
  sink() = std::move(s);
}

void emit(Level level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (sink()) sink()(level, message);
}

}  // namespace cl4ac::log
