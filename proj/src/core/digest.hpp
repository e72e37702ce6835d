// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cl4ac {

using Sha256 = std::array<std::uint8_t, 32>;

// Incremental SHA-256.
class Sha256Builder {
 public:
  Sha256Builder();
  ~Sha256Builder();
  Sha256Builder(const Sha256Builder&) = delete;
  Sha256Builder& operator=(const Sha256Builder&) = delete;

  Sha256Builder& update(std::span<const std::uint8_t> bytes);
  Sha256Builder& update(std::string_view text);
  Sha256 finish();

 private:
  void* ctx_;
};

Sha256 sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Sha256& digest);

}  // namespace cl4ac
