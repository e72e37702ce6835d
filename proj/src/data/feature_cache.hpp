// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dsp/mel.hpp"

namespace cl4ac::data {

// Log-mel features stored as <run_dir>/features/<key>.mel, where key is the
// SHA-256 of the DSP settings and the WAV bytes. Entries are written to a
// temporary file and renamed, so concurrent readers never see a partial
// entry. One writer per run directory.
class FeatureCache {
 public:
  explicit FeatureCache(const std::filesystem::path& run_dir);

  // Returns the cached features, computing and storing them on a miss.
  dsp::MelSpectrogram get(const std::filesystem::path& wav_path, const dsp::DspConfig& cfg);

  static std::string key(std::span<const std::uint8_t> wav_bytes, const dsp::DspConfig& cfg);
  std::filesystem::path entry_path(const std::string& key) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

// .mel layout: "CL4M", u32 version, u64 bands, u64 frames, f32 values
// (little-endian), SHA-256 of everything before it.
std::vector<std::uint8_t> encode_mel(const dsp::MelSpectrogram& mel);
dsp::MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, const std::string& origin);

}  // namespace cl4ac::data
