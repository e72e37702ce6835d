// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cl4ac::dsp {

// Mono samples in [-1, 1] at a fixed rate.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;
};

// Parses a RIFF/WAVE buffer: 16-bit PCM or 32-bit float, any channel count
// (channels are averaged to mono). Throws InputError on malformed data;
// `origin` names the source in messages.
AudioClip parse_wav(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");
AudioClip read_wav(const std::filesystem::path& path);

// Writes 16-bit PCM mono. Samples are clamped to [-1, 1].
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace cl4ac::dsp
