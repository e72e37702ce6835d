// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "model/caption_model.hpp"
#include "text/vocab.hpp"

namespace cl4ac::data {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParameterBlob {
  std::string name;
  nn::Shape shape;
  bool trainable = true;
  std::vector<float> values;
};

struct Checkpoint {
  model::ModelConfig model;
  text::Vocabulary vocab;
  nlohmann::json meta = nlohmann::json::object();  // free-form, e.g. dsp settings
  std::vector<ParameterBlob> params;
};

// Layout:
//   "CL4A" | u32 version | u64 n | n bytes of UTF-8 JSON | f32 payload | SHA-256
// The JSON holds the model config, its hash, the vocabulary, meta and the
// parameter directory (name, shape, offset and count in floats). All
// integers and floats are little-endian; the digest covers every byte
// before it.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws CorruptionError (naming the byte offset) on damage and
// VersionError on a version or config-hash mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws VersionError unless the checkpoint was built for `cfg`.
void require_model_config(const Checkpoint& ckpt, const model::ModelConfig& cfg);

template <typename T>
Checkpoint capture(model::CaptionModel<T>& model, const text::Vocabulary& vocab,
                   nlohmann::json meta = nlohmann::json::object());

// Copies parameters into `model`; names and shapes must match exactly.
template <typename T>
void restore(const Checkpoint& ckpt, model::CaptionModel<T>& model);

template <typename T>
model::CaptionModel<T> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace cl4ac::data
