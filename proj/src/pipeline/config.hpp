// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsp/mel.hpp"
#include "json.hpp"
#include "model/caption_model.hpp"
#include "text/word2vec.hpp"
#include "training/trainer.hpp"

namespace cl4ac::pipeline {

using Json = nlohmann::json;

// One Clotho-style caption CSV and the directory holding its WAV files.
struct ManifestSource {
  std::string csv;
  std::string audio_root;
};

struct TextConfig {
  std::size_t min_count = 1;
  // Initialise the decoder embedding from word2vec vectors.
  bool word2vec = true;
  // "cbow", "skipgram" or "both" (mean of the two).
  std::string word2vec_mode = "both";
  text::Word2VecConfig w2v;
};

struct PathsConfig {
  std::vector<ManifestSource> train;  // merged in order
  std::optional<ManifestSource> eval;
  std::string run_dir = "run";
};

struct RunConfig {
  dsp::DspConfig dsp;
  TextConfig text;
  model::ModelConfig model;  // vocab_size is filled in by prepare
  training::TrainConfig train;
  PathsConfig paths;

  // Throws ConfigError on invalid values.
  void validate() const;
};

// Every field is optional; unknown keys are a ConfigError naming the key.
RunConfig parse_config(const Json& j);
// Relative paths in the file are taken relative to the file's directory.
RunConfig load_config(const std::filesystem::path& path);
// Prefixes every relative path in `c.paths` with `base`.
void rebase_paths(RunConfig& c, const std::filesystem::path& base);
// Fully resolved config, suitable for echoing.
Json to_json(const RunConfig& cfg);

Json to_json(const dsp::DspConfig& cfg);
dsp::DspConfig dsp_from_json(const Json& j);
Json to_json(const model::ModelConfig& cfg);
model::ModelConfig model_from_json(const Json& j);

// SHA-256 of the canonical JSON dump, as hex.
std::string config_hash(const Json& j);

// CL4AC_RUN_DIR, when set, replaces paths.run_dir.
std::filesystem::path resolve_run_dir(const RunConfig& cfg);

}  // namespace cl4ac::pipeline
