// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "data/checkpoint.hpp"
#include "data/manifest.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/config.hpp"
#include "training/trainer.hpp"

namespace cl4ac::pipeline {

namespace fs = std::filesystem;

// Files inside a run directory.
struct RunLayout {
  fs::path root;
  fs::path config() const { return root / "config.json"; }
  fs::path vocab() const { return root / "vocab.txt"; }
  fs::path embeddings() const { return root / "embeddings.bin"; }
  fs::path loss_csv() const { return root / "loss.csv"; }
  fs::path checkpoint() const { return root / "model.ckpt"; }
  fs::path report_csv() const { return root / "report.csv"; }
  fs::path report_json() const { return root / "report.json"; }
};

// Writes the effective config to <run>/config.json.
void echo_config(const RunConfig& cfg, const RunLayout& run);

// Merged training manifest from paths.train.
data::DatasetManifest load_training_manifest(const RunConfig& cfg);

struct PrepareResult {
  std::size_t clips = 0;
  std::size_t vocab_size = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

// Vocabulary, optional word2vec embeddings and cached features for the
// training (and evaluation) manifests.
PrepareResult cmd_prepare(const RunConfig& cfg);

// Loads features (through the cache) and encodes every caption.
std::vector<training::ClipRecord> load_clips(const data::DatasetManifest& manifest, const text::Vocabulary& vocab,
                                             const dsp::DspConfig& dsp, const fs::path& run_dir);

struct TrainResult {
  fs::path checkpoint;
  fs::path loss_csv;
  std::size_t steps = 0;
  std::vector<double> epoch_total;
};

// Needs a prepared run directory. Writes loss.csv and model.ckpt.
TrainResult cmd_train(const RunConfig& cfg);

// Greedy caption of one WAV file; max_len 0 uses the model's limit.
std::string cmd_caption(const fs::path& checkpoint, const fs::path& wav, std::size_t max_len = 0);

struct EvaluateOptions {
  fs::path out_dir;  // report.csv and report.json
  std::size_t max_len = 0;
  // Score the first reference of every clip instead of model output.
  bool references_as_candidates = false;
};

metrics::MetricReport cmd_evaluate(const fs::path& checkpoint, const fs::path& manifest_csv,
                                   const fs::path& audio_root, const EvaluateOptions& opts);
// Same, for an in-memory model.
metrics::EvalCorpus caption_corpus(model::CaptionModel<float>& model, const text::Vocabulary& vocab,
                                   const dsp::DspConfig& dsp, const data::DatasetManifest& manifest,
                                   std::size_t max_len, bool references_as_candidates = false);

// V x E float matrix with a digest, used for word2vec embeddings.
void save_matrix(const nn::Tensor<float>& m, const fs::path& path);
nn::Tensor<float> load_matrix(const fs::path& path);

}  // namespace cl4ac::pipeline
