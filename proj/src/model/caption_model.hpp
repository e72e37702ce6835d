// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "numerics/ops.hpp"
#include "numerics/rng.hpp"
#include "numerics/tape.hpp"
#include "numerics/tensor.hpp"
#include "text/vocab.hpp"

namespace cl4ac::model {

using nn::Parameter;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

struct EncoderConfig {
  std::array<std::size_t, 4> channels{64, 128, 256, 512};
  std::size_t fc_hidden = 512;
  double dropout = 0.2;
  // false: pool between blocks (x8 reduction); true: after every block (x16).
  bool pool_every_block = false;
};

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t width = 128;
  std::size_t ff_width = 512;
  double dropout = 0.2;
  std::size_t max_len = 35;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::size_t vocab_size = 0;

  // Throws ConfigError on inconsistent settings.
  void validate() const;
  // Time reduction of the encoder (8 or 16).
  std::size_t time_reduction() const { return encoder.pool_every_block ? 16 : 8; }
};

// Forward-pass mode. Dropout needs an rng in training mode.
struct Mode {
  bool train = false;
  Rng* rng = nullptr;
};

// A batch of token sequences padded with <pad> to a common length.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<int> ids;              // [batch][len]
  std::vector<std::size_t> lengths;  // up to and including the last non-pad id

  static TokenBatch from(const std::vector<text::TokenSeq>& seqs);
};

template <typename T>
class CaptionModel {
 public:
  CaptionModel(ModelConfig cfg, Rng& init_rng);
  CaptionModel(CaptionModel&&) noexcept = default;
  CaptionModel& operator=(CaptionModel&&) noexcept = default;

  const ModelConfig& config() const noexcept { return cfg_; }

  // Every parameter and buffer, in a fixed order. Batch-norm running
  // statistics are included with trainable() == false.
  std::vector<Parameter<T>*> parameters();
  Parameter<T>* find(const std::string& name);

  // Mels [B, H, W] (or [H, W]) -> z [B, W', width]. Throws InputError when
  // W is below the time reduction.
  Var encode(Tape<T>& tape, Var mels, const Mode& mode);

  // R [B, len, width]. memory_lengths optionally limits the z steps each
  // row may attend to (for batches of unequal clip length).
  Var decode_states(Tape<T>& tape, Var z, const TokenBatch& tokens, const Mode& mode,
                    std::span<const std::size_t> memory_lengths = {});

  // [B, len, width] -> [B, len, V].
  Var project_vocab(Tape<T>& tape, Var states);

  // Logit of the pair classifier on the last non-pad state of each row, [B].
  Var classify_logits(Tape<T>& tape, Var states, std::span<const std::size_t> last_index);
  // sigmoid(classify_logits), the probability that the pair is mismatched.
  Var classify_pair(Tape<T>& tape, Var states, std::span<const std::size_t> last_index);

  // Greedy decoding of one clip ([H, W]); stops at <eos> or max_len tokens.
  // <pad> and <sos> are never emitted. Returns ids without <sos>/<eos>.
  text::TokenSeq greedy_decode(const Tensor<T>& mel, std::size_t max_len = 0);

  // Copies a V x width matrix into the token table.
  void set_embeddings(const Tensor<float>& table);

 private:
  struct ConvBn {
    Parameter<T>* kernel;
    Parameter<T>* gamma;
    Parameter<T>* beta;
    Parameter<T>* running_mean;
    Parameter<T>* running_var;
  };
  struct Linear {
    Parameter<T>* w;
    Parameter<T>* b;
  };
  struct Norm {
    Parameter<T>* gamma;
    Parameter<T>* beta;
  };
  struct DecoderBlock {
    Norm ln_self, ln_cross, ln_ff;
    Linear q, k, v, o;
    Linear cq, ck, cv, co;
    Linear ff1, ff2;
  };

  Parameter<T>* add_param(const std::string& name, Tensor<T> value, bool trainable = true);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Norm make_norm(const std::string& name, std::size_t width);
  Var apply_linear(Tape<T>& tape, Var x, const Linear& l);
  Var apply_norm(Tape<T>& tape, Var x, const Norm& n);

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::vector<ConvBn> convs_;  // 8 layers, two per block
  Linear fc1_, fc2_;
  Parameter<T>* embedding_ = nullptr;
  std::vector<DecoderBlock> blocks_;
  Norm final_norm_;
  Linear vocab_head_;
  Linear classifier_;
};

// Sinusoidal position table [len, width].
template <typename T>
Tensor<T> positional_encoding(std::size_t len, std::size_t width);

}  // namespace cl4ac::model
