// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "model/caption_model.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace cl4ac::model {

void ModelConfig::validate() const {
  for (auto c : encoder.channels)
    if (c == 0) throw ConfigError("encoder channels must be positive");
  if (encoder.fc_hidden == 0) throw ConfigError("encoder fc_hidden must be positive");
  if (decoder.width == 0 || decoder.heads == 0 || decoder.width % decoder.heads != 0) {
    throw ConfigError("decoder width " + std::to_string(decoder.width) +
                      " must be a positive multiple of heads " + std::to_string(decoder.heads));
  }
  if (decoder.layers == 0 || decoder.ff_width == 0) throw ConfigError("decoder layers and ff_width must be positive");
  if (!(decoder.dropout >= 0.0 && decoder.dropout < 1.0) ||
      !(encoder.dropout >= 0.0 && encoder.dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (decoder.max_len == 0) throw ConfigError("max_len must be positive");
  if (vocab_size < static_cast<std::size_t>(text::kFirstCorpusId)) {
    throw ConfigError("vocabulary must hold the four reserved tokens");
  }
}

TokenBatch TokenBatch::from(const std::vector<text::TokenSeq>& seqs) {
  if (seqs.empty()) throw InputError("empty token batch");
  TokenBatch tb;
  tb.batch = seqs.size();
  for (const auto& s : seqs) {
    if (s.empty()) throw InputError("empty token sequence");
    tb.len = std::max(tb.len, s.size());
  }
  tb.ids.assign(tb.batch * tb.len, text::kPad);
  for (std::size_t b = 0; b < tb.batch; ++b) {
    std::copy(seqs[b].begin(), seqs[b].end(), tb.ids.begin() + static_cast<std::ptrdiff_t>(b * tb.len));
    std::size_t n = seqs[b].size();
    while (n > 1 && seqs[b][n - 1] == text::kPad) --n;
    tb.lengths.push_back(n);
  }
  return tb;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t len, std::size_t width) {
  Tensor<T> pe({len, width});
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      const double a = static_cast<double>(p) * rate;
      pe[p * width + i] = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

template <typename T>
Parameter<T>* CaptionModel<T>::add_param(const std::string& name, Tensor<T> value, bool trainable) {
  params_.push_back(std::make_unique<Parameter<T>>(name, std::move(value), trainable));
  return params_.back().get();
}

template <typename T>
typename CaptionModel<T>::Linear CaptionModel<T>::make_linear(const std::string& name, std::size_t in,
                                                              std::size_t out, Rng& rng) {
  // Xavier uniform.
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor<T> w({in, out});
  for (auto& x : w.data()) x = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  Linear l;
  l.w = add_param(name + ".weight", std::move(w));
  l.b = add_param(name + ".bias", Tensor<T>({out}));
  return l;
}

template <typename T>
typename CaptionModel<T>::Norm CaptionModel<T>::make_norm(const std::string& name, std::size_t width) {
  Norm n;
  n.gamma = add_param(name + ".gamma", Tensor<T>({width}, T(1)));
  n.beta = add_param(name + ".beta", Tensor<T>({width}));
  return n;
}

template <typename T>
CaptionModel<T>::CaptionModel(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::size_t in_ch = 1;
  for (std::size_t blk = 0; blk < 4; ++blk) {
    const std::size_t out_ch = cfg_.encoder.channels[blk];
    for (std::size_t j = 0; j < 2; ++j) {
      const std::string name = "encoder.block" + std::to_string(blk) + ".conv" + std::to_string(j);
      const std::size_t cin = j == 0 ? in_ch : out_ch;
      // He normal for relu layers.
      const double sd = std::sqrt(2.0 / static_cast<double>(cin * 9));
      Tensor<T> k({out_ch, cin, 3, 3});
      for (auto& x : k.data()) x = static_cast<T>(normal(rng, 0.0, sd));
      ConvBn c;
      c.kernel = add_param(name + ".kernel", std::move(k));
      c.gamma = add_param(name + ".bn.gamma", Tensor<T>({out_ch}, T(1)));
      c.beta = add_param(name + ".bn.beta", Tensor<T>({out_ch}));
      c.running_mean = add_param(name + ".bn.running_mean", Tensor<T>({out_ch}), false);
      c.running_var = add_param(name + ".bn.running_var", Tensor<T>({out_ch}, T(1)), false);
      convs_.push_back(c);
    }
    in_ch = out_ch;
  }
  const std::size_t d = cfg_.decoder.width;
  fc1_ = make_linear("encoder.fc1", in_ch, cfg_.encoder.fc_hidden, rng);
  fc2_ = make_linear("encoder.fc2", cfg_.encoder.fc_hidden, d, rng);

  Tensor<T> emb({cfg_.vocab_size, d});
  for (auto& x : emb.data()) x = static_cast<T>(normal(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(d))));
  embedding_ = add_param("decoder.embedding", std::move(emb));
  for (std::size_t l = 0; l < cfg_.decoder.layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    DecoderBlock b;
    b.ln_self = make_norm(p + ".ln_self", d);
    b.q = make_linear(p + ".self.q", d, d, rng);
    b.k = make_linear(p + ".self.k", d, d, rng);
    b.v = make_linear(p + ".self.v", d, d, rng);
    b.o = make_linear(p + ".self.o", d, d, rng);
    b.ln_cross = make_norm(p + ".ln_cross", d);
    b.cq = make_linear(p + ".cross.q", d, d, rng);
    b.ck = make_linear(p + ".cross.k", d, d, rng);
    b.cv = make_linear(p + ".cross.v", d, d, rng);
    b.co = make_linear(p + ".cross.o", d, d, rng);
    b.ln_ff = make_norm(p + ".ln_ff", d);
    b.ff1 = make_linear(p + ".ff1", d, cfg_.decoder.ff_width, rng);
    b.ff2 = make_linear(p + ".ff2", cfg_.decoder.ff_width, d, rng);
    blocks_.push_back(b);
  }
  final_norm_ = make_norm("decoder.ln_final", d);
  vocab_head_ = make_linear("head.vocab", d, cfg_.vocab_size, rng);
  classifier_ = make_linear("head.classifier", d, 1, rng);
}

template <typename T>
std::vector<Parameter<T>*> CaptionModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
Parameter<T>* CaptionModel<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name() == name) return p.get();
  return nullptr;
}

template <typename T>
Var CaptionModel<T>::apply_linear(Tape<T>& tape, Var x, const Linear& l) {
  return nn::linear(tape, x, tape.param(*l.w), tape.param(*l.b));
}

template <typename T>
Var CaptionModel<T>::apply_norm(Tape<T>& tape, Var x, const Norm& n) {
  return nn::layer_norm(tape, x, tape.param(*n.gamma), tape.param(*n.beta));
}

template <typename T>
Var CaptionModel<T>::encode(Tape<T>& tape, Var mels, const Mode& mode) {
  Shape s = tape.shape(mels);
  if (s.size() == 2) s.insert(s.begin(), 1);
  if (s.size() != 3) throw ShapeError("encode expects [B, H, W] mels, got " + nn::shape_str(tape.shape(mels)));
  const std::size_t red = cfg_.time_reduction();
  const std::size_t batch = s[0], h = s[1], w = s[2];
  if (w < red || h < red) {
    throw InputError("log-mel input of " + std::to_string(h) + " x " + std::to_string(w) +
                     " is too small; the encoder needs at least " + std::to_string(red) +
                     " bands and " + std::to_string(red) + " frames");
  }
  Var x = nn::reshape(tape, mels, Shape{batch, 1, h, w});
  for (std::size_t blk = 0; blk < 4; ++blk) {
    for (std::size_t j = 0; j < 2; ++j) {
      const ConvBn& c = convs_[blk * 2 + j];
      x = nn::conv2d(tape, x, tape.param(*c.kernel));
      x = nn::batch_norm(tape, x, tape.param(*c.gamma), tape.param(*c.beta), *c.running_mean,
                         *c.running_var, mode.train);
      x = nn::relu(tape, x);
    }
    if (blk < 3 || cfg_.encoder.pool_every_block) x = nn::avg_pool_2x2(tape, x);
  }
  x = nn::global_mean(tape, x, 2);    // [B, C, W']
  x = nn::swap_last_two(tape, x);     // [B, W', C]
  x = nn::relu(tape, apply_linear(tape, x, fc1_));
  x = nn::dropout(tape, x, cfg_.encoder.dropout, mode.rng, mode.train);
  return apply_linear(tape, x, fc2_);
}

template <typename T>
Var CaptionModel<T>::decode_states(Tape<T>& tape, Var z, const TokenBatch& tokens, const Mode& mode,
                                   std::span<const std::size_t> memory_lengths) {
  if (tokens.batch == 0 || tokens.len == 0) throw InputError("empty token sequence");
  const std::size_t d = cfg_.decoder.width;
  for (int id : tokens.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(cfg_.vocab_size));
    }
  }
  Shape zs = tape.shape(z);
  if (zs.size() == 2) {
    zs.insert(zs.begin(), 1);
    z = nn::reshape(tape, z, zs);
  }
  if (zs.size() != 3 || zs[0] != tokens.batch || zs[2] != d) {
    throw ShapeError("decode_states: z " + nn::shape_str(zs) + " for batch " + std::to_string(tokens.batch));
  }
  Var x = nn::embedding_lookup(tape, tape.param(*embedding_), std::span<const int>(tokens.ids));
  x = nn::reshape(tape, x, Shape{tokens.batch, tokens.len, d});
  x = nn::add(tape, x, tape.constant(positional_encoding<T>(tokens.len, d)));
  x = nn::dropout(tape, x, cfg_.decoder.dropout, mode.rng, mode.train);

  const auto self_mask = nn::AttentionMask::causal(tokens.batch, tokens.len, tokens.lengths);
  std::optional<nn::AttentionMask> cross_mask;
  if (!memory_lengths.empty()) {
    cross_mask = nn::AttentionMask::key_lengths(tokens.len, zs[1], memory_lengths);
    cross_mask->batch = tokens.batch;
  }
  const std::size_t heads = cfg_.decoder.heads;
  const double p = cfg_.decoder.dropout;
  for (const auto& b : blocks_) {
    Var y = apply_norm(tape, x, b.ln_self);
    Var a = nn::attention(tape, apply_linear(tape, y, b.q), apply_linear(tape, y, b.k),
                          apply_linear(tape, y, b.v), heads, &self_mask);
    x = nn::add(tape, x, nn::dropout(tape, apply_linear(tape, a, b.o), p, mode.rng, mode.train));

    y = apply_norm(tape, x, b.ln_cross);
    a = nn::attention(tape, apply_linear(tape, y, b.cq), apply_linear(tape, z, b.ck),
                      apply_linear(tape, z, b.cv), heads, cross_mask ? &*cross_mask : nullptr);
    x = nn::add(tape, x, nn::dropout(tape, apply_linear(tape, a, b.co), p, mode.rng, mode.train));

    y = apply_norm(tape, x, b.ln_ff);
    Var f = apply_linear(tape, nn::relu(tape, apply_linear(tape, y, b.ff1)), b.ff2);
    x = nn::add(tape, x, nn::dropout(tape, f, p, mode.rng, mode.train));
  }
  return apply_norm(tape, x, final_norm_);
}

template <typename T>
Var CaptionModel<T>::project_vocab(Tape<T>& tape, Var states) {
  return apply_linear(tape, states, vocab_head_);
}

template <typename T>
Var CaptionModel<T>::classify_logits(Tape<T>& tape, Var states, std::span<const std::size_t> last_index) {
  const Shape& s = tape.shape(states);
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t len = s.size() == 3 ? s[1] : s[0];
  if (last_index.size() != batch) {
    throw ContractError("classify_pair: " + std::to_string(last_index.size()) + " indices for batch " +
                        std::to_string(batch));
  }
  std::vector<std::size_t> rows(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (last_index[b] >= len) {
      throw ContractError("classify_pair: last index " + std::to_string(last_index[b]) +
                          " outside sequence of length " + std::to_string(len));
    }
    rows[b] = b * len + last_index[b];
  }
  Var r = nn::select_rows(tape, states, std::span<const std::size_t>(rows));
  return nn::reshape(tape, apply_linear(tape, r, classifier_), Shape{batch});
}

template <typename T>
Var CaptionModel<T>::classify_pair(Tape<T>& tape, Var states, std::span<const std::size_t> last_index) {
  return nn::sigmoid(tape, classify_logits(tape, states, last_index));
}

template <typename T>
text::TokenSeq CaptionModel<T>::greedy_decode(const Tensor<T>& mel, std::size_t max_len) {
  if (max_len == 0) max_len = cfg_.decoder.max_len;
  const Mode eval{};
  Tape<T> enc_tape;
  const Tensor<T> z = enc_tape.value(encode(enc_tape, enc_tape.constant(mel), eval));
  text::TokenSeq prefix{text::kSos};
  text::TokenSeq out;
  while (out.size() < max_len) {
    Tape<T> tape;
    const TokenBatch tb = TokenBatch::from({prefix});
    const Var states = decode_states(tape, tape.constant(z), tb, eval);
    const Tensor<T>& logits = tape.value(project_vocab(tape, states));
    const std::size_t v = cfg_.vocab_size;
    const T* row = logits.ptr() + (tb.len - 1) * v;
    text::TokenId best = text::kEos;
    T best_score = row[text::kEos];
    for (std::size_t i = 0; i < v; ++i) {
      const auto id = static_cast<text::TokenId>(i);
      if (id == text::kPad || id == text::kSos) continue;
      if (row[i] > best_score) {
        best_score = row[i];
        best = id;
      }
    }
    if (best == text::kEos) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

template <typename T>
void CaptionModel<T>::set_embeddings(const Tensor<float>& table) {
  const Shape want{cfg_.vocab_size, cfg_.decoder.width};
  if (table.shape() != want) {
    throw ShapeError("embedding table " + nn::shape_str(table.shape()) + " does not match " +
                     nn::shape_str(want));
  }
  embedding_->assign(table.cast<T>());
}

template class CaptionModel<float>;
template class CaptionModel<double>;
template Tensor<float> positional_encoding<float>(std::size_t, std::size_t);
template Tensor<double> positional_encoding<double>(std::size_t, std::size_t);

}  // namespace cl4ac::model
