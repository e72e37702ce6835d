// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "text/word2vec.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace cl4ac::text {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log sigmoid(x), stable for large |x|.
double softplus_neg(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

// Unigram^0.75 sampling table as a cumulative distribution.
class NegativeSampler {
 public:
  NegativeSampler(const std::vector<std::size_t>& counts) {
    double total = 0.0;
    for (std::size_t id = 0; id < counts.size(); ++id) {
      if (counts[id] == 0) continue;
      total += std::pow(static_cast<double>(counts[id]), 0.75);
      ids_.push_back(static_cast<TokenId>(id));
      cdf_.push_back(total);
    }
    for (auto& c : cdf_) c /= total;
  }

  TokenId draw(Rng& rng) const {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return ids_[static_cast<std::size_t>(it - cdf_.begin())];
  }

 private:
  std::vector<TokenId> ids_;
  std::vector<double> cdf_;
};

}  // namespace

Word2VecResult train_word2vec(const std::vector<std::string>& corpus, const Vocabulary& vocab,
                              const Word2VecConfig& cfg, Rng& rng) {
  if (cfg.window < 1 || cfg.negatives < 1 || cfg.dim < 1) {
    throw ConfigError("word2vec needs window >= 1, negatives >= 1 and dim >= 1");
  }
  std::vector<TokenSeq> sentences;
  std::vector<std::size_t> counts(vocab.size(), 0);
  std::size_t total_tokens = 0;
  for (const auto& caption : corpus) {
    TokenSeq s;
    for (const auto& t : split_tokens(normalize_caption(caption))) {
      const TokenId id = vocab.id(t);
      if (id == kUnk) continue;
      s.push_back(id);
      ++counts[static_cast<std::size_t>(id)];
    }
    total_tokens += s.size();
    if (s.size() >= 2) sentences.push_back(std::move(s));
  }
  if (total_tokens <= cfg.window) {
    throw InputError("word2vec corpus has " + std::to_string(total_tokens) +
                     " tokens, not more than the window of " + std::to_string(cfg.window));
  }

  const std::size_t v = vocab.size(), e = cfg.dim;
  std::vector<double> in(v * e), out(v * e, 0.0);
  for (auto& x : in) x = (uniform01(rng) - 0.5) / static_cast<double>(e);

  Word2VecResult result;
  const NegativeSampler sampler(counts);
  std::vector<double> hidden(e), hidden_grad(e);

  // One positive target plus `negatives` samples against a hidden vector;
  // returns the loss and accumulates the gradient w.r.t. hidden.
  auto train_pair = [&](TokenId target, double lr) {
    double loss = 0.0;
    for (std::size_t s = 0; s <= cfg.negatives; ++s) {
      TokenId word = target;
      double label = 1.0;
      if (s > 0) {
        word = sampler.draw(rng);
        if (word == target) continue;
        label = 0.0;
      }
      double* o = out.data() + static_cast<std::size_t>(word) * e;
      double dot = 0.0;
      for (std::size_t k = 0; k < e; ++k) dot += hidden[k] * o[k];
      loss += label > 0 ? softplus_neg(dot) : softplus_neg(-dot);
      const double g = lr * (label - sigmoid(dot));
      for (std::size_t k = 0; k < e; ++k) {
        hidden_grad[k] += g * o[k];
        o[k] += g * hidden[k];
      }
    }
    return loss;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t examples = 0;
    for (const auto& sent : sentences) {
      for (std::size_t pos = 0; pos < sent.size(); ++pos) {
        const std::size_t lo = pos >= cfg.window ? pos - cfg.window : 0;
        const std::size_t hi = std::min(sent.size() - 1, pos + cfg.window);
        if (cfg.mode == Word2VecMode::kCbow) {
          std::fill(hidden.begin(), hidden.end(), 0.0);
          std::fill(hidden_grad.begin(), hidden_grad.end(), 0.0);
          std::size_t n_ctx = 0;
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == pos) continue;
            const double* x = in.data() + static_cast<std::size_t>(sent[c]) * e;
            for (std::size_t k = 0; k < e; ++k) hidden[k] += x[k];
            ++n_ctx;
          }
          for (auto& h : hidden) h /= static_cast<double>(n_ctx);
          loss += train_pair(sent[pos], cfg.learning_rate);
          ++examples;
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == pos) continue;
            double* x = in.data() + static_cast<std::size_t>(sent[c]) * e;
            for (std::size_t k = 0; k < e; ++k) x[k] += hidden_grad[k] / static_cast<double>(n_ctx);
          }
        } else {
          for (std::size_t c = lo; c <= hi; ++c) {
            if (c == pos) continue;
            double* x = in.data() + static_cast<std::size_t>(sent[pos]) * e;
            std::copy(x, x + e, hidden.begin());
            std::fill(hidden_grad.begin(), hidden_grad.end(), 0.0);
            loss += train_pair(sent[c], cfg.learning_rate);
            ++examples;
            for (std::size_t k = 0; k < e; ++k) x[k] += hidden_grad[k];
          }
        }
      }
    }
    result.epoch_loss.push_back(examples ? loss / static_cast<double>(examples) : 0.0);
  }

  std::vector<float> values(in.begin(), in.end());
  result.embeddings = EmbeddingMatrix({v, e}, std::move(values));
  return result;
}

EmbeddingMatrix train_word2vec_combined(const std::vector<std::string>& corpus,
                                        const Vocabulary& vocab, Word2VecConfig cfg, Rng& rng) {
  cfg.mode = Word2VecMode::kCbow;
  auto cbow = train_word2vec(corpus, vocab, cfg, rng).embeddings;
  cfg.mode = Word2VecMode::kSkipGram;
  const auto sg = train_word2vec(corpus, vocab, cfg, rng).embeddings;
  for (std::size_t i = 0; i < cbow.size(); ++i) cbow[i] = 0.5f * (cbow[i] + sg[i]);
  return cbow;
}

double cosine(const EmbeddingMatrix& m, TokenId a, TokenId b) {
  const std::size_t e = m.dim(1);
  const float* x = m.ptr() + static_cast<std::size_t>(a) * e;
  const float* y = m.ptr() + static_cast<std::size_t>(b) * e;
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t k = 0; k < e; ++k) {
    xy += static_cast<double>(x[k]) * y[k];
    xx += static_cast<double>(x[k]) * x[k];
    yy += static_cast<double>(y[k]) * y[k];
  }
  if (xx == 0 || yy == 0) return 0.0;
  return xy / std::sqrt(xx * yy);
}

}  // namespace cl4ac::text
