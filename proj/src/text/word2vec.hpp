// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "numerics/rng.hpp"
#include "numerics/tensor.hpp"
#include "text/vocab.hpp"

namespace cl4ac::text {

enum class Word2VecMode { kCbow, kSkipGram };

struct Word2VecConfig {
  Word2VecMode mode = Word2VecMode::kCbow;
  std::size_t window = 3;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::size_t dim = 128;
};

// V x E matrix, row i is the vector of token id i.
using EmbeddingMatrix = nn::Tensor<float>;

struct Word2VecResult {
  EmbeddingMatrix embeddings;
  // Mean negative-sampling loss per training example, one entry per epoch.
  std::vector<double> epoch_loss;
};

// Trains input vectors by negative sampling over the tokenized corpus.
// Rows start uniform in [-0.5/E, 0.5/E]; rows of tokens that never occur
// (including the reserved ids) keep their initial values.
// Throws InputError when the corpus has no more tokens than the window.
Word2VecResult train_word2vec(const std::vector<std::string>& corpus, const Vocabulary& vocab,
                              const Word2VecConfig& cfg, Rng& rng);

// Trains CBOW and skip-gram with the same settings and averages the two.
EmbeddingMatrix train_word2vec_combined(const std::vector<std::string>& corpus,
                                        const Vocabulary& vocab, Word2VecConfig cfg, Rng& rng);

double cosine(const EmbeddingMatrix& m, TokenId a, TokenId b);

}  // namespace cl4ac::text
