// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cl4ac::text {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kSos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstCorpusId = 4;

// Lowercases ASCII letters, deletes every character that is not an ASCII
// letter, digit or whitespace, then collapses whitespace runs and trims.
std::string normalize_caption(std::string_view raw);

// Splits a normalized caption on single spaces.
std::vector<std::string> split_tokens(std::string_view normalized);

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();

  // Reserved ids first, then corpus tokens in the given order.
  static Vocabulary from_tokens(const std::vector<std::string>& corpus_tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  // kUnk when the token is unknown.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Tokens with count >= min_count, ordered by descending count then
// lexicographically. Throws InputError on an empty corpus.
Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count = 1);

// <sos> ids <eos>; unknown words map to <unk>. The caption is normalized first.
TokenSeq encode(std::string_view caption, const Vocabulary& vocab);

// Drops <pad>, <sos> and <eos>; stops at the first <eos> after content.
// <unk> is kept and rendered as "<unk>".
std::string decode(const TokenSeq& ids, const Vocabulary& vocab);

// One corpus token per line after '#' comment lines; the first token line
// holds id 4.
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);
std::string serialize_vocab(const Vocabulary& vocab);
Vocabulary parse_vocab(std::string_view content, const std::string& origin = "<memory>");

}  // namespace cl4ac::text
