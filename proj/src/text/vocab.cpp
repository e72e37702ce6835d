// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "text/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "core/error.hpp"

namespace cl4ac::text {
namespace {

const char* const kReserved[] = {"<pad>", "<sos>", "<eos>", "<unk>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alnum(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); }

}  // namespace

std::string normalize_caption(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else if (is_alnum(c)) {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < normalized.size()) {
    std::size_t end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) out.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) add(r);
}

void Vocabulary::add(const std::string& token) {
  if (!ids_.emplace(token, static_cast<TokenId>(tokens_.size())).second) {
    throw FormatError("duplicate vocabulary token '" + token + "'");
  }
  tokens_.push_back(token);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& corpus_tokens) {
  Vocabulary v;
  for (const auto& t : corpus_tokens) {
    if (t.empty()) throw FormatError("empty vocabulary token");
    v.add(t);
  }
  return v;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& caption : corpus)
    for (auto& t : split_tokens(caption)) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ordered;
  for (auto& [t, c] : counts) {
    if (c >= min_count && t != "<pad>" && t != "<sos>" && t != "<eos>" && t != "<unk>") ordered.emplace_back(t, c);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(ordered.size());
  for (auto& [t, c] : ordered) tokens.push_back(t);
  return Vocabulary::from_tokens(tokens);
}

TokenSeq encode(std::string_view caption, const Vocabulary& vocab) {
  TokenSeq ids{kSos};
  for (const auto& t : split_tokens(normalize_caption(caption))) ids.push_back(vocab.id(t));
  ids.push_back(kEos);
  return ids;
}

std::string decode(const TokenSeq& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id == kEos && i > 0) break;
    if (id == kPad || id == kSos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

std::string serialize_vocab(const Vocabulary& vocab) {
  std::ostringstream os;
  os << "# vocabulary: " << vocab.size() << " ids\n"
     << "# ids 0-3 are reserved: <pad> <sos> <eos> <unk>\n"
     << "# the first token line below has id 4; line n has id n + 3\n";
  for (std::size_t i = kFirstCorpusId; i < vocab.size(); ++i) os << vocab.tokens()[i] << '\n';
  return os.str();
}

Vocabulary parse_vocab(std::string_view content, const std::string& origin) {
  std::vector<std::string> tokens;
  bool in_header = true;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string line(content.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (in_header && !line.empty() && line[0] == '#') continue;
    in_header = false;
    if (line.empty() || line.find(' ') != std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(line_no) + ": invalid vocabulary token line");
    }
    tokens.push_back(line);
  }
  try {
    return Vocabulary::from_tokens(tokens);
  } catch (const FormatError& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_vocab(vocab);
  if (!out) throw IoError("short write to " + path.string());
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_vocab(ss.str(), path.string());
}

}  // namespace cl4ac::text
