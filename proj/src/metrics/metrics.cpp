// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "json.hpp"

namespace cl4ac::metrics {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Caption& c, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= c.size(); ++i) {
    ++out[Caption(c.begin() + static_cast<std::ptrdiff_t>(i),
                  c.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::size_t lcs(const Caption& a, const Caption& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

constexpr int kCiderOrders = 4;

struct TfIdf {
  std::array<std::map<Caption, double>, kCiderOrders> vec;
  std::array<double, kCiderOrders> norm{};
  double length = 0.0;
};

}  // namespace

void validate(const EvalCorpus& corpus) {
  if (corpus.empty()) throw InputError("evaluation corpus has no items");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].references.empty()) {
      throw InputError("evaluation item " + std::to_string(i) + " has no reference caption");
    }
  }
}

double bleu(const EvalCorpus& corpus, int n) {
  if (n < 1 || n > 4) throw ContractError("BLEU order must be in 1..4, got " + std::to_string(n));
  validate(corpus);
  const auto orders = static_cast<std::size_t>(n);
  std::vector<double> matched(orders, 0.0), total(orders, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& item : corpus) {
    const double c = static_cast<double>(item.candidate.size());
    cand_len += c;
    // Closest reference length; ties go to the shorter reference.
    double best = std::numeric_limits<double>::infinity(), best_len = 0.0;
    for (const auto& r : item.references) {
      const double len = static_cast<double>(r.size());
      const double d = std::abs(len - c);
      if (d < best || (d == best && len < best_len)) {
        best = d;
        best_len = len;
      }
    }
    ref_len += best_len;
    for (std::size_t k = 1; k <= orders; ++k) {
      const auto cand = ngrams(item.candidate, k);
      NgramCounts max_ref;
      for (const auto& r : item.references) {
        for (const auto& [g, cnt] : ngrams(r, k)) max_ref[g] = std::max(max_ref[g], cnt);
      }
      for (const auto& [g, cnt] : cand) {
        total[k - 1] += static_cast<double>(cnt);
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[k - 1] += static_cast<double>(std::min(cnt, it->second));
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < orders; ++k) {
    if (matched[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(n));
}

double rouge_l(const EvalCorpus& corpus, double beta) {
  validate(corpus);
  const double b2 = beta * beta;
  double sum = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    if (!item.candidate.empty()) {
      for (const auto& r : item.references) {
        if (r.empty()) continue;
        const double l = static_cast<double>(lcs(item.candidate, r));
        if (l == 0.0) continue;
        const double p = l / static_cast<double>(item.candidate.size());
        const double rec = l / static_cast<double>(r.size());
        best = std::max(best, (1.0 + b2) * rec * p / (rec + b2 * p));
      }
    }
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

double cider_d(const EvalCorpus& corpus, double sigma) {
  validate(corpus);
  if (corpus.size() < 2) throw InputError("CIDEr-D needs at least two items to estimate document frequency");

  // Document frequency of each n-gram over the per-item reference sets.
  std::map<Caption, double> df;
  for (const auto& item : corpus) {
    std::set<Caption> seen;
    for (const auto& r : item.references) {
      for (std::size_t k = 1; k <= kCiderOrders; ++k) {
        for (const auto& entry : ngrams(r, k)) seen.insert(entry.first);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(corpus.size()));

  auto tfidf = [&](const Caption& c) {
    TfIdf t;
    t.length = static_cast<double>(c.size());
    for (std::size_t k = 1; k <= kCiderOrders; ++k) {
      double sq = 0.0;
      for (const auto& [g, cnt] : ngrams(c, k)) {
        const auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
        const double w = static_cast<double>(cnt) * (log_n - std::log(d));
        t.vec[k - 1][g] = w;
        sq += w * w;
      }
      t.norm[k - 1] = std::sqrt(sq);
    }
    return t;
  };

  double corpus_sum = 0.0;
  for (const auto& item : corpus) {
    const TfIdf cand = tfidf(item.candidate);
    std::array<double, kCiderOrders> per_order{};
    for (const auto& r : item.references) {
      const TfIdf ref = tfidf(r);
      const double delta = cand.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      for (int k = 0; k < kCiderOrders; ++k) {
        double dot = 0.0;
        for (const auto& [g, w] : cand.vec[k]) {
          const auto it = ref.vec[k].find(g);
          if (it != ref.vec[k].end()) dot += std::min(w, it->second) * it->second;
        }
        if (cand.norm[k] != 0.0 && ref.norm[k] != 0.0) dot /= cand.norm[k] * ref.norm[k];
        per_order[k] += dot * penalty;
      }
    }
    double item_score = 0.0;
    for (double s : per_order) item_score += s / static_cast<double>(item.references.size());
    corpus_sum += 10.0 * item_score / kCiderOrders;
  }
  return corpus_sum / static_cast<double>(corpus.size());
}

MetricReport evaluate_all(const EvalCorpus& corpus) {
  MetricReport r;
  r.bleu1 = bleu(corpus, 1);
  r.bleu2 = bleu(corpus, 2);
  r.bleu3 = bleu(corpus, 3);
  r.bleu4 = bleu(corpus, 4);
  r.rouge_l = rouge_l(corpus);
  r.cider_d = cider_d(corpus);
  return r;
}

namespace {

struct Field {
  const char* name;
  double MetricReport::*value;
  std::optional<double> MetricReport::*optional;
};

constexpr Field kFields[] = {
    {"bleu1", &MetricReport::bleu1, nullptr},   {"bleu2", &MetricReport::bleu2, nullptr},
    {"bleu3", &MetricReport::bleu3, nullptr},   {"bleu4", &MetricReport::bleu4, nullptr},
    {"rouge_l", &MetricReport::rouge_l, nullptr}, {"meteor", nullptr, &MetricReport::meteor},
    {"cider_d", &MetricReport::cider_d, nullptr}, {"spice", nullptr, &MetricReport::spice},
    {"spider", nullptr, &MetricReport::spider},
};

const Field& field_named(const std::string& name) {
  for (const auto& f : kFields) {
    if (name == f.name) return f;
  }
  throw FormatError("unknown metric '" + name + "' in report");
}

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_value(const std::string& s, const std::string& metric) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw FormatError("metric '" + metric + "' has non-numeric value '" + s + "'");
  }
  return v;
}

}  // namespace

std::string report_to_csv(const MetricReport& r) {
  std::string out = "metric,value\n";
  for (const auto& f : kFields) {
    out += f.name;
    out += ',';
    if (f.value) {
      out += format_value(r.*f.value);
    } else if ((r.*f.optional).has_value()) {
      out += format_value(*(r.*f.optional));
    }
    out += '\n';
  }
  return out;
}

MetricReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "metric,value" && line != "metric,value\r")) {
    throw FormatError("report CSV must start with 'metric,value'");
  }
  MetricReport r;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("report row '" + line + "' has no comma");
    const std::string name = line.substr(0, comma), value = line.substr(comma + 1);
    const Field& f = field_named(name);
    if (!seen.insert(name).second) throw FormatError("metric '" + name + "' appears twice");
    if (f.value) {
      if (value.empty()) throw FormatError("metric '" + name + "' must have a value");
      r.*f.value = parse_value(value, name);
    } else if (!value.empty()) {
      r.*f.optional = parse_value(value, name);
    }
  }
  for (const auto& f : kFields) {
    if (f.value && !seen.count(f.name)) throw FormatError(std::string("report lacks metric '") + f.name + "'");
  }
  return r;
}

std::string report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  for (const auto& f : kFields) {
    if (f.value) {
      j[f.name] = r.*f.value;
    } else if ((r.*f.optional).has_value()) {
      j[f.name] = *(r.*f.optional);
    } else {
      j[f.name] = nullptr;
    }
  }
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("report JSON must be an object");
  for (const auto& [key, _] : j.items()) field_named(key);
  MetricReport r;
  for (const auto& f : kFields) {
    const auto it = j.find(f.name);
    const bool present = it != j.end() && !it->is_null();
    if (present && !it->is_number()) throw FormatError(std::string("metric '") + f.name + "' is not a number");
    if (f.value) {
      if (!present) throw FormatError(std::string("report lacks metric '") + f.name + "'");
      r.*f.value = it->get<double>();
    } else if (present) {
      r.*f.optional = it->get<double>();
    }
  }
  return r;
}

void save_report(const MetricReport& r, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path) {
  for (const auto& [path, body] :
       {std::pair{csv_path, report_to_csv(r)}, std::pair{json_path, report_to_json(r)}}) {
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out) throw IoError("cannot write " + path.string());
  }
}

}  // namespace cl4ac::metrics
