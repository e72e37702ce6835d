// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cl4ac::metrics {

// A tokenized caption.
using Caption = std::vector<std::string>;

struct EvalItem {
  Caption candidate;
  std::vector<Caption> references;
};

using EvalCorpus = std::vector<EvalItem>;

// Throws InputError unless the corpus has an item and every item a reference.
void validate(const EvalCorpus& corpus);

// Corpus BLEU over orders 1..n with uniform weights. 0 when any order has
// no clipped match.
double bleu(const EvalCorpus& corpus, int n);

// Mean over items of the best LCS F-score (beta = 1.2) over references.
double rouge_l(const EvalCorpus& corpus, double beta = 1.2);

// CIDEr-D with sigma = 6, scaled by 10. Needs at least two items.
double cider_d(const EvalCorpus& corpus, double sigma = 6.0);

struct MetricReport {
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  // Not implemented here; only set when a report is read from a file.
  std::optional<double> meteor, spice, spider;

  bool operator==(const MetricReport&) const = default;
};

MetricReport evaluate_all(const EvalCorpus& corpus);

// "metric,value" rows; unavailable metrics have an empty value.
std::string report_to_csv(const MetricReport& r);
MetricReport report_from_csv(const std::string& text);
// One JSON object; unavailable metrics are null.
std::string report_to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& text);

void save_report(const MetricReport& r, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path);

}  // namespace cl4ac::metrics
