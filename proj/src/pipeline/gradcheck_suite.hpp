// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace cl4ac::pipeline {

struct GradcheckRow {
  std::string family;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool pass = false;
  std::string worst;  // parameter[index] with the largest error
  bool live = true;   // some analytic gradient was non-negligible
};

// Central-difference check of every layer family on small double-precision
// shapes, from single ops up to the full captioning objective.
std::vector<GradcheckRow> run_gradcheck_suite(double tolerance = 1e-5);

// Fixed-width table: family, max_rel_error, coordinates, status.
std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows);

}  // namespace cl4ac::pipeline
