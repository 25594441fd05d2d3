#pragma once

#include <span>
#include <string>
#include <vector>

#include "astra/common.hpp"

namespace astra::eval {

double accuracy(std::span<const int> preds, std::span<const int> golds);

// Unweighted mean of per-class F1. A class absent from both predictions and
// golds contributes F1 = 0 (documented convention; keeps K fixed).
double macro_f1(std::span<const int> preds, std::span<const int> golds, int k);

// F1 of a single designated class, for binary tasks where the positive-class
// convention is wanted instead.
double binary_f1(std::span<const int> preds, std::span<const int> golds,
                 int positive_class);

struct MetricReport {
  std::string metric;
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // population stddev, as reported alongside means

  static MetricReport from_values(std::string metric, std::vector<double> values);
};

}  // namespace astra::eval
