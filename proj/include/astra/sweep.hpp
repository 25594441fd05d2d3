#pragma once

#include <string>
#include <vector>

#include "astra/eval.hpp"
#include "astra/selftrain.hpp"

namespace astra::eval {

struct SweepRow {
  double fraction = 0.0;
  std::string method;  // "majority" | "astra"
  uint64_t seed = 0;   // the run seed for this repeat
  std::string metric;
  double value = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // one report per (fraction, method), aggregated over repeats
  struct Summary {
    double fraction;
    std::string method;
    MetricReport report;
  };
  std::vector<Summary> summaries;
};

// Seeded draw of ceil(fraction * n) rules without replacement, original
// order preserved. fraction 1.0 always returns the full set.
std::vector<rules::RuleSpec> sample_rule_subset(
    const std::vector<rules::RuleSpec>& all, double fraction, Rng& rng);

// For each fraction, repeats seeded rule subsets are drawn and Majority and
// ASTRA are run on each. `jobs` bounds worker threads over the
// (fraction, repeat) grid.
SweepResult sparsity_sweep(const corpus::DatasetBundle& bundle,
                           const corpus::LabelSpace& labels,
                           const std::vector<rules::RuleSpec>& rule_specs,
                           const std::vector<double>& fractions, int repeats,
                           const selftrain::TrainConfig& cfg, int jobs = 1);

std::string sweep_csv(const SweepResult& result);

}  // namespace astra::eval
