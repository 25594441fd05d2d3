#pragma once

#include <cstdint>
#include <vector>

#include "astra/corpus.hpp"
#include "astra/rules.hpp"

namespace astra::synth {

// Synthetic weak-supervision benchmark. Instances are short token strings
// with class-indicative signal tokens mixed into shared noise; each keyword
// rule is planted into instances at rates chosen so its coverage and its
// precision over fired instances hit the configured targets.
struct SynthSpec {
  int k = 4;
  int n_rules = 20;
  size_t n_labeled = 100;
  size_t n_unlabeled = 5000;
  size_t n_validation = 250;
  size_t n_test = 1000;
  double rule_coverage = 0.15;   // per-rule firing probability
  double acc_lo = 0.6;           // per-rule precision range
  double acc_hi = 0.9;
  int tokens_per_instance = 12;
  double signal_prob = 0.3;      // chance a token slot is class-indicative
  int signal_vocab_per_class = 60;
  int noise_vocab = 600;
  uint64_t seed = 0;
};

struct SynthData {
  corpus::LabelSpace labels;
  corpus::DatasetBundle bundle;
  std::vector<rules::RuleSpec> rules;
  std::vector<double> rule_accuracy;  // sampled per-rule precision targets
};

SynthData generate(const SynthSpec& spec);

}  // namespace astra::synth
