#include "astra/synth.hpp"

#include <string>

namespace astra::synth {

namespace {

corpus::Instance make_instance(const SynthSpec& spec, const std::string& id,
                               int gold, std::span<const double> fire_match,
                               std::span<const double> fire_other, Rng& rng,
                               bool keep_gold) {
  corpus::Instance inst;
  inst.id = id;
  std::string text;
  for (int t = 0; t < spec.tokens_per_instance; ++t) {
    if (!text.empty()) text += ' ';
    if (rng.uniform() < spec.signal_prob) {
      text += "sig" + std::to_string(rng.below(
                  static_cast<uint64_t>(spec.signal_vocab_per_class))) +
              "c" + std::to_string(gold);
    } else {
      text += "n" + std::to_string(rng.below(static_cast<uint64_t>(spec.noise_vocab)));
    }
  }
  // plant rule keywords; rule j targets class j % k
  for (int j = 0; j < spec.n_rules; ++j) {
    const double p = (j % spec.k == gold) ? fire_match[static_cast<size_t>(j)]
                                          : fire_other[static_cast<size_t>(j)];
    if (rng.uniform() < p) text += " kw" + std::to_string(j);
  }
  inst.text = text;
  if (keep_gold) inst.gold_label = gold;
  return inst;
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  if (spec.k < 2 || spec.n_rules < 1) throw_usage("synth: k >= 2 and rules >= 1");
  SynthData data;
  for (int c = 0; c < spec.k; ++c)
    data.labels.class_names.push_back("C" + std::to_string(c));

  Rng rule_rng(mix_seed(spec.seed, 0x5E4A));
  std::vector<double> fire_match(static_cast<size_t>(spec.n_rules));
  std::vector<double> fire_other(static_cast<size_t>(spec.n_rules));
  const double kk = static_cast<double>(spec.k);
  for (int j = 0; j < spec.n_rules; ++j) {
    const double acc = rule_rng.uniform(spec.acc_lo, spec.acc_hi);
    data.rule_accuracy.push_back(acc);
    // coverage * P(class | fired) recovered through Bayes with uniform priors
    fire_match[static_cast<size_t>(j)] = spec.rule_coverage * acc * kk;
    fire_other[static_cast<size_t>(j)] =
        spec.rule_coverage * (1.0 - acc) * kk / (kk - 1.0);
    if (fire_match[static_cast<size_t>(j)] > 1.0)
      throw_usage("synth: rule coverage/accuracy targets are infeasible");
    rules::RuleSpec rule;
    rule.name = "kw" + std::to_string(j);
    rule.kind = rules::RuleSpec::Kind::keyword;
    rule.keywords = {"kw" + std::to_string(j)};
    rule.label = j % spec.k;
    data.rules.push_back(std::move(rule));
  }

  auto fill = [&](std::vector<corpus::Instance>& part, const char* tag,
                  size_t n, uint64_t salt, bool keep_gold) {
    Rng rng(mix_seed(spec.seed, salt));
    for (size_t i = 0; i < n; ++i) {
      const int gold = static_cast<int>(rng.below(static_cast<uint64_t>(spec.k)));
      auto inst = make_instance(spec, std::string(tag) + std::to_string(i), gold,
                                fire_match, fire_other, rng, keep_gold);
      if (!keep_gold) data.bundle.unlabeled_oracle.put(inst.id, gold);
      part.push_back(std::move(inst));
    }
  };

  fill(data.bundle.labeled, "syn-l", spec.n_labeled, 0x11, true);
  fill(data.bundle.unlabeled, "syn-u", spec.n_unlabeled, 0x22, false);
  fill(data.bundle.validation, "syn-v", spec.n_validation, 0x33, true);
  fill(data.bundle.test, "syn-t", spec.n_test, 0x44, true);
  data.bundle.split_mode = "fixed";
  return data;
}

}  // namespace astra::synth
