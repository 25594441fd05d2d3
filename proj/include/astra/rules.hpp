#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "astra/common.hpp"
#include "astra/corpus.hpp"

namespace astra::rules {

inline constexpr int kAbstain = -1;

struct RuleSpec {
  enum class Kind { regex, keyword };
  std::string name;
  Kind kind = Kind::regex;
  std::string pattern;                // regex source
  std::vector<std::string> keywords;  // keyword kind
  int label = 0;
};

// One-hot weak label or abstain, stored as a class index.
struct WeakLabel {
  int label = kAbstain;
  bool abstains() const { return label == kAbstain; }
  std::vector<double> one_hot(int k) const;
};

std::string lowercase(const std::string& text);
// Split at non-word characters ([a-z0-9_] after lowercasing).
std::vector<std::string> tokenize(const std::string& text);

// A compiled labeling function: pure Instance -> WeakLabel. Regex rules run
// regex_search over the lowercased text (the patterns carry their own
// boundary handling); keyword rules fire when any keyword equals a token.
class CompiledRule {
 public:
  CompiledRule(RuleSpec spec, const corpus::LabelSpace& labels);
  WeakLabel apply(const corpus::Instance& inst) const;
  const RuleSpec& spec() const { return spec_; }

 private:
  RuleSpec spec_;
  std::shared_ptr<const std::regex> re_;  // shared: compiled rules are copyable
  std::unordered_set<std::string> keyword_set_;
};

CompiledRule compile_rule(const RuleSpec& spec, const corpus::LabelSpace& labels);

// Rules file: JSON array of
//   { "name": str, "kind": "regex"|"keyword", "pattern": str|[str], "label": str|int }
// Unsupported kinds are rejected with a clear message.
std::vector<RuleSpec> load_rules_json(const std::filesystem::path& path,
                                      const corpus::LabelSpace& labels);

struct FiringMatrix {
  struct Entry {
    int32_t rule;
    int32_t label;
  };
  size_t n_instances = 0;
  size_t n_rules = 0;
  int k = 0;
  std::vector<std::vector<Entry>> rows;  // row i = R_i, ordered by rule index

  size_t fired_count(size_t i) const { return rows[i].size(); }
};

FiringMatrix build_firing_matrix(std::span<const CompiledRule> rules,
                                 std::span<const corpus::Instance> instances,
                                 int k);

// Argmax of summed one-hot firings; ties broken uniformly among the tied
// classes, empty rows resolved uniformly over all classes. Always returns a
// valid class index.
int majority_vote(const FiringMatrix& matrix, size_t i, Rng& rng);

// Deterministic expected-value counterpart used by coverage_stats: ties and
// uncovered rows contribute fractional credit instead of a random draw.
double majority_vote_correct_prob(const FiringMatrix& matrix, size_t i, int gold);

struct CoverageStats {
  size_t n = 0;
  size_t covered = 0;     // |R_i| >= 1
  size_t overlapped = 0;  // |R_i| >= 2
  double coverage = 0.0;
  double overlap = 0.0;
  // Present when oracle labels were supplied. Accuracy counts uncovered rows
  // at chance (1/K); precision is over covered rows only.
  std::optional<double> majority_accuracy;
  std::optional<double> majority_precision;
};

// oracle_labels: per-instance gold (-1 = unknown), or empty to skip the
// accuracy/precision fields.
CoverageStats coverage_stats(const FiringMatrix& matrix,
                             std::span<const int> oracle_labels = {});

}  // namespace astra::rules
