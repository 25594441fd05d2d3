#include "astra/rules.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

namespace astra::rules {

using nlohmann::json;

std::vector<double> WeakLabel::one_hot(int k) const {
  std::vector<double> v(static_cast<size_t>(k), 0.0);
  if (!abstains()) v[static_cast<size_t>(label)] = 1.0;
  return v;
}

std::string lowercase(const std::string& text) {
  std::string out = text;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

namespace {
inline bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c == '_';
}
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    unsigned char lc = static_cast<unsigned char>(std::tolower(c));
    if (is_word_char(lc)) {
      cur.push_back(static_cast<char>(lc));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

CompiledRule::CompiledRule(RuleSpec spec, const corpus::LabelSpace& labels)
    : spec_(std::move(spec)) {
  if (spec_.label < 0 || spec_.label >= labels.k())
    throw_data("rule '" + spec_.name + "': label index " +
               std::to_string(spec_.label) + " outside label space");
  if (spec_.kind == RuleSpec::Kind::regex) {
    try {
      re_ = std::make_shared<const std::regex>(spec_.pattern,
                                               std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      std::string excerpt = spec_.pattern.substr(0, 48);
      throw_data("rule '" + spec_.name + "': regex does not compile near '" +
                 excerpt + "': " + e.what());
    }
  } else {
    if (spec_.keywords.empty())
      throw_data("rule '" + spec_.name + "': keyword list is empty");
    for (const auto& kw : spec_.keywords) keyword_set_.insert(lowercase(kw));
  }
}

WeakLabel CompiledRule::apply(const corpus::Instance& inst) const {
  if (spec_.kind == RuleSpec::Kind::regex) {
    if (std::regex_search(lowercase(inst.text), *re_)) return {spec_.label};
    return {kAbstain};
  }
  for (const auto& tok : tokenize(inst.text)) {
    if (keyword_set_.count(tok)) return {spec_.label};
  }
  return {kAbstain};
}

CompiledRule compile_rule(const RuleSpec& spec, const corpus::LabelSpace& labels) {
  return CompiledRule(spec, labels);
}

std::vector<RuleSpec> load_rules_json(const std::filesystem::path& path,
                                      const corpus::LabelSpace& labels) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open rules file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_data("rules file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw_data("rules file must be a JSON array");
  std::vector<RuleSpec> specs;
  size_t idx = 0;
  for (const auto& obj : doc) {
    ++idx;
    if (!obj.is_object())
      throw_data("rules file entry " + std::to_string(idx) + ": expected object");
    RuleSpec spec;
    spec.name = obj.value("name", "rule" + std::to_string(idx));
    const std::string kind = obj.value("kind", "");
    if (kind == "regex") {
      spec.kind = RuleSpec::Kind::regex;
      if (!obj.contains("pattern") || !obj["pattern"].is_string())
        throw_data("rule '" + spec.name + "': regex kind needs a string pattern");
      spec.pattern = obj["pattern"].get<std::string>();
    } else if (kind == "keyword") {
      spec.kind = RuleSpec::Kind::keyword;
      if (obj.contains("pattern") && obj["pattern"].is_array()) {
        for (const auto& kw : obj["pattern"])
          spec.keywords.push_back(kw.get<std::string>());
      } else if (obj.contains("pattern") && obj["pattern"].is_string()) {
        spec.keywords.push_back(obj["pattern"].get<std::string>());
      } else {
        throw_data("rule '" + spec.name +
                   "': keyword kind needs a string or array pattern");
      }
    } else {
      throw_data("rule '" + spec.name + "': unsupported kind '" + kind +
                 "' (only regex and keyword rules are supported)");
    }
    if (!obj.contains("label"))
      throw_data("rule '" + spec.name + "': missing label");
    if (obj["label"].is_string()) {
      int li = labels.index_of(obj["label"].get<std::string>());
      if (li < 0)
        throw_data("rule '" + spec.name + "': unknown class name '" +
                   obj["label"].get<std::string>() + "'");
      spec.label = li;
    } else if (obj["label"].is_number_integer()) {
      spec.label = obj["label"].get<int>();
    } else {
      throw_data("rule '" + spec.name + "': label must be a name or index");
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

FiringMatrix build_firing_matrix(std::span<const CompiledRule> rules,
                                 std::span<const corpus::Instance> instances,
                                 int k) {
  FiringMatrix m;
  m.n_instances = instances.size();
  m.n_rules = rules.size();
  m.k = k;
  m.rows.resize(instances.size());
  for (size_t i = 0; i < instances.size(); ++i) {
    for (size_t j = 0; j < rules.size(); ++j) {
      WeakLabel wl = rules[j].apply(instances[i]);
      if (!wl.abstains())
        m.rows[i].push_back({static_cast<int32_t>(j), wl.label});
    }
  }
  return m;
}

namespace {

// Vote tally for row i; returns tied argmax classes (empty for empty rows).
std::vector<int> tied_argmax_classes(const FiringMatrix& m, size_t i) {
  std::vector<int> counts(static_cast<size_t>(m.k), 0);
  for (const auto& e : m.rows[i]) counts[static_cast<size_t>(e.label)]++;
  int best = 0;
  for (int c : counts) best = std::max(best, c);
  std::vector<int> tied;
  if (best == 0) return tied;
  for (int c = 0; c < m.k; ++c) {
    if (counts[static_cast<size_t>(c)] == best) tied.push_back(c);
  }
  return tied;
}

}  // namespace

int majority_vote(const FiringMatrix& matrix, size_t i, Rng& rng) {
  std::vector<int> tied = tied_argmax_classes(matrix, i);
  if (tied.empty()) return static_cast<int>(rng.below(static_cast<uint64_t>(matrix.k)));
  if (tied.size() == 1) return tied[0];
  return tied[rng.below(tied.size())];
}

double majority_vote_correct_prob(const FiringMatrix& matrix, size_t i, int gold) {
  std::vector<int> tied = tied_argmax_classes(matrix, i);
  if (tied.empty()) return 1.0 / matrix.k;
  if (std::find(tied.begin(), tied.end(), gold) == tied.end()) return 0.0;
  return 1.0 / static_cast<double>(tied.size());
}

CoverageStats coverage_stats(const FiringMatrix& matrix,
                             std::span<const int> oracle_labels) {
  CoverageStats s;
  s.n = matrix.n_instances;
  for (size_t i = 0; i < matrix.n_instances; ++i) {
    size_t fired = matrix.fired_count(i);
    if (fired >= 1) s.covered++;
    if (fired >= 2) s.overlapped++;
  }
  if (s.n > 0) {
    s.coverage = static_cast<double>(s.covered) / static_cast<double>(s.n);
    s.overlap = static_cast<double>(s.overlapped) / static_cast<double>(s.n);
  }
  if (!oracle_labels.empty()) {
    if (oracle_labels.size() != matrix.n_instances)
      throw_data("coverage_stats: oracle label count does not match matrix");
    double acc_sum = 0.0;
    double prec_sum = 0.0;
    size_t n_scored = 0;
    size_t n_covered_scored = 0;
    for (size_t i = 0; i < matrix.n_instances; ++i) {
      if (oracle_labels[i] < 0) continue;
      double p = majority_vote_correct_prob(matrix, i, oracle_labels[i]);
      acc_sum += p;
      ++n_scored;
      if (matrix.fired_count(i) >= 1) {
        prec_sum += p;
        ++n_covered_scored;
      }
    }
    if (n_scored > 0) s.majority_accuracy = acc_sum / static_cast<double>(n_scored);
    if (n_covered_scored > 0)
      s.majority_precision = prec_sum / static_cast<double>(n_covered_scored);
  }
  return s;
}

}  // namespace astra::rules
