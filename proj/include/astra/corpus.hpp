#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "astra/common.hpp"

namespace astra::corpus {

struct LabelSpace {
  std::vector<std::string> class_names;

  int k() const { return static_cast<int>(class_names.size()); }
  int index_of(const std::string& name) const;  // -1 when unknown
  void validate() const;                        // >=2 unique names

  static LabelSpace from_json_file(const std::filesystem::path& path);
};

struct Instance {
  std::string id;
  std::string text;
  std::optional<int> gold_label;
  std::optional<FeatureVec> features;  // passthrough featurizer input
};

// Gold labels stripped off D_U live here; only evaluation reads it, the
// training paths receive label-free instances.
class OracleStore {
 public:
  void put(const std::string& id, int label) { labels_[id] = label; }
  std::optional<int> lookup(const std::string& id) const {
    auto it = labels_.find(id);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }
  size_t size() const { return labels_.size(); }

 private:
  std::unordered_map<std::string, int> labels_;
};

struct DatasetBundle {
  std::vector<Instance> labeled;     // D_L, gold present
  std::vector<Instance> unlabeled;   // D_U, gold stripped
  std::vector<Instance> validation;  // gold present
  std::vector<Instance> test;        // gold present
  OracleStore unlabeled_oracle;
  std::string split_mode = "fixed";  // "pool" when produced by make_splits

  void check_invariants() const;  // disjoint ids, labeled non-empty
};

struct DatasetSummary {
  size_t n_labeled = 0;
  size_t n_unlabeled = 0;
  size_t n_validation = 0;
  size_t n_test = 0;
  int k = 0;
};

// One JSON object per line: {"id": str, "text": str, "label": str|int?}.
// Labels given as names are resolved through the label space; integers are
// range-checked. Errors carry the 1-based line number.
std::vector<Instance> load_jsonl(const std::filesystem::path& path,
                                 const LabelSpace& labels);

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<Instance>& instances,
                 const LabelSpace& labels);

// Seeded split of a gold-labeled pool into D_L / validation / D_U. The D_U
// remainder keeps its gold labels only in the sealed oracle store. Instances
// without gold labels go straight to D_U. Partition order is shuffled by the
// seed. The test partition is supplied separately by the caller.
DatasetBundle make_splits(const std::vector<Instance>& pool, uint64_t seed,
                          size_t n_labeled, size_t n_validation);

DatasetSummary dataset_summary(const DatasetBundle& bundle,
                               const LabelSpace& labels);

}  // namespace astra::corpus
