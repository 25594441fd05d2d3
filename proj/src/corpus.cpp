#include "astra/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include "json.hpp"

namespace astra::corpus {

using nlohmann::json;

int LabelSpace::index_of(const std::string& name) const {
  for (size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void LabelSpace::validate() const {
  if (class_names.size() < 2) throw_data("label space needs at least 2 classes");
  std::unordered_set<std::string> seen;
  for (const auto& name : class_names) {
    if (!seen.insert(name).second)
      throw_data("duplicate class name '" + name + "' in label space");
  }
}

LabelSpace LabelSpace::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open labels file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_data("labels file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw_data("labels file must be a JSON array of names");
  LabelSpace ls;
  for (const auto& item : doc) {
    if (!item.is_string())
      throw_data("labels file entries must be strings: " + path.string());
    ls.class_names.push_back(item.get<std::string>());
  }
  ls.validate();
  return ls;
}

void DatasetBundle::check_invariants() const {
  if (labeled.empty()) throw_data("dataset bundle: labeled partition is empty");
  std::unordered_set<std::string> seen;
  auto visit = [&](const std::vector<Instance>& part, const char* name) {
    for (const auto& inst : part) {
      if (!seen.insert(inst.id).second)
        throw_data(std::string("dataset bundle: id '") + inst.id +
                   "' appears in two partitions (last: " + name + ")");
    }
  };
  visit(labeled, "labeled");
  visit(unlabeled, "unlabeled");
  visit(validation, "validation");
  visit(test, "test");
  for (const auto& inst : labeled) {
    if (!inst.gold_label)
      throw_data("dataset bundle: labeled instance '" + inst.id + "' has no gold label");
  }
}

namespace {

int resolve_label(const json& value, const LabelSpace& labels, size_t line_no) {
  if (value.is_string()) {
    const std::string name = value.get<std::string>();
    int idx = labels.index_of(name);
    if (idx < 0)
      throw_data("line " + std::to_string(line_no) + ": unknown class name '" +
                 name + "'");
    return idx;
  }
  if (value.is_number_integer()) {
    auto idx = value.get<int64_t>();
    if (idx < 0 || idx >= labels.k())
      throw_data("line " + std::to_string(line_no) + ": label index " +
                 std::to_string(idx) + " outside 0.." +
                 std::to_string(labels.k() - 1));
    return static_cast<int>(idx);
  }
  throw_data("line " + std::to_string(line_no) +
             ": label must be a class name or integer index");
}

}  // namespace

std::vector<Instance> load_jsonl(const std::filesystem::path& path,
                                 const LabelSpace& labels) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open dataset file: " + path.string());
  std::vector<Instance> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw_data(path.string() + " line " + std::to_string(line_no) +
                 ": parse error: " + e.what());
    }
    if (!obj.is_object())
      throw_data(path.string() + " line " + std::to_string(line_no) +
                 ": expected a JSON object");
    Instance inst;
    if (!obj.contains("id") || !obj["id"].is_string())
      throw_data(path.string() + " line " + std::to_string(line_no) +
                 ": missing string field 'id'");
    inst.id = obj["id"].get<std::string>();
    if (!obj.contains("text") || !obj["text"].is_string())
      throw_data(path.string() + " line " + std::to_string(line_no) +
                 ": missing string field 'text'");
    inst.text = obj["text"].get<std::string>();
    if (obj.contains("label") && !obj["label"].is_null())
      inst.gold_label = resolve_label(obj["label"], labels, line_no);
    out.push_back(std::move(inst));
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<Instance>& instances,
                 const LabelSpace& labels) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write dataset file: " + path.string());
  for (const auto& inst : instances) {
    json obj;
    obj["id"] = inst.id;
    obj["text"] = inst.text;
    if (inst.gold_label)
      obj["label"] = labels.class_names[static_cast<size_t>(*inst.gold_label)];
    out << obj.dump() << '\n';
  }
}

DatasetBundle make_splits(const std::vector<Instance>& pool, uint64_t seed,
                          size_t n_labeled, size_t n_validation) {
  std::vector<Instance> gold;
  std::vector<Instance> nogold;
  for (const auto& inst : pool) {
    (inst.gold_label ? gold : nogold).push_back(inst);
  }
  if (gold.size() < n_labeled + n_validation)
    throw_data("make_splits: pool has " + std::to_string(gold.size()) +
               " labeled instances, need " +
               std::to_string(n_labeled + n_validation));

  Rng draw(mix_seed(seed, 0xA51));
  draw.shuffle(gold);

  DatasetBundle bundle;
  bundle.split_mode = "pool";
  bundle.labeled.assign(gold.begin(), gold.begin() + static_cast<long>(n_labeled));
  bundle.validation.assign(gold.begin() + static_cast<long>(n_labeled),
                           gold.begin() + static_cast<long>(n_labeled + n_validation));
  for (size_t i = n_labeled + n_validation; i < gold.size(); ++i)
    bundle.unlabeled.push_back(std::move(gold[i]));
  for (auto& inst : nogold) bundle.unlabeled.push_back(std::move(inst));

  Rng order(mix_seed(seed, 0xA52));
  order.shuffle(bundle.unlabeled);
  for (auto& inst : bundle.unlabeled) {
    if (inst.gold_label) {
      bundle.unlabeled_oracle.put(inst.id, *inst.gold_label);
      inst.gold_label.reset();
    }
  }
  return bundle;
}

DatasetSummary dataset_summary(const DatasetBundle& bundle,
                               const LabelSpace& labels) {
  DatasetSummary s;
  s.n_labeled = bundle.labeled.size();
  s.n_unlabeled = bundle.unlabeled.size();
  s.n_validation = bundle.validation.size();
  s.n_test = bundle.test.size();
  s.k = labels.k();
  return s;
}

}  // namespace astra::corpus
