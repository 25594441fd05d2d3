#include "astra/config.hpp"

#include <fstream>

#include "json.hpp"

namespace astra::config {

using nlohmann::json;
using selftrain::TrainConfig;

namespace {

std::string feat_mode_name(featurizer::FeaturizerSpec::Mode m) {
  return m == featurizer::FeaturizerSpec::Mode::hashed_bow ? "hashed_bow"
                                                           : "passthrough";
}

std::string weighting_name(featurizer::FeaturizerSpec::Weighting w) {
  return w == featurizer::FeaturizerSpec::Weighting::binary ? "binary" : "tf";
}

template <typename T>
T expect(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw_usage("config: bad value type for key '" + key + "'");
  }
}

void apply_key(TrainConfig& c, const std::string& key, const json& v) {
  using featurizer::FeaturizerSpec;
  if (key.rfind("cli.", 0) == 0) return;  // snapshot provenance, not a knob
  if (key == "seed") c.seed = expect<uint64_t>(v, key);
  else if (key == "featurizer.mode") {
    auto s = expect<std::string>(v, key);
    if (s == "hashed_bow") c.feat.mode = FeaturizerSpec::Mode::hashed_bow;
    else if (s == "passthrough") c.feat.mode = FeaturizerSpec::Mode::passthrough;
    else throw_usage("config: featurizer.mode must be hashed_bow or passthrough");
  }
  else if (key == "featurizer.dim") c.feat.dim = expect<int>(v, key);
  else if (key == "featurizer.weighting") {
    auto s = expect<std::string>(v, key);
    if (s == "binary") c.feat.weighting = FeaturizerSpec::Weighting::binary;
    else if (s == "tf") c.feat.weighting = FeaturizerSpec::Weighting::tf;
    else throw_usage("config: featurizer.weighting must be binary or tf");
  }
  else if (key == "student.hidden1") c.student_h1 = expect<int>(v, key);
  else if (key == "student.hidden2") c.student_h2 = expect<int>(v, key);
  else if (key == "student.activation")
    c.activation = student::activation_from_string(expect<std::string>(v, key));
  else if (key == "student.lr") c.student_lr = expect<double>(v, key);
  else if (key == "student.finetune_lr") c.student_finetune_lr = expect<double>(v, key);
  else if (key == "student.momentum") c.momentum = expect<double>(v, key);
  else if (key == "student.pseudo_epochs") c.pseudo_epochs = expect<int>(v, key);
  else if (key == "student.finetune_epochs") c.finetune_epochs = expect<int>(v, key);
  else if (key == "student.patience") c.student_patience = expect<int>(v, key);
  else if (key == "student.batch") c.batch = expect<int>(v, key);
  else if (key == "student.unsup_batch") c.unsup_batch = expect<int>(v, key);
  else if (key == "teacher.dim") c.teacher_d = expect<int>(v, key);
  else if (key == "teacher.lr") c.teacher_lr = expect<double>(v, key);
  else if (key == "teacher.entropy_epochs") c.teacher_entropy_epochs = expect<int>(v, key);
  else if (key == "teacher.ce_epochs") c.teacher_ce_epochs = expect<int>(v, key);
  else if (key == "teacher.patience") c.teacher_patience = expect<int>(v, key);
  else if (key == "teacher.joint") c.teacher_joint = expect<bool>(v, key);
  else if (key == "teacher.cold_start") c.teacher_cold_start = expect<bool>(v, key);
  else if (key == "teacher.entropy_weight") c.entropy_weight = expect<double>(v, key);
  else if (key == "lambda") c.lambda = expect<double>(v, key);
  else if (key == "pseudo_labels") {
    auto s = expect<std::string>(v, key);
    if (s == "soft") c.pseudo_kind = student::PseudoKind::soft;
    else if (s == "hard") c.pseudo_kind = student::PseudoKind::hard;
    else throw_usage("config: pseudo_labels must be soft or hard");
  }
  else if (key == "selftrain.max_iterations") c.max_iterations = expect<int>(v, key);
  else if (key == "selftrain.patience") c.iteration_patience = expect<int>(v, key);
  else if (key == "selftrain.validation_model")
    c.validation_model = expect<std::string>(v, key);
  else if (key == "selftrain.student_warm_start")
    c.student_warm_start = expect<bool>(v, key);
  else if (key == "ablation.no_entropy_reg") c.no_entropy_reg = expect<bool>(v, key);
  else if (key == "ablation.no_student_finetune")
    c.no_student_finetune = expect<bool>(v, key);
  else if (key == "ablation.no_student_in_ran")
    c.no_student_in_ran = expect<bool>(v, key);
  else if (key == "ablation.hard_pseudo") {
    if (expect<bool>(v, key)) c.pseudo_kind = student::PseudoKind::hard;
  }
  else if (key == "metric") c.metric = expect<std::string>(v, key);
  else if (key == "metric.positive_class") c.positive_class = expect<int>(v, key);
  else if (key == "split.n_labeled") c.n_labeled = expect<size_t>(v, key);
  else if (key == "split.n_validation") c.n_validation = expect<size_t>(v, key);
  else if (key == "kernels.backend") c.kernel_backend = expect<std::string>(v, key);
  else throw_usage("config: unknown key '" + key + "'");
}

}  // namespace

Loaded load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open config file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_data("config file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw_usage("config file must be a JSON object");
  Loaded loaded;
  for (const auto& [key, value] : doc.items()) {
    apply_key(loaded.train, key, value);
    loaded.keys.insert(key);
  }
  return loaded;
}

void apply_override(Loaded& loaded, const std::string& key,
                    const std::string& value) {
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;  // plain string
  }
  apply_key(loaded.train, key, v);
  loaded.keys.insert(key);
}

std::string to_json_string(const TrainConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["featurizer.mode"] = feat_mode_name(c.feat.mode);
  doc["featurizer.dim"] = c.feat.dim;
  doc["featurizer.weighting"] = weighting_name(c.feat.weighting);
  doc["student.hidden1"] = c.student_h1;
  doc["student.hidden2"] = c.student_h2;
  doc["student.activation"] = student::to_string(c.activation);
  doc["student.lr"] = c.student_lr;
  doc["student.finetune_lr"] = c.student_finetune_lr;
  doc["student.momentum"] = c.momentum;
  doc["student.pseudo_epochs"] = c.pseudo_epochs;
  doc["student.finetune_epochs"] = c.finetune_epochs;
  doc["student.patience"] = c.student_patience;
  doc["student.batch"] = c.batch;
  doc["student.unsup_batch"] = c.unsup_batch;
  doc["teacher.dim"] = c.teacher_d;
  doc["teacher.lr"] = c.teacher_lr;
  doc["teacher.entropy_epochs"] = c.teacher_entropy_epochs;
  doc["teacher.ce_epochs"] = c.teacher_ce_epochs;
  doc["teacher.patience"] = c.teacher_patience;
  doc["teacher.joint"] = c.teacher_joint;
  doc["teacher.cold_start"] = c.teacher_cold_start;
  doc["teacher.entropy_weight"] = c.entropy_weight;
  doc["lambda"] = c.lambda;
  doc["pseudo_labels"] = c.pseudo_kind == student::PseudoKind::soft ? "soft" : "hard";
  doc["selftrain.max_iterations"] = c.max_iterations;
  doc["selftrain.patience"] = c.iteration_patience;
  doc["selftrain.validation_model"] = c.validation_model;
  doc["selftrain.student_warm_start"] = c.student_warm_start;
  doc["ablation.no_entropy_reg"] = c.no_entropy_reg;
  doc["ablation.no_student_finetune"] = c.no_student_finetune;
  doc["ablation.no_student_in_ran"] = c.no_student_in_ran;
  doc["metric"] = c.metric;
  doc["metric.positive_class"] = c.positive_class;
  doc["split.n_labeled"] = c.n_labeled;
  doc["split.n_validation"] = c.n_validation;
  doc["kernels.backend"] = c.kernel_backend;
  return doc.dump(2);
}

}  // namespace astra::config
