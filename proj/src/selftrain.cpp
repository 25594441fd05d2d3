#include "astra/selftrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "astra/eval.hpp"
#include "astra/kernels.hpp"

namespace astra::selftrain {

namespace {

using corpus::DatasetBundle;
using corpus::LabelSpace;
using student::StudentModel;
using teacher::RanInstance;
using teacher::RanTeacher;

// Seed stream tags; every consumer of randomness hangs off cfg.seed.
constexpr uint64_t kSeedStudentInit = 0x5701;
constexpr uint64_t kSeedInitialTrain = 0x5702;
constexpr uint64_t kSeedPseudoTrain = 0x5703;
constexpr uint64_t kSeedFineTune = 0x5704;
constexpr uint64_t kSeedTeacherInit = 0x5705;
constexpr uint64_t kSeedTeacherTrain = 0x5706;
constexpr uint64_t kSeedMajorityVal = 0x5707;
constexpr uint64_t kSeedMajorityTest = 0x5708;

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

struct Prepared {
  std::vector<FeatureVec> x_l, x_u, x_val, x_test;
  std::vector<int> y_l, y_val, y_test;
  rules::FiringMatrix m_l, m_u, m_val, m_test;
};

std::vector<int> gold_of(const std::vector<corpus::Instance>& part,
                         const char* name) {
  std::vector<int> out;
  out.reserve(part.size());
  for (const auto& inst : part) {
    if (!inst.gold_label)
      throw_data(std::string("instance '") + inst.id + "' in " + name +
                 " partition has no gold label");
    out.push_back(*inst.gold_label);
  }
  return out;
}

std::vector<FeatureVec> featurize_all(const featurizer::FeaturizerSpec& spec,
                                      const std::vector<corpus::Instance>& part) {
  std::vector<FeatureVec> out;
  out.reserve(part.size());
  for (const auto& inst : part) out.push_back(featurizer::featurize(spec, inst));
  return out;
}

Prepared prepare(const DatasetBundle& bundle, const LabelSpace& labels,
                 std::span<const rules::CompiledRule> rule_set,
                 const TrainConfig& cfg, bool with_rules) {
  Prepared p;
  p.x_l = featurize_all(cfg.feat, bundle.labeled);
  p.x_u = featurize_all(cfg.feat, bundle.unlabeled);
  p.x_val = featurize_all(cfg.feat, bundle.validation);
  p.x_test = featurize_all(cfg.feat, bundle.test);
  p.y_l = gold_of(bundle.labeled, "labeled");
  p.y_val = gold_of(bundle.validation, "validation");
  p.y_test = gold_of(bundle.test, "test");
  if (with_rules) {
    p.m_l = rules::build_firing_matrix(rule_set, bundle.labeled, labels.k());
    p.m_u = rules::build_firing_matrix(rule_set, bundle.unlabeled, labels.k());
    p.m_val = rules::build_firing_matrix(rule_set, bundle.validation, labels.k());
    p.m_test = rules::build_firing_matrix(rule_set, bundle.test, labels.k());
  }
  return p;
}

struct Snapshot {
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> p;
};

Snapshot snap(const StudentModel& m, std::span<const FeatureVec> xs) {
  Snapshot s;
  s.h.reserve(xs.size());
  s.p.reserve(xs.size());
  for (const auto& x : xs) {
    auto fr = student::forward(m, x);
    s.h.push_back(std::move(fr.hidden));
    s.p.push_back(std::move(fr.posterior));
  }
  return s;
}

std::vector<RanInstance> make_instances(const Snapshot& snap,
                                        const rules::FiringMatrix& matrix,
                                        const std::vector<int>* golds) {
  std::vector<RanInstance> out;
  out.reserve(snap.h.size());
  for (size_t i = 0; i < snap.h.size(); ++i) {
    RanInstance inst;
    inst.hidden = snap.h[i];
    inst.student_posterior = snap.p[i];
    if (i < matrix.rows.size()) inst.fired = matrix.rows[i];
    inst.gold = golds ? (*golds)[i] : -1;
    out.push_back(inst);
  }
  return out;
}

std::vector<int> student_preds(const StudentModel& m,
                               std::span<const FeatureVec> xs) {
  std::vector<int> preds;
  preds.reserve(xs.size());
  for (const auto& x : xs) preds.push_back(student::predict(m, x));
  return preds;
}

std::vector<int> teacher_preds(const RanTeacher& t,
                               std::span<const RanInstance> insts,
                               bool include_student) {
  std::vector<int> preds;
  preds.reserve(insts.size());
  for (const auto& inst : insts) {
    auto q = teacher::predict(t, inst, include_student);
    preds.push_back(static_cast<int>(std::max_element(q.begin(), q.end()) -
                                     q.begin()));
  }
  return preds;
}

double last_or_nan(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : v.back();
}

}  // namespace

void TrainConfig::validate() const {
  feat.validate();
  if (student_h1 < 1 || student_h2 < 1 || teacher_d < 1)
    throw_usage("config: model dims must be >= 1");
  if (student_lr <= 0 || student_finetune_lr < 0 || teacher_lr <= 0)
    throw_usage("config: learning rates must be positive");
  if (momentum < 0 || momentum >= 1) throw_usage("config: momentum in [0,1)");
  if (pseudo_epochs < 0 || finetune_epochs < 0 || teacher_entropy_epochs < 0 ||
      teacher_ce_epochs < 0 || max_iterations < 0)
    throw_usage("config: epoch/iteration counts must be >= 0");
  if (batch < 1 || unsup_batch < 1) throw_usage("config: batch sizes must be >= 1");
  if (lambda < 0) throw_usage("config: lambda must be >= 0");
  if (validation_model != "teacher" && validation_model != "student")
    throw_usage("config: validation model must be teacher or student");
  if (metric != "accuracy" && metric != "macro_f1" && metric != "binary_f1")
    throw_usage("config: metric must be accuracy, macro_f1, or binary_f1");
  kernels::backend_from_string(kernel_backend);
}

double metric_value(const TrainConfig& cfg, std::span<const int> preds,
                    std::span<const int> golds, int k) {
  if (cfg.metric == "accuracy") return eval::accuracy(preds, golds);
  if (cfg.metric == "macro_f1") return eval::macro_f1(preds, golds, k);
  return eval::binary_f1(preds, golds, cfg.positive_class);
}

double overlap_with_student(const rules::FiringMatrix& matrix, bool has_student) {
  if (matrix.n_instances == 0) return 0.0;
  size_t hits = 0;
  const size_t need = has_student ? 1 : 2;
  for (size_t i = 0; i < matrix.n_instances; ++i) {
    if (matrix.fired_count(i) >= need) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(matrix.n_instances);
}

namespace {

// Shared loop body for ASTRA and classic self-training; classic has no
// teacher and pseudo-labels come straight from the student.
AstraResult run_loop(const DatasetBundle& bundle, const LabelSpace& labels,
                     std::span<const rules::CompiledRule> rule_set,
                     const TrainConfig& cfg, const IterationSink& sink,
                     bool with_teacher) {
  cfg.validate();
  bundle.check_invariants();
  if (bundle.validation.empty()) throw_data("run: validation partition is empty");
  if (bundle.test.empty()) throw_data("run: test partition is empty");
  kernels::select_backend(kernels::backend_from_string(cfg.kernel_backend));

  const int k = labels.k();
  Prepared prep = prepare(bundle, labels, rule_set, cfg, with_teacher);
  const bool include_student = !cfg.no_student_in_ran;
  const std::string validation_model = with_teacher ? cfg.validation_model
                                                    : "student";

  RunMetrics rm;
  rm.metric_name = cfg.metric;
  rm.split_mode = bundle.split_mode;
  rm.validation_model = validation_model;
  rm.teacher_schedule = !with_teacher || cfg.max_iterations == 0
                            ? "none"
                            : (cfg.teacher_joint ? "joint" : "two_phase");
  if (with_teacher) {
    auto cs = rules::coverage_stats(prep.m_u);
    rm.coverage = cs.coverage;
    rm.overlap_rules = cs.overlap;
    rm.overlap_with_student = overlap_with_student(prep.m_u, include_student);
  }

  student::LabeledView lv{prep.x_l, prep.y_l};
  StudentModel model = StudentModel::init(cfg.feat.dim, cfg.student_h1,
                                          cfg.student_h2, k, cfg.activation,
                                          mix_seed(cfg.seed, kSeedStudentInit));

  auto student_metrics = [&](IterationRecord& rec) {
    rec.student_val = metric_value(cfg, student_preds(model, prep.x_val),
                                   prep.y_val, k);
    rec.student_test = metric_value(cfg, student_preds(model, prep.x_test),
                                    prep.y_test, k);
  };

  // Step 1: base student on the labeled set alone.
  auto t_start = std::chrono::steady_clock::now();
  student::OptimizerConfig init_opt{cfg.student_lr,
                                    cfg.momentum,
                                    cfg.finetune_epochs,
                                    cfg.student_patience,
                                    cfg.batch,
                                    cfg.unsup_batch,
                                    mix_seed(cfg.seed, kSeedInitialTrain)};
  auto trace0 = student::train_student(model, lv, {}, 0.0, init_opt);

  IterationRecord rec0;
  rec0.iteration = 0;
  rec0.student_loss = last_or_nan(trace0.epoch_losses);
  student_metrics(rec0);
  rec0.seconds = elapsed_s(t_start);
  rm.iters.push_back(rec0);
  if (sink) sink(rec0);

  StudentModel best_student = model;
  std::optional<RanTeacher> teacher_model;
  std::optional<RanTeacher> best_teacher;
  int best_iteration = 0;
  double best_val = validation_model == "student"
                        ? *rec0.student_val
                        : -std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    auto t_iter = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = iter;

    student::PseudoLabelSet pseudo;          // retraining targets
    std::vector<FeatureVec> x_sub;           // gathered when D_RAN is a subset
    std::span<const FeatureVec> pseudo_x;

    if (with_teacher) {
      // train the teacher against the frozen student snapshot
      Snapshot sl = snap(model, prep.x_l);
      Snapshot su = snap(model, prep.x_u);
      Snapshot sval = snap(model, prep.x_val);
      Snapshot stest = snap(model, prep.x_test);
      auto li = make_instances(sl, prep.m_l, &prep.y_l);
      auto ui = make_instances(su, prep.m_u, nullptr);

      if (!teacher_model || cfg.teacher_cold_start) {
        teacher_model = RanTeacher::init(
            static_cast<int>(rule_set.size()), cfg.teacher_d, cfg.student_h2, k,
            mix_seed(cfg.seed, kSeedTeacherInit,
                     cfg.teacher_cold_start ? static_cast<uint64_t>(iter) : 0));
      }
      teacher::RanTrainConfig rcfg;
      rcfg.lr = cfg.teacher_lr;
      rcfg.momentum = cfg.momentum;
      rcfg.entropy_epochs = cfg.teacher_entropy_epochs;
      rcfg.ce_epochs = cfg.teacher_ce_epochs;
      rcfg.patience = cfg.teacher_patience;
      rcfg.batch_labeled = cfg.batch;
      rcfg.batch_unlabeled = cfg.unsup_batch;
      rcfg.entropy_weight = cfg.entropy_weight;
      rcfg.joint = cfg.teacher_joint;
      rcfg.include_student = include_student;
      rcfg.no_entropy = cfg.no_entropy_reg;
      rcfg.seed = mix_seed(cfg.seed, kSeedTeacherTrain, static_cast<uint64_t>(iter));
      auto ttrace = teacher::train_ran(*teacher_model, li, ui, rcfg);
      rec.teacher_loss = !ttrace.ce_losses.empty()
                             ? ttrace.ce_losses.back()
                             : last_or_nan(ttrace.entropy_losses);

      // teacher metrics use the same snapshot it was trained against
      auto vi = make_instances(sval, prep.m_val, nullptr);
      auto ti = make_instances(stest, prep.m_test, nullptr);
      rec.teacher_val = metric_value(
          cfg, teacher_preds(*teacher_model, vi, include_student), prep.y_val, k);
      rec.teacher_test = metric_value(
          cfg, teacher_preds(*teacher_model, ti, include_student), prep.y_test, k);

      // teacher pseudo-labels over D_U
      auto dran = teacher::pseudo_label_dataset(*teacher_model, ui,
                                                include_student, cfg.pseudo_kind);
      if (dran.labels.rows.empty() && cfg.no_student_in_ran && !prep.x_u.empty())
        throw_usage(
            "no_student_in_ran with zero rule coverage leaves D_RAN empty");
      pseudo = std::move(dran.labels);
      if (pseudo.rows.size() == prep.x_u.size()) {
        pseudo_x = prep.x_u;
      } else {
        x_sub.reserve(dran.indices.size());
        for (size_t idx : dran.indices) x_sub.push_back(prep.x_u[idx]);
        pseudo_x = x_sub;
      }
    } else {
      // classic self-training: the student labels D_U itself
      pseudo = student::pseudo_label(model, prep.x_u, cfg.pseudo_kind);
      pseudo_x = prep.x_u;
    }

    // re-train the student on the teacher labels, then fine-tune on D_L
    if (!pseudo.rows.empty()) {
      if (!cfg.student_warm_start) {
        model = StudentModel::init(cfg.feat.dim, cfg.student_h1, cfg.student_h2,
                                   k, cfg.activation,
                                   mix_seed(cfg.seed, kSeedStudentInit,
                                            static_cast<uint64_t>(iter)));
      }
      student::OptimizerConfig popt{cfg.student_lr,
                                    cfg.momentum,
                                    cfg.pseudo_epochs,
                                    cfg.student_patience,
                                    cfg.batch,
                                    cfg.unsup_batch,
                                    mix_seed(cfg.seed, kSeedPseudoTrain,
                                             static_cast<uint64_t>(iter))};
      auto ptrace = student::train_student(
          model, lv, student::SoftView{pseudo_x, &pseudo}, cfg.lambda, popt);
      rec.student_loss = last_or_nan(ptrace.epoch_losses);
      if (!cfg.no_student_finetune) {
        student::OptimizerConfig fopt{cfg.student_finetune_lr,
                                      cfg.momentum,
                                      cfg.finetune_epochs,
                                      cfg.student_patience,
                                      cfg.batch,
                                      cfg.unsup_batch,
                                      mix_seed(cfg.seed, kSeedFineTune,
                                               static_cast<uint64_t>(iter))};
        student::fine_tune(model, lv, fopt);
      }
    }

    student_metrics(rec);
    rec.seconds = elapsed_s(t_iter);
    rm.iters.push_back(rec);
    if (sink) sink(rec);

    double val = validation_model == "teacher" ? *rec.teacher_val
                                               : *rec.student_val;
    if (val > best_val) {
      best_val = val;
      best_iteration = iter;
      best_student = model;
      best_teacher = teacher_model;
      since_best = 0;
    } else if (cfg.iteration_patience > 0 &&
               ++since_best >= cfg.iteration_patience) {
      break;
    }
  }

  rm.best_iteration = best_iteration;
  const IterationRecord& best_rec = rm.iters[static_cast<size_t>(best_iteration)];
  if (validation_model == "teacher" && best_rec.teacher_val) {
    rm.final_val = best_rec.teacher_val;
    rm.final_test = best_rec.teacher_test;
  } else {
    rm.final_val = best_rec.student_val;
    rm.final_test = best_rec.student_test;
  }

  AstraResult result{std::move(best_student), std::move(best_teacher),
                     std::move(rm)};
  return result;
}

}  // namespace

AstraResult run_astra(const DatasetBundle& bundle, const LabelSpace& labels,
                      std::span<const rules::CompiledRule> rule_set,
                      const TrainConfig& cfg, const IterationSink& sink) {
  return run_loop(bundle, labels, rule_set, cfg, sink, true);
}

AstraResult run_classic_selftrain(const DatasetBundle& bundle,
                                  const LabelSpace& labels,
                                  const TrainConfig& cfg,
                                  const IterationSink& sink) {
  return run_loop(bundle, labels, {}, cfg, sink, false);
}

MajorityResult run_majority(const DatasetBundle& bundle,
                            const LabelSpace& labels,
                            std::span<const rules::CompiledRule> rule_set,
                            const TrainConfig& cfg) {
  bundle.check_invariants();
  if (bundle.test.empty()) throw_data("run: test partition is empty");
  const int k = labels.k();
  auto m_test = rules::build_firing_matrix(rule_set, bundle.test, k);
  auto m_u = rules::build_firing_matrix(rule_set, bundle.unlabeled, k);

  MajorityResult out;
  Rng rng_test(mix_seed(cfg.seed, kSeedMajorityTest));
  for (size_t i = 0; i < bundle.test.size(); ++i)
    out.test_preds.push_back(rules::majority_vote(m_test, i, rng_test));

  auto y_test = gold_of(bundle.test, "test");
  IterationRecord rec;
  rec.iteration = 0;
  rec.teacher_test = metric_value(cfg, out.test_preds, y_test, k);
  if (!bundle.validation.empty()) {
    auto m_val = rules::build_firing_matrix(rule_set, bundle.validation, k);
    Rng rng_val(mix_seed(cfg.seed, kSeedMajorityVal));
    std::vector<int> val_preds;
    for (size_t i = 0; i < bundle.validation.size(); ++i)
      val_preds.push_back(rules::majority_vote(m_val, i, rng_val));
    rec.teacher_val = metric_value(cfg, val_preds, gold_of(bundle.validation, "validation"), k);
  }

  auto cs = rules::coverage_stats(m_u);
  out.metrics.metric_name = cfg.metric;
  out.metrics.split_mode = bundle.split_mode;
  out.metrics.validation_model = "majority";
  out.metrics.teacher_schedule = "none";
  out.metrics.coverage = cs.coverage;
  out.metrics.overlap_rules = cs.overlap;
  out.metrics.overlap_with_student = cs.overlap;  // no student source here
  out.metrics.final_val = rec.teacher_val;
  out.metrics.final_test = rec.teacher_test;
  out.metrics.iters.push_back(rec);
  return out;
}

}  // namespace astra::selftrain
