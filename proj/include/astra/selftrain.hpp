#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "astra/corpus.hpp"
#include "astra/featurizer.hpp"
#include "astra/rules.hpp"
#include "astra/student.hpp"
#include "astra/teacher.hpp"

namespace astra::selftrain {

struct TrainConfig {
  uint64_t seed = 0;

  featurizer::FeaturizerSpec feat;

  int student_h1 = 128;
  int student_h2 = 128;
  student::Activation activation = student::Activation::tanh;
  double student_lr = 0.1;
  double student_finetune_lr = 0.01;
  double momentum = 0.9;
  int pseudo_epochs = 25;
  int finetune_epochs = 70;
  int student_patience = 5;
  int batch = 16;
  int unsup_batch = 256;

  int teacher_d = 128;
  double teacher_lr = 0.1;
  int teacher_entropy_epochs = 25;
  int teacher_ce_epochs = 70;
  int teacher_patience = 5;
  bool teacher_joint = false;
  bool teacher_cold_start = false;
  double entropy_weight = 1.0;

  double lambda = 1.0;
  student::PseudoKind pseudo_kind = student::PseudoKind::soft;
  int max_iterations = 25;
  int iteration_patience = 3;
  std::string validation_model = "teacher";  // teacher|student
  // Retraining starts the student from a fresh init each iteration; warm
  // start instead continues from the previous iteration's parameters.
  bool student_warm_start = false;

  bool no_entropy_reg = false;
  bool no_student_finetune = false;
  bool no_student_in_ran = false;

  std::string metric = "accuracy";  // accuracy|macro_f1|binary_f1
  int positive_class = 1;

  size_t n_labeled = 100;     // pool split mode
  size_t n_validation = 250;

  std::string kernel_backend = "auto";

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  std::optional<double> student_val, student_test;
  std::optional<double> teacher_val, teacher_test;
  std::optional<double> student_loss, teacher_loss;
  double seconds = 0.0;
};

struct RunMetrics {
  std::vector<IterationRecord> iters;
  int best_iteration = 0;
  std::string metric_name;
  std::string split_mode;
  std::string validation_model;
  std::string teacher_schedule;  // "two_phase" | "joint" | "none"
  double coverage = 0.0;             // D_U, >=1 rule
  double overlap_rules = 0.0;        // D_U, >=2 rules
  double overlap_with_student = 0.0; // D_U, >=2 weak sources incl. student
  // Designated-model metrics at the best iteration:
  std::optional<double> final_val, final_test;
};

using IterationSink = std::function<void(const IterationRecord&)>;

struct AstraResult {
  student::StudentModel student;
  std::optional<teacher::RanTeacher> teacher;
  RunMetrics metrics;
};

// Metric dispatch per config (accuracy, macro-F1, or positive-class F1).
double metric_value(const TrainConfig& cfg, std::span<const int> preds,
                    std::span<const int> golds, int k);

// The full self-training loop: initial student on D_L, then per iteration
// teacher training, teacher pseudo-labels over D_U, student re-training and
// fine-tuning. Early-stops on the designated model's validation metric and
// returns the models from the best iteration.
AstraResult run_astra(const corpus::DatasetBundle& bundle,
                      const corpus::LabelSpace& labels,
                      std::span<const rules::CompiledRule> rules,
                      const TrainConfig& cfg, const IterationSink& sink = {});

// Classic self-training baseline: the student's own pseudo-labels replace
// the teacher; rules are ignored.
AstraResult run_classic_selftrain(const corpus::DatasetBundle& bundle,
                                  const corpus::LabelSpace& labels,
                                  const TrainConfig& cfg,
                                  const IterationSink& sink = {});

// Majority-vote baseline over the test (and validation) firing matrices.
struct MajorityResult {
  std::vector<int> test_preds;
  RunMetrics metrics;
};
MajorityResult run_majority(const corpus::DatasetBundle& bundle,
                            const corpus::LabelSpace& labels,
                            std::span<const rules::CompiledRule> rules,
                            const TrainConfig& cfg);

// Fraction of instances covered by >= 2 weak sources. With the student in
// play every instance gains one source, so this equals plain rule coverage;
// without it, the >=2-rules overlap.
double overlap_with_student(const rules::FiringMatrix& matrix, bool has_student);

}  // namespace astra::selftrain
