#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "astra/common.hpp"
#include "astra/rules.hpp"
#include "astra/student.hpp"

namespace astra::teacher {

// Rule attention network: a trainable embedding per rule plus one for the
// student source, and a projection MLP mapping the student's hidden state h
// into the embedding space. Sigmoid attention between the projected h and a
// source embedding gives that source's instance-specific fidelity weight.
struct RanTeacher {
  int d = 128;       // embedding dim
  int dprime = 0;    // student hidden dim (projection input)
  int k = 0;
  int n_rules = 0;
  std::vector<double> rule_emb;     // n_rules x d, row-major
  std::vector<double> student_emb;  // d
  std::vector<double> f1w, f1b;     // d x dprime; d   (tanh hidden)
  std::vector<double> f2w, f2b;     // d x d; d

  static RanTeacher init(int n_rules, int d, int dprime, int k, uint64_t seed);

  void save_checkpoint(const std::filesystem::path& path) const;
  static RanTeacher load_checkpoint(const std::filesystem::path& path);
};

struct RanGrad {
  std::vector<double> rule_emb, student_emb, f1w, f1b, f2w, f2b;
  static RanGrad zeros_like(const RanTeacher& t);
};

std::vector<std::vector<double>*> parameter_blocks(RanTeacher& t);
std::vector<std::vector<double>*> parameter_blocks(RanGrad& g);

// Per-instance weights over the applied rules and the student source. The
// uniform rule picks up the slack so the aggregate masses always total
// |R_i|+1 (or |R_i| when the student source is excluded).
struct AttentionRow {
  std::vector<int32_t> applied;       // rule indices, R_i
  std::vector<double> rule_weights;   // aligned with applied
  double student_weight = 0.0;        // a_i^S; 0 and unused when excluded
  bool has_student = true;
  double slack = 0.0;                 // a_i^u
  double normalizer = 0.0;            // Z_i
};

AttentionRow attention_weights(const RanTeacher& t, std::span<const double> h,
                               std::span<const int32_t> applied,
                               bool include_student = true);

// Core aggregation: q = u + (1/n) sum_s w_s (v_s - u) with n = #sources,
// algebraically (sum_s w_s v_s + slack*u)/n. All weights 0 gives exactly u.
std::vector<double> aggregate_sources(std::span<const double> weights,
                                      std::span<const std::vector<double>> dists,
                                      int k);
// One-hot convenience used by the limit-case checks.
std::vector<double> aggregate_onehot(std::span<const double> weights,
                                     std::span<const int> labels, int k);

// Aggregation of the row's rules (one-hot labels) plus the student
// posterior when the row carries one.
std::vector<double> aggregate(const AttentionRow& row,
                              std::span<const int> rule_labels,
                              std::span<const double> student_posterior, int k);

// Frozen per-instance inputs for teacher training/prediction. Hidden state
// and posterior point into snapshots owned by the caller; the teacher never
// backpropagates into them.
struct RanInstance {
  std::span<const double> hidden;
  std::span<const rules::FiringMatrix::Entry> fired;
  std::span<const double> student_posterior;  // empty when student excluded
  int gold = -1;                              // valid for labeled instances
};

std::vector<double> predict(const RanTeacher& t, const RanInstance& inst,
                            bool include_student = true);

// Sum over the given instances of labeled cross-entropy plus entropy_weight
// times the aggregate-label entropy (the semi-supervised objective). Either
// span may be empty. Gradients flow to the embeddings and projection only.
double ran_loss_and_grad(const RanTeacher& t,
                         std::span<const RanInstance> labeled,
                         std::span<const RanInstance> unlabeled,
                         double entropy_weight, bool include_student,
                         RanGrad* grad);

struct RanTrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int entropy_epochs = 25;  // unlabeled phase (also the joint-mode epochs)
  int ce_epochs = 70;       // labeled fine-tune phase
  int patience = 5;
  int batch_labeled = 16;
  int batch_unlabeled = 256;
  double entropy_weight = 1.0;
  bool joint = false;          // optimize both terms together instead
  bool include_student = true;
  bool no_entropy = false;     // ablation: drop the unlabeled term
  uint64_t seed = 1;
};

struct RanTrainTrace {
  std::vector<double> entropy_losses;  // per epoch (or joint losses)
  std::vector<double> ce_losses;
};

// Default schedule: entropy phase over the unlabeled set, then CE fine-tune
// over the labeled set. Student inputs stay frozen throughout.
RanTrainTrace train_ran(RanTeacher& t, std::span<const RanInstance> labeled,
                        std::span<const RanInstance> unlabeled,
                        const RanTrainConfig& cfg);

// Teacher labels for the unlabeled set. With the student source active every
// instance gets a label; without it uncovered instances are skipped and
// `indices` maps rows back to positions in the input span.
struct TeacherPseudoLabels {
  student::PseudoLabelSet labels;
  std::vector<size_t> indices;
};

TeacherPseudoLabels pseudo_label_dataset(const RanTeacher& t,
                                         std::span<const RanInstance> unlabeled,
                                         bool include_student,
                                         student::PseudoKind kind);

}  // namespace astra::teacher
