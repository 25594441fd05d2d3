#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "astra/common.hpp"

namespace astra::student {

// log targets below exp(-30) are clamped; keeps soft-target cross-entropy
// finite without changing well-scaled gradients.
inline constexpr double kLogClamp = -30.0;

enum class Activation { tanh, relu };
Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Two-hidden-layer MLP over featurized input. w1 is stored input-major
// (input_dim x h1) so sparse inputs update contiguous slices; w2/w3 are
// row-major out x in. h (the final hidden activation) feeds the teacher.
struct StudentModel {
  int input_dim = 0;
  int h1 = 0;
  int h2 = 0;
  int k = 0;
  Activation act = Activation::tanh;
  std::vector<double> w1, b1;  // input-major in x h1; h1
  std::vector<double> w2, b2;  // h2 x h1; h2
  std::vector<double> w3, b3;  // k x h2; k

  // Uniform(+-1/sqrt(fan_in)) weights, zero biases, seeded draw order fixed.
  static StudentModel init(int input_dim, int h1, int h2, int k, Activation act,
                           uint64_t seed);

  void save_checkpoint(const std::filesystem::path& path) const;
  static StudentModel load_checkpoint(const std::filesystem::path& path);
};

// Mirrors the model's parameter blocks; same order as parameter_blocks().
struct StudentGrad {
  std::vector<double> w1, b1, w2, b2, w3, b3;
  static StudentGrad zeros_like(const StudentModel& m);
};

std::vector<std::vector<double>*> parameter_blocks(StudentModel& m);
std::vector<std::vector<double>*> parameter_blocks(StudentGrad& g);

struct ForwardResult {
  std::vector<double> hidden;     // h, length h2
  std::vector<double> posterior;  // p, length k, sums to 1
};

ForwardResult forward(const StudentModel& m, const FeatureVec& x);
int predict(const StudentModel& m, const FeatureVec& x);  // argmax, low index wins ties

struct PseudoLabelSet {
  std::vector<std::vector<double>> rows;  // one distribution per instance
  bool hard = false;
};

enum class PseudoKind { soft, hard };
PseudoLabelSet pseudo_label(const StudentModel& m, std::span<const FeatureVec> xs,
                            PseudoKind kind);

struct OptimizerConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int epochs = 25;
  int patience = 5;         // epochs without train-loss improvement
  int batch_labeled = 16;
  int batch_unlabeled = 256;
  uint64_t seed = 1;
};

struct TrainTrace {
  std::vector<double> epoch_losses;
};

struct LabeledView {
  std::span<const FeatureVec> x;
  std::span<const int> y;
};

struct SoftView {
  std::span<const FeatureVec> x;
  const PseudoLabelSet* targets = nullptr;  // row per x
};

// Mean labeled cross-entropy plus lambda * mean soft cross-entropy to the
// fixed teacher targets; either side may be empty. Gradients are written to
// grad when non-null (accumulated from zero).
double training_loss_and_grad(const StudentModel& m, const LabeledView& labeled,
                         const SoftView& unlabeled, double lambda,
                         StudentGrad* grad);

// Momentum SGD on the training objective. When pseudo targets are absent or
// lambda == 0 the loop degenerates to plain supervised training on the
// labeled set alone (identical trajectory, not just identical losses).
TrainTrace train_student(StudentModel& m, const LabeledView& labeled,
                         const SoftView& unlabeled, double lambda,
                         const OptimizerConfig& opt);

// Supervised pass on the labeled set, typically with a smaller rate.
TrainTrace fine_tune(StudentModel& m, const LabeledView& labeled,
                     const OptimizerConfig& opt);

}  // namespace astra::student
