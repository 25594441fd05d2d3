#include "astra/student.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "astra/kernels.hpp"
#include "json.hpp"

namespace astra::student {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw_usage("student: unknown activation '" + s + "' (tanh|relu)");
}

std::string to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "relu";
}

namespace {

void init_uniform(std::vector<double>& w, size_t n, int fan_in, Rng& rng) {
  w.resize(n);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w) v = rng.uniform(-bound, bound);
}

inline double act_fn(Activation a, double z) {
  return a == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the activation value (tanh) or input (relu).
inline double act_deriv(Activation a, double z, double out) {
  return a == Activation::tanh ? 1.0 - out * out : (z > 0.0 ? 1.0 : 0.0);
}

struct Scratch {
  std::vector<double> z1, a1, z2, a2, z3, logp, p;
  std::vector<double> dz3, da2, dz2, da1, dz1;
  void resize(const StudentModel& m) {
    z1.resize(m.h1);
    a1.resize(m.h1);
    z2.resize(m.h2);
    a2.resize(m.h2);
    z3.resize(m.k);
    logp.resize(m.k);
    p.resize(m.k);
    dz3.resize(m.k);
    da2.resize(m.h2);
    dz2.resize(m.h2);
    da1.resize(m.h1);
    dz1.resize(m.h1);
  }
};

void forward_into(const StudentModel& m, const FeatureVec& x, Scratch& s) {
  if (x.dim != m.input_dim)
    throw_data("student forward: input has dim " + std::to_string(x.dim) +
               ", model expects " + std::to_string(m.input_dim));
  std::copy(m.b1.begin(), m.b1.end(), s.z1.begin());
  const size_t h1 = static_cast<size_t>(m.h1);
  for (const auto& [idx, v] : x.items) {
    kernels::axpy(s.z1.data(), v, m.w1.data() + static_cast<size_t>(idx) * h1, h1);
  }
  for (int i = 0; i < m.h1; ++i) s.a1[i] = act_fn(m.act, s.z1[i]);
  kernels::matvec_add(m.w2.data(), m.h2, m.h1, s.a1.data(), m.b2.data(), s.z2.data());
  for (int i = 0; i < m.h2; ++i) s.a2[i] = act_fn(m.act, s.z2[i]);
  kernels::matvec_add(m.w3.data(), m.k, m.h2, s.a2.data(), m.b3.data(), s.z3.data());

  // log-softmax, then exponentiate; avoids log(0) entirely
  double zmax = *std::max_element(s.z3.begin(), s.z3.end());
  double sum = 0.0;
  for (int i = 0; i < m.k; ++i) sum += std::exp(s.z3[i] - zmax);
  double lse = zmax + std::log(sum);
  for (int i = 0; i < m.k; ++i) {
    s.logp[i] = s.z3[i] - lse;
    s.p[i] = std::exp(s.logp[i]);
  }
}

// Cross-entropy -sum t_k max(logp_k, clamp) plus its gradient at the logits.
// With nothing clamped the gradient is the usual p - t.
double ce_and_dz3(std::span<const double> target, const Scratch& s, int k,
                  std::vector<double>& dz3) {
  double loss = 0.0;
  double mass = 0.0;
  for (int i = 0; i < k; ++i) dz3[i] = 0.0;
  for (int i = 0; i < k; ++i) {
    if (target[i] == 0.0) continue;
    // NaN logits must poison the loss, not fall into the clamp branch
    if (std::isnan(s.logp[i])) return std::numeric_limits<double>::quiet_NaN();
    if (s.logp[i] > kLogClamp) {
      loss -= target[i] * s.logp[i];
      mass += target[i];
      dz3[i] -= target[i];
    } else {
      loss -= target[i] * kLogClamp;
    }
  }
  for (int i = 0; i < k; ++i) dz3[i] += mass * s.p[i];
  return loss;
}

void backward_into(const StudentModel& m, const FeatureVec& x, double weight,
                   Scratch& s, StudentGrad& g) {
  // dz3 prepared by ce_and_dz3; apply example weight once here
  for (int i = 0; i < m.k; ++i) s.dz3[i] *= weight;
  kernels::ger(g.w3.data(), m.k, m.h2, s.dz3.data(), s.a2.data());
  kernels::axpy(g.b3.data(), 1.0, s.dz3.data(), m.k);
  kernels::matvec_t(m.w3.data(), m.k, m.h2, s.dz3.data(), s.da2.data());
  for (int i = 0; i < m.h2; ++i)
    s.dz2[i] = s.da2[i] * act_deriv(m.act, s.z2[i], s.a2[i]);
  kernels::ger(g.w2.data(), m.h2, m.h1, s.dz2.data(), s.a1.data());
  kernels::axpy(g.b2.data(), 1.0, s.dz2.data(), m.h2);
  kernels::matvec_t(m.w2.data(), m.h2, m.h1, s.dz2.data(), s.da1.data());
  for (int i = 0; i < m.h1; ++i)
    s.dz1[i] = s.da1[i] * act_deriv(m.act, s.z1[i], s.a1[i]);
  kernels::axpy(g.b1.data(), 1.0, s.dz1.data(), m.h1);
  const size_t h1 = static_cast<size_t>(m.h1);
  for (const auto& [idx, v] : x.items) {
    kernels::axpy(g.w1.data() + static_cast<size_t>(idx) * h1, v, s.dz1.data(), h1);
  }
}

void zero_grad(StudentGrad& g) {
  for (auto* block : parameter_blocks(g)) std::fill(block->begin(), block->end(), 0.0);
}

size_t ceil_div(size_t a, size_t b) { return (a + b - 1) / b; }

}  // namespace

StudentModel StudentModel::init(int input_dim, int h1, int h2, int k,
                                Activation act, uint64_t seed) {
  if (input_dim < 1 || h1 < 1 || h2 < 1 || k < 2)
    throw_usage("student: invalid model dims");
  StudentModel m;
  m.input_dim = input_dim;
  m.h1 = h1;
  m.h2 = h2;
  m.k = k;
  m.act = act;
  Rng rng(mix_seed(seed, 0x57D));
  init_uniform(m.w1, static_cast<size_t>(input_dim) * h1, input_dim, rng);
  m.b1.assign(static_cast<size_t>(h1), 0.0);
  init_uniform(m.w2, static_cast<size_t>(h2) * h1, h1, rng);
  m.b2.assign(static_cast<size_t>(h2), 0.0);
  init_uniform(m.w3, static_cast<size_t>(k) * h2, h2, rng);
  m.b3.assign(static_cast<size_t>(k), 0.0);
  return m;
}

StudentGrad StudentGrad::zeros_like(const StudentModel& m) {
  StudentGrad g;
  g.w1.assign(m.w1.size(), 0.0);
  g.b1.assign(m.b1.size(), 0.0);
  g.w2.assign(m.w2.size(), 0.0);
  g.b2.assign(m.b2.size(), 0.0);
  g.w3.assign(m.w3.size(), 0.0);
  g.b3.assign(m.b3.size(), 0.0);
  return g;
}

std::vector<std::vector<double>*> parameter_blocks(StudentModel& m) {
  return {&m.w1, &m.b1, &m.w2, &m.b2, &m.w3, &m.b3};
}

std::vector<std::vector<double>*> parameter_blocks(StudentGrad& g) {
  return {&g.w1, &g.b1, &g.w2, &g.b2, &g.w3, &g.b3};
}

ForwardResult forward(const StudentModel& m, const FeatureVec& x) {
  Scratch s;
  s.resize(m);
  forward_into(m, x, s);
  return {s.a2, s.p};
}

int predict(const StudentModel& m, const FeatureVec& x) {
  ForwardResult fr = forward(m, x);
  return static_cast<int>(std::max_element(fr.posterior.begin(),
                                           fr.posterior.end()) -
                          fr.posterior.begin());
}

PseudoLabelSet pseudo_label(const StudentModel& m, std::span<const FeatureVec> xs,
                            PseudoKind kind) {
  PseudoLabelSet out;
  out.hard = (kind == PseudoKind::hard);
  out.rows.reserve(xs.size());
  Scratch s;
  s.resize(m);
  for (const auto& x : xs) {
    forward_into(m, x, s);
    if (out.hard) {
      std::vector<double> row(static_cast<size_t>(m.k), 0.0);
      size_t arg = static_cast<size_t>(
          std::max_element(s.p.begin(), s.p.end()) - s.p.begin());
      row[arg] = 1.0;
      out.rows.push_back(std::move(row));
    } else {
      out.rows.push_back(s.p);
    }
  }
  return out;
}

namespace {

// Shared core: batches given as index lists into the views.
double loss_and_grad_indexed(const StudentModel& m, const LabeledView& labeled,
                             std::span<const size_t> idx_l,
                             const SoftView& unlabeled,
                             std::span<const size_t> idx_u, double lambda,
                             Scratch& s, StudentGrad* grad) {
  double total = 0.0;
  std::vector<double> onehot(static_cast<size_t>(m.k), 0.0);
  if (!idx_l.empty()) {
    const double w = 1.0 / static_cast<double>(idx_l.size());
    for (size_t i : idx_l) {
      forward_into(m, labeled.x[i], s);
      int y = labeled.y[i];
      if (y < 0 || y >= m.k) throw_data("student: gold label outside label space");
      std::fill(onehot.begin(), onehot.end(), 0.0);
      onehot[static_cast<size_t>(y)] = 1.0;
      total += w * ce_and_dz3(onehot, s, m.k, s.dz3);
      if (grad) backward_into(m, labeled.x[i], w, s, *grad);
    }
  }
  if (!idx_u.empty() && lambda != 0.0) {
    const double w = lambda / static_cast<double>(idx_u.size());
    for (size_t i : idx_u) {
      forward_into(m, unlabeled.x[i], s);
      const auto& target = unlabeled.targets->rows[i];
      total += w * ce_and_dz3(target, s, m.k, s.dz3);
      if (grad) backward_into(m, unlabeled.x[i], w, s, *grad);
    }
  }
  return total;
}

}  // namespace

double training_loss_and_grad(const StudentModel& m, const LabeledView& labeled,
                         const SoftView& unlabeled, double lambda,
                         StudentGrad* grad) {
  if (labeled.x.size() != labeled.y.size())
    throw_data("student: labeled features/labels size mismatch");
  if (unlabeled.targets &&
      unlabeled.targets->rows.size() != unlabeled.x.size())
    throw_data("student: pseudo-label rows do not match unlabeled instances");
  Scratch s;
  s.resize(m);
  std::vector<size_t> idx_l(labeled.x.size());
  std::iota(idx_l.begin(), idx_l.end(), size_t{0});
  std::vector<size_t> idx_u;
  if (unlabeled.targets && lambda != 0.0) {
    idx_u.resize(unlabeled.x.size());
    std::iota(idx_u.begin(), idx_u.end(), size_t{0});
  }
  if (grad) zero_grad(*grad);
  double loss = loss_and_grad_indexed(m, labeled, idx_l, unlabeled, idx_u,
                                      lambda, s, grad);
  // Per-example weights already divide by batch size; correct the unlabeled
  // loss bookkeeping: loss_and_grad_indexed returns CE sums weighted per
  // batch, matching the gradient scaling.
  return loss;
}

TrainTrace train_student(StudentModel& m, const LabeledView& labeled,
                         const SoftView& unlabeled, double lambda,
                         const OptimizerConfig& opt) {
  if (labeled.x.size() != labeled.y.size())
    throw_data("student: labeled features/labels size mismatch");
  const bool use_unlabeled = unlabeled.targets != nullptr && lambda != 0.0 &&
                             !unlabeled.x.empty();
  if (use_unlabeled && unlabeled.targets->rows.size() != unlabeled.x.size())
    throw_data("student: pseudo-label rows do not match unlabeled instances");
  if (opt.batch_labeled < 1 || opt.batch_unlabeled < 1)
    throw_usage("student: batch sizes must be >= 1");

  const size_t n_l = labeled.x.size();
  const size_t n_u = use_unlabeled ? unlabeled.x.size() : 0;
  TrainTrace trace;
  if (opt.epochs <= 0 || (n_l == 0 && n_u == 0)) return trace;

  StudentGrad grad = StudentGrad::zeros_like(m);
  StudentGrad vel = StudentGrad::zeros_like(m);
  auto grad_blocks = parameter_blocks(grad);
  auto vel_blocks = parameter_blocks(vel);
  auto param_blocks = parameter_blocks(m);
  Scratch s;
  s.resize(m);

  std::vector<size_t> perm_l(n_l), perm_u(n_u);
  std::iota(perm_l.begin(), perm_l.end(), size_t{0});
  std::iota(perm_u.begin(), perm_u.end(), size_t{0});

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const size_t bs_l = static_cast<size_t>(opt.batch_labeled);
  const size_t bs_u = static_cast<size_t>(opt.batch_unlabeled);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng rl(mix_seed(opt.seed, 0x10AD, static_cast<uint64_t>(epoch)));
    rl.shuffle(perm_l);
    const size_t steps_l = n_l ? ceil_div(n_l, bs_l) : 0;
    size_t steps = steps_l;
    size_t steps_u = 0;
    if (use_unlabeled) {
      Rng ru(mix_seed(opt.seed, 0x10AE, static_cast<uint64_t>(epoch)));
      ru.shuffle(perm_u);
      steps_u = ceil_div(n_u, bs_u);
      steps = std::max(steps, steps_u);
    }

    double epoch_loss = 0.0;
    for (size_t step = 0; step < steps; ++step) {
      std::span<const size_t> batch_l;
      if (steps_l) {
        size_t b = step % steps_l;
        size_t lo = b * bs_l;
        size_t hi = std::min(lo + bs_l, n_l);
        batch_l = std::span<const size_t>(perm_l).subspan(lo, hi - lo);
      }
      std::span<const size_t> batch_u;
      if (steps_u) {
        size_t b = step % steps_u;
        size_t lo = b * bs_u;
        size_t hi = std::min(lo + bs_u, n_u);
        batch_u = std::span<const size_t>(perm_u).subspan(lo, hi - lo);
      }
      zero_grad(grad);
      epoch_loss += loss_and_grad_indexed(m, labeled, batch_l, unlabeled,
                                          batch_u, lambda, s, &grad);
      for (size_t bi = 0; bi < param_blocks.size(); ++bi) {
        auto& v = *vel_blocks[bi];
        auto& g = *grad_blocks[bi];
        auto& p = *param_blocks[bi];
        kernels::scale(v.data(), opt.momentum, v.size());
        kernels::axpy(v.data(), 1.0, g.data(), g.size());
        kernels::axpy(p.data(), -opt.lr, v.data(), v.size());
      }
    }
    epoch_loss /= static_cast<double>(steps);
    if (!std::isfinite(epoch_loss))
      throw_train("student training diverged (non-finite loss) at epoch " +
                  std::to_string(epoch));
    trace.epoch_losses.push_back(epoch_loss);
    if (epoch_loss < best) {
      best = epoch_loss;
      since_best = 0;
    } else if (opt.patience > 0 && ++since_best >= opt.patience) {
      break;
    }
  }
  return trace;
}

TrainTrace fine_tune(StudentModel& m, const LabeledView& labeled,
                     const OptimizerConfig& opt) {
  return train_student(m, labeled, SoftView{}, 0.0, opt);
}

namespace {

// Checkpoints keep the conventional row-major (out x in) layout for every
// layer; w1 is transposed from its in-memory input-major layout.
std::vector<double> transpose(const std::vector<double>& a, size_t rows,
                              size_t cols) {
  std::vector<double> out(a.size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  return out;
}

}  // namespace

void StudentModel::save_checkpoint(const std::filesystem::path& path) const {
  json doc;
  doc["format"] = "astra.student.v1";
  doc["input_dim"] = input_dim;
  doc["hidden"] = {h1, h2};
  doc["classes"] = k;
  doc["activation"] = to_string(act);
  doc["w1"] = transpose(w1, static_cast<size_t>(input_dim), static_cast<size_t>(h1));
  doc["b1"] = b1;
  doc["w2"] = w2;
  doc["b2"] = b2;
  doc["w3"] = w3;
  doc["b3"] = b3;
  std::ofstream out(path);
  if (!out) throw_data("cannot write checkpoint: " + path.string());
  out << doc.dump(2) << '\n';
}

StudentModel StudentModel::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open checkpoint: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_data("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "astra.student.v1")
    throw_data("checkpoint " + path.string() + ": unknown format");
  StudentModel m;
  m.input_dim = doc.at("input_dim").get<int>();
  auto hidden = doc.at("hidden").get<std::vector<int>>();
  if (hidden.size() != 2) throw_data("checkpoint: expected two hidden dims");
  m.h1 = hidden[0];
  m.h2 = hidden[1];
  m.k = doc.at("classes").get<int>();
  m.act = activation_from_string(doc.at("activation").get<std::string>());
  auto w1_rowmajor = doc.at("w1").get<std::vector<double>>();
  if (w1_rowmajor.size() != static_cast<size_t>(m.input_dim) * m.h1)
    throw_data("checkpoint: w1 size mismatch");
  m.w1 = transpose(w1_rowmajor, static_cast<size_t>(m.h1),
                   static_cast<size_t>(m.input_dim));
  m.b1 = doc.at("b1").get<std::vector<double>>();
  m.w2 = doc.at("w2").get<std::vector<double>>();
  m.b2 = doc.at("b2").get<std::vector<double>>();
  m.w3 = doc.at("w3").get<std::vector<double>>();
  m.b3 = doc.at("b3").get<std::vector<double>>();
  if (m.b1.size() != static_cast<size_t>(m.h1) ||
      m.w2.size() != static_cast<size_t>(m.h2) * m.h1 ||
      m.b2.size() != static_cast<size_t>(m.h2) ||
      m.w3.size() != static_cast<size_t>(m.k) * m.h2 ||
      m.b3.size() != static_cast<size_t>(m.k))
    throw_data("checkpoint: layer size mismatch");
  for (auto* block : parameter_blocks(m)) {
    for (double v : *block) {
      if (!std::isfinite(v)) throw_data("checkpoint: non-finite parameter");
    }
  }
  return m;
}

}  // namespace astra::student
