#include "astra/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "astra/kernels.hpp"
#include "json.hpp"

namespace astra::teacher {

using nlohmann::json;
using student::kLogClamp;

namespace {

const double kClampEps = std::exp(kLogClamp);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_clamped(double q) {
  return q > kClampEps ? std::log(q) : kLogClamp;
}

void init_uniform(std::vector<double>& w, size_t n, int fan_in, Rng& rng) {
  w.resize(n);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w) v = rng.uniform(-bound, bound);
}

}  // namespace

RanTeacher RanTeacher::init(int n_rules, int d, int dprime, int k,
                            uint64_t seed) {
  if (n_rules < 0 || d < 1 || dprime < 1 || k < 2)
    throw_usage("teacher: invalid dims");
  RanTeacher t;
  t.d = d;
  t.dprime = dprime;
  t.k = k;
  t.n_rules = n_rules;
  Rng rng(mix_seed(seed, 0x7EAC));
  init_uniform(t.rule_emb, static_cast<size_t>(n_rules) * d, d, rng);
  init_uniform(t.student_emb, static_cast<size_t>(d), d, rng);
  init_uniform(t.f1w, static_cast<size_t>(d) * dprime, dprime, rng);
  t.f1b.assign(static_cast<size_t>(d), 0.0);
  init_uniform(t.f2w, static_cast<size_t>(d) * d, d, rng);
  t.f2b.assign(static_cast<size_t>(d), 0.0);
  return t;
}

RanGrad RanGrad::zeros_like(const RanTeacher& t) {
  RanGrad g;
  g.rule_emb.assign(t.rule_emb.size(), 0.0);
  g.student_emb.assign(t.student_emb.size(), 0.0);
  g.f1w.assign(t.f1w.size(), 0.0);
  g.f1b.assign(t.f1b.size(), 0.0);
  g.f2w.assign(t.f2w.size(), 0.0);
  g.f2b.assign(t.f2b.size(), 0.0);
  return g;
}

std::vector<std::vector<double>*> parameter_blocks(RanTeacher& t) {
  return {&t.rule_emb, &t.student_emb, &t.f1w, &t.f1b, &t.f2w, &t.f2b};
}

std::vector<std::vector<double>*> parameter_blocks(RanGrad& g) {
  return {&g.rule_emb, &g.student_emb, &g.f1w, &g.f1b, &g.f2w, &g.f2b};
}

namespace {

struct Scratch {
  std::vector<double> th;   // tanh hidden of f
  std::vector<double> z;    // f(h)
  std::vector<double> q;
  std::vector<double> dq;
  std::vector<double> dz;
  std::vector<double> dth;
  std::vector<double> a;    // per-source weights, rules then student
  void resize(const RanTeacher& t) {
    th.resize(t.d);
    z.resize(t.d);
    q.resize(t.k);
    dq.resize(t.k);
    dz.resize(t.d);
    dth.resize(t.d);
  }
};

void project_into(const RanTeacher& t, std::span<const double> h, Scratch& s) {
  if (static_cast<int>(h.size()) != t.dprime)
    throw_data("teacher: hidden state has dim " + std::to_string(h.size()) +
               ", projection expects " + std::to_string(t.dprime));
  kernels::matvec_add(t.f1w.data(), t.d, t.dprime, h.data(), t.f1b.data(),
                      s.th.data());
  for (int i = 0; i < t.d; ++i) s.th[i] = std::tanh(s.th[i]);
  kernels::matvec_add(t.f2w.data(), t.d, t.d, s.th.data(), t.f2b.data(),
                      s.z.data());
}

// q = u + (1/n) sum_s a_s (v_s - u), computed source-by-source without
// materializing one-hots. Rounding can leave a component a few ulp below
// zero at saturated weights; those are snapped back to 0.
void aggregate_into(const RanTeacher& t, const Scratch& s,
                    std::span<const rules::FiringMatrix::Entry> fired,
                    std::span<const double> posterior, bool with_student,
                    std::vector<double>& q) {
  const int k = t.k;
  const double u = 1.0 / static_cast<double>(k);
  const size_t n = fired.size() + (with_student ? 1 : 0);
  q.assign(static_cast<size_t>(k), u);
  if (n == 0) return;  // callers exclude this case for training/labeling
  const double inv_n = 1.0 / static_cast<double>(n);
  double rule_mass = 0.0;
  for (size_t j = 0; j < fired.size(); ++j) {
    q[static_cast<size_t>(fired[j].label)] += inv_n * s.a[j];
    rule_mass += s.a[j];
  }
  if (with_student) {
    const double as = s.a[fired.size()];
    for (int i = 0; i < k; ++i) q[static_cast<size_t>(i)] += inv_n * as * (posterior[i] - u);
  }
  // the rule one-hots each carry mass a_j above; subtract their u component
  const double shift = inv_n * rule_mass * u;
  for (int i = 0; i < k; ++i) {
    double v = q[static_cast<size_t>(i)] - shift;
    q[static_cast<size_t>(i)] = v < 0.0 ? 0.0 : v;
  }
}

}  // namespace

AttentionRow attention_weights(const RanTeacher& t, std::span<const double> h,
                               std::span<const int32_t> applied,
                               bool include_student) {
  Scratch s;
  s.resize(t);
  project_into(t, h, s);
  AttentionRow row;
  row.applied.assign(applied.begin(), applied.end());
  row.has_student = include_student;
  double mass = 0.0;
  for (int32_t j : applied) {
    if (j < 0 || j >= t.n_rules) throw_data("teacher: rule index out of range");
    double a = sigmoid(kernels::dot(s.z.data(),
                                    t.rule_emb.data() + static_cast<size_t>(j) * t.d,
                                    static_cast<size_t>(t.d)));
    row.rule_weights.push_back(a);
    mass += a;
  }
  if (include_student) {
    row.student_weight = sigmoid(kernels::dot(s.z.data(), t.student_emb.data(),
                                              static_cast<size_t>(t.d)));
    mass += row.student_weight;
  }
  row.normalizer = static_cast<double>(applied.size() + (include_student ? 1 : 0));
  row.slack = row.normalizer - mass;
  return row;
}

std::vector<double> aggregate_sources(std::span<const double> weights,
                                      std::span<const std::vector<double>> dists,
                                      int k) {
  if (weights.size() != dists.size())
    throw_data("aggregate_sources: weights/distributions size mismatch");
  const double u = 1.0 / static_cast<double>(k);
  std::vector<double> q(static_cast<size_t>(k), u);
  if (dists.empty()) return q;
  const double inv_n = 1.0 / static_cast<double>(dists.size());
  for (size_t s = 0; s < dists.size(); ++s) {
    for (int i = 0; i < k; ++i)
      q[static_cast<size_t>(i)] += inv_n * weights[s] * (dists[s][static_cast<size_t>(i)] - u);
  }
  for (auto& v : q) {
    if (v < 0.0) v = 0.0;
  }
  return q;
}

std::vector<double> aggregate_onehot(std::span<const double> weights,
                                     std::span<const int> labels, int k) {
  std::vector<std::vector<double>> dists;
  dists.reserve(labels.size());
  for (int l : labels) {
    std::vector<double> v(static_cast<size_t>(k), 0.0);
    v[static_cast<size_t>(l)] = 1.0;
    dists.push_back(std::move(v));
  }
  return aggregate_sources(weights, dists, k);
}

std::vector<double> aggregate(const AttentionRow& row,
                              std::span<const int> rule_labels,
                              std::span<const double> student_posterior, int k) {
  if (rule_labels.size() != row.rule_weights.size())
    throw_data("aggregate: rule labels misaligned with attention weights");
  std::vector<std::vector<double>> dists;
  std::vector<double> weights;
  for (size_t j = 0; j < rule_labels.size(); ++j) {
    std::vector<double> v(static_cast<size_t>(k), 0.0);
    v[static_cast<size_t>(rule_labels[j])] = 1.0;
    dists.push_back(std::move(v));
    weights.push_back(row.rule_weights[j]);
  }
  if (row.has_student) {
    if (static_cast<int>(student_posterior.size()) != k)
      throw_data("aggregate: student posterior has wrong dimension");
    dists.emplace_back(student_posterior.begin(), student_posterior.end());
    weights.push_back(row.student_weight);
  }
  return aggregate_sources(weights, dists, k);
}

std::vector<double> predict(const RanTeacher& t, const RanInstance& inst,
                            bool include_student) {
  Scratch s;
  s.resize(t);
  project_into(t, inst.hidden, s);
  s.a.resize(inst.fired.size() + (include_student ? 1 : 0));
  for (size_t j = 0; j < inst.fired.size(); ++j) {
    s.a[j] = sigmoid(kernels::dot(
        s.z.data(), t.rule_emb.data() + static_cast<size_t>(inst.fired[j].rule) * t.d,
        static_cast<size_t>(t.d)));
  }
  if (include_student)
    s.a[inst.fired.size()] = sigmoid(
        kernels::dot(s.z.data(), t.student_emb.data(), static_cast<size_t>(t.d)));
  std::vector<double> q;
  aggregate_into(t, s, inst.fired, inst.student_posterior, include_student, q);
  return q;
}

namespace {

// Backward pass for one instance. dq holds dLoss/dq on entry.
void backward_instance(const RanTeacher& t, const RanInstance& inst,
                       bool with_student, Scratch& s, RanGrad& g) {
  const int k = t.k;
  const size_t n = inst.fired.size() + (with_student ? 1 : 0);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double u = 1.0 / static_cast<double>(k);
  double dq_sum = 0.0;
  for (int i = 0; i < k; ++i) dq_sum += s.dq[static_cast<size_t>(i)];

  std::fill(s.dz.begin(), s.dz.end(), 0.0);
  for (size_t j = 0; j < n; ++j) {
    const bool is_student = with_student && j == inst.fired.size();
    double ga;  // dLoss/da_j
    if (is_student) {
      double dot_pq = 0.0;
      for (int i = 0; i < k; ++i)
        dot_pq += s.dq[static_cast<size_t>(i)] * inst.student_posterior[static_cast<size_t>(i)];
      ga = inv_n * (dot_pq - u * dq_sum);
    } else {
      ga = inv_n * (s.dq[static_cast<size_t>(inst.fired[j].label)] - u * dq_sum);
    }
    const double a = s.a[j];
    const double d_logit = ga * a * (1.0 - a);
    const double* emb = is_student
                            ? t.student_emb.data()
                            : t.rule_emb.data() + static_cast<size_t>(inst.fired[j].rule) * t.d;
    double* gemb = is_student
                       ? g.student_emb.data()
                       : g.rule_emb.data() + static_cast<size_t>(inst.fired[j].rule) * t.d;
    kernels::axpy(gemb, d_logit, s.z.data(), static_cast<size_t>(t.d));
    kernels::axpy(s.dz.data(), d_logit, emb, static_cast<size_t>(t.d));
  }

  kernels::ger(g.f2w.data(), t.d, t.d, s.dz.data(), s.th.data());
  kernels::axpy(g.f2b.data(), 1.0, s.dz.data(), static_cast<size_t>(t.d));
  kernels::matvec_t(t.f2w.data(), t.d, t.d, s.dz.data(), s.dth.data());
  for (int i = 0; i < t.d; ++i) s.dth[i] *= 1.0 - s.th[i] * s.th[i];
  kernels::ger(g.f1w.data(), t.d, t.dprime, s.dth.data(), inst.hidden.data());
  kernels::axpy(g.f1b.data(), 1.0, s.dth.data(), static_cast<size_t>(t.d));
}

void forward_instance(const RanTeacher& t, const RanInstance& inst,
                      bool with_student, Scratch& s) {
  project_into(t, inst.hidden, s);
  const size_t n = inst.fired.size() + (with_student ? 1 : 0);
  s.a.resize(n);
  for (size_t j = 0; j < inst.fired.size(); ++j) {
    s.a[j] = sigmoid(kernels::dot(
        s.z.data(), t.rule_emb.data() + static_cast<size_t>(inst.fired[j].rule) * t.d,
        static_cast<size_t>(t.d)));
  }
  if (with_student) {
    if (static_cast<int>(inst.student_posterior.size()) != t.k)
      throw_data("teacher: instance carries no student posterior");
    s.a[inst.fired.size()] = sigmoid(
        kernels::dot(s.z.data(), t.student_emb.data(), static_cast<size_t>(t.d)));
  }
  aggregate_into(t, s, inst.fired, inst.student_posterior, with_student, s.q);
}

}  // namespace

double ran_loss_and_grad(const RanTeacher& t,
                         std::span<const RanInstance> labeled,
                         std::span<const RanInstance> unlabeled,
                         double entropy_weight, bool include_student,
                         RanGrad* grad) {
  Scratch s;
  s.resize(t);
  double total = 0.0;
  for (const auto& inst : labeled) {
    const bool with_student = include_student;
    if (!with_student && inst.fired.empty()) continue;  // no sources at all
    forward_instance(t, inst, with_student, s);
    if (inst.gold < 0 || inst.gold >= t.k)
      throw_data("teacher: labeled instance without a valid gold label");
    const double qy = s.q[static_cast<size_t>(inst.gold)];
    if (std::isnan(qy)) return std::numeric_limits<double>::quiet_NaN();
    total += -log_clamped(qy);
    if (grad) {
      std::fill(s.dq.begin(), s.dq.end(), 0.0);
      if (qy > kClampEps) s.dq[static_cast<size_t>(inst.gold)] = -1.0 / qy;
      backward_instance(t, inst, with_student, s, *grad);
    }
  }
  for (const auto& inst : unlabeled) {
    const bool with_student = include_student;
    if (!with_student && inst.fired.empty()) continue;
    forward_instance(t, inst, with_student, s);
    double h = 0.0;
    for (int i = 0; i < t.k; ++i) {
      const double q = s.q[static_cast<size_t>(i)];
      if (std::isnan(q)) return std::numeric_limits<double>::quiet_NaN();
      h -= q * log_clamped(q);
    }
    total += entropy_weight * h;
    if (grad) {
      for (int i = 0; i < t.k; ++i) {
        const double q = s.q[static_cast<size_t>(i)];
        s.dq[static_cast<size_t>(i)] =
            -entropy_weight * (log_clamped(q) + (q > kClampEps ? 1.0 : 0.0));
      }
      backward_instance(t, inst, with_student, s, *grad);
    }
  }
  return total;
}

namespace {

void zero_grad(RanGrad& g) {
  for (auto* block : parameter_blocks(g)) std::fill(block->begin(), block->end(), 0.0);
}

size_t ceil_div(size_t a, size_t b) { return (a + b - 1) / b; }

struct PhasePlan {
  std::span<const RanInstance> labeled;
  std::span<const RanInstance> unlabeled;
  int epochs;
  const char* name;
};

void run_phase(RanTeacher& t, const PhasePlan& plan, const RanTrainConfig& cfg,
               uint64_t phase_salt, std::vector<double>& losses) {
  const size_t n_l = plan.labeled.size();
  const size_t n_u = plan.unlabeled.size();
  if ((n_l == 0 && n_u == 0) || plan.epochs <= 0) return;

  RanGrad grad = RanGrad::zeros_like(t);
  RanGrad vel = RanGrad::zeros_like(t);
  auto gb = parameter_blocks(grad);
  auto vb = parameter_blocks(vel);
  auto pb = parameter_blocks(t);

  std::vector<size_t> perm_l(n_l), perm_u(n_u);
  std::iota(perm_l.begin(), perm_l.end(), size_t{0});
  std::iota(perm_u.begin(), perm_u.end(), size_t{0});
  const size_t bs_l = static_cast<size_t>(cfg.batch_labeled);
  const size_t bs_u = static_cast<size_t>(cfg.batch_unlabeled);

  std::vector<RanInstance> batch_l, batch_u;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    Rng rl(mix_seed(cfg.seed, phase_salt, static_cast<uint64_t>(epoch) * 2));
    Rng ru(mix_seed(cfg.seed, phase_salt, static_cast<uint64_t>(epoch) * 2 + 1));
    rl.shuffle(perm_l);
    ru.shuffle(perm_u);
    const size_t steps_l = n_l ? ceil_div(n_l, bs_l) : 0;
    const size_t steps_u = n_u ? ceil_div(n_u, bs_u) : 0;
    const size_t steps = std::max(steps_l, steps_u);

    double epoch_loss = 0.0;
    size_t epoch_count = 0;
    for (size_t step = 0; step < steps; ++step) {
      batch_l.clear();
      batch_u.clear();
      if (steps_l) {
        size_t b = step % steps_l;
        for (size_t i = b * bs_l; i < std::min((b + 1) * bs_l, n_l); ++i)
          batch_l.push_back(plan.labeled[perm_l[i]]);
      }
      if (steps_u) {
        size_t b = step % steps_u;
        for (size_t i = b * bs_u; i < std::min((b + 1) * bs_u, n_u); ++i)
          batch_u.push_back(plan.unlabeled[perm_u[i]]);
      }
      const size_t count = batch_l.size() + batch_u.size();
      if (count == 0) continue;
      zero_grad(grad);
      double loss = ran_loss_and_grad(t, batch_l, batch_u, cfg.entropy_weight,
                                      cfg.include_student, &grad);
      const double scale = 1.0 / static_cast<double>(count);
      epoch_loss += loss * scale;
      ++epoch_count;
      for (size_t bi = 0; bi < pb.size(); ++bi) {
        kernels::scale(vb[bi]->data(), cfg.momentum, vb[bi]->size());
        kernels::axpy(vb[bi]->data(), scale, gb[bi]->data(), gb[bi]->size());
        kernels::axpy(pb[bi]->data(), -cfg.lr, vb[bi]->data(), vb[bi]->size());
      }
    }
    if (epoch_count == 0) return;
    epoch_loss /= static_cast<double>(epoch_count);
    if (!std::isfinite(epoch_loss))
      throw_train(std::string("teacher ") + plan.name +
                  " phase diverged (non-finite loss) at epoch " +
                  std::to_string(epoch));
    losses.push_back(epoch_loss);
    if (epoch_loss < best) {
      best = epoch_loss;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
}

}  // namespace

RanTrainTrace train_ran(RanTeacher& t, std::span<const RanInstance> labeled,
                        std::span<const RanInstance> unlabeled,
                        const RanTrainConfig& cfg) {
  if (cfg.batch_labeled < 1 || cfg.batch_unlabeled < 1)
    throw_usage("teacher: batch sizes must be >= 1");
  RanTrainTrace trace;
  std::span<const RanInstance> unl = cfg.no_entropy
                                         ? std::span<const RanInstance>{}
                                         : unlabeled;
  if (cfg.joint) {
    run_phase(t, {labeled, unl, cfg.entropy_epochs, "joint"}, cfg, 0x3017,
              trace.entropy_losses);
    return trace;
  }
  run_phase(t, {{}, unl, cfg.entropy_epochs, "entropy"}, cfg, 0x3015,
            trace.entropy_losses);
  run_phase(t, {labeled, {}, cfg.ce_epochs, "labeled"}, cfg, 0x3016,
            trace.ce_losses);
  return trace;
}

TeacherPseudoLabels pseudo_label_dataset(const RanTeacher& t,
                                         std::span<const RanInstance> unlabeled,
                                         bool include_student,
                                         student::PseudoKind kind) {
  TeacherPseudoLabels out;
  out.labels.hard = (kind == student::PseudoKind::hard);
  Scratch s;
  s.resize(t);
  for (size_t i = 0; i < unlabeled.size(); ++i) {
    const auto& inst = unlabeled[i];
    if (!include_student && inst.fired.empty()) continue;
    forward_instance(t, inst, include_student, s);
    if (out.labels.hard) {
      std::vector<double> row(static_cast<size_t>(t.k), 0.0);
      size_t arg = static_cast<size_t>(
          std::max_element(s.q.begin(), s.q.end()) - s.q.begin());
      row[arg] = 1.0;
      out.labels.rows.push_back(std::move(row));
    } else {
      out.labels.rows.push_back(s.q);
    }
    out.indices.push_back(i);
  }
  return out;
}

void RanTeacher::save_checkpoint(const std::filesystem::path& path) const {
  json doc;
  doc["format"] = "astra.teacher.v1";
  doc["d"] = d;
  doc["dprime"] = dprime;
  doc["classes"] = k;
  doc["rules"] = n_rules;
  doc["rule_emb"] = rule_emb;
  doc["student_emb"] = student_emb;
  doc["f1w"] = f1w;
  doc["f1b"] = f1b;
  doc["f2w"] = f2w;
  doc["f2b"] = f2b;
  std::ofstream out(path);
  if (!out) throw_data("cannot write checkpoint: " + path.string());
  out << doc.dump(2) << '\n';
}

RanTeacher RanTeacher::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open checkpoint: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw_data("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "astra.teacher.v1")
    throw_data("checkpoint " + path.string() + ": unknown format");
  RanTeacher t;
  t.d = doc.at("d").get<int>();
  t.dprime = doc.at("dprime").get<int>();
  t.k = doc.at("classes").get<int>();
  t.n_rules = doc.at("rules").get<int>();
  t.rule_emb = doc.at("rule_emb").get<std::vector<double>>();
  t.student_emb = doc.at("student_emb").get<std::vector<double>>();
  t.f1w = doc.at("f1w").get<std::vector<double>>();
  t.f1b = doc.at("f1b").get<std::vector<double>>();
  t.f2w = doc.at("f2w").get<std::vector<double>>();
  t.f2b = doc.at("f2b").get<std::vector<double>>();
  if (t.rule_emb.size() != static_cast<size_t>(t.n_rules) * t.d ||
      t.student_emb.size() != static_cast<size_t>(t.d) ||
      t.f1w.size() != static_cast<size_t>(t.d) * t.dprime ||
      t.f1b.size() != static_cast<size_t>(t.d) ||
      t.f2w.size() != static_cast<size_t>(t.d) * t.d ||
      t.f2b.size() != static_cast<size_t>(t.d))
    throw_data("checkpoint: teacher layer size mismatch");
  for (auto* block : parameter_blocks(t)) {
    for (double v : *block) {
      if (!std::isfinite(v)) throw_data("checkpoint: non-finite parameter");
    }
  }
  return t;
}

}  // namespace astra::teacher
