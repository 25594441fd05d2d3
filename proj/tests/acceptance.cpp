// Acceptance suite. Each criterion prints one PASS/FAIL line; the process
// exits nonzero if any required criterion fails. Thresholds are frozen here
// and were confirmed against baseline runs before freezing.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "astra/eval.hpp"
#include "astra/selftrain.hpp"
#include "astra/sweep.hpp"
#include "astra/synth.hpp"
#include "testutil.hpp"

using namespace astra;

namespace {

int g_failures = 0;

struct Criterion {
  std::string name;
  std::chrono::steady_clock::time_point start;
  bool ok = true;
  std::string detail;

  explicit Criterion(std::string n)
      : name(std::move(n)), start(std::chrono::steady_clock::now()) {}

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }

  void finish(double budget_s = 0.0) {
    double elapsed = seconds();
    if (budget_s > 0.0 && elapsed > budget_s) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += "runtime " + std::to_string(elapsed) + "s over budget " +
                std::to_string(budget_s) + "s";
    }
    std::printf("[%s] %-22s %6.2fs%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                elapsed, detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
  }
};

std::vector<double> random_dist(int k, Rng& rng) {
  std::vector<double> d(static_cast<size_t>(k));
  double sum = 0.0;
  for (auto& v : d) {
    v = rng.uniform(0.05, 1.0);
    sum += v;
  }
  for (auto& v : d) v /= sum;
  return d;
}

// 1000 random (teacher, instance) draws: normalizer identity, unit mass,
// non-negative slack.
void aggregation_invariants() {
  Criterion c("aggregation-invariants");
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    const int n_rules = 1 + static_cast<int>(rng.below(8));
    const int d = 4 + static_cast<int>(rng.below(5));
    const int dprime = 3 + static_cast<int>(rng.below(4));
    auto t = teacher::RanTeacher::init(n_rules, d, dprime, k,
                                       0xACC0 + static_cast<uint64_t>(trial));
    std::vector<double> h(static_cast<size_t>(dprime));
    for (auto& v : h) v = rng.uniform(-3.0, 3.0);
    std::vector<int32_t> applied;
    std::vector<int> labels;
    for (int j = 0; j < n_rules; ++j) {
      if (rng.uniform() < 0.6) {
        applied.push_back(j);
        labels.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(k))));
      }
    }
    auto row = teacher::attention_weights(t, h, applied);
    c.require(std::abs(row.normalizer -
                       (static_cast<double>(applied.size()) + 1.0)) <= 1e-9,
              "normalizer != |R_i|+1");
    c.require(row.slack >= -1e-12, "negative slack");
    auto posterior = random_dist(k, rng);
    auto q = teacher::aggregate(row, labels, posterior, k);
    double sum = 0.0;
    for (double v : q) sum += v;
    c.require(std::abs(sum - 1.0) <= 1e-9, "aggregate mass != 1");
    if (!c.ok) break;
  }
  c.finish(1.0);
}

// All-weights-1 (student excluded) reduces to untied majority vote,
// exhaustively for <=4 rules and K<=3; all-weights-0 gives exactly u.
void limit_cases() {
  Criterion c("limit-cases");
  for (int k = 2; k <= 3 && c.ok; ++k) {
    for (int n = 1; n <= 4 && c.ok; ++n) {
      int patterns = 1;
      for (int i = 0; i < n; ++i) patterns *= k;
      for (int p = 0; p < patterns; ++p) {
        std::vector<int> labels;
        std::vector<int> counts(static_cast<size_t>(k), 0);
        int code = p;
        for (int r = 0; r < n; ++r) {
          labels.push_back(code % k);
          counts[static_cast<size_t>(code % k)]++;
          code /= k;
        }
        int best = 0;
        for (int cl = 1; cl < k; ++cl)
          if (counts[static_cast<size_t>(cl)] > counts[static_cast<size_t>(best)])
            best = cl;
        bool tied = false;
        for (int cl = 0; cl < k; ++cl)
          if (cl != best &&
              counts[static_cast<size_t>(cl)] == counts[static_cast<size_t>(best)])
            tied = true;
        if (tied) continue;
        std::vector<double> ones(labels.size(), 1.0);
        auto q = teacher::aggregate_onehot(ones, labels, k);
        int arg = static_cast<int>(std::max_element(q.begin(), q.end()) -
                                   q.begin());
        if (arg != best) {
          c.require(false, "majority reduction mismatch");
          break;
        }
      }
    }
  }
  Rng rng(77);
  for (int k = 2; k <= 5; ++k) {
    for (int n = 1; n <= 5; ++n) {
      std::vector<std::vector<double>> dists;
      for (int s = 0; s < n; ++s) {
        if (s + 1 == n) {
          dists.push_back(random_dist(k, rng));  // one soft source
        } else {
          std::vector<double> v(static_cast<size_t>(k), 0.0);
          v[rng.below(static_cast<uint64_t>(k))] = 1.0;
          dists.push_back(std::move(v));
        }
      }
      std::vector<double> zeros(static_cast<size_t>(n), 0.0);
      auto q = teacher::aggregate_sources(zeros, dists, k);
      for (double v : q) {
        c.require(v == 1.0 / k, "all-zero weights not exactly uniform");
      }
    }
  }
  c.finish();
}

// Grid search over the attention weights at step 0.05 recovers the minima
// of the unlabeled entropy objective in both two-source cases and the
// three-source q1=q2!=q3 case.
void entropy_geometry() {
  Criterion c("entropy-geometry");
  auto is = [](double a, double b) { return std::abs(a - b) < 1e-9; };
  {
    std::vector<std::vector<double>> agree{{1, 0}, {1, 0}};
    auto minima = testutil::grid_entropy_minima(agree, 2);
    c.require(minima.size() == 1 && is(minima[0][0], 1.0) && is(minima[0][1], 1.0),
              "agreement minimum not uniquely at (1,1)");
  }
  {
    std::vector<std::vector<double>> disagree{{1, 0}, {0, 1}};
    auto minima = testutil::grid_entropy_minima(disagree, 2);
    bool found10 = false, found01 = false;
    for (const auto& w : minima) {
      if (is(w[0], 1.0) && is(w[1], 0.0)) found10 = true;
      if (is(w[0], 0.0) && is(w[1], 1.0)) found01 = true;
    }
    c.require(minima.size() == 2 && found10 && found01,
              "disagreement minima not exactly {(1,0),(0,1)}");
  }
  {
    std::vector<std::vector<double>> three{{1, 0}, {1, 0}, {0, 1}};
    auto minima = testutil::grid_entropy_minima(three, 2);
    c.require(minima.size() == 1 && is(minima[0][0], 1.0) &&
                  is(minima[0][1], 1.0) && is(minima[0][2], 0.0),
              "three-source minimum not uniquely at (1,1,0)");
  }
  c.finish(1.0);
}

// Analytic gradients of both training objectives vs central finite
// differences over 20+ seeds of small models.
void gradient_checks() {
  Criterion c("gradient-checks");
  Rng rng(4242);
  double worst_student = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    auto m = student::StudentModel::init(32, 8, 8, 3, student::Activation::tanh,
                                         9000 + static_cast<uint64_t>(seed));
    std::vector<FeatureVec> xl, xu;
    std::vector<int> yl;
    student::PseudoLabelSet pseudo;
    for (int i = 0; i < 3; ++i) {
      FeatureVec fv;
      fv.dim = 32;
      for (int j = 0; j < 32; ++j)
        if (rng.uniform() < 0.3) fv.items.push_back({j, rng.uniform(-1.0, 1.0)});
      xl.push_back(fv);
      yl.push_back(static_cast<int>(rng.below(3)));
    }
    for (int i = 0; i < 4; ++i) {
      FeatureVec fv;
      fv.dim = 32;
      for (int j = 0; j < 32; ++j)
        if (rng.uniform() < 0.3) fv.items.push_back({j, rng.uniform(-1.0, 1.0)});
      xu.push_back(fv);
      pseudo.rows.push_back(random_dist(3, rng));
    }
    student::LabeledView lv{xl, yl};
    student::SoftView uv{xu, &pseudo};
    auto grad = student::StudentGrad::zeros_like(m);
    student::training_loss_and_grad(m, lv, uv, 0.8, &grad);
    auto loss = [&] { return student::training_loss_and_grad(m, lv, uv, 0.8, nullptr); };
    auto res = testutil::finite_diff_check(student::parameter_blocks(m),
                                           student::parameter_blocks(grad), loss);
    worst_student = std::max(worst_student, res.max_rel_err);
    c.require(res.n_params == 363, "student FD did not cover every parameter");
  }
  c.require(worst_student <= 1e-4,
            "student objective gradient rel err " + std::to_string(worst_student));

  double worst_teacher = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    const int k = 3;
    auto t = teacher::RanTeacher::init(4, 8, 6, k,
                                       7700 + static_cast<uint64_t>(seed));
    std::vector<std::vector<double>> hiddens, posteriors;
    std::vector<std::vector<rules::FiringMatrix::Entry>> fired;
    for (int i = 0; i < 6; ++i) {
      std::vector<double> h(6);
      for (auto& v : h) v = rng.uniform(-1.0, 1.0);
      hiddens.push_back(std::move(h));
      posteriors.push_back(random_dist(k, rng));
      std::vector<rules::FiringMatrix::Entry> e;
      for (int j = 0; j < 4; ++j)
        if (rng.uniform() < 0.5)
          e.push_back({j, static_cast<int32_t>(rng.below(k))});
      fired.push_back(std::move(e));
    }
    std::vector<teacher::RanInstance> labeled, unlabeled;
    for (int i = 0; i < 6; ++i) {
      teacher::RanInstance inst;
      inst.hidden = hiddens[static_cast<size_t>(i)];
      inst.student_posterior = posteriors[static_cast<size_t>(i)];
      inst.fired = fired[static_cast<size_t>(i)];
      if (i < 3) {
        inst.gold = static_cast<int>(rng.below(k));
        labeled.push_back(inst);
      } else {
        unlabeled.push_back(inst);
      }
    }
    auto grad = teacher::RanGrad::zeros_like(t);
    teacher::ran_loss_and_grad(t, labeled, unlabeled, 1.0, true, &grad);
    auto loss = [&] {
      return teacher::ran_loss_and_grad(t, labeled, unlabeled, 1.0, true, nullptr);
    };
    auto res = testutil::finite_diff_check(teacher::parameter_blocks(t),
                                           teacher::parameter_blocks(grad), loss);
    worst_teacher = std::max(worst_teacher, res.max_rel_err);
    c.require(res.n_params == 168, "teacher FD did not cover every parameter");
  }
  c.require(worst_teacher <= 1e-4,
            "teacher objective gradient rel err " + std::to_string(worst_teacher));
  c.finish(30.0);
}

// overlap_with_student(true) == rule coverage, exactly, plus the
// TREC-shaped 46% -> 95% fixture.
void overlap_identity() {
  Criterion c("overlap-identity");
  Rng rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    rules::FiringMatrix m;
    m.k = 3;
    m.n_rules = 6;
    m.n_instances = 1 + rng.below(60);
    for (size_t i = 0; i < m.n_instances; ++i) {
      std::vector<rules::FiringMatrix::Entry> row;
      size_t fires = rng.below(5);
      for (size_t r = 0; r < fires; ++r)
        row.push_back({static_cast<int32_t>(r), static_cast<int32_t>(rng.below(3))});
      m.rows.push_back(std::move(row));
    }
    auto cs = rules::coverage_stats(m);
    c.require(selftrain::overlap_with_student(m, true) == cs.coverage,
              "overlap-with-student != coverage");
    c.require(selftrain::overlap_with_student(m, false) == cs.overlap,
              "rules-only overlap mismatch");
  }
  rules::FiringMatrix trec;
  trec.k = 6;
  trec.n_rules = 68;
  trec.n_instances = 100;
  for (int i = 0; i < 46; ++i)
    trec.rows.push_back({{0, 0}, {1, 1}});
  for (int i = 0; i < 49; ++i)
    trec.rows.push_back({{0, 0}});
  for (int i = 0; i < 5; ++i) trec.rows.push_back({});
  double without = selftrain::overlap_with_student(trec, false);
  double with = selftrain::overlap_with_student(trec, true);
  c.require(std::abs(without - 0.46) < 1e-12, "fixture rules-only overlap != 46%");
  c.require(std::abs(with - 0.95) < 1e-12, "fixture overlap+student != 95%");
  c.require(std::abs((with - without) - 0.49) < 1e-12, "+49-point jump missing");
  c.finish();
}

// Frozen training configuration for the synthetic benchmark. Hard
// pseudo-labels pair with the sparse hashed featurizer; the remaining knobs
// were fixed after the baseline calibration runs.
selftrain::TrainConfig benchmark_config() {
  selftrain::TrainConfig cfg;
  cfg.feat.dim = 8192;
  cfg.student_h1 = 64;
  cfg.student_h2 = 64;
  cfg.teacher_d = 32;
  cfg.pseudo_epochs = 15;
  cfg.finetune_epochs = 30;
  cfg.teacher_entropy_epochs = 10;
  cfg.teacher_ce_epochs = 30;
  cfg.max_iterations = 5;
  cfg.iteration_patience = 3;
  cfg.pseudo_kind = student::PseudoKind::hard;
  return cfg;
}

struct BenchmarkData {
  synth::SynthData data;
  std::vector<rules::CompiledRule> compiled;
};

BenchmarkData make_benchmark() {
  synth::SynthSpec spec;  // K=4, 20 rules, acc in [0.6,0.9], coverage 0.15,
  spec.seed = 0;          // |D_L|=100, |D_U|=5000
  BenchmarkData b{synth::generate(spec), {}};
  for (const auto& rs : b.data.rules)
    b.compiled.push_back(rules::compile_rule(rs, b.data.labels));
  return b;
}

// Synthetic end-to-end: the teacher beats majority voting by >=5 points and
// the labeled-only baseline, and improves on the iteration-0 student in at
// least 4 of 5 seeds.
void synthetic_end_to_end(const BenchmarkData& b) {
  Criterion c("synthetic-end-to-end");
  auto cfg = benchmark_config();

  std::vector<double> astra_test, majority_test, labeled_test;
  int improved = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    selftrain::TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    auto res = selftrain::run_astra(b.data.bundle, b.data.labels, b.compiled,
                                    run_cfg);
    astra_test.push_back(res.metrics.final_test.value_or(0.0));
    const auto& last = res.metrics.iters.back();
    const auto& first = res.metrics.iters.front();
    if (last.teacher_test && first.student_test &&
        *last.teacher_test >= *first.student_test)
      ++improved;

    auto mv = selftrain::run_majority(b.data.bundle, b.data.labels, b.compiled,
                                      run_cfg);
    majority_test.push_back(mv.metrics.final_test.value_or(0.0));

    selftrain::TrainConfig lo_cfg = run_cfg;
    lo_cfg.max_iterations = 0;
    auto lo = selftrain::run_astra(b.data.bundle, b.data.labels, b.compiled,
                                   lo_cfg);
    labeled_test.push_back(lo.metrics.final_test.value_or(0.0));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double astra_mean = mean(astra_test);
  const double majority_mean = mean(majority_test);
  const double labeled_mean = mean(labeled_test);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "astra %.3f majority %.3f labeled-only %.3f improved %d/5",
                astra_mean, majority_mean, labeled_mean, improved);
  c.detail = "";
  c.require(astra_mean >= majority_mean + 0.05,
            std::string("margin over majority < 5 points (") + buf + ")");
  c.require(astra_mean > labeled_mean,
            std::string("does not beat labeled-only (") + buf + ")");
  c.require(improved >= 4,
            std::string("teacher beat iteration-0 student in only ") +
                std::to_string(improved) + "/5 seeds");
  if (c.ok) c.detail = buf;
  c.finish(300.0);
}

// Sparsity direction: between rule fractions 0.1 and 1.0 the accuracy drop
// of the teacher is smaller than majority voting's drop (medians over 3
// repeats).
void sparsity_direction(const BenchmarkData& b) {
  Criterion c("sparsity-direction");
  auto cfg = benchmark_config();
  cfg.seed = 0;
  auto result = eval::sparsity_sweep(b.data.bundle, b.data.labels, b.data.rules,
                                     {0.1, 1.0}, 3, cfg, 1);
  auto median_of = [&](double fraction, const std::string& method) {
    std::vector<double> vals;
    for (const auto& row : result.rows) {
      if (row.fraction == fraction && row.method == method)
        vals.push_back(row.value);
    }
    std::sort(vals.begin(), vals.end());
    return vals[vals.size() / 2];
  };
  const double mv_drop = median_of(1.0, "majority") - median_of(0.1, "majority");
  const double astra_drop = median_of(1.0, "astra") - median_of(0.1, "astra");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "astra drop %.3f vs majority drop %.3f",
                astra_drop, mv_drop);
  c.require(astra_drop < mv_drop, buf);
  if (c.ok) c.detail = buf;
  c.finish();
}

// Optional real-data check; needs a locally prepared YouTube dataset dir
// (labels.json, rules.json, and the jsonl partitions).
void youtube_optional() {
  const char* dir = std::getenv("ASTRA_YOUTUBE_DIR");
  if (!dir) {
    std::printf("[SKIP] %-22s        -- optional; set ASTRA_YOUTUBE_DIR to run\n",
                "youtube-real-data");
    return;
  }
  Criterion c("youtube-real-data");
  auto labels = corpus::LabelSpace::from_json_file(std::string(dir) + "/labels.json");
  auto specs = rules::load_rules_json(std::string(dir) + "/rules.json", labels);
  std::vector<rules::CompiledRule> compiled;
  for (const auto& rs : specs) compiled.push_back(rules::compile_rule(rs, labels));

  auto cfg = benchmark_config();
  cfg.n_labeled = 100;
  cfg.n_validation = 150;
  std::vector<double> astra_vals, mv_vals;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    selftrain::TrainConfig run_cfg = cfg;
    run_cfg.seed = seed;
    corpus::DatasetBundle bundle;
    auto pool = corpus::load_jsonl(std::string(dir) + "/pool.jsonl", labels);
    bundle = corpus::make_splits(pool, seed, run_cfg.n_labeled, run_cfg.n_validation);
    bundle.test = corpus::load_jsonl(std::string(dir) + "/test.jsonl", labels);
    auto res = selftrain::run_astra(bundle, labels, compiled, run_cfg);
    astra_vals.push_back(res.metrics.final_test.value_or(0.0));
    auto mv = selftrain::run_majority(bundle, labels, compiled, run_cfg);
    mv_vals.push_back(mv.metrics.final_test.value_or(0.0));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  c.require(mean(astra_vals) >= 0.90, "teacher accuracy below 90%");
  c.require(std::abs(mean(mv_vals) - 0.822) <= 0.015 * 2,
            "majority far from 82.2%");
  c.finish();
}

}  // namespace

int main() {
  std::printf("astra acceptance suite\n");
  aggregation_invariants();
  limit_cases();
  entropy_geometry();
  gradient_checks();
  overlap_identity();
  auto benchmark = make_benchmark();
  synthetic_end_to_end(benchmark);
  sparsity_direction(benchmark);
  youtube_optional();
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
