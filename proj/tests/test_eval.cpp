#include "astra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

using namespace astra;

TEST_CASE("accuracy basics") {
  std::vector<int> golds{0, 1, 0, 0};
  CHECK(eval::accuracy(golds, golds) == 1.0);
  std::vector<int> wrong{1, 0, 1, 1};
  CHECK(eval::accuracy(wrong, golds) == 0.0);
  std::vector<int> preds{0, 1, 1, 0};
  CHECK(eval::accuracy(preds, golds) == doctest::Approx(0.75));
  std::vector<int> short_preds{0};
  CHECK_THROWS_AS(eval::accuracy(short_preds, golds), Error);
  CHECK_THROWS_AS(eval::accuracy({}, {}), Error);
}

TEST_CASE("macro F1: hand-computed cases and the absent-class convention") {
  // perfect binary predictions
  std::vector<int> golds{0, 1, 0, 1};
  CHECK(eval::macro_f1(golds, golds, 2) == doctest::Approx(1.0));

  // preds all class 0, golds half/half: F1_0 = 2/3, F1_1 = 0
  std::vector<int> zeros{0, 0, 0, 0};
  CHECK(eval::macro_f1(zeros, golds, 2) == doctest::Approx(1.0 / 3));

  // single exact match with K=2: matched class 1.0, absent class 0
  std::vector<int> one_pred{1};
  std::vector<int> one_gold{1};
  CHECK(eval::macro_f1(one_pred, one_gold, 2) == doctest::Approx(0.5));
}

TEST_CASE("macro F1 equals exhaustive confusion-matrix computation") {
  // brute force over all pred/gold assignments on 4 elements, K=3
  const int k = 3, n = 4;
  int total = 1;
  for (int i = 0; i < 2 * n; ++i) total *= k;
  for (int code = 0; code < total; ++code) {
    int c = code;
    std::vector<int> preds(n), golds(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = c % k;
      c /= k;
    }
    for (int i = 0; i < n; ++i) {
      golds[i] = c % k;
      c /= k;
    }
    double expected = 0.0;
    for (int cls = 0; cls < k; ++cls) {
      int tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        if (preds[i] == cls && golds[i] == cls) tp++;
        if (preds[i] == cls && golds[i] != cls) fp++;
        if (preds[i] != cls && golds[i] == cls) fn++;
      }
      double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
      double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
      expected += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    }
    expected /= k;
    CHECK(eval::macro_f1(preds, golds, k) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("macro F1 is invariant under class relabeling") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 4, n = 30;
    std::vector<int> preds(n), golds(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.below(k));
      golds[i] = static_cast<int>(rng.below(k));
    }
    std::vector<int> perm{0, 1, 2, 3};
    rng.shuffle(perm);
    std::vector<int> preds_p(n), golds_p(n);
    for (int i = 0; i < n; ++i) {
      preds_p[i] = perm[preds[i]];
      golds_p[i] = perm[golds[i]];
    }
    CHECK(eval::macro_f1(preds, golds, k) ==
          doctest::Approx(eval::macro_f1(preds_p, golds_p, k)).epsilon(1e-12));
  }
}

TEST_CASE("binary F1 targets the positive class only") {
  std::vector<int> golds{1, 1, 0, 0};
  std::vector<int> preds{1, 0, 1, 0};
  // tp=1 fp=1 fn=1 -> P=R=0.5 -> F1=0.5
  CHECK(eval::binary_f1(preds, golds, 1) == doctest::Approx(0.5));
}

TEST_CASE("metric report mean and population stddev") {
  auto r = eval::MetricReport::from_values("accuracy", {0.8, 0.9, 1.0});
  CHECK(r.mean == doctest::Approx(0.9));
  CHECK(r.stddev == doctest::Approx(std::sqrt((0.01 + 0.0 + 0.01) / 3)));
  CHECK(r.per_seed.size() == 3);
}
