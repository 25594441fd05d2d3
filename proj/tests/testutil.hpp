#pragma once

// Shared test oracles. Everything here is deliberately straight-line and
// independent of the library's kernels/backprop so the main implementations
// are checked against naive re-derivations.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "astra/student.hpp"
#include "astra/teacher.hpp"

namespace testutil {

// Central finite differences over every scalar in the given parameter
// blocks. Returns the max relative error against the analytic gradient.
struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t n_params = 0;
};

inline double rel_err(double a, double b) {
  double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

template <typename LossFn>
GradCheckResult finite_diff_check(const std::vector<std::vector<double>*>& params,
                                  const std::vector<std::vector<double>*>& grads,
                                  LossFn loss, double eps = 1e-5) {
  GradCheckResult res;
  for (size_t b = 0; b < params.size(); ++b) {
    auto& block = *params[b];
    auto& gblock = *grads[b];
    for (size_t i = 0; i < block.size(); ++i) {
      const double saved = block[i];
      block[i] = saved + eps;
      const double up = loss();
      block[i] = saved - eps;
      const double down = loss();
      block[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double analytic = gblock[i];
      // skip entries where both are essentially zero
      if (std::abs(fd) < 1e-10 && std::abs(analytic) < 1e-10) {
        ++res.n_params;
        continue;
      }
      res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic, fd));
      ++res.n_params;
    }
  }
  return res;
}

// Naive dense student forward: plain loops, no shared code with the library
// beyond the parameter layout contract (w1 input-major, w2/w3 row-major).
struct NaiveForward {
  std::vector<double> hidden;
  std::vector<double> posterior;
};

inline NaiveForward naive_student_forward(const astra::student::StudentModel& m,
                                          const std::vector<double>& x_dense) {
  auto act = [&](double z) {
    return m.act == astra::student::Activation::tanh ? std::tanh(z)
                                                     : (z > 0 ? z : 0.0);
  };
  std::vector<double> z1(m.h1, 0.0);
  for (int j = 0; j < m.h1; ++j) {
    double s = m.b1[j];
    for (int i = 0; i < m.input_dim; ++i) s += x_dense[i] * m.w1[i * m.h1 + j];
    z1[j] = act(s);
  }
  std::vector<double> z2(m.h2, 0.0);
  for (int j = 0; j < m.h2; ++j) {
    double s = m.b2[j];
    for (int i = 0; i < m.h1; ++i) s += z1[i] * m.w2[j * m.h1 + i];
    z2[j] = act(s);
  }
  std::vector<double> logits(m.k, 0.0);
  for (int j = 0; j < m.k; ++j) {
    double s = m.b3[j];
    for (int i = 0; i < m.h2; ++i) s += z2[i] * m.w3[j * m.h2 + i];
    logits[j] = s;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  NaiveForward out;
  out.hidden = z2;
  for (double v : logits) out.posterior.push_back(std::exp(v - mx) / sum);
  return out;
}

// Naive attention weights: recompute f(h) and the sigmoid dots directly.
inline std::vector<double> naive_attention(const astra::teacher::RanTeacher& t,
                                           const std::vector<double>& h,
                                           const std::vector<int32_t>& applied,
                                           bool include_student) {
  std::vector<double> th(t.d, 0.0);
  for (int j = 0; j < t.d; ++j) {
    double s = t.f1b[j];
    for (int i = 0; i < t.dprime; ++i) s += h[i] * t.f1w[j * t.dprime + i];
    th[j] = std::tanh(s);
  }
  std::vector<double> z(t.d, 0.0);
  for (int j = 0; j < t.d; ++j) {
    double s = t.f2b[j];
    for (int i = 0; i < t.d; ++i) s += th[i] * t.f2w[j * t.d + i];
    z[j] = s;
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> weights;
  for (int32_t r : applied) {
    double dot = 0.0;
    for (int i = 0; i < t.d; ++i) dot += z[i] * t.rule_emb[r * t.d + i];
    weights.push_back(sig(dot));
  }
  if (include_student) {
    double dot = 0.0;
    for (int i = 0; i < t.d; ++i) dot += z[i] * t.student_emb[i];
    weights.push_back(sig(dot));
  }
  return weights;
}

// Entropy of the weighted-source aggregate, the quantity minimized by the
// teacher's unlabeled objective.
inline double source_entropy(const std::vector<double>& weights,
                             const std::vector<std::vector<double>>& dists,
                             int k) {
  const double u = 1.0 / k;
  const double n = static_cast<double>(dists.size());
  double h = 0.0;
  for (int c = 0; c < k; ++c) {
    double q = u;
    for (size_t s = 0; s < dists.size(); ++s)
      q += weights[s] * (dists[s][c] - u) / n;
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

// Exhaustive grid search over source weights on {0, step, ..., 1}^n.
// Returns all grid points attaining the minimum entropy (1e-12 tie window).
inline std::vector<std::vector<double>> grid_entropy_minima(
    const std::vector<std::vector<double>>& dists, int k, double step = 0.05) {
  const int levels = static_cast<int>(std::round(1.0 / step)) + 1;
  const size_t n = dists.size();
  std::vector<int> idx(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> argmins;
  for (;;) {
    std::vector<double> w(n);
    for (size_t i = 0; i < n; ++i) w[i] = idx[i] * step;
    double h = source_entropy(w, dists, k);
    if (h < best - 1e-12) {
      best = h;
      argmins.clear();
      argmins.push_back(w);
    } else if (std::abs(h - best) <= 1e-12) {
      argmins.push_back(w);
    }
    size_t pos = 0;
    while (pos < n && ++idx[pos] == levels) {
      idx[pos] = 0;
      ++pos;
    }
    if (pos == n) break;
  }
  return argmins;
}

inline astra::FeatureVec dense_features(const std::vector<double>& values) {
  astra::FeatureVec fv;
  fv.dim = static_cast<int32_t>(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0) fv.items.push_back({static_cast<int32_t>(i), values[i]});
  }
  return fv;
}

}  // namespace testutil
