#include "astra/eval.hpp"

#include <cmath>

namespace astra::eval {

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size())
    throw_data("accuracy: prediction/gold length mismatch");
  if (preds.empty()) throw_data("accuracy: empty inputs");
  size_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

namespace {

double class_f1(std::span<const int> preds, std::span<const int> golds, int c) {
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == c && golds[i] == c) ++tp;
    if (preds[i] == c && golds[i] != c) ++fp;
    if (preds[i] != c && golds[i] == c) ++fn;
  }
  double prec = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double rec = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
  if (prec + rec == 0.0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

}  // namespace

double macro_f1(std::span<const int> preds, std::span<const int> golds, int k) {
  if (preds.size() != golds.size())
    throw_data("macro_f1: prediction/gold length mismatch");
  if (preds.empty()) throw_data("macro_f1: empty inputs");
  double sum = 0.0;
  for (int c = 0; c < k; ++c) sum += class_f1(preds, golds, c);
  return sum / static_cast<double>(k);
}

double binary_f1(std::span<const int> preds, std::span<const int> golds,
                 int positive_class) {
  if (preds.size() != golds.size())
    throw_data("binary_f1: prediction/gold length mismatch");
  if (preds.empty()) throw_data("binary_f1: empty inputs");
  return class_f1(preds, golds, positive_class);
}

MetricReport MetricReport::from_values(std::string metric,
                                       std::vector<double> values) {
  MetricReport r;
  r.metric = std::move(metric);
  r.per_seed = std::move(values);
  if (r.per_seed.empty()) return r;
  double sum = 0.0;
  for (double v : r.per_seed) sum += v;
  r.mean = sum / static_cast<double>(r.per_seed.size());
  double ss = 0.0;
  for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(r.per_seed.size()));
  return r;
}

}  // namespace astra::eval
