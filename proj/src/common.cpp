#include "astra/common.hpp"

#include <cmath>

namespace astra {

double FeatureVec::l2_norm() const {
  double s = 0.0;
  for (const auto& [idx, v] : items) s += v * v;
  return std::sqrt(s);
}

void FeatureVec::l2_normalize() {
  double norm = l2_norm();
  if (norm == 0.0) return;
  for (auto& [idx, v] : items) v /= norm;
}

std::vector<double> FeatureVec::to_dense() const {
  std::vector<double> out(static_cast<size_t>(dim), 0.0);
  for (const auto& [idx, v] : items) out[static_cast<size_t>(idx)] = v;
  return out;
}

}  // namespace astra
