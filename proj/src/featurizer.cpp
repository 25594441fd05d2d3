#include "astra/featurizer.hpp"

#include <algorithm>
#include <map>

#include "astra/rules.hpp"

namespace astra::featurizer {

void FeaturizerSpec::validate() const {
  if (dim < 2) throw_data("featurizer: dim must be >= 2");
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

FeatureVec featurize(const FeaturizerSpec& spec, const corpus::Instance& inst) {
  spec.validate();
  if (spec.mode == FeaturizerSpec::Mode::passthrough) {
    if (!inst.features)
      throw_data("featurizer: passthrough mode but instance '" + inst.id +
                 "' carries no features");
    if (inst.features->dim != spec.dim)
      throw_data("featurizer: instance '" + inst.id + "' features have dim " +
                 std::to_string(inst.features->dim) + ", expected " +
                 std::to_string(spec.dim));
    return *inst.features;
  }

  // Ordered map keeps bucket order deterministic independent of token order.
  std::map<int32_t, double> buckets;
  for (const auto& tok : rules::tokenize(inst.text)) {
    auto bucket = static_cast<int32_t>(fnv1a64(tok) % static_cast<uint64_t>(spec.dim));
    if (spec.weighting == FeaturizerSpec::Weighting::binary) {
      buckets[bucket] = 1.0;
    } else {
      buckets[bucket] += 1.0;
    }
  }
  FeatureVec out;
  out.dim = spec.dim;
  out.items.assign(buckets.begin(), buckets.end());
  out.l2_normalize();
  return out;
}

}  // namespace astra::featurizer
