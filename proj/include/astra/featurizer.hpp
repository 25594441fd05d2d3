#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "astra/common.hpp"
#include "astra/corpus.hpp"

namespace astra::featurizer {

struct FeaturizerSpec {
  enum class Mode { hashed_bow, passthrough };
  enum class Weighting { binary, tf };
  Mode mode = Mode::hashed_bow;
  int dim = 4096;
  Weighting weighting = Weighting::tf;

  void validate() const;
};

// FNV-1a 64-bit. Fixed here (not the platform std::hash) so feature vectors
// and checkpoints reproduce across toolchains.
uint64_t fnv1a64(std::string_view s);

// hashed_bow: lowercased tokens hashed into dim buckets, binary or term
// frequency weights, then L2-normalized (zero vector stays zero).
// passthrough: returns the instance's own features, which must be present
// and of dimension dim.
FeatureVec featurize(const FeaturizerSpec& spec, const corpus::Instance& inst);

}  // namespace astra::featurizer
