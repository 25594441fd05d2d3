#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace astra {

// Error taxonomy mirrored by the CLI exit codes: usage=2, data=3, train=4.
enum class ErrorKind { usage = 2, data = 3, train = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) {
  throw Error(ErrorKind::usage, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}
[[noreturn]] inline void throw_train(const std::string& msg) {
  throw Error(ErrorKind::train, msg);
}

// splitmix64; used to derive sub-stream seeds so every consumer of
// randomness gets an independent, platform-stable stream.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Deterministic RNG. std::mt19937_64 output is pinned by the standard, but
// the std distributions are not, so bounded ints / uniform reals / shuffles
// are spelled out here and identical on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : s_(mix64(seed == 0 ? 0x5bd1e995ULL : seed)) {}

  uint64_t next_u64() {
    // xorshift128+ style step on splitmix-seeded state; small and stable.
    uint64_t x = s_;
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    s_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased draw from [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_;
};

// Sparse feature vector; indices strictly increasing.
struct FeatureVec {
  int32_t dim = 0;
  std::vector<std::pair<int32_t, double>> items;

  double l2_norm() const;
  void l2_normalize();                // no-op on the zero vector
  std::vector<double> to_dense() const;
};

}  // namespace astra
