#pragma once

#include <cstddef>
#include <string>

// Double-precision inner loops behind the trainers. Scalar reference
// implementations always exist; an AVX2+FMA variant is compiled on x86-64
// and selected at runtime after a CPUID check. The two variants are
// equivalence-tested against each other (results differ only by rounding
// from reassociation).
namespace astra::kernels {

struct Ops {
  const char* name;
  // sum_i x[i]*y[i]
  double (*dot)(const double* x, const double* y, size_t n);
  // y[i] += a*x[i]
  void (*axpy)(double* y, double a, const double* x, size_t n);
  // x[i] *= a
  void (*scale)(double* x, double a, size_t n);
};

const Ops& scalar_ops();
bool avx2_available();          // compiled in AND supported by this CPU

enum class Backend { automatic, scalar, avx2 };

// Process-wide selection. automatic picks AVX2 when available. Selecting
// avx2 on a CPU without it throws. Not thread-safe; call before training.
void select_backend(Backend b);
Backend selected_backend();
const Ops& active();            // resolves automatic at first use
std::string backend_name();

Backend backend_from_string(const std::string& s);  // "auto"|"scalar"|"avx2"

inline double dot(const double* x, const double* y, size_t n) {
  return active().dot(x, y, n);
}
inline void axpy(double* y, double a, const double* x, size_t n) {
  active().axpy(y, a, x, n);
}
inline void scale(double* x, double a, size_t n) { active().scale(x, a, n); }

// Dense helpers built on the dispatched primitives. W is row-major
// rows x cols.
void matvec(const double* w, size_t rows, size_t cols, const double* x,
            double* y);                      // y = W x
void matvec_add(const double* w, size_t rows, size_t cols, const double* x,
                const double* b, double* y); // y = W x + b
void matvec_t(const double* w, size_t rows, size_t cols, const double* v,
              double* y);                    // y = W^T v (y zeroed first)
void ger(double* w, size_t rows, size_t cols, const double* u,
         const double* v);                   // W += u v^T

}  // namespace astra::kernels
