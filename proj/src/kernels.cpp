#include "astra/kernels.hpp"

#include <atomic>
#include <cstring>
#include <stdexcept>

#include "astra/common.hpp"

namespace astra::kernels {

namespace {

double dot_scalar(const double* x, const double* y, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double* y, double a, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double* x, double a, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] *= a;
}

const Ops kScalarOps{"scalar", dot_scalar, axpy_scalar, scale_scalar};

}  // namespace

const Ops& scalar_ops() { return kScalarOps; }

#if defined(ASTRA_HAVE_AVX2)
const Ops& avx2_ops();  // kernels_avx2.cpp
bool cpu_supports_avx2();
#else
bool avx2_available() { return false; }
#endif

#if defined(ASTRA_HAVE_AVX2)
bool avx2_available() { return cpu_supports_avx2(); }
#endif

namespace {

std::atomic<Backend> g_backend{Backend::automatic};

const Ops* resolve(Backend b) {
#if defined(ASTRA_HAVE_AVX2)
  if (b == Backend::avx2) return &avx2_ops();
  if (b == Backend::automatic && avx2_available()) return &avx2_ops();
#endif
  return &kScalarOps;
}

std::atomic<const Ops*> g_active{nullptr};

}  // namespace

void select_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available())
    throw_usage("kernels: avx2 backend requested but not available on this CPU");
  g_backend.store(b);
  g_active.store(resolve(b));
}

Backend selected_backend() { return g_backend.load(); }

const Ops& active() {
  const Ops* ops = g_active.load(std::memory_order_acquire);
  if (!ops) {
    ops = resolve(g_backend.load());
    g_active.store(ops, std::memory_order_release);
  }
  return *ops;
}

std::string backend_name() { return active().name; }

Backend backend_from_string(const std::string& s) {
  if (s == "auto" || s == "automatic") return Backend::automatic;
  if (s == "scalar") return Backend::scalar;
  if (s == "avx2") return Backend::avx2;
  throw_usage("kernels: unknown backend '" + s + "' (auto|scalar|avx2)");
}

void matvec(const double* w, size_t rows, size_t cols, const double* x,
            double* y) {
  const Ops& ops = active();
  for (size_t r = 0; r < rows; ++r) y[r] = ops.dot(w + r * cols, x, cols);
}

void matvec_add(const double* w, size_t rows, size_t cols, const double* x,
                const double* b, double* y) {
  const Ops& ops = active();
  for (size_t r = 0; r < rows; ++r) y[r] = b[r] + ops.dot(w + r * cols, x, cols);
}

void matvec_t(const double* w, size_t rows, size_t cols, const double* v,
              double* y) {
  std::memset(y, 0, cols * sizeof(double));
  const Ops& ops = active();
  for (size_t r = 0; r < rows; ++r) {
    if (v[r] != 0.0) ops.axpy(y, v[r], w + r * cols, cols);
  }
}

void ger(double* w, size_t rows, size_t cols, const double* u,
         const double* v) {
  const Ops& ops = active();
  for (size_t r = 0; r < rows; ++r) {
    if (u[r] != 0.0) ops.axpy(w + r * cols, u[r], v, cols);
  }
}

}  // namespace astra::kernels
