#include "slt/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include "slt/error.hpp"

namespace slt::kern {

namespace {
Backend g_backend = parallel_available() ? Backend::parallel : Backend::serial;
}

bool parallel_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Backend backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::parallel && !parallel_available()) {
    throw ValidationError("parallel kernel backend not built in");
  }
  g_backend = b;
}

#define SLT_DISPATCH(fn, ...)            \
  do {                                   \
    if (g_backend == Backend::parallel)  \
      parallel::fn(__VA_ARGS__);         \
    else                                 \
      serial::fn(__VA_ARGS__);           \
  } while (0)

void matmul(const double* x, const double* w, double* y, int64_t m, int64_t k,
            int64_t n) {
  SLT_DISPATCH(matmul, x, w, y, m, k, n);
}

void matmul_nt(const double* x, const double* w, double* y, int64_t m,
               int64_t k, int64_t n) {
  SLT_DISPATCH(matmul_nt, x, w, y, m, k, n);
}

void matmul_tn(const double* x, const double* g, double* y, int64_t m,
               int64_t k, int64_t n) {
  SLT_DISPATCH(matmul_tn, x, g, y, m, k, n);
}

void add_row_bias(double* y, const double* b, int64_t m, int64_t n) {
  SLT_DISPATCH(add_row_bias, y, b, m, n);
}

void softmax_rows(const double* x, double* y, int64_t m, int64_t n) {
  SLT_DISPATCH(softmax_rows, x, y, m, n);
}

void log_softmax_rows(const double* x, double* y, int64_t m, int64_t n) {
  SLT_DISPATCH(log_softmax_rows, x, y, m, n);
}

void conv1d(const double* x, const double* w, const double* b, double* y,
            int64_t t, int64_t d_in, int64_t kernel, int64_t stride,
            int64_t d_out) {
  SLT_DISPATCH(conv1d, x, w, b, y, t, d_in, kernel, stride, d_out);
}

void conv1d_backward(const double* x, const double* w, const double* gy,
                     double* gx, double* gw, double* gb, int64_t t,
                     int64_t d_in, int64_t kernel, int64_t stride,
                     int64_t d_out) {
  SLT_DISPATCH(conv1d_backward, x, w, gy, gx, gw, gb, t, d_in, kernel, stride,
               d_out);
}

#undef SLT_DISPATCH

int64_t conv1d_out_len(int64_t t, int64_t kernel, int64_t stride) {
  if (t < kernel) throw ValidationError("sequence shorter than conv kernel");
  return (t - kernel) / stride + 1;
}

}  // namespace slt::kern
