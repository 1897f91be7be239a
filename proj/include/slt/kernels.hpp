#pragma once

#include <cstdint>

namespace slt::kern {

// Two interchangeable backends. `serial` is the reference implementation;
// `parallel` runs the same loops under OpenMP with every output element
// owned by exactly one thread, so both backends produce bit-identical
// results and all determinism contracts hold either way.
enum class Backend { serial, parallel };

Backend backend();
void set_backend(Backend b);
bool parallel_available();
int thread_count();

// y[m x n] = x[m x k] . w[k x n]
void matmul(const double* x, const double* w, double* y, int64_t m, int64_t k,
            int64_t n);
// y[m x n] = x[m x k] . w[n x k]^T
void matmul_nt(const double* x, const double* w, double* y, int64_t m,
               int64_t k, int64_t n);
// y[k x n] = x[m x k]^T . g[m x n]
void matmul_tn(const double* x, const double* g, double* y, int64_t m,
               int64_t k, int64_t n);

// y[r] += b for every row r of y[m x n].
void add_row_bias(double* y, const double* b, int64_t m, int64_t n);

// Row-wise stable softmax / log-softmax of x[m x n] into y.
void softmax_rows(const double* x, double* y, int64_t m, int64_t n);
void log_softmax_rows(const double* x, double* y, int64_t m, int64_t n);

// 1-D temporal convolution. x[t x d_in], w[(kernel*d_in) x d_out],
// b[d_out], y[t_out x d_out] with t_out = (t - kernel) / stride + 1.
void conv1d(const double* x, const double* w, const double* b, double* y,
            int64_t t, int64_t d_in, int64_t kernel, int64_t stride,
            int64_t d_out);
// Gradients of conv1d; any of gx/gw/gb may be null. Buffers are accumulated
// into, not overwritten.
void conv1d_backward(const double* x, const double* w, const double* gy,
                     double* gx, double* gw, double* gb, int64_t t,
                     int64_t d_in, int64_t kernel, int64_t stride,
                     int64_t d_out);

int64_t conv1d_out_len(int64_t t, int64_t kernel, int64_t stride);

namespace serial {
void matmul(const double* x, const double* w, double* y, int64_t m, int64_t k,
            int64_t n);
void matmul_nt(const double* x, const double* w, double* y, int64_t m,
               int64_t k, int64_t n);
void matmul_tn(const double* x, const double* g, double* y, int64_t m,
               int64_t k, int64_t n);
void add_row_bias(double* y, const double* b, int64_t m, int64_t n);
void softmax_rows(const double* x, double* y, int64_t m, int64_t n);
void log_softmax_rows(const double* x, double* y, int64_t m, int64_t n);
void conv1d(const double* x, const double* w, const double* b, double* y,
            int64_t t, int64_t d_in, int64_t kernel, int64_t stride,
            int64_t d_out);
void conv1d_backward(const double* x, const double* w, const double* gy,
                     double* gx, double* gw, double* gb, int64_t t,
                     int64_t d_in, int64_t kernel, int64_t stride,
                     int64_t d_out);
}  // namespace serial

namespace parallel {
void matmul(const double* x, const double* w, double* y, int64_t m, int64_t k,
            int64_t n);
void matmul_nt(const double* x, const double* w, double* y, int64_t m,
               int64_t k, int64_t n);
void matmul_tn(const double* x, const double* g, double* y, int64_t m,
               int64_t k, int64_t n);
void add_row_bias(double* y, const double* b, int64_t m, int64_t n);
void softmax_rows(const double* x, double* y, int64_t m, int64_t n);
void log_softmax_rows(const double* x, double* y, int64_t m, int64_t n);
void conv1d(const double* x, const double* w, const double* b, double* y,
            int64_t t, int64_t d_in, int64_t kernel, int64_t stride,
            int64_t d_out);
void conv1d_backward(const double* x, const double* w, const double* gy,
                     double* gx, double* gw, double* gb, int64_t t,
                     int64_t d_in, int64_t kernel, int64_t stride,
                     int64_t d_out);
}  // namespace parallel

}  // namespace slt::kern
