#include <algorithm>
#include <cmath>

#include "slt/kernels.hpp"

namespace slt::kern::serial {

void matmul(const double* x, const double* w, double* y, int64_t m, int64_t k,
            int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* yi = y + i * n;
    std::fill(yi, yi + n, 0.0);
    const double* xi = x + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double xv = xi[p];
      const double* wp = w + p * n;
      for (int64_t j = 0; j < n; ++j) yi[j] += xv * wp[j];
    }
  }
}

void matmul_nt(const double* x, const double* w, double* y, int64_t m,
               int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* xi = x + i * k;
    double* yi = y + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* wj = w + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += xi[p] * wj[p];
      yi[j] = acc;
    }
  }
}

void matmul_tn(const double* x, const double* g, double* y, int64_t m,
               int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    double* yp = y + p * n;
    std::fill(yp, yp + n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
      const double xv = x[i * k + p];
      const double* gi = g + i * n;
      for (int64_t j = 0; j < n; ++j) yp[j] += xv * gi[j];
    }
  }
}

void add_row_bias(double* y, const double* b, int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* yi = y + i * n;
    for (int64_t j = 0; j < n; ++j) yi[j] += b[j];
  }
}

static void softmax_row(const double* x, double* y, int64_t n, bool log_form) {
  double mx = x[0];
  for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (int64_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
  if (log_form) {
    const double lz = std::log(z);
    for (int64_t j = 0; j < n; ++j) y[j] = x[j] - mx - lz;
  } else {
    for (int64_t j = 0; j < n; ++j) y[j] = std::exp(x[j] - mx) / z;
  }
}

void softmax_rows(const double* x, double* y, int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i) softmax_row(x + i * n, y + i * n, n, false);
}

void log_softmax_rows(const double* x, double* y, int64_t m, int64_t n) {
  for (int64_t i = 0; i < m; ++i) softmax_row(x + i * n, y + i * n, n, true);
}

void conv1d(const double* x, const double* w, const double* b, double* y,
            int64_t t, int64_t d_in, int64_t kernel, int64_t stride,
            int64_t d_out) {
  const int64_t t_out = conv1d_out_len(t, kernel, stride);
  for (int64_t to = 0; to < t_out; ++to) {
    double* yo = y + to * d_out;
    for (int64_t o = 0; o < d_out; ++o) yo[o] = b[o];
    for (int64_t j = 0; j < kernel; ++j) {
      const double* xt = x + (to * stride + j) * d_in;
      for (int64_t c = 0; c < d_in; ++c) {
        const double xv = xt[c];
        const double* wrow = w + (j * d_in + c) * d_out;
        for (int64_t o = 0; o < d_out; ++o) yo[o] += xv * wrow[o];
      }
    }
  }
}

void conv1d_backward(const double* x, const double* w, const double* gy,
                     double* gx, double* gw, double* gb, int64_t t,
                     int64_t d_in, int64_t kernel, int64_t stride,
                     int64_t d_out) {
  const int64_t t_out = conv1d_out_len(t, kernel, stride);
  if (gb != nullptr) {
    for (int64_t o = 0; o < d_out; ++o) {
      double acc = 0.0;
      for (int64_t to = 0; to < t_out; ++to) acc += gy[to * d_out + o];
      gb[o] += acc;
    }
  }
  if (gw != nullptr) {
    for (int64_t j = 0; j < kernel; ++j) {
      for (int64_t c = 0; c < d_in; ++c) {
        double* gwrow = gw + (j * d_in + c) * d_out;
        for (int64_t to = 0; to < t_out; ++to) {
          const double xv = x[(to * stride + j) * d_in + c];
          const double* gyo = gy + to * d_out;
          for (int64_t o = 0; o < d_out; ++o) gwrow[o] += xv * gyo[o];
        }
      }
    }
  }
  if (gx != nullptr) {
    for (int64_t ti = 0; ti < t; ++ti) {
      double* gxt = gx + ti * d_in;
      // output positions whose window covers input frame ti
      for (int64_t j = 0; j < kernel; ++j) {
        const int64_t num = ti - j;
        if (num < 0 || num % stride != 0) continue;
        const int64_t to = num / stride;
        if (to >= t_out) continue;
        const double* gyo = gy + to * d_out;
        for (int64_t c = 0; c < d_in; ++c) {
          const double* wrow = w + (j * d_in + c) * d_out;
          double acc = 0.0;
          for (int64_t o = 0; o < d_out; ++o) acc += wrow[o] * gyo[o];
          gxt[c] += acc;
        }
      }
    }
  }
}

}  // namespace slt::kern::serial
