// Benchmark comparing the serial reference kernels against the OpenMP
// backend. Prints one CSV row per (kernel, size, backend) with the median
// wall time over repeated runs.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "slt/kernels.hpp"
#include "slt/rng.hpp"
#include "slt/tensor.hpp"

using namespace slt;

namespace {

double median_ms(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  times.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian();
  return t;
}

void row(const char* kernel, int64_t size, const char* backend, double ms) {
  std::printf("%s,%lld,%s,%.4f\n", kernel, static_cast<long long>(size),
              backend, ms);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 7;
  if (argc > 1) reps = std::atoi(argv[1]);
  Rng rng(42);

  std::printf("kernel,size,backend,median_ms\n");

  for (int64_t n : {64, 128, 256, 512}) {
    Tensor x = random_tensor({n, n}, rng);
    Tensor w = random_tensor({n, n}, rng);
    Tensor y({n, n});
    row("matmul", n, "serial", median_ms([&] {
          kern::serial::matmul(x.data(), w.data(), y.data(), n, n, n);
        }, reps));
    if (kern::parallel_available()) {
      row("matmul", n, "parallel", median_ms([&] {
            kern::parallel::matmul(x.data(), w.data(), y.data(), n, n, n);
          }, reps));
    }
  }

  for (int64_t t : {256, 1024, 4096}) {
    const int64_t k = 64;
    Tensor x = random_tensor({t, k}, rng);
    Tensor y({t, k});
    row("softmax_rows", t, "serial", median_ms([&] {
          kern::serial::softmax_rows(x.data(), y.data(), t, k);
        }, reps));
    if (kern::parallel_available()) {
      row("softmax_rows", t, "parallel", median_ms([&] {
            kern::parallel::softmax_rows(x.data(), y.data(), t, k);
          }, reps));
    }
  }

  for (int64_t t : {256, 1024}) {
    const int64_t din = 32, dout = 64, kernel = 5, stride = 2;
    Tensor x = random_tensor({t, din}, rng);
    Tensor w = random_tensor({kernel * din, dout}, rng);
    Tensor b = random_tensor({dout}, rng);
    Tensor y({kern::conv1d_out_len(t, kernel, stride), dout});
    row("conv1d", t, "serial", median_ms([&] {
          kern::serial::conv1d(x.data(), w.data(), b.data(), y.data(), t, din,
                               kernel, stride, dout);
        }, reps));
    if (kern::parallel_available()) {
      row("conv1d", t, "parallel", median_ms([&] {
            kern::parallel::conv1d(x.data(), w.data(), b.data(), y.data(), t,
                                   din, kernel, stride, dout);
          }, reps));
    }
  }

  std::fprintf(stderr, "threads=%d parallel_available=%d\n",
               kern::thread_count(), kern::parallel_available() ? 1 : 0);
  return 0;
}
