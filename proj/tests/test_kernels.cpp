#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slt/kernels.hpp"
#include "slt/rng.hpp"
#include "slt/tensor.hpp"

using namespace slt;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian();
  return t;
}

}  // namespace

TEST_CASE("serial and parallel matmul agree bit for bit") {
  Rng rng(7);
  for (int iter = 0; iter < 10; ++iter) {
    const int64_t m = rng.uniform_int(1, 17);
    const int64_t k = rng.uniform_int(1, 17);
    const int64_t n = rng.uniform_int(1, 17);
    Tensor x = random_tensor({m, k}, rng);
    Tensor w = random_tensor({k, n}, rng);
    Tensor ys({m, n}), yp({m, n});
    kern::serial::matmul(x.data(), w.data(), ys.data(), m, k, n);
    kern::parallel::matmul(x.data(), w.data(), yp.data(), m, k, n);
    CHECK(ys == yp);

    Tensor wn = random_tensor({n, k}, rng);
    Tensor zs({m, n}), zp({m, n});
    kern::serial::matmul_nt(x.data(), wn.data(), zs.data(), m, k, n);
    kern::parallel::matmul_nt(x.data(), wn.data(), zp.data(), m, k, n);
    CHECK(zs == zp);

    Tensor g = random_tensor({m, n}, rng);
    Tensor ts({k, n}), tp({k, n});
    kern::serial::matmul_tn(x.data(), g.data(), ts.data(), m, k, n);
    kern::parallel::matmul_tn(x.data(), g.data(), tp.data(), m, k, n);
    CHECK(ts == tp);
  }
}

TEST_CASE("matmul against a hand-rolled triple loop") {
  Rng rng(11);
  const int64_t m = 5, k = 4, n = 6;
  Tensor x = random_tensor({m, k}, rng);
  Tensor w = random_tensor({k, n}, rng);
  Tensor y({m, n});
  kern::matmul(x.data(), w.data(), y.data(), m, k, n);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += x.at(i, p) * w.at(p, j);
      CHECK(y.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax kernels agree across backends and normalize") {
  Rng rng(3);
  Tensor x = random_tensor({9, 7}, rng);
  Tensor ys({9, 7}), yp({9, 7});
  kern::serial::softmax_rows(x.data(), ys.data(), 9, 7);
  kern::parallel::softmax_rows(x.data(), yp.data(), 9, 7);
  CHECK(ys == yp);
  for (int64_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < 7; ++j) s += ys.at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor ls({9, 7}), lp({9, 7});
  kern::serial::log_softmax_rows(x.data(), ls.data(), 9, 7);
  kern::parallel::log_softmax_rows(x.data(), lp.data(), 9, 7);
  CHECK(ls == lp);
}

TEST_CASE("conv1d backends agree, including gradients") {
  Rng rng(5);
  const int64_t t = 16, din = 3, kernel = 5, stride = 2, dout = 4;
  const int64_t tout = kern::conv1d_out_len(t, kernel, stride);
  CHECK(tout == 6);
  Tensor x = random_tensor({t, din}, rng);
  Tensor w = random_tensor({kernel * din, dout}, rng);
  Tensor b = random_tensor({dout}, rng);
  Tensor ys({tout, dout}), yp({tout, dout});
  kern::serial::conv1d(x.data(), w.data(), b.data(), ys.data(), t, din, kernel,
                       stride, dout);
  kern::parallel::conv1d(x.data(), w.data(), b.data(), yp.data(), t, din,
                         kernel, stride, dout);
  CHECK(ys == yp);

  Tensor gy = random_tensor({tout, dout}, rng);
  Tensor gx_s({t, din}), gw_s({kernel * din, dout}), gb_s({dout});
  Tensor gx_p({t, din}), gw_p({kernel * din, dout}), gb_p({dout});
  kern::serial::conv1d_backward(x.data(), w.data(), gy.data(), gx_s.data(),
                                gw_s.data(), gb_s.data(), t, din, kernel,
                                stride, dout);
  kern::parallel::conv1d_backward(x.data(), w.data(), gy.data(), gx_p.data(),
                                  gw_p.data(), gb_p.data(), t, din, kernel,
                                  stride, dout);
  CHECK(gx_s == gx_p);
  CHECK(gw_s == gw_p);
  CHECK(gb_s == gb_p);
}

TEST_CASE("backend dispatch is switchable") {
  const auto saved = kern::backend();
  kern::set_backend(kern::Backend::serial);
  CHECK(kern::backend() == kern::Backend::serial);
  if (kern::parallel_available()) {
    kern::set_backend(kern::Backend::parallel);
    CHECK(kern::backend() == kern::Backend::parallel);
  }
  kern::set_backend(saved);
}
