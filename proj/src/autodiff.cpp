#include "slt/autodiff.hpp"

#include <cmath>

#include "slt/error.hpp"
#include "slt/kernels.hpp"

namespace slt::ad {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          a.shape_str() + " vs " + b.shape_str());
  }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Var Tape::emit(Tensor value, std::function<void(Tape&, int32_t)> bw,
               bool track) {
  Node n;
  n.grad = Tensor::zeros(value.shape());
  n.value = std::move(value);
  n.backward = std::move(bw);
  n.track = track;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return emit(std::move(value), nullptr, true); }

Var Tape::constant(Tensor value) {
  return emit(std::move(value), nullptr, false);
}

void Tape::backward(Var root) {
  if (val(root).size() != 1) {
    throw ValidationError("backward root must be scalar");
  }
  node(root.id).grad.fill(1.0);
  for (int32_t i = root.id; i >= 0; --i) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a), val(b), "add");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  for (int64_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return emit(std::move(y), [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a), val(b), "sub");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  for (int64_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return emit(std::move(y), [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(val(a), val(b), "mul");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return emit(std::move(y), [a, b](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& av = t.val(a);
    const Tensor& bv2 = t.val(b);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv2[i];
      gb[i] += g[i] * av[i];
    }
  });
}

Var Tape::scale(Var a, double s) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= s;
  return emit(std::move(y), [a, s](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ValidationError("matmul: shapes " + av.shape_str() + " . " +
                          bv.shape_str() + " do not conform");
  }
  const int64_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor y({m, n});
  kern::matmul(av.data(), bv.data(), y.data(), m, k, n);
  return emit(std::move(y), [a, b, m, k, n](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& av2 = t.val(a);
    const Tensor& bv2 = t.val(b);
    Tensor ga({m, k});
    kern::matmul_nt(g.data(), bv2.data(), ga.data(), m, n, k);
    Tensor gb({k, n});
    kern::matmul_tn(av2.data(), g.data(), gb.data(), m, k, n);
    Tensor& gac = t.grad(a);
    for (int64_t i = 0; i < ga.size(); ++i) gac[i] += ga[i];
    Tensor& gbc = t.grad(b);
    for (int64_t i = 0; i < gb.size(); ++i) gbc[i] += gb[i];
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols()) {
    throw ValidationError("matmul_nt: shapes " + av.shape_str() + " . " +
                          bv.shape_str() + "^T do not conform");
  }
  const int64_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor y({m, n});
  kern::matmul_nt(av.data(), bv.data(), y.data(), m, k, n);
  return emit(std::move(y), [a, b, m, k, n](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;   // [m x n]
    const Tensor& av2 = t.val(a);          // [m x k]
    const Tensor& bv2 = t.val(b);          // [n x k]
    Tensor ga({m, k});
    kern::matmul(g.data(), bv2.data(), ga.data(), m, n, k);
    Tensor gb({n, k});
    kern::matmul_tn(g.data(), av2.data(), gb.data(), m, n, k);
    Tensor& gac = t.grad(a);
    for (int64_t i = 0; i < ga.size(); ++i) gac[i] += ga[i];
    Tensor& gbc = t.grad(b);
    for (int64_t i = 0; i < gb.size(); ++i) gbc[i] += gb[i];
  });
}

Var Tape::add_row(Var x, Var bias) {
  const Tensor& xv = val(x);
  const Tensor& bv = val(bias);
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.cols()) {
    throw ValidationError("add_row: bias shape " + bv.shape_str() +
                          " does not match " + xv.shape_str());
  }
  Tensor y = xv;
  kern::add_row_bias(y.data(), bv.data(), y.rows(), y.cols());
  return emit(std::move(y), [x, bias](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& gx = t.grad(x);
    Tensor& gb = t.grad(bias);
    const int64_t m = g.rows(), n = g.cols();
    for (int64_t i = 0; i < m; ++i) {
      const double* gi = g.row(i);
      double* gxi = gx.row(i);
      for (int64_t j = 0; j < n; ++j) {
        gxi[j] += gi[j];
        gb[j] += gi[j];
      }
    }
  });
}

Var Tape::mul_col(Var x, Var col) {
  const Tensor& xv = val(x);
  const Tensor& cv = val(col);
  if (xv.rank() != 2 || cv.rank() != 2 || cv.cols() != 1 ||
      cv.rows() != xv.rows()) {
    throw ValidationError("mul_col: column shape " + cv.shape_str() +
                          " does not match " + xv.shape_str());
  }
  Tensor y = xv;
  for (int64_t i = 0; i < y.rows(); ++i) {
    const double c = cv[i];
    double* yi = y.row(i);
    for (int64_t j = 0; j < y.cols(); ++j) yi[j] *= c;
  }
  return emit(std::move(y), [x, col](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& xv2 = t.val(x);
    const Tensor& cv2 = t.val(col);
    Tensor& gx = t.grad(x);
    Tensor& gc = t.grad(col);
    for (int64_t i = 0; i < g.rows(); ++i) {
      const double c = cv2[i];
      const double* gi = g.row(i);
      const double* xi = xv2.row(i);
      double* gxi = gx.row(i);
      double acc = 0.0;
      for (int64_t j = 0; j < g.cols(); ++j) {
        gxi[j] += gi[j] * c;
        acc += gi[j] * xi[j];
      }
      gc[i] += acc;
    }
  });
}

Var Tape::sigmoid(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) {
    const double x = y[i];
    y[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
  }
  return emit(std::move(y), [a](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y2 = t.val(Var{self});
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * y2[i] * (1.0 - y2[i]);
  });
}

Var Tape::exp_elem(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] = std::exp(y[i]);
  return emit(std::move(y), [a](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& y2 = t.val(Var{self});
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y2[i];
  });
}

Var Tape::gelu(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) {
    const double x = y[i];
    y[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return emit(std::move(y), [a](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& xv = t.val(a);
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < g.size(); ++i) {
      const double x = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      ga[i] += g[i] * (cdf + x * pdf);
    }
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& av = val(a);
  if (!av.all_finite()) throw NumericalError("softmax: non-finite input");
  Tensor y(av.shape());
  const int64_t n = av.dim(av.rank() - 1);
  const int64_t m = av.size() / n;
  kern::softmax_rows(av.data(), y.data(), m, n);
  return emit(std::move(y), [a, m, n](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& p = t.val(Var{self});
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < m; ++i) {
      const double* gi = g.data() + i * n;
      const double* pi = p.data() + i * n;
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += gi[j] * pi[j];
      double* gai = ga.data() + i * n;
      for (int64_t j = 0; j < n; ++j) gai[j] += pi[j] * (gi[j] - dot);
    }
  });
}

Var Tape::log_softmax_rows(Var a) {
  const Tensor& av = val(a);
  if (!av.all_finite()) throw NumericalError("log_softmax: non-finite input");
  Tensor y(av.shape());
  const int64_t n = av.dim(av.rank() - 1);
  const int64_t m = av.size() / n;
  kern::log_softmax_rows(av.data(), y.data(), m, n);
  return emit(std::move(y), [a, m, n](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& ls = t.val(Var{self});
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < m; ++i) {
      const double* gi = g.data() + i * n;
      const double* li = ls.data() + i * n;
      double gsum = 0.0;
      for (int64_t j = 0; j < n; ++j) gsum += gi[j];
      double* gai = ga.data() + i * n;
      for (int64_t j = 0; j < n; ++j) gai[j] += gi[j] - std::exp(li[j]) * gsum;
    }
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = val(x);
  const Tensor& gv = val(gamma);
  const Tensor& bv = val(beta);
  if (xv.rank() != 2 || gv.rank() != 1 || bv.rank() != 1 ||
      gv.dim(0) != xv.cols() || bv.dim(0) != xv.cols()) {
    throw ValidationError("layer_norm: parameter shapes do not match input");
  }
  const int64_t m = xv.rows(), n = xv.cols();
  Tensor y({m, n});
  Tensor xhat({m, n});
  Tensor inv_std({m});
  for (int64_t i = 0; i < m; ++i) {
    const double* xi = xv.row(i);
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    double* xh = xhat.row(i);
    double* yi = y.row(i);
    for (int64_t j = 0; j < n; ++j) {
      xh[j] = (xi[j] - mean) * is;
      yi[j] = xh[j] * gv[j] + bv[j];
    }
  }
  // xhat/inv_std are captured by value in the closure for the backward pass
  return emit(std::move(y), [x, gamma, beta, xhat = std::move(xhat),
                             inv_std = std::move(inv_std), m,
                             n](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& gv2 = t.val(gamma);
    Tensor& gx = t.grad(x);
    Tensor& gg = t.grad(gamma);
    Tensor& gb = t.grad(beta);
    for (int64_t i = 0; i < m; ++i) {
      const double* gi = g.row(i);
      const double* xh = xhat.row(i);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        gg[j] += gi[j] * xh[j];
        gb[j] += gi[j];
        const double dxh = gi[j] * gv2[j];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xh[j];
      }
      double* gxi = gx.row(i);
      const double is = inv_std[i];
      const double inv_n = 1.0 / static_cast<double>(n);
      for (int64_t j = 0; j < n; ++j) {
        const double dxh = gi[j] * gv2[j];
        gxi[j] += is * (dxh - inv_n * sum_dxhat - xh[j] * inv_n * sum_dxhat_xhat);
      }
    }
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
    throw ValidationError("concat_cols: row counts differ");
  }
  const int64_t m = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor y({m, ca + cb});
  for (int64_t i = 0; i < m; ++i) {
    double* yi = y.row(i);
    const double* ai = av.row(i);
    const double* bi = bv.row(i);
    for (int64_t j = 0; j < ca; ++j) yi[j] = ai[j];
    for (int64_t j = 0; j < cb; ++j) yi[ca + j] = bi[j];
  }
  return emit(std::move(y), [a, b, m, ca, cb](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (int64_t i = 0; i < m; ++i) {
      const double* gi = g.row(i);
      double* gai = ga.row(i);
      double* gbi = gb.row(i);
      for (int64_t j = 0; j < ca; ++j) gai[j] += gi[j];
      for (int64_t j = 0; j < cb; ++j) gbi[j] += gi[ca + j];
    }
  });
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
  const Tensor& av = val(a);
  if (av.rank() != 2 || c0 < 0 || c1 > av.cols() || c0 >= c1) {
    throw ValidationError("slice_cols: bad column range");
  }
  const int64_t m = av.rows(), w = c1 - c0;
  Tensor y({m, w});
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = av.row(i);
    double* yi = y.row(i);
    for (int64_t j = 0; j < w; ++j) yi[j] = ai[c0 + j];
  }
  return emit(std::move(y), [a, c0, m, w](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < m; ++i) {
      const double* gi = g.row(i);
      double* gai = ga.row(i);
      for (int64_t j = 0; j < w; ++j) gai[c0 + j] += gi[j];
    }
  });
}

Var Tape::gather_rows(Var a, std::vector<int64_t> idx) {
  const Tensor& av = val(a);
  if (av.rank() != 2) throw ValidationError("gather_rows: rank-2 input only");
  for (int64_t i : idx) {
    if (i < 0 || i >= av.rows())
      throw ValidationError("gather_rows: index out of range");
  }
  const int64_t n = av.cols();
  Tensor y({static_cast<int64_t>(idx.size()), n});
  for (size_t i = 0; i < idx.size(); ++i) {
    const double* src = av.row(idx[i]);
    double* dst = y.row(static_cast<int64_t>(i));
    for (int64_t j = 0; j < n; ++j) dst[j] = src[j];
  }
  return emit(std::move(y),
              [a, idx = std::move(idx), n](Tape& t, int32_t self) {
                const Tensor& g = t.node(self).grad;
                Tensor& ga = t.grad(a);
                for (size_t i = 0; i < idx.size(); ++i) {
                  const double* gi = g.row(static_cast<int64_t>(i));
                  double* gai = ga.row(idx[i]);
                  for (int64_t j = 0; j < n; ++j) gai[j] += gi[j];
                }
              });
}

Var Tape::mean_rows(Var a, int64_t r0, int64_t r1) {
  const Tensor& av = val(a);
  if (av.rank() != 2 || r0 < 0 || r1 > av.rows() || r0 >= r1) {
    throw ValidationError("mean_rows: bad row range");
  }
  const int64_t n = av.cols();
  const double inv = 1.0 / static_cast<double>(r1 - r0);
  Tensor y({1, n});
  for (int64_t i = r0; i < r1; ++i) {
    const double* ai = av.row(i);
    for (int64_t j = 0; j < n; ++j) y[j] += ai[j] * inv;
  }
  return emit(std::move(y), [a, r0, r1, n, inv](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad(a);
    for (int64_t i = r0; i < r1; ++i) {
      double* gai = ga.row(i);
      for (int64_t j = 0; j < n; ++j) gai[j] += g[j] * inv;
    }
  });
}

Var Tape::pick(Var a, int64_t r, int64_t c) {
  const Tensor& av = val(a);
  if (av.rank() != 2 || r < 0 || r >= av.rows() || c < 0 || c >= av.cols()) {
    throw ValidationError("pick: index out of range");
  }
  Tensor y = Tensor::scalar(av.at(r, c));
  return emit(std::move(y), [a, r, c](Tape& t, int32_t self) {
    t.grad(a).at(r, c) += t.node(self).grad[0];
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& av = val(a);
  double s = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) s += av[i];
  return emit(Tensor::scalar(s), [a](Tape& t, int32_t self) {
    const double g = t.node(self).grad[0];
    Tensor& ga = t.grad(a);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::conv1d(Var x, Var w, Var b, int64_t kernel, int64_t stride) {
  const Tensor& xv = val(x);
  const Tensor& wv = val(w);
  const Tensor& bv = val(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1) {
    throw ValidationError("conv1d: bad ranks");
  }
  const int64_t t_in = xv.rows(), d_in = xv.cols(), d_out = wv.cols();
  if (wv.rows() != kernel * d_in || bv.dim(0) != d_out) {
    throw ValidationError("conv1d: weight shape does not match kernel/d_in");
  }
  const int64_t t_out = kern::conv1d_out_len(t_in, kernel, stride);
  Tensor y({t_out, d_out});
  kern::conv1d(xv.data(), wv.data(), bv.data(), y.data(), t_in, d_in, kernel,
               stride, d_out);
  return emit(std::move(y), [x, w, b, kernel, stride, t_in, d_in,
                             d_out](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    kern::conv1d_backward(t.val(x).data(), t.val(w).data(), g.data(),
                          t.grad(x).data(), t.grad(w).data(),
                          t.grad(b).data(), t_in, d_in, kernel, stride, d_out);
  });
}

Var Tape::st_onehot_rows(Var soft) {
  const Tensor& sv = val(soft);
  if (sv.rank() != 2) throw ValidationError("st_onehot_rows: rank-2 only");
  Tensor y({sv.rows(), sv.cols()});
  for (int64_t i = 0; i < sv.rows(); ++i) {
    const double* si = sv.row(i);
    int64_t best = 0;
    for (int64_t j = 1; j < sv.cols(); ++j) {
      if (si[j] > si[best]) best = j;
    }
    y.at(i, best) = 1.0;
  }
  return emit(std::move(y), [soft](Tape& t, int32_t self) {
    const Tensor& g = t.node(self).grad;
    Tensor& gs = t.grad(soft);
    for (int64_t i = 0; i < g.size(); ++i) gs[i] += g[i];
  });
}

Var Tape::scalar_with_grad(Var parent, double value, Tensor grad_wrt_parent) {
  check_same_shape(val(parent), grad_wrt_parent, "scalar_with_grad");
  return emit(Tensor::scalar(value),
              [parent, gw = std::move(grad_wrt_parent)](Tape& t, int32_t self) {
                const double g = t.node(self).grad[0];
                Tensor& gp = t.grad(parent);
                for (int64_t i = 0; i < gp.size(); ++i) gp[i] += g * gw[i];
              });
}

}  // namespace slt::ad
