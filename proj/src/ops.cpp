#include "shppo/ops.hpp"

#include <algorithm>
#include <cmath>

#include "shppo/kernels.hpp"

namespace shppo::ops {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a (rows, cols) matrix, got " +
                         shape_string(a.shape()));
  }
}

// Elementwise op; `deriv(x, y)` returns dy/dx.
template <typename F, typename D>
Var unary(Var a, F f, D deriv) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id;
  return tape.record(std::move(y), {ia}, [ia, deriv](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var linear(Var x, Var w, Var b) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (wv.rank() != 2 || xv.rank() > 2 || xv.cols() != wv.cols()) {
    throw DimensionError("linear: W " + shape_string(wv.shape()) + " incompatible with x " +
                         shape_string(xv.shape()));
  }
  const std::size_t out = wv.rows();
  const std::size_t in = wv.cols();
  if (bv.numel() != out) {
    throw DimensionError("linear: bias " + shape_string(bv.shape()) + " incompatible with W " +
                         shape_string(wv.shape()));
  }
  const std::size_t batch = xv.rows();
  Tensor y = xv.rank() == 1 ? Tensor({out}) : Tensor({batch, out});
  for (std::size_t r = 0; r < batch; ++r) std::copy(bv.data(), bv.data() + out, y.data() + r * out);
  kernels::gemm_nt(xv.span(), wv.span(), y.span(), batch, out, in);

  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return tape.record(std::move(y), {ix, iw, ib},
                     [ix, iw, ib, batch, out, in](Tape& t, std::size_t self) {
                       const Tensor& gy = t.grad(self);
                       if (t.requires_grad(ix)) {
                         kernels::gemm_nn(gy.span(), t.value(iw).span(), t.grad(ix).span(),
                                          batch, in, out);
                       }
                       if (t.requires_grad(iw)) {
                         kernels::gemm_tn(gy.span(), t.value(ix).span(), t.grad(iw).span(),
                                          out, in, batch);
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad(ib);
                         for (std::size_t r = 0; r < batch; ++r)
                           for (std::size_t o = 0; o < out; ++o) gb[o] += gy[r * out + o];
                       }
                     });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      Tensor& g = t.grad(in);
      for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& g = t.grad(ia);
      for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& g = t.grad(ib);
      for (std::size_t i = 0; i < gy.numel(); ++i) g[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (t.requires_grad(ia)) {
      const Tensor& bv = t.value(ib);
      Tensor& g = t.grad(ia);
      for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const Tensor& av = t.value(ia);
      Tensor& g = t.grad(ib);
      for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_constant(Var a, const Tensor& c) {
  require_same_shape("add_constant", a.value(), c);
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += c[i];
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(ia);
    for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i];
  });
}

Var relu(Var a) {
  double margin = 1e300;
  for (double x : a.value().span()) margin = std::min(margin, std::abs(x));
  a.tape->note_kink_distance(margin);
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  // log(1 + e^x) evaluated without overflow.
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank2("concat_cols", p.value());
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    total += p.value().cols();
  }
  Tensor y({rows, total});
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.data() + r * c, v.data() + (r + 1) * c, y.data() + r * total + off);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += c;
  }
  return parts.front().tape->record(
      std::move(y), ids, [ids, offsets, rows, total](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& g = t.grad(ids[k]);
          const std::size_t c = g.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) g[r * c + j] += gy[r * total + offsets[k] + j];
        }
      });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  const Tensor& v = a.value();
  require_rank2("slice_cols", v);
  if (len == 0 || start + len > v.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of range for " +
                         shape_string(v.shape()));
  }
  const std::size_t rows = v.rows(), cols = v.cols();
  Tensor y({rows, len});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(v.data() + r * cols + start, v.data() + r * cols + start + len, y.data() + r * len);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia},
                        [ia, rows, cols, start, len](Tape& t, std::size_t self) {
                          const Tensor& gy = t.grad(self);
                          Tensor& g = t.grad(ia);
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < len; ++j)
                              g[r * cols + start + j] += gy[r * len + j];
                        });
}

Var sum(Var a) {
  const Tensor& v = a.value();
  double s = 0.0;
  for (double x : v.span()) s += x;
  const std::size_t ia = a.id;
  return a.tape->record(Tensor::vector({s}), {ia}, [ia](Tape& t, std::size_t self) {
    const double gy = t.grad(self)[0];
    Tensor& g = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var hete_linear(Var w, Var x, Var b) {
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require_rank2("hete_linear", wv);
  require_rank2("hete_linear", xv);
  require_rank2("hete_linear", bv);
  const std::size_t batch = xv.rows(), n = xv.cols(), m = bv.cols();
  if (wv.rows() != batch || bv.rows() != batch || wv.cols() != m * n) {
    throw DimensionError("hete_linear: w " + shape_string(wv.shape()) + ", x " +
                         shape_string(xv.shape()) + ", b " + shape_string(bv.shape()));
  }
  Tensor y = bv;
  kernels::batched_matvec(wv.span(), xv.span(), y.span(), batch, m, n);
  const std::size_t iw = w.id, ix = x.id, ib = b.id;
  return w.tape->record(std::move(y), {iw, ix, ib},
                        [iw, ix, ib, batch, m, n](Tape& t, std::size_t self) {
                          const Tensor& gy = t.grad(self);
                          if (t.requires_grad(iw)) {
                            kernels::batched_outer(gy.span(), t.value(ix).span(),
                                                   t.grad(iw).span(), batch, m, n);
                          }
                          if (t.requires_grad(ix)) {
                            kernels::batched_matvec_t(t.value(iw).span(), gy.span(),
                                                      t.grad(ix).span(), batch, m, n);
                          }
                          if (t.requires_grad(ib)) {
                            Tensor& g = t.grad(ib);
                            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
                          }
                        });
}

Var log_softmax(Var logits) {
  const Tensor& v = logits.value();
  require_rank2("log_softmax", v);
  const std::size_t rows = v.rows(), cols = v.cols();
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = v.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = x[j] - lse;
  }
  const std::size_t ia = logits.id;
  return logits.tape->record(std::move(y), {ia}, [ia, rows, cols](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += gy[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        g[r * cols + j] += gy[r * cols + j] - std::exp(y[r * cols + j]) * s;
    }
  });
}

Var gather_cols(Var a, std::span<const int> index) {
  const Tensor& v = a.value();
  require_rank2("gather_cols", v);
  const std::size_t rows = v.rows(), cols = v.cols();
  if (index.size() != rows) {
    throw DimensionError("gather_cols: " + std::to_string(index.size()) + " indices for " +
                         shape_string(v.shape()));
  }
  std::vector<int> idx(index.begin(), index.end());
  Tensor y({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw ContractError("gather_cols: index " + std::to_string(idx[r]) + " out of range");
    }
    y[r] = v[r * cols + idx[r]];
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, idx, cols](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) g[r * cols + idx[r]] += gy[r];
  });
}

Var scatter_rows(Var x, std::span<const long> source, std::size_t per_row) {
  const Tensor& v = x.value();
  require_rank2("scatter_rows", v);
  if (per_row == 0 || source.size() % per_row != 0) {
    throw DimensionError("scatter_rows: " + std::to_string(source.size()) +
                         " slots not divisible into rows of " + std::to_string(per_row));
  }
  const std::size_t width = v.cols();
  const std::size_t out_rows = source.size() / per_row;
  std::vector<long> src(source.begin(), source.end());
  Tensor y({out_rows, per_row * width});
  for (std::size_t s = 0; s < src.size(); ++s) {
    if (src[s] < 0) continue;
    if (static_cast<std::size_t>(src[s]) >= v.rows()) {
      throw ContractError("scatter_rows: source row " + std::to_string(src[s]) + " out of range");
    }
    std::copy(v.data() + src[s] * width, v.data() + (src[s] + 1) * width, y.data() + s * width);
  }
  const std::size_t ia = x.id;
  return x.tape->record(std::move(y), {ia}, [ia, src, width](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(ia);
    for (std::size_t s = 0; s < src.size(); ++s) {
      if (src[s] < 0) continue;
      for (std::size_t j = 0; j < width; ++j) g[src[s] * width + j] += gy[s * width + j];
    }
  });
}

}  // namespace shppo::ops
