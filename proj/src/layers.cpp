#include "shppo/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace shppo {

void init_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w({out, in});
  for (auto& v : w.span()) v = rng.uniform(-bound, bound);
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor({out}));
}

void init_linear_zero(ParamStore& store, const std::string& name, std::size_t in,
                      std::size_t out) {
  store.add(name + ".w", Tensor({out, in}));
  store.add(name + ".b", Tensor({out}));
}

Tensor orthogonal(std::size_t n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.at(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

void init_gru(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
              Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w_ih({3 * hidden, in});
  for (auto& v : w_ih.span()) v = rng.uniform(-bound, bound);
  Tensor w_hh({3 * hidden, hidden});
  for (std::size_t gate = 0; gate < 3; ++gate) {
    const Tensor q = orthogonal(hidden, rng);
    std::copy(q.data(), q.data() + q.numel(), w_hh.data() + gate * hidden * hidden);
  }
  store.add(name + ".w_ih", std::move(w_ih));
  store.add(name + ".w_hh", std::move(w_hh));
  store.add(name + ".b_ih", Tensor({3 * hidden}));
  store.add(name + ".b_hh", Tensor({3 * hidden}));
}

Var linear_layer(Tape& tape, const Params& p, const std::string& name, Var x) {
  return ops::linear(x, p(tape, name + ".w"), p(tape, name + ".b"));
}

Var gru_step(Tape& tape, const Params& p, const std::string& name, Var x, Var h_prev) {
  const Var w_hh = p(tape, name + ".w_hh");
  const std::size_t hidden = w_hh.value().cols();
  if (h_prev.value().cols() != hidden) {
    throw DimensionError("gru_step: hidden state " + shape_string(h_prev.shape()) +
                         " does not match recurrent weight " + shape_string(w_hh.shape()));
  }
  const Var gi = ops::linear(x, p(tape, name + ".w_ih"), p(tape, name + ".b_ih"));
  const Var gh = ops::linear(h_prev, w_hh, p(tape, name + ".b_hh"));
  if (gi.value().rows() != gh.value().rows()) {
    throw DimensionError("gru_step: batch mismatch " + shape_string(x.shape()) + " vs " +
                         shape_string(h_prev.shape()));
  }
  const Var r = ops::sigmoid(
      ops::add(ops::slice_cols(gi, 0, hidden), ops::slice_cols(gh, 0, hidden)));
  const Var z = ops::sigmoid(
      ops::add(ops::slice_cols(gi, hidden, hidden), ops::slice_cols(gh, hidden, hidden)));
  const Var n = ops::tanh(ops::add(ops::slice_cols(gi, 2 * hidden, hidden),
                                   ops::mul(r, ops::slice_cols(gh, 2 * hidden, hidden))));
  // (1 - z) * n + z * h  ==  n + z * (h - n)
  return ops::add(n, ops::mul(z, ops::sub(h_prev, n)));
}

}  // namespace shppo
