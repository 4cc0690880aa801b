#pragma once

#include <string>

#include "shppo/ops.hpp"
#include "shppo/param_store.hpp"
#include "shppo/random.hpp"

namespace shppo {

/// How a network's parameters enter a tape: trainable (gradients flow into the
/// store) or frozen (read-only constants).
class Params {
 public:
  static Params trainable(ParamStore& store) { return Params(&store, &store); }
  static Params frozen(const ParamStore& store) { return Params(nullptr, &store); }

  Var operator()(Tape& tape, const std::string& name) const {
    return mutable_ ? tape.param(*mutable_, name) : tape.frozen(*store_, name);
  }
  const ParamStore& store() const { return *store_; }
  bool is_trainable() const { return mutable_ != nullptr; }

 private:
  Params(ParamStore* m, const ParamStore* s) : mutable_(m), store_(s) {}
  ParamStore* mutable_;
  const ParamStore* store_;
};

/// Adds `<name>.w` (out, in) drawn U(-1/sqrt(in), 1/sqrt(in)) and a zero `<name>.b`.
void init_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                 Rng& rng);
/// Same shapes, all zeros.
void init_linear_zero(ParamStore& store, const std::string& name, std::size_t in,
                      std::size_t out);

/// Gated recurrent cell parameters, gate order (reset, update, candidate):
/// `<name>.w_ih` (3H, in), `<name>.w_hh` (3H, H), `<name>.b_ih`, `<name>.b_hh` (3H).
/// Input weights fan-in uniform, recurrent blocks orthogonal, biases zero.
void init_gru(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
              Rng& rng);

/// Square orthogonal matrix (QR of a Gaussian draw, sign-corrected).
Tensor orthogonal(std::size_t n, Rng& rng);

Var linear_layer(Tape& tape, const Params& p, const std::string& name, Var x);

/// One GRU update:
///   r = sig(W_ir x + b_ir + W_hr h + b_hr)
///   z = sig(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
Var gru_step(Tape& tape, const Params& p, const std::string& name, Var x, Var h_prev);

}  // namespace shppo
