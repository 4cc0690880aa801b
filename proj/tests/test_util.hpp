#pragma once

#include "shppo/param_store.hpp"
#include "shppo/random.hpp"
#include "shppo/tensor.hpp"

namespace shppo::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.uniform(lo, hi);
  return t;
}

/// Overwrites every parameter (biases included) with U(-scale, scale) draws.
inline void randomize(ParamStore& ps, Rng& rng, double scale = 0.5) {
  for (auto& [_, e] : ps)
    for (auto& v : e.value.span()) v = rng.uniform(-scale, scale);
}

inline Tensor all_valid_mask(std::size_t rows, std::size_t actions) {
  return Tensor({rows, actions}, 1.0);
}

}  // namespace shppo::testing
