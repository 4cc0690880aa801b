#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "shppo/param_store.hpp"

namespace shppo {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name, so
/// one optimizer instance serves one ParamStore.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Applies one update from the accumulated grads, then zeroes them.
  /// Throws ContractError naming the first parameter with a non-finite grad
  /// (no parameter is modified in that case).
  void step(ParamStore& params);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr);

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Central-difference gradient estimate (f(p+h) - f(p-h)) / 2h for every scalar
/// in `params`. `f` must be deterministic; each perturbed value is restored
/// bit-exactly before the next one. Throws ContractError if f is non-finite.
std::map<std::string, Tensor> finite_diff_grad(const std::function<double(ParamStore&)>& f,
                                               ParamStore& params, double h = 1e-5);

/// ||a - n|| / max(||a||, ||n||, 1e-10) over the concatenation of all entries.
double gradient_relative_error(const ParamStore& analytic,
                               const std::map<std::string, Tensor>& numeric);

}  // namespace shppo
