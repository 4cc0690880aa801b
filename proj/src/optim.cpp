#include "shppo/optim.hpp"

#include <algorithm>
#include <cmath>

namespace shppo {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ContractError("adam: learning rate must be positive");
}

void Adam::set_lr(double lr) {
  if (!(lr > 0.0)) throw ContractError("adam: learning rate must be positive");
  config_.lr = lr;
}

void Adam::step(ParamStore& params) {
  for (const auto& [name, e] : params) {
    if (!e.grad.all_finite()) throw ContractError("adam: non-finite gradient in parameter " + name);
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (auto& [name, e] : params) {
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) {
      it->second.m = Tensor(e.value.shape());
      it->second.v = Tensor(e.value.shape());
    }
    double* m = it->second.m.data();
    double* v = it->second.v.data();
    double* x = e.value.data();
    const double* g = e.grad.data();
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
  params.zero_grad();
}

std::map<std::string, Tensor> finite_diff_grad(const std::function<double(ParamStore&)>& f,
                                               ParamStore& params, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  std::map<std::string, Tensor> out;
  for (auto& [name, e] : params) {
    Tensor g(e.value.shape());
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double orig = e.value[i];
      e.value[i] = orig + h;
      const double fp = f(params);
      e.value[i] = orig - h;
      const double fm = f(params);
      e.value[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw ContractError("finite_diff_grad: non-finite objective while perturbing " + name);
      }
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double gradient_relative_error(const ParamStore& analytic,
                               const std::map<std::string, Tensor>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (const auto& [name, e] : analytic) {
    auto it = numeric.find(name);
    if (it == numeric.end()) throw ContractError("gradient_relative_error: missing " + name);
    const Tensor& g = it->second;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double d = e.grad[i] - g[i];
      diff += d * d;
      na += e.grad[i] * e.grad[i];
      nn += g[i] * g[i];
    }
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
  return std::sqrt(diff) / denom;
}

}  // namespace shppo
