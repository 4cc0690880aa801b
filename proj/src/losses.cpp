#include "shppo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "shppo/ops.hpp"

namespace shppo {
namespace {

void require_numel(const char* what, const Tensor& t, std::size_t n) {
  if (t.numel() != n) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) +
                         " samples, got " + shape_string(t.shape()));
  }
}

std::vector<std::size_t> resolve_groups(std::span<const std::size_t> groups, std::size_t rows,
                                        const char* what) {
  if (groups.empty()) return {rows};
  const std::size_t total = std::accumulate(groups.begin(), groups.end(), std::size_t{0});
  if (total != rows) {
    throw DimensionError(std::string(what) + ": groups cover " + std::to_string(total) +
                         " rows, latents have " + std::to_string(rows));
  }
  return {groups.begin(), groups.end()};
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct Extremes {
  double lo, hi;
  std::size_t n_lo = 0, n_hi = 0;
  double margin;  // gap to the nearest value that would change min or max
};

Extremes extremes(std::span<const double> x) {
  Extremes e{x[0], x[0], 0, 0, 1e300};
  for (double v : x) {
    e.lo = std::min(e.lo, v);
    e.hi = std::max(e.hi, v);
  }
  double next_lo = 1e300, next_hi = -1e300;
  for (double v : x) {
    if (v == e.lo) ++e.n_lo;
    else next_lo = std::min(next_lo, v);
    if (v == e.hi) ++e.n_hi;
    else next_hi = std::max(next_hi, v);
  }
  if (e.lo == e.hi) {
    e.margin = 0.0;
  } else {
    e.margin = std::min(next_lo - e.lo, e.hi - next_hi);
  }
  return e;
}

}  // namespace

AdvantageBatch gae(std::span<const double> rewards, std::span<const double> values,
                   std::span<const std::uint8_t> dones, double gamma, double lam) {
  const std::size_t T = rewards.size();
  if (values.size() != T + 1 || dones.size() != T) {
    throw DimensionError("gae: " + std::to_string(T) + " rewards need " + std::to_string(T + 1) +
                         " values and " + std::to_string(T) + " done flags, got " +
                         std::to_string(values.size()) + " and " + std::to_string(dones.size()));
  }
  AdvantageBatch out;
  out.advantages.assign(T, 0.0);
  out.returns.assign(T, 0.0);
  out.values.assign(values.begin(), values.end() - 1);
  double next = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * values[i + 1] * live - values[i];
    next = delta + gamma * lam * live * next;
    out.advantages[i] = next;
    out.returns[i] = next + values[i];
  }
  return out;
}

void normalize(std::span<double> x) {
  if (x.empty()) return;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(x.size())), 1e-8);
  for (double& v : x) v = (v - mean) / sd;
}

Var ppo_clip_loss(Var log_prob_new, const Tensor& log_prob_old, const Tensor& advantage,
                  double eps) {
  const std::size_t B = log_prob_new.value().numel();
  require_numel("ppo_clip_loss old log-probs", log_prob_old, B);
  require_numel("ppo_clip_loss advantages", advantage, B);
  if (B == 0) throw ContractError("ppo_clip_loss: empty batch");
  const Tensor& lp = log_prob_new.value();

  // d(loss)/d(log_prob_new) per sample, zero where the clipped branch wins.
  std::vector<double> dlp(B, 0.0);
  double total = 0.0;
  double margin = 1e300;
  for (std::size_t k = 0; k < B; ++k) {
    const double rho = std::exp(lp[k] - log_prob_old[k]);
    const double a = advantage[k];
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps);
    const double u = rho * a, c = clipped * a;
    if (u <= c) {
      total -= u;
      dlp[k] = -u / static_cast<double>(B);
    } else {
      total -= c;
    }
    if (a != 0.0) margin = std::min({margin, std::abs(rho - (1.0 - eps)), std::abs(rho - (1.0 + eps))});
  }
  Tape& tape = *log_prob_new.tape;
  tape.note_kink_distance(margin);
  const std::size_t in = log_prob_new.id;
  return tape.record(Tensor::vector({total / static_cast<double>(B)}), {in},
                     [in, dlp = std::move(dlp)](Tape& t, std::size_t self) {
                       const double g = t.grad(self)[0];
                       Tensor& gx = t.grad(in);
                       for (std::size_t k = 0; k < dlp.size(); ++k) gx[k] += g * dlp[k];
                     });
}

Var happo_actor_loss(Var log_prob_new, const Tensor& log_prob_old, const Tensor& factor,
                     double eps) {
  return ppo_clip_loss(log_prob_new, log_prob_old, factor, eps);
}

void refresh_factor(std::span<double> factor, std::span<const double> log_prob_new,
                    std::span<const double> log_prob_old) {
  if (log_prob_new.size() != factor.size() || log_prob_old.size() != factor.size()) {
    throw DimensionError("refresh_factor: length mismatch");
  }
  for (std::size_t k = 0; k < factor.size(); ++k)
    factor[k] *= std::exp(log_prob_new[k] - log_prob_old[k]);
}

Var critic_loss(Var v_pred, const Tensor& target) {
  require_numel("critic_loss targets", target, v_pred.value().numel());
  Tensor neg = target.reshaped(v_pred.shape());
  for (auto& v : neg.span()) v = -v;
  Var diff = ops::add_constant(v_pred, neg);
  return ops::mean(ops::mul(diff, diff));
}

Var latent_value_loss(Var v_inference) { return ops::mean(v_inference); }

double gaussian_entropy(std::span<const double> sigma) {
  const double per_dim = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  double h = 0.0;
  for (double s : sigma) {
    if (!(s > 0.0)) throw ContractError("entropy: sigma must be positive, got " + std::to_string(s));
    h += std::log(s) + per_dim;
  }
  return h;
}

Var entropy_loss(Var sigma, std::span<const std::size_t> groups) {
  const Tensor& s = sigma.value();
  const std::size_t B = s.rows(), L = s.cols();
  const auto sizes = resolve_groups(groups, B, "entropy_loss");
  std::vector<double> weight(B, 0.0);
  std::size_t used = 0;
  for (std::size_t n : sizes) used += n > 0 ? 1 : 0;
  if (used == 0) throw ContractError("entropy_loss: no distributions");
  std::size_t r = 0;
  for (std::size_t n : sizes)
    for (std::size_t i = 0; i < n; ++i, ++r) weight[r] = 1.0 / (static_cast<double>(used * n));

  double total = 0.0;
  for (std::size_t row = 0; row < B; ++row) total += weight[row] * gaussian_entropy(s.row(row));
  const std::size_t in = sigma.id;
  return sigma.tape->record(Tensor::vector({total}), {in},
                            [in, L, weight = std::move(weight)](Tape& t, std::size_t self) {
                              const double g = t.grad(self)[0];
                              const Tensor& sv = t.value(in);
                              Tensor& gs = t.grad(in);
                              for (std::size_t row = 0; row < weight.size(); ++row)
                                for (std::size_t j = 0; j < L; ++j)
                                  gs[row * L + j] += g * weight[row] / sv[row * L + j];
                            });
}

std::vector<double> pairwise_cosine_distances(const Tensor& latents) {
  const std::size_t n = latents.rows();
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double ni = norm(latents.row(i)), nj = norm(latents.row(j));
      if (ni == 0.0 || nj == 0.0) {
        out.push_back(1.0);
        continue;
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < latents.cols(); ++k) dot += latents.at(i, k) * latents.at(j, k);
      out.push_back(1.0 - dot / (ni * nj));
    }
  return out;
}

std::vector<double> min_max_normalize(std::span<const double> x) {
  if (x.empty()) return {};
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - *lo) / (*hi - *lo + 1e-12);
  return out;
}

DistanceLoss distance_loss(Var latents, std::span<const std::size_t> groups) {
  const Tensor& l = latents.value();
  const std::size_t B = l.rows(), L = l.cols();
  const auto sizes = resolve_groups(groups, B, "distance_loss");
  std::size_t used = 0;
  for (std::size_t n : sizes) used += n >= 2 ? 1 : 0;

  // d(loss)/d(latents), accumulated group by group.
  Tensor grad({B, L});
  double total = 0.0, raw_total = 0.0, margin = 1e300;
  std::size_t start = 0;
  for (std::size_t n : sizes) {
    const std::size_t first = start;
    start += n;
    if (n < 2) continue;
    if (n == 2) {
      // Both ordered pairs share one distance, so Norm is identically zero.
      raw_total += pairwise_cosine_distances(
          Tensor({2, L}, std::vector<double>(l.row(first).begin(), l.row(first + 1).end())))[0];
      continue;
    }
    const std::size_t P = n * (n - 1);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = norm(l.row(first + i));
    std::vector<double> d;
    std::vector<double> cosine;
    d.reserve(P);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (norms[i] == 0.0 || norms[j] == 0.0) {
          d.push_back(1.0);
          cosine.push_back(0.0);
          continue;
        }
        double dot = 0.0;
        for (std::size_t k = 0; k < L; ++k) dot += l.at(first + i, k) * l.at(first + j, k);
        const double c = dot / (norms[i] * norms[j]);
        d.push_back(1.0 - c);
        cosine.push_back(c);
      }
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(P);
    const Extremes e = extremes(d);
    margin = std::min(margin, e.margin);
    const double D = e.hi - e.lo + 1e-12;
    total += (mean - e.lo) / D;
    raw_total += mean;

    // L_g = (mean - lo) / D with lo, hi split evenly over tied positions.
    const double scale = 1.0 / static_cast<double>(used);
    const double excess = (mean - e.lo) / (D * D);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double gd = 1.0 / (static_cast<double>(P) * D);
        if (d[k] == e.lo) gd += -1.0 / (static_cast<double>(e.n_lo) * D) + excess / static_cast<double>(e.n_lo);
        if (d[k] == e.hi) gd -= excess / static_cast<double>(e.n_hi);
        gd *= scale;
        if (norms[i] != 0.0 && norms[j] != 0.0 && gd != 0.0) {
          // d = 1 - cos(a, b); dcos/da = b/(|a||b|) - cos a/|a|^2.
          const double c = cosine[k];
          const auto a = l.row(first + i);
          const auto b = l.row(first + j);
          for (std::size_t q = 0; q < L; ++q) {
            grad.at(first + i, q) -= gd * (b[q] / (norms[i] * norms[j]) - c * a[q] / (norms[i] * norms[i]));
            grad.at(first + j, q) -= gd * (a[q] / (norms[i] * norms[j]) - c * b[q] / (norms[j] * norms[j]));
          }
        }
        ++k;
      }
  }
  Tape& tape = *latents.tape;
  tape.note_kink_distance(margin);
  const double value = used > 0 ? total / static_cast<double>(used) : 0.0;
  const std::size_t in = latents.id;
  Var loss = tape.record(Tensor::vector({value}), {in},
                         [in, grad = std::move(grad)](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0];
                           Tensor& gl = t.grad(in);
                           for (std::size_t q = 0; q < grad.numel(); ++q) gl[q] += g * grad[q];
                         });
  return {loss, used > 0 ? raw_total / static_cast<double>(used) : 0.0};
}

Var latent_total_loss(Var l_v, Var l_e, Var l_d, double lambda_e, double lambda_d) {
  return ops::sub(ops::add(ops::scale(l_v, -1.0), ops::scale(l_e, lambda_e)),
                  ops::scale(l_d, lambda_d));
}

Var inference_loss(Var v_inference, const Tensor& returns) {
  return critic_loss(v_inference, returns);
}

}  // namespace shppo
