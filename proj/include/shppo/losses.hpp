#pragma once

// Training objectives. Tape-valued losses return shape (1) scalars; all
// per-sample inputs are (B, 1) columns or length-B tensors.

#include <cstdint>
#include <span>
#include <vector>

#include "shppo/tape.hpp"

namespace shppo {

struct AdvantageBatch {
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> values;
};

/// Generalized advantage estimation over one stream. `values` carries T + 1
/// entries: the last is the bootstrap for the state after the final step
/// (ignored when that step is terminal).
AdvantageBatch gae(std::span<const double> rewards, std::span<const double> values,
                   std::span<const std::uint8_t> dones, double gamma, double lam);

/// In-place zero-mean, unit-std rescaling (std floored at 1e-8).
void normalize(std::span<double> x);

/// mean_k -min(rho_k A_k, clip(rho_k, 1-eps, 1+eps) A_k), rho = exp(new - old).
/// Ties between the two branches take the unclipped one.
Var ppo_clip_loss(Var log_prob_new, const Tensor& log_prob_old, const Tensor& advantage,
                  double eps);

/// The clipped surrogate with the advantage replaced by the running factor M.
Var happo_actor_loss(Var log_prob_new, const Tensor& log_prob_old, const Tensor& factor,
                     double eps);

/// M <- M * exp(new - old), applied after an agent's update.
void refresh_factor(std::span<double> factor, std::span<const double> log_prob_new,
                    std::span<const double> log_prob_old);

/// mean (v - target)^2.
Var critic_loss(Var v_pred, const Tensor& target);

/// Mean of V_I over the batch; maximized by the LatentNet.
Var latent_value_loss(Var v_inference);

/// Differential entropy of a diagonal Gaussian.
double gaussian_entropy(std::span<const double> sigma);

/// Rows of `sigma` (B, L) are split into consecutive groups of the given
/// sizes (one group per environment step). Returns the mean over groups of the
/// mean per-agent entropy. An empty `groups` means a single group of B rows.
Var entropy_loss(Var sigma, std::span<const std::size_t> groups = {});

struct DistanceLoss {
  Var loss;
  /// Mean raw 1 - cos distance before normalization (the latent_spread metric).
  double raw_mean = 0.0;
};

/// Normalized ordered-pair cosine distance among the latents of each group,
/// averaged over groups with at least two rows. Pairs involving a zero vector
/// count as distance 1. Tied extremes share the min/max gradient evenly.
DistanceLoss distance_loss(Var latents, std::span<const std::size_t> groups = {});

/// Raw ordered-pair distances of one group, for inspection.
std::vector<double> pairwise_cosine_distances(const Tensor& latents);

/// (x - min) / (max - min + 1e-12) elementwise.
std::vector<double> min_max_normalize(std::span<const double> x);

/// -L_v + lambda_e L_e - lambda_d L_d.
Var latent_total_loss(Var l_v, Var l_e, Var l_d, double lambda_e, double lambda_d);

/// mean (V_I - R)^2.
Var inference_loss(Var v_inference, const Tensor& returns);

}  // namespace shppo
