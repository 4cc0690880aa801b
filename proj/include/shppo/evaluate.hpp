#pragma once

// Evaluation episodes, the heterogeneity probes, the random-policy floor, and
// zero-shot transfer across team sizes.

#include <iosfwd>
#include <span>
#include <vector>

#include "shppo/model.hpp"

namespace shppo {

/// Counters for inter-individual and temporal heterogeneity.
struct HeteroProbe {
  /// Steps with at least two living agents, and those where some pair of
  /// agents carries HeteLayer weights differing by more than 1e-6.
  std::size_t multi_agent_steps = 0;
  std::size_t differing_steps = 0;
  /// Agent-episodes, and those whose latent at t = 0 differs (norm > 1e-6)
  /// from the latent at the agent's final step.
  std::size_t agent_episodes = 0;
  std::size_t temporal_changes = 0;

  double inter_fraction() const;
  double temporal_fraction() const;
};

struct EvalOptions {
  int episodes = 40;
  bool greedy = true;
  std::uint64_t seed = 0;
  bool zero_latent_inputs = false;
  bool zero_latents = false;
  HeteroProbe* probe = nullptr;
  /// Latent rows of the first `latent_episodes` episodes go here when set.
  std::vector<LatentRecord>* latents = nullptr;
  int latent_episodes = 4;
  /// Episode index offset used in latent records.
  std::uint64_t episode_offset = 0;
  /// One JSON line per step when set.
  std::ostream* trace = nullptr;
};

struct EvalResult {
  int episodes = 0;
  double win_rate = 0.0;
  double mean_return = 0.0;
  std::vector<double> returns;
  std::vector<bool> wins;
  /// Mean pairwise latent distance over steps with two or more living agents.
  double latent_spread = 0.0;
};

/// Fresh episodes seeded from `options.seed`. Throws ContractError when
/// episodes < 1.
EvalResult evaluate(const Model& model, const EvalOptions& options);

/// Uniformly random valid actions, on the same episode seeds as evaluate().
EvalResult evaluate_random(const TeamConfig& team, int episodes, std::uint64_t seed);

struct TransferRow {
  TeamConfig team;
  double win_rate = 0.0;
  double win_std = 0.0;
  double mean_return = 0.0;
  std::size_t per_agent_parameters = 0;
};

/// Loads the actor side of `ckpt` for every team and evaluates it over
/// `seeds` evaluation seeds (options.seed, options.seed + 1, ...). Throws
/// LayoutError before evaluating anything if any team's layout differs.
std::vector<TransferRow> transfer_eval(const Checkpoint& ckpt, std::span<const TeamConfig> teams,
                                       const EvalOptions& options, int seeds = 1);

void write_transfer_csv(std::ostream& os, std::span<const TransferRow> rows);
void write_transfer_table(std::ostream& os, std::span<const TransferRow> rows);

}  // namespace shppo
