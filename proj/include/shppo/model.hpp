#pragma once

// The four parameter sets of one run plus the per-step execution pipeline
// (latent -> decoders -> actor -> action) shared by rollouts and evaluation.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "shppo/checkpoint.hpp"
#include "shppo/config.hpp"
#include "shppo/nets.hpp"

namespace shppo {

NetConfig make_net_config(const NetsConfig& nets, const TeamConfig& team);

struct Model {
  Algo algo = Algo::shppo;
  NetsConfig nets;
  TeamConfig team;
  NetConfig net;
  ParamStore actor;
  ParamStore latent;
  ParamStore critic;
  ParamStore inference;

  bool hete() const { return algo == Algo::shppo; }
  /// Parameters one agent evaluates at execution time (actor, decoders, LatentNet).
  std::size_t per_agent_parameter_count() const;
};

Model make_model(Algo algo, const NetsConfig& nets, const TeamConfig& team, std::uint64_t seed);

/// Thrown when a checkpoint's observation layout does not fit the target team.
class LayoutError : public std::runtime_error {
 public:
  explicit LayoutError(const std::vector<std::string>& diff);
  std::vector<std::string> diff;
};

/// "full" carries all four nets; "transfer" only the actor side.
Checkpoint model_checkpoint(const Model& model, bool full, nlohmann::json meta = {});
/// Rebuilds a model for `team` (the trained team when unset). Critic and
/// InferenceNet stay empty for transfer checkpoints.
Model model_from_checkpoint(const Checkpoint& ckpt, std::optional<TeamConfig> team = {});

struct ExecOptions {
  bool greedy = false;
  bool zero_latent_inputs = false;
  bool zero_latents = false;
  /// Copy the per-row HeteLayer weights into the result.
  bool keep_hete = false;
};

/// One row per living agent.
struct ExecBatch {
  Tensor obs;    // (R, obs_dim)
  Tensor h_prev; // (R, H)
  Tensor mask;   // (R, A)
  Tensor noise;  // (R, L); unused in greedy mode
};

struct ExecResult {
  std::vector<int> actions;
  std::vector<double> log_probs;
  Tensor l, mu, sigma;  // (R, L); empty without the latent pipeline
  Tensor h_next;        // (R, H)
  Tensor hete_w, hete_b;
};

/// Forward pass with frozen parameters. Row r samples its action from
/// `row_rngs[r]`, so rows from different streams stay independent.
ExecResult execute_step(const Model& model, const ExecBatch& batch, std::span<Rng* const> row_rngs,
                        const ExecOptions& options);

struct CriticEval {
  std::vector<double> values;
  Tensor h_next;
};

CriticEval critic_values(const Model& model, const Tensor& global_obs, const Tensor& h_prev);

}  // namespace shppo
