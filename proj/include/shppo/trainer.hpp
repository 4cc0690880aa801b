#pragma once

// On-policy training: rollout streams, the per-step buffer, and the four-phase
// update (actor sweep, critic, LatentNet, InferenceNet).

#include <functional>
#include <vector>

#include "shppo/model.hpp"
#include "shppo/optim.hpp"

namespace shppo {

struct Transition {
  int agent_id = 0;
  std::vector<double> o;
  std::vector<double> h_prev;
  std::vector<double> l;
  std::vector<double> noise;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> mask;
  int action = 0;
  double log_prob_old = 0.0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// One environment step of one stream, with a transition per living agent in
/// ascending agent order.
struct TeamStep {
  int stream = 0;
  std::uint64_t episode = 0;
  int t = 0;
  std::vector<double> o_g;
  std::vector<double> hc_prev;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  bool won = false;
  std::vector<Transition> agents;

  friend bool operator==(const TeamStep&, const TeamStep&) = default;
};

/// Steps are stream-major: every step of stream 0, then stream 1, and so on.
struct RolloutBuffer {
  std::vector<TeamStep> steps;
  /// Critic value of the state following each stream's last step.
  std::vector<double> bootstrap;

  std::size_t transitions() const;
  void clear();

  friend bool operator==(const RolloutBuffer&, const RolloutBuffer&) = default;
};

enum class Phase { actor, critic, latent, inference };
const char* phase_name(Phase p);

struct UpdateReport {
  /// One entry per agent update in the sweep (a single entry for mappo_shared).
  std::vector<double> actor_losses;
  /// Agent order of the sweep.
  std::vector<int> permutation;
  double critic = 0.0;
  double l_v = 0.0;
  double l_e = 0.0;
  double l_d = 0.0;
  double l_latent = 0.0;
  double l_i = 0.0;
  double latent_spread = 0.0;

  double actor_mean() const;
};

/// Called after each backward pass and before the optimizer step, so that the
/// accumulated gradients of every store can be inspected.
using PhaseHook = std::function<void(Phase, const Model&)>;

/// 1 - cos(a, b), with identical vectors at 0 and any other pair involving a
/// zero vector at 1.
double latent_distance(std::span<const double> a, std::span<const double> b);

/// Mean pairwise cosine distance among the latents of each step, averaged over
/// steps with at least two agents. Identical vectors count as distance 0.
double latent_spread(const RolloutBuffer& buffer);

class Trainer {
 public:
  explicit Trainer(const RunConfig& config);
  /// Continues from an existing model (for example one loaded from a checkpoint).
  Trainer(const RunConfig& config, Model model);

  /// Runs every stream for its share of steps_per_update steps with frozen
  /// parameters, spreading streams over `workers` threads.
  RolloutBuffer collect();
  /// Consumes and clears the buffer.
  UpdateReport update(RolloutBuffer& buffer);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const RunConfig& config() const { return config_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t updates() const { return updates_; }
  void set_progress(std::uint64_t updates, std::uint64_t env_steps);
  void set_workers(int workers) { config_.workers = workers; }
  void set_hook(PhaseHook hook) { hook_ = std::move(hook); }

 private:
  struct Stream {
    FocusFire env;
    Rng rng;
    Tensor h;   // (n_agents, H)
    Tensor hc;  // (1, H)
    std::uint64_t episode = 0;
    int t = 0;
  };

  void reset_stream(Stream& s);
  void run_streams(std::size_t first, std::size_t last, std::vector<int> quota,
                   std::vector<std::vector<TeamStep>>& out, std::vector<double>& bootstrap);
  void check_finite(double v, const char* what) const;

  RunConfig config_;
  Model model_;
  Adam actor_opt_, critic_opt_, latent_opt_, inference_opt_;
  Rng update_rng_;
  std::vector<Stream> streams_;
  std::uint64_t env_steps_ = 0;
  std::uint64_t updates_ = 0;
  PhaseHook hook_;
};

}  // namespace shppo
