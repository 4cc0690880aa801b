#pragma once

// Run configuration. The on-disk form is INI:
//
//   algo = shppo            ; shppo | mappo_shared | happo_shared
//   seed = 1
//   [env]     n_fighters = 4 ...
//   [nets]    mlp_hidden = 64 ...
//   [hyper]   lr_actor = 0.0005 ...
//   [ablation] zero_latents = false ...
//
// Every key has a default, so an empty file is a complete config. Unknown
// keys are rejected. Environment variables SHPPO_<KEY> (top level) and
// SHPPO_<SECTION>__<KEY> override file values.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "shppo/env.hpp"

namespace shppo {

enum class Algo { shppo, mappo_shared, happo_shared };

const char* algo_name(Algo a);
Algo parse_algo(const std::string& s);

struct NetsConfig {
  int mlp_hidden = 64;
  int rnn_hidden = 64;
  int latent_dim = 3;
  friend bool operator==(const NetsConfig&, const NetsConfig&) = default;
};

struct HyperConfig {
  double lr_actor = 5e-4;
  double lr_critic = 5e-4;
  double lr_latent = 5e-4;
  double lr_inference = 5e-3;
  double gamma = 0.95;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double lambda_e = 0.01;
  double lambda_d = 0.1;
  int steps_per_update = 1600;
  int ppo_epochs = 1;
  int eval_interval = 25;
  int eval_episodes = 40;
  int rollout_envs = 4;
  friend bool operator==(const HyperConfig&, const HyperConfig&) = default;
};

struct AblationFlags {
  bool zero_latent_inputs = false;
  bool zero_latents = false;
  bool drop_Lv = false;
  bool drop_Le = false;
  bool drop_Ld = false;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct RunConfig {
  Algo algo = Algo::shppo;
  TeamConfig env;
  NetsConfig nets;
  HyperConfig hyper;
  AblationFlags ablation;
  std::uint64_t seed = 1;
  std::uint64_t total_env_steps = 2000000;
  int workers = 1;
  std::string output_dir = "runs/default";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Field-level problem in a config source.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
/// Canonical INI text covering every key.
std::string to_ini(const RunConfig& cfg);

/// Applies SHPPO_* overrides from `env` (name -> value).
void apply_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);
/// Collects SHPPO_* variables from the process environment.
std::map<std::string, std::string> shppo_environment();

void validate(const RunConfig& cfg);

/// Team list for transfer: one INI section per team, keys as in [env], each
/// starting from `base`. Sections keep file order.
std::vector<TeamConfig> parse_team_list(const std::string& text, const TeamConfig& base);
std::vector<TeamConfig> load_team_list(const std::string& path, const TeamConfig& base);

}  // namespace shppo
