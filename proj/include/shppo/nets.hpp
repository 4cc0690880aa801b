#pragma once

// The SHPPO networks. Every forward takes a batch of rows (one row per
// agent-step) and records onto a caller-owned Tape; rollouts pass frozen
// parameters, updates pass trainable ones.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shppo/layers.hpp"

namespace shppo {

struct NetConfig {
  std::size_t obs_dim = 43;
  std::size_t n_actions = 6;
  std::size_t mlp_hidden = 64;
  std::size_t rnn_hidden = 64;
  std::size_t latent_dim = 3;
  /// Team-dependent widths for the centralized nets.
  std::size_t n_agents = 5;
  std::size_t global_dim = 80;

  /// The HeteLayer maps the recurrent feature onto itself.
  std::size_t hete_width() const { return rnn_hidden; }
};

inline constexpr double kMaskedLogit = -1e9;
inline constexpr double kSigmaFloor = 1e-6;

// Parameter names are prefixed by role inside each store.
//   actor:     enc.l0 enc.l1 gru head  dec.l0 dec.l1 dec.l2 w_dec b_dec
//   latent:    l0 l1 l2
//   critic:    enc.l0 enc.l1 gru head
//   inference: l0 l1 l2

/// Shared actor trunk and head. With `hete` set, also the latent decoders.
void init_actor(ParamStore& store, const NetConfig& cfg, bool hete, Rng& rng);
void init_latent(ParamStore& store, const NetConfig& cfg, Rng& rng);
void init_critic(ParamStore& store, const NetConfig& cfg, Rng& rng);
void init_inference(ParamStore& store, const NetConfig& cfg, Rng& rng);

/// Names in an actor store belonging to the decoder / w_decoder / b_decoder.
bool is_decoder_param(const std::string& name);

struct LatentOut {
  Var mu;     // (B, L)
  Var sigma;  // (B, L), every entry > 0
};

/// 3-layer MLP over concat(o, h_prev); sigma = softplus(raw) + floor.
LatentOut latent_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var obs, Var h_prev);

/// l = mu + sigma * noise with `noise` held constant.
Var sample_latent(Var mu, Var sigma, const Tensor& noise);

struct HeteOut {
  Var w;  // (B, H*H), row-major H x H per row
  Var b;  // (B, H)
};

/// Shared MLP embedding of l, then the two linear decoders. The w decoder
/// output is scaled by 1/sqrt(H); its bias starts at sqrt(H)*vec(I) so the
/// initial HeteLayer is the identity.
HeteOut decode_hete(Tape& tape, const Params& p, const NetConfig& cfg, Var l);

struct ActorOut {
  Var logits;   // (B, A), masked entries shifted by kMaskedLogit
  Var h_next;   // (B, H), post-GRU state before the HeteLayer
  Var feature;  // (B, H), HeteLayer output (or the GRU state when absent)
};

/// o -> MLP(2 layers) -> GRU -> HeteLayer (when `hete` is non-null) -> head.
/// `mask` is (B, A) with 1 for available actions.
ActorOut actor_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var obs, Var h_prev,
                       const HeteOut* hete, const Tensor& mask);

struct CriticOut {
  Var value;   // (B, 1)
  Var h_next;  // (B, H)
};

CriticOut critic_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var global_obs,
                         Var h_prev);

/// 3-layer MLP over concat(o_g, mu_all, sigma_all) -> (B, 1).
Var inference_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var global_obs,
                      Var mu_all, Var sigma_all);

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
};

/// Categorical draw from the softmax of one row of masked logits, or its
/// argmax when `greedy`.
ActionSample sample_action(std::span<const double> logits, Rng& rng, bool greedy = false);

/// log softmax(logits)[action] computed in plain arithmetic.
double action_log_prob(std::span<const double> logits, int action);

/// One row of the latent trace.
struct LatentRecord {
  std::uint64_t episode = 0;
  std::uint64_t step = 0;
  int agent_id = 0;
  std::string agent_type;
  std::vector<double> l;
};

void write_latents_header(std::ostream& os, std::size_t latent_dim = 3);
void write_latent_row(std::ostream& os, const LatentRecord& r);

}  // namespace shppo
