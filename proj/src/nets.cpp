#include "shppo/nets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace shppo {
namespace {

void require_width(const char* what, const Tensor& x, std::size_t cols) {
  if (x.rank() != 2 || x.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected (batch, " + std::to_string(cols) +
                         "), got " + shape_string(x.shape()));
  }
}

Var relu_layer(Tape& t, const Params& p, const std::string& name, Var x) {
  return ops::relu(linear_layer(t, p, name, x));
}

}  // namespace

void init_actor(ParamStore& store, const NetConfig& cfg, bool hete, Rng& rng) {
  const std::size_t h = cfg.mlp_hidden;
  const std::size_t r = cfg.rnn_hidden;
  init_linear(store, "enc.l0", cfg.obs_dim, h, rng);
  init_linear(store, "enc.l1", h, h, rng);
  init_gru(store, "gru", h, r, rng);
  init_linear(store, "head", r, cfg.n_actions, rng);
  if (!hete) return;
  init_linear(store, "dec.l0", cfg.latent_dim, h, rng);
  init_linear(store, "dec.l1", h, h, rng);
  init_linear(store, "dec.l2", h, h, rng);
  const std::size_t hw = cfg.hete_width();
  init_linear_zero(store, "w_dec", h, hw * hw);
  Tensor& bias = store.value("w_dec.b");
  const double offset = std::sqrt(static_cast<double>(hw));
  for (std::size_t i = 0; i < hw; ++i) bias[i * hw + i] = offset;
  init_linear_zero(store, "b_dec", h, hw);
}

void init_latent(ParamStore& store, const NetConfig& cfg, Rng& rng) {
  init_linear(store, "l0", cfg.obs_dim + cfg.rnn_hidden, cfg.mlp_hidden, rng);
  init_linear(store, "l1", cfg.mlp_hidden, cfg.mlp_hidden, rng);
  init_linear(store, "l2", cfg.mlp_hidden, 2 * cfg.latent_dim, rng);
}

void init_critic(ParamStore& store, const NetConfig& cfg, Rng& rng) {
  init_linear(store, "enc.l0", cfg.global_dim, cfg.mlp_hidden, rng);
  init_linear(store, "enc.l1", cfg.mlp_hidden, cfg.mlp_hidden, rng);
  init_gru(store, "gru", cfg.mlp_hidden, cfg.rnn_hidden, rng);
  init_linear(store, "head", cfg.rnn_hidden, 1, rng);
}

void init_inference(ParamStore& store, const NetConfig& cfg, Rng& rng) {
  init_linear(store, "l0", cfg.global_dim + 2 * cfg.n_agents * cfg.latent_dim, cfg.mlp_hidden,
              rng);
  init_linear(store, "l1", cfg.mlp_hidden, cfg.mlp_hidden, rng);
  init_linear(store, "l2", cfg.mlp_hidden, 1, rng);
}

bool is_decoder_param(const std::string& name) {
  return name.starts_with("dec.") || name.starts_with("w_dec.") || name.starts_with("b_dec.");
}

LatentOut latent_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var obs,
                         Var h_prev) {
  require_width("latent_forward obs", obs.value(), cfg.obs_dim);
  require_width("latent_forward h_prev", h_prev.value(), cfg.rnn_hidden);
  if (obs.rows() != h_prev.rows()) {
    throw DimensionError("latent_forward: obs " + shape_string(obs.shape()) + " vs h_prev " +
                         shape_string(h_prev.shape()));
  }
  const Var in[] = {obs, h_prev};
  Var x = relu_layer(tape, p, "l0", ops::concat_cols(in));
  x = relu_layer(tape, p, "l1", x);
  x = linear_layer(tape, p, "l2", x);
  const std::size_t L = cfg.latent_dim;
  Var mu = ops::slice_cols(x, 0, L);
  Var raw = ops::slice_cols(x, L, L);
  Var sigma = ops::add_constant(ops::softplus(raw), Tensor(raw.shape(), kSigmaFloor));
  return {mu, sigma};
}

Var sample_latent(Var mu, Var sigma, const Tensor& noise) {
  return ops::add(mu, ops::mul(sigma, mu.tape->constant(noise)));
}

HeteOut decode_hete(Tape& tape, const Params& p, const NetConfig& cfg, Var l) {
  require_width("decode_hete", l.value(), cfg.latent_dim);
  Var e = relu_layer(tape, p, "dec.l0", l);
  e = relu_layer(tape, p, "dec.l1", e);
  e = linear_layer(tape, p, "dec.l2", e);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.hete_width()));
  return {ops::scale(linear_layer(tape, p, "w_dec", e), s), linear_layer(tape, p, "b_dec", e)};
}

ActorOut actor_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var obs, Var h_prev,
                       const HeteOut* hete, const Tensor& mask) {
  require_width("actor_forward obs", obs.value(), cfg.obs_dim);
  const std::size_t batch = obs.rows();
  if (mask.rank() != 2 || mask.rows() != batch || mask.cols() != cfg.n_actions) {
    throw DimensionError("actor_forward: mask " + shape_string(mask.shape()) + " for obs " +
                         shape_string(obs.shape()));
  }
  Tensor offsets(mask.shape());
  for (std::size_t r = 0; r < batch; ++r) {
    bool any = false;
    for (std::size_t a = 0; a < cfg.n_actions; ++a) {
      const bool ok = mask.at(r, a) != 0.0;
      any = any || ok;
      offsets.at(r, a) = ok ? 0.0 : kMaskedLogit;
    }
    if (!any) throw ContractError("actor_forward: row " + std::to_string(r) + " has no valid action");
  }
  Var x = relu_layer(tape, p, "enc.l0", obs);
  x = relu_layer(tape, p, "enc.l1", x);
  Var h = gru_step(tape, p, "gru", x, h_prev);
  Var f = hete ? ops::hete_linear(hete->w, h, hete->b) : h;
  Var logits = ops::add_constant(linear_layer(tape, p, "head", f), offsets);
  return {logits, h, f};
}

CriticOut critic_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var global_obs,
                         Var h_prev) {
  require_width("critic_forward", global_obs.value(), cfg.global_dim);
  Var x = relu_layer(tape, p, "enc.l0", global_obs);
  x = relu_layer(tape, p, "enc.l1", x);
  Var h = gru_step(tape, p, "gru", x, h_prev);
  return {linear_layer(tape, p, "head", h), h};
}

Var inference_forward(Tape& tape, const Params& p, const NetConfig& cfg, Var global_obs,
                      Var mu_all, Var sigma_all) {
  require_width("inference_forward o_g", global_obs.value(), cfg.global_dim);
  const std::size_t width = cfg.n_agents * cfg.latent_dim;
  if (mu_all.value().rank() != 2 || mu_all.cols() != width || sigma_all.value().rank() != 2 ||
      sigma_all.cols() != width) {
    throw DimensionError("inference_forward: " + std::to_string(cfg.n_agents) +
                         " agents need latent blocks of width " + std::to_string(width) +
                         ", got mu " + shape_string(mu_all.shape()) + " and sigma " +
                         shape_string(sigma_all.shape()));
  }
  const Var in[] = {global_obs, mu_all, sigma_all};
  Var x = relu_layer(tape, p, "l0", ops::concat_cols(in));
  x = relu_layer(tape, p, "l1", x);
  return linear_layer(tape, p, "l2", x);
}

double action_log_prob(std::span<const double> logits, int action) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - top);
  return logits[static_cast<std::size_t>(action)] - top - std::log(z);
}

ActionSample sample_action(std::span<const double> logits, Rng& rng, bool greedy) {
  int chosen = 0;
  if (greedy) {
    chosen = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  } else {
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - top);
    double u = rng.uniform() * z;
    chosen = -1;
    int last_positive = 0;
    for (std::size_t a = 0; a < logits.size(); ++a) {
      const double w = std::exp(logits[a] - top);
      if (w > 0.0) last_positive = static_cast<int>(a);
      if (u < w) {
        chosen = static_cast<int>(a);
        break;
      }
      u -= w;
    }
    // Rounding can leave u just past the final bucket.
    if (chosen < 0) chosen = last_positive;
  }
  return {chosen, action_log_prob(logits, chosen)};
}

void write_latents_header(std::ostream& os, std::size_t latent_dim) {
  os << "episode,step,agent_id,agent_type";
  for (std::size_t j = 1; j <= latent_dim; ++j) os << ",l" << j;
  os << '\n';
}

void write_latent_row(std::ostream& os, const LatentRecord& r) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << r.episode << ',' << r.step << ',' << r.agent_id << ',' << r.agent_type;
  for (double v : r.l) os << ',' << v;
  os << '\n';
  os.precision(old);
}

}  // namespace shppo
