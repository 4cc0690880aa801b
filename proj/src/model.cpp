#include "shppo/model.hpp"

#include <cmath>

#include "shppo/env.hpp"

namespace shppo {
namespace {

nlohmann::json team_json(const TeamConfig& t) {
  return {{"n_fighters", t.n_fighters}, {"n_healers", t.n_healers}, {"n_enemies", t.n_enemies},
          {"width", t.width},           {"height", t.height},       {"k_allies", t.k_allies},
          {"k_enemies", t.k_enemies},   {"max_steps", t.max_steps}};
}

TeamConfig team_from_json(const nlohmann::json& j) {
  TeamConfig t;
  t.n_fighters = j.at("n_fighters");
  t.n_healers = j.at("n_healers");
  t.n_enemies = j.at("n_enemies");
  t.width = j.at("width");
  t.height = j.at("height");
  t.k_allies = j.at("k_allies");
  t.k_enemies = j.at("k_enemies");
  t.max_steps = j.at("max_steps");
  return t;
}

void require_same_layout(const ParamStore& got, const ParamStore& want, const std::string& what) {
  for (const auto& [name, e] : want) {
    if (!got.contains(name))
      throw std::runtime_error("checkpoint: " + what + " is missing parameter '" + name + "'");
    if (got.value(name).shape() != e.value.shape())
      throw std::runtime_error("checkpoint: " + what + " parameter '" + name + "' has the wrong shape");
  }
  if (got.size() != want.size())
    throw std::runtime_error("checkpoint: " + what + " has unexpected parameters");
}

}  // namespace

NetConfig make_net_config(const NetsConfig& nets, const TeamConfig& team) {
  NetConfig c;
  c.obs_dim = team.obs_dim();
  c.n_actions = kNumActions;
  c.mlp_hidden = static_cast<std::size_t>(nets.mlp_hidden);
  c.rnn_hidden = static_cast<std::size_t>(nets.rnn_hidden);
  c.latent_dim = static_cast<std::size_t>(nets.latent_dim);
  c.n_agents = static_cast<std::size_t>(team.n_allies());
  c.global_dim = team.global_dim();
  return c;
}

std::size_t Model::per_agent_parameter_count() const {
  return actor.parameter_count() + latent.parameter_count();
}

Model make_model(Algo algo, const NetsConfig& nets, const TeamConfig& team, std::uint64_t seed) {
  Model m;
  m.algo = algo;
  m.nets = nets;
  m.team = team;
  m.net = make_net_config(nets, team);
  Rng rng(seed);
  init_actor(m.actor, m.net, m.hete(), rng);
  if (m.hete()) {
    init_latent(m.latent, m.net, rng);
    init_inference(m.inference, m.net, rng);
  }
  init_critic(m.critic, m.net, rng);
  return m;
}

LayoutError::LayoutError(const std::vector<std::string>& d)
    : std::runtime_error([&] {
        std::string msg = "observation layout mismatch:";
        for (const auto& line : d) msg += "\n  " + line;
        return msg;
      }()),
      diff(d) {}

Checkpoint model_checkpoint(const Model& model, bool full, nlohmann::json meta) {
  Checkpoint c;
  c.tag = full ? "full" : "transfer";
  c.meta = meta.is_object() ? std::move(meta) : nlohmann::json::object();
  c.meta["algo"] = algo_name(model.algo);
  c.meta["nets"] = {{"mlp_hidden", model.nets.mlp_hidden},
                    {"rnn_hidden", model.nets.rnn_hidden},
                    {"latent_dim", model.nets.latent_dim}};
  c.meta["env"] = team_json(model.team);
  c.meta["version"] = SHPPO_VERSION;
  c.params.merge(model.actor, "actor/");
  c.params.merge(model.latent, "latent/");
  if (full) {
    c.params.merge(model.critic, "critic/");
    c.params.merge(model.inference, "inference/");
  }
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt, std::optional<TeamConfig> team) {
  if (ckpt.tag != "full" && ckpt.tag != "transfer")
    throw std::runtime_error("checkpoint: unknown tag '" + ckpt.tag + "'");
  NetsConfig nets;
  TeamConfig trained;
  Algo algo = Algo::shppo;
  try {
    algo = parse_algo(ckpt.meta.at("algo").get<std::string>());
    const auto& n = ckpt.meta.at("nets");
    nets.mlp_hidden = n.at("mlp_hidden");
    nets.rnn_hidden = n.at("rnn_hidden");
    nets.latent_dim = n.at("latent_dim");
    trained = team_from_json(ckpt.meta.at("env"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed meta: ") + e.what());
  }
  const TeamConfig target = team.value_or(trained);
  if (auto diff = layout_diff(trained, target); !diff.empty()) throw LayoutError(diff);

  // A seed-0 template gives the expected names and shapes.
  Model m = make_model(algo, nets, target, 0);
  const bool full = ckpt.tag == "full";
  ParamStore actor = ckpt.params.extract("actor/");
  ParamStore latent = ckpt.params.extract("latent/");
  require_same_layout(actor, m.actor, "actor");
  require_same_layout(latent, m.latent, "latent");
  m.actor = std::move(actor);
  m.latent = std::move(latent);
  if (full && target.n_allies() == trained.n_allies() && target.n_units() == trained.n_units()) {
    ParamStore critic = ckpt.params.extract("critic/");
    ParamStore inference = ckpt.params.extract("inference/");
    require_same_layout(critic, m.critic, "critic");
    require_same_layout(inference, m.inference, "inference");
    m.critic = std::move(critic);
    m.inference = std::move(inference);
  } else {
    m.critic = ParamStore();
    m.inference = ParamStore();
  }
  return m;
}

ExecResult execute_step(const Model& model, const ExecBatch& batch, std::span<Rng* const> row_rngs,
                        const ExecOptions& options) {
  const NetConfig& cfg = model.net;
  const std::size_t rows = batch.obs.rows();
  if (row_rngs.size() != rows)
    throw DimensionError("execute_step: " + std::to_string(row_rngs.size()) + " rngs for " +
                         std::to_string(rows) + " rows");
  ExecResult out;
  Tape tape;
  Var obs = tape.constant(batch.obs);
  Var h_prev = tape.constant(batch.h_prev);
  HeteOut hete;
  if (model.hete()) {
    Var lin_obs = obs, lin_h = h_prev;
    if (options.zero_latent_inputs) {
      lin_obs = tape.constant(Tensor(batch.obs.shape()));
      lin_h = tape.constant(Tensor(batch.h_prev.shape()));
    }
    LatentOut d = latent_forward(tape, Params::frozen(model.latent), cfg, lin_obs, lin_h);
    Var l;
    if (options.zero_latents)
      l = tape.constant(Tensor(d.mu.shape()));
    else if (options.greedy)
      l = d.mu;
    else
      l = sample_latent(d.mu, d.sigma, batch.noise);
    out.mu = d.mu.value();
    out.sigma = d.sigma.value();
    out.l = l.value();
    hete = decode_hete(tape, Params::frozen(model.actor), cfg, l);
    if (options.keep_hete) {
      out.hete_w = hete.w.value();
      out.hete_b = hete.b.value();
    }
  }
  ActorOut a = actor_forward(tape, Params::frozen(model.actor), cfg, obs, h_prev,
                             model.hete() ? &hete : nullptr, batch.mask);
  out.h_next = a.h_next.value();
  const Tensor& logits = a.logits.value();
  out.actions.resize(rows);
  out.log_probs.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const ActionSample s = sample_action(logits.row(r), *row_rngs[r], options.greedy);
    out.actions[r] = s.action;
    out.log_probs[r] = s.log_prob;
  }
  return out;
}

CriticEval critic_values(const Model& model, const Tensor& global_obs, const Tensor& h_prev) {
  Tape tape;
  CriticOut c = critic_forward(tape, Params::frozen(model.critic), model.net,
                               tape.constant(global_obs), tape.constant(h_prev));
  CriticEval out;
  out.values.assign(c.value.value().span().begin(), c.value.value().span().end());
  out.h_next = c.h_next.value();
  return out;
}

}  // namespace shppo
