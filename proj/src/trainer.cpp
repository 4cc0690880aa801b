#include "shppo/trainer.hpp"

#include <cmath>
#include <numeric>
#include <thread>

#include "shppo/losses.hpp"

namespace shppo {
namespace {

Tensor rows_tensor(const std::vector<const std::vector<double>*>& rows, std::size_t width) {
  Tensor t({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r]->begin(), rows[r]->end(), t.row(r).begin());
  return t;
}

// The transitions of one actor update, with their step indices.
struct RowSet {
  std::vector<std::size_t> step;
  Tensor obs, h, mask, l;
  std::vector<int> actions;
  Tensor lp_old;

  std::size_t size() const { return step.size(); }
};

RowSet gather_rows(const RolloutBuffer& buf, const NetConfig& cfg, bool hete, int agent) {
  RowSet rs;
  std::vector<const std::vector<double>*> o, h, m, l;
  std::vector<double> lp;
  for (std::size_t s = 0; s < buf.steps.size(); ++s) {
    for (const Transition& tr : buf.steps[s].agents) {
      if (agent >= 0 && tr.agent_id != agent) continue;
      rs.step.push_back(s);
      o.push_back(&tr.o);
      h.push_back(&tr.h_prev);
      m.push_back(&tr.mask);
      l.push_back(&tr.l);
      rs.actions.push_back(tr.action);
      lp.push_back(tr.log_prob_old);
    }
  }
  rs.obs = rows_tensor(o, cfg.obs_dim);
  rs.h = rows_tensor(h, cfg.rnn_hidden);
  rs.mask = rows_tensor(m, cfg.n_actions);
  if (hete) rs.l = rows_tensor(l, cfg.latent_dim);
  rs.lp_old = Tensor::vector(lp);
  return rs;
}

Var log_probs(Tape& t, const Params& p, const Model& model, const RowSet& rs) {
  HeteOut he;
  if (model.hete()) he = decode_hete(t, p, model.net, t.constant(rs.l));
  ActorOut a = actor_forward(t, p, model.net, t.constant(rs.obs), t.constant(rs.h),
                             model.hete() ? &he : nullptr, rs.mask);
  return ops::gather_cols(ops::log_softmax(a.logits), rs.actions);
}

}  // namespace

double latent_distance(std::span<const double> a, std::span<const double> b) {
  if (std::equal(a.begin(), a.end(), b.begin(), b.end())) return 0.0;
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 1.0;
  return 1.0 - ab / std::sqrt(aa * bb);
}

std::size_t RolloutBuffer::transitions() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.agents.size();
  return n;
}

void RolloutBuffer::clear() {
  steps.clear();
  bootstrap.clear();
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::actor: return "actor";
    case Phase::critic: return "critic";
    case Phase::latent: return "latent";
    case Phase::inference: return "inference";
  }
  return "?";
}

double UpdateReport::actor_mean() const {
  if (actor_losses.empty()) return std::nan("");
  return std::accumulate(actor_losses.begin(), actor_losses.end(), 0.0) / actor_losses.size();
}

double latent_spread(const RolloutBuffer& buffer) {
  double total = 0.0;
  std::size_t used = 0;
  for (const TeamStep& s : buffer.steps) {
    const std::size_t n = s.agents.size();
    if (n < 2) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) sum += latent_distance(s.agents[i].l, s.agents[j].l);
    total += sum / double(n * (n - 1));
    ++used;
  }
  return used ? total / double(used) : 0.0;
}

Trainer::Trainer(const RunConfig& config)
    : Trainer(config, make_model(config.algo, config.nets, config.env, config.seed)) {}

Trainer::Trainer(const RunConfig& config, Model model)
    : config_(config),
      model_(std::move(model)),
      actor_opt_(AdamConfig{.lr = config.hyper.lr_actor}),
      critic_opt_(AdamConfig{.lr = config.hyper.lr_critic}),
      latent_opt_(AdamConfig{.lr = config.hyper.lr_latent}),
      inference_opt_(AdamConfig{.lr = config.hyper.lr_inference}),
      update_rng_(mix_seed(config.seed, 0xA11CE)) {
  validate(config_);
  for (int e = 0; e < config_.hyper.rollout_envs; ++e) {
    streams_.push_back(Stream{FocusFire(config_.env), Rng(mix_seed(config_.seed, 1000 + e)), {}, {}, 0, 0});
    reset_stream(streams_.back());
    streams_.back().episode = 0;
  }
}

void Trainer::set_progress(std::uint64_t updates, std::uint64_t env_steps) {
  updates_ = updates;
  env_steps_ = env_steps;
}

void Trainer::reset_stream(Stream& s) {
  s.env.reset(s.rng.next());
  s.h = Tensor({model_.net.n_agents, model_.net.rnn_hidden});
  s.hc = Tensor({1, model_.net.rnn_hidden});
  s.t = 0;
  ++s.episode;
}

void Trainer::run_streams(std::size_t first, std::size_t last, std::vector<int> quota,
                          std::vector<std::vector<TeamStep>>& out, std::vector<double>& bootstrap) {
  const NetConfig& cfg = model_.net;
  const std::size_t L = cfg.latent_dim;
  const ExecOptions opts{.greedy = false,
                         .zero_latent_inputs = config_.ablation.zero_latent_inputs,
                         .zero_latents = config_.ablation.zero_latents};
  for (;;) {
    std::vector<std::size_t> active;
    for (std::size_t e = first; e < last; ++e)
      if (quota[e] > 0) active.push_back(e);
    if (active.empty()) break;

    std::size_t rows = 0;
    for (std::size_t e : active)
      for (int i = 0; i < int(cfg.n_agents); ++i) rows += streams_[e].env.ally_alive(i);
    ExecBatch batch{Tensor({rows, cfg.obs_dim}), Tensor({rows, cfg.rnn_hidden}),
                    Tensor({rows, cfg.n_actions}), Tensor({rows, L})};
    Tensor og({active.size(), cfg.global_dim});
    Tensor hc({active.size(), cfg.rnn_hidden});
    std::vector<Rng*> row_rngs;
    std::vector<int> row_agent;
    std::size_t r = 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      Stream& s = streams_[active[k]];
      const auto g = s.env.global_observation();
      std::copy(g.begin(), g.end(), og.row(k).begin());
      std::copy(s.hc.span().begin(), s.hc.span().end(), hc.row(k).begin());
      for (int i = 0; i < int(cfg.n_agents); ++i) {
        if (!s.env.ally_alive(i)) continue;
        const auto o = s.env.observe(i);
        std::copy(o.begin(), o.end(), batch.obs.row(r).begin());
        std::copy(s.h.row(i).begin(), s.h.row(i).end(), batch.h_prev.row(r).begin());
        const auto m = s.env.action_mask(i);
        for (std::size_t a = 0; a < cfg.n_actions; ++a) batch.mask.at(r, a) = m[a];
        if (model_.hete())
          for (std::size_t c = 0; c < L; ++c) batch.noise.at(r, c) = s.rng.normal();
        row_rngs.push_back(&s.rng);
        row_agent.push_back(i);
        ++r;
      }
    }
    const CriticEval values = critic_values(model_, og, hc);
    const ExecResult res = execute_step(model_, batch, row_rngs, opts);

    r = 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t e = active[k];
      Stream& s = streams_[e];
      TeamStep ts;
      ts.stream = int(e);
      ts.episode = s.episode;
      ts.t = s.t;
      ts.o_g.assign(og.row(k).begin(), og.row(k).end());
      ts.hc_prev.assign(hc.row(k).begin(), hc.row(k).end());
      ts.value = values.values[k];
      std::vector<int> actions(cfg.n_agents, -1);
      for (; r < rows && row_rngs[r] == &s.rng; ++r) {
        Transition tr;
        tr.agent_id = row_agent[r];
        tr.o.assign(batch.obs.row(r).begin(), batch.obs.row(r).end());
        tr.h_prev.assign(batch.h_prev.row(r).begin(), batch.h_prev.row(r).end());
        tr.mask.assign(batch.mask.row(r).begin(), batch.mask.row(r).end());
        if (model_.hete()) {
          tr.l.assign(res.l.row(r).begin(), res.l.row(r).end());
          tr.noise.assign(batch.noise.row(r).begin(), batch.noise.row(r).end());
          tr.mu.assign(res.mu.row(r).begin(), res.mu.row(r).end());
          tr.sigma.assign(res.sigma.row(r).begin(), res.sigma.row(r).end());
        }
        tr.action = res.actions[r];
        tr.log_prob_old = res.log_probs[r];
        actions[tr.agent_id] = tr.action;
        std::copy(res.h_next.row(r).begin(), res.h_next.row(r).end(), s.h.row(tr.agent_id).begin());
        ts.agents.push_back(std::move(tr));
      }
      const StepResult step = s.env.step(actions);
      std::copy(values.h_next.row(k).begin(), values.h_next.row(k).end(), s.hc.span().begin());
      ts.reward = step.reward;
      ts.done = step.done;
      ts.won = step.won;
      out[e].push_back(std::move(ts));
      ++s.t;
      --quota[e];
      if (step.done) reset_stream(s);
    }
  }

  Tensor og({last - first, cfg.global_dim});
  Tensor hc({last - first, cfg.rnn_hidden});
  for (std::size_t e = first; e < last; ++e) {
    const auto g = streams_[e].env.global_observation();
    std::copy(g.begin(), g.end(), og.row(e - first).begin());
    std::copy(streams_[e].hc.span().begin(), streams_[e].hc.span().end(), hc.row(e - first).begin());
  }
  if (last > first) {
    const CriticEval v = critic_values(model_, og, hc);
    for (std::size_t e = first; e < last; ++e) bootstrap[e] = v.values[e - first];
  }
}

RolloutBuffer Trainer::collect() {
  const std::size_t E = streams_.size();
  const int total = config_.hyper.steps_per_update;
  std::vector<int> quota(E);
  for (std::size_t e = 0; e < E; ++e) quota[e] = total / int(E) + (int(e) < total % int(E) ? 1 : 0);

  std::vector<std::vector<TeamStep>> per_stream(E);
  RolloutBuffer buf;
  buf.bootstrap.assign(E, 0.0);
  const std::size_t W = std::min<std::size_t>(std::size_t(std::max(1, config_.workers)), E);
  if (W == 1) {
    run_streams(0, E, quota, per_stream, buf.bootstrap);
  } else {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(W);
    for (std::size_t w = 0; w < W; ++w) {
      threads.emplace_back([&, w] {
        try {
          run_streams(w * E / W, (w + 1) * E / W, quota, per_stream, buf.bootstrap);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (auto& steps : per_stream)
    for (auto& s : steps) buf.steps.push_back(std::move(s));
  env_steps_ += std::uint64_t(total);
  return buf;
}

void Trainer::check_finite(double v, const char* what) const {
  if (!std::isfinite(v))
    throw ContractError(std::string("train_update: non-finite ") + what + " at update " +
                        std::to_string(updates_));
}

UpdateReport Trainer::update(RolloutBuffer& buf) {
  const HyperConfig& hp = config_.hyper;
  const NetConfig& cfg = model_.net;
  const std::size_t S = buf.steps.size();
  if (S == 0) throw ContractError("train_update: empty buffer");
  UpdateReport rep;

  std::vector<double> adv(S), ret(S);
  for (std::size_t begin = 0; begin < S;) {
    std::size_t end = begin;
    const int stream = buf.steps[begin].stream;
    std::vector<double> rewards, values;
    std::vector<std::uint8_t> dones;
    for (; end < S && buf.steps[end].stream == stream; ++end) {
      rewards.push_back(buf.steps[end].reward);
      values.push_back(buf.steps[end].value);
      dones.push_back(buf.steps[end].done);
    }
    values.push_back(buf.bootstrap.at(std::size_t(stream)));
    const AdvantageBatch g = gae(rewards, values, dones, hp.gamma, hp.gae_lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), adv.begin() + long(begin));
    std::copy(g.returns.begin(), g.returns.end(), ret.begin() + long(begin));
    begin = end;
  }
  {
    std::vector<double> flat;
    for (std::size_t s = 0; s < S; ++s) flat.insert(flat.end(), buf.steps[s].agents.size(), adv[s]);
    normalize(flat);
    std::size_t k = 0;
    for (std::size_t s = 0; s < S; ++s) {
      adv[s] = flat[k];
      k += buf.steps[s].agents.size();
    }
  }

  auto actor_step = [&](const RowSet& rs, const Tensor& factor, bool happo) {
    double first = 0.0;
    for (int epoch = 0; epoch < hp.ppo_epochs; ++epoch) {
      Tape t;
      Var lp = log_probs(t, Params::trainable(model_.actor), model_, rs);
      Var loss = happo ? happo_actor_loss(lp, rs.lp_old, factor, hp.clip)
                       : ppo_clip_loss(lp, rs.lp_old, factor, hp.clip);
      check_finite(loss.value()[0], "L_actor");
      if (epoch == 0) first = loss.value()[0];
      t.backward(loss);
      if (hook_) hook_(Phase::actor, model_);
      actor_opt_.step(model_.actor);
    }
    return first;
  };

  if (model_.algo == Algo::mappo_shared) {
    const RowSet rs = gather_rows(buf, cfg, false, -1);
    Tensor a({rs.size()});
    for (std::size_t k = 0; k < rs.size(); ++k) a[k] = adv[rs.step[k]];
    rep.actor_losses.push_back(actor_step(rs, a, false));
  } else {
    std::vector<double> M = adv;
    std::vector<int> perm(cfg.n_agents);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[update_rng_.below(i)]);
    rep.permutation = perm;
    for (int agent : perm) {
      const RowSet rs = gather_rows(buf, cfg, model_.hete(), agent);
      if (rs.size() == 0) {
        rep.actor_losses.push_back(0.0);
        continue;
      }
      Tensor factor({rs.size()});
      for (std::size_t k = 0; k < rs.size(); ++k) factor[k] = M[rs.step[k]];
      rep.actor_losses.push_back(actor_step(rs, factor, true));
      Tape t;
      const Tensor lp_new = log_probs(t, Params::frozen(model_.actor), model_, rs).value();
      refresh_factor(factor.span(), lp_new.span(), rs.lp_old.span());
      for (std::size_t k = 0; k < rs.size(); ++k) M[rs.step[k]] = factor[k];
    }
  }

  Tensor og({S, cfg.global_dim}), hc({S, cfg.rnn_hidden});
  for (std::size_t s = 0; s < S; ++s) {
    std::copy(buf.steps[s].o_g.begin(), buf.steps[s].o_g.end(), og.row(s).begin());
    std::copy(buf.steps[s].hc_prev.begin(), buf.steps[s].hc_prev.end(), hc.row(s).begin());
  }
  const Tensor returns = Tensor::vector(ret);
  for (int epoch = 0; epoch < hp.ppo_epochs; ++epoch) {
    Tape t;
    CriticOut c = critic_forward(t, Params::trainable(model_.critic), cfg, t.constant(og), t.constant(hc));
    Var loss = critic_loss(c.value, returns);
    check_finite(loss.value()[0], "L_critic");
    if (epoch == 0) rep.critic = loss.value()[0];
    t.backward(loss);
    if (hook_) hook_(Phase::critic, model_);
    critic_opt_.step(model_.critic);
  }

  if (model_.hete()) {
    const std::size_t n = cfg.n_agents, L = cfg.latent_dim;
    const std::size_t R = buf.transitions();
    Tensor obs({R, cfg.obs_dim}), h({R, cfg.rnn_hidden}), noise({R, L});
    Tensor mu_all({S, n * L}), sigma_all({S, n * L});
    std::vector<long> slots(S * n, -1);
    std::vector<std::size_t> groups(S);
    std::size_t r = 0;
    for (std::size_t s = 0; s < S; ++s) {
      groups[s] = buf.steps[s].agents.size();
      for (const Transition& tr : buf.steps[s].agents) {
        std::copy(tr.o.begin(), tr.o.end(), obs.row(r).begin());
        std::copy(tr.h_prev.begin(), tr.h_prev.end(), h.row(r).begin());
        std::copy(tr.noise.begin(), tr.noise.end(), noise.row(r).begin());
        const std::size_t off = std::size_t(tr.agent_id) * L;
        std::copy(tr.mu.begin(), tr.mu.end(), mu_all.row(s).begin() + long(off));
        std::copy(tr.sigma.begin(), tr.sigma.end(), sigma_all.row(s).begin() + long(off));
        slots[s * n + std::size_t(tr.agent_id)] = long(r);
        ++r;
      }
    }
    if (config_.ablation.zero_latent_inputs) {
      obs.fill(0.0);
      h.fill(0.0);
    }
    {
      Tape t;
      LatentOut d = latent_forward(t, Params::trainable(model_.latent), cfg, t.constant(obs), t.constant(h));
      Var vi = inference_forward(t, Params::frozen(model_.inference), cfg, t.constant(og),
                                 ops::scatter_rows(d.mu, slots, n), ops::scatter_rows(d.sigma, slots, n));
      Var lv = latent_value_loss(vi);
      Var le = entropy_loss(d.sigma, groups);
      DistanceLoss ld = distance_loss(sample_latent(d.mu, d.sigma, noise), groups);
      rep.l_v = lv.value()[0];
      rep.l_e = le.value()[0];
      rep.l_d = ld.loss.value()[0];
      check_finite(rep.l_v, "L_v");
      check_finite(rep.l_e, "L_e");
      check_finite(rep.l_d, "L_d");
      const AblationFlags& ab = config_.ablation;
      Var lv_used = ab.drop_Lv ? t.constant(Tensor::vector({0.0})) : lv;
      Var total = latent_total_loss(lv_used, le, ld.loss, ab.drop_Le ? 0.0 : hp.lambda_e,
                                    ab.drop_Ld ? 0.0 : hp.lambda_d);
      rep.l_latent = total.value()[0];
      check_finite(rep.l_latent, "L_L");
      if (t.requires_grad(total)) t.backward(total);
      if (hook_) hook_(Phase::latent, model_);
      latent_opt_.step(model_.latent);
    }
    {
      Tape t;
      Var vi = inference_forward(t, Params::trainable(model_.inference), cfg, t.constant(og),
                                 t.constant(mu_all), t.constant(sigma_all));
      Var loss = inference_loss(vi, returns);
      rep.l_i = loss.value()[0];
      check_finite(rep.l_i, "L_I");
      t.backward(loss);
      if (hook_) hook_(Phase::inference, model_);
      inference_opt_.step(model_.inference);
    }
  } else {
    rep.l_v = rep.l_e = rep.l_d = rep.l_latent = rep.l_i = std::nan("");
  }
  rep.latent_spread = model_.hete() ? latent_spread(buf) : std::nan("");
  buf.clear();
  ++updates_;
  return rep;
}

}  // namespace shppo
