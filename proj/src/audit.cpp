#include "shppo/audit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "shppo/gradcheck.hpp"
#include "shppo/losses.hpp"
#include "shppo/nets.hpp"

namespace shppo {
namespace {

using Tamper = std::function<void(ParamStore&)>;

struct Case {
  std::string module;
  std::string name;
  std::function<GradCheck(Rng&, const Tamper&)> run;
};

NetConfig small() {
  NetConfig c;
  c.obs_dim = 6;
  c.n_actions = 4;
  c.mlp_hidden = 12;
  c.rnn_hidden = 4;  // the weight decoder emits 16 values
  c.latent_dim = 3;
  c.n_agents = 3;
  c.global_dim = 8;
  return c;
}

Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.uniform(lo, hi);
  return t;
}

Tensor normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.normal();
  return t;
}

void randomize(ParamStore& ps, Rng& rng) {
  for (auto& [_, e] : ps)
    for (auto& v : e.value.span()) v = rng.uniform(-0.5, 0.5);
}

// A random linear functional of a tensor-valued output.
Var project(Var x, Rng& rng) {
  Tape& t = *x.tape;
  return ops::sum(ops::mul(x, t.constant(normal(x.shape(), rng))));
}

std::vector<int> random_actions(std::size_t rows, std::size_t n, Rng& rng) {
  std::vector<int> a(rows);
  for (auto& v : a) v = int(rng.below(n));
  return a;
}

// Steps with 3, 2 and 3 living agents.
struct LatentBatch {
  NetConfig cfg = small();
  std::vector<std::size_t> groups{3, 2, 3};
  std::vector<long> slots{0, 1, 2, 3, -1, 4, 5, 6, 7};
  Tensor o, h, noise, og;

  explicit LatentBatch(Rng& rng)
      : o(uniform({8, cfg.obs_dim}, rng)),
        h(uniform({8, cfg.rnn_hidden}, rng)),
        noise(normal({8, cfg.latent_dim}, rng)),
        og(uniform({3, cfg.global_dim}, rng)) {}
};

std::vector<Case> cases() {
  std::vector<Case> v;

  v.push_back({"diffcore", "mlp_relu_tanh", [](Rng& rng, const Tamper& tm) {
                 ParamStore ps;
                 init_linear(ps, "a", 6, 12, rng);
                 init_linear(ps, "b", 12, 16, rng);
                 init_linear(ps, "c", 16, 5, rng);
                 randomize(ps, rng);
                 const Tensor x = uniform({4, 6}, rng);
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   Var y = ops::relu(linear_layer(t, p, "a", t.constant(x)));
                   y = ops::tanh(linear_layer(t, p, "b", y));
                   return project(linear_layer(t, p, "c", y), r);
                 }, 1e-5, tm);
               }});
  v.push_back({"diffcore", "smooth_elementwise", [](Rng& rng, const Tamper& tm) {
                 ParamStore ps;
                 ps.add("x", uniform({3, 5}, rng, 0.2, 1.5));
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   Var x = p(t, "x");
                   Var y = ops::add(ops::sigmoid(x), ops::softplus(ops::scale(x, -2.0)));
                   y = ops::mul(y, ops::log(x));
                   y = ops::sub(y, ops::exp(ops::scale(x, 0.3)));
                   return project(y, r);
                 }, 1e-5, tm);
               }});
  v.push_back({"diffcore", "gru_step", [](Rng& rng, const Tamper& tm) {
                 ParamStore ps;
                 init_gru(ps, "g", 5, 6, rng);
                 randomize(ps, rng);
                 ps.add("h0", uniform({3, 6}, rng));
                 const Tensor x = uniform({3, 5}, rng);
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   Var h = gru_step(t, p, "g", t.constant(x), p(t, "h0"));
                   h = gru_step(t, p, "g", t.constant(x), h);
                   return project(h, r);
                 }, 1e-5, tm);
               }});
  v.push_back({"diffcore", "hete_linear_concat_slice", [](Rng& rng, const Tamper& tm) {
                 ParamStore ps;
                 ps.add("w", uniform({3, 12}, rng));
                 ps.add("x", uniform({3, 4}, rng));
                 ps.add("b", uniform({3, 3}, rng));
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   Var y = ops::hete_linear(p(t, "w"), p(t, "x"), p(t, "b"));
                   const Var parts[] = {y, ops::slice_cols(p(t, "x"), 1, 2)};
                   return project(ops::concat_cols(parts), r);
                 }, 1e-5, tm);
               }});
  v.push_back({"diffcore", "log_softmax_gather_scatter", [](Rng& rng, const Tamper& tm) {
                 ParamStore ps;
                 ps.add("z", uniform({4, 5}, rng, -2.0, 2.0));
                 const auto act = random_actions(4, 5, rng);
                 const std::vector<long> src = {2, -1, 0, 3, 1, -1};
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   Var ls = ops::log_softmax(p(t, "z"));
                   Var g = ops::gather_cols(ls, act);
                   return ops::add(ops::mean(g), project(ops::scatter_rows(ls, src, 2), r));
                 }, 1e-5, tm);
               }});

  v.push_back({"nets", "latent_forward", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_latent(ps, cfg, rng);
                 randomize(ps, rng);
                 const Tensor o = uniform({4, cfg.obs_dim}, rng), h = uniform({4, cfg.rnn_hidden}, rng);
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   auto d = latent_forward(t, p, cfg, t.constant(o), t.constant(h));
                   return ops::add(project(d.mu, r), project(d.sigma, r));
                 }, 1e-5, tm);
               }});
  v.push_back({"nets", "actor_with_decoders", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_actor(ps, cfg, true, rng);
                 randomize(ps, rng);
                 const Tensor o = uniform({4, cfg.obs_dim}, rng), h = uniform({4, cfg.rnn_hidden}, rng);
                 const Tensor l = normal({4, cfg.latent_dim}, rng);
                 Tensor mask({4, cfg.n_actions}, 1.0);
                 mask.at(1, 2) = 0.0;
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   HeteOut he = decode_hete(t, p, cfg, t.constant(l));
                   auto a = actor_forward(t, p, cfg, t.constant(o), t.constant(h), &he, mask);
                   Tensor wts = normal(a.logits.shape(), r);
                   for (std::size_t k = 0; k < wts.numel(); ++k) wts[k] *= mask[k];
                   Var lp = ops::sum(ops::mul(ops::log_softmax(a.logits), t.constant(wts)));
                   return ops::add(lp, project(a.h_next, r));
                 }, 1e-5, tm);
               }});
  v.push_back({"nets", "critic_forward", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_critic(ps, cfg, rng);
                 randomize(ps, rng);
                 const Tensor og = uniform({4, cfg.global_dim}, rng), h = uniform({4, cfg.rnn_hidden}, rng);
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   auto c = critic_forward(t, p, cfg, t.constant(og), t.constant(h));
                   return ops::add(project(c.value, r), project(c.h_next, r));
                 }, 1e-5, tm);
               }});
  v.push_back({"nets", "inference_forward", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_inference(ps, cfg, rng);
                 randomize(ps, rng);
                 const std::size_t w = cfg.n_agents * cfg.latent_dim;
                 const Tensor og = uniform({3, cfg.global_dim}, rng);
                 const Tensor mu = normal({3, w}, rng), sigma = uniform({3, w}, rng, 0.1, 1.0);
                 const auto seed = rng.next();
                 return check_gradient(ps, [&, seed](Tape& t, const Params& p) {
                   Rng r(seed);
                   return project(inference_forward(t, p, cfg, t.constant(og), t.constant(mu),
                                                    t.constant(sigma)), r);
                 }, 1e-5, tm);
               }});

  v.push_back({"losses", "ppo_clip", [](Rng& rng, const Tamper& tm) {
                 const std::size_t B = 2 + rng.below(10);
                 ParamStore ps;
                 ps.add("lp", uniform({B, 1}, rng, -1.5, -0.1));
                 const Tensor old = uniform({B, 1}, rng, -1.5, -0.1), adv = normal({B, 1}, rng);
                 return check_gradient(ps, [&](Tape& t, const Params& p) {
                   return ppo_clip_loss(p(t, "lp"), old, adv, 0.2);
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "happo_sequential_factor", [](Rng& rng, const Tamper& tm) {
                 // Agent 2's surrogate after agent 1 moved: M = A * rho_1.
                 const std::size_t B = 2 + rng.below(10);
                 ParamStore ps;
                 ps.add("lp", uniform({B, 1}, rng, -1.5, -0.1));
                 const Tensor old = uniform({B, 1}, rng, -1.5, -0.1);
                 Tensor m = normal({B, 1}, rng);
                 const Tensor n1 = uniform({B}, rng, -1.5, -0.1), o1 = uniform({B}, rng, -1.5, -0.1);
                 refresh_factor(m.span(), n1.span(), o1.span());
                 return check_gradient(ps, [&](Tape& t, const Params& p) {
                   return happo_actor_loss(p(t, "lp"), old, m, 0.2);
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "actor_surrogate_through_decoders", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_actor(ps, cfg, true, rng);
                 randomize(ps, rng);
                 const std::size_t B = 5;
                 const Tensor o = uniform({B, cfg.obs_dim}, rng), h = uniform({B, cfg.rnn_hidden}, rng);
                 const Tensor l = normal({B, cfg.latent_dim}, rng);
                 const Tensor mask({B, cfg.n_actions}, 1.0);
                 const auto act = random_actions(B, cfg.n_actions, rng);
                 const Tensor old = uniform({B, 1}, rng, -1.8, -0.8), m = normal({B, 1}, rng);
                 return check_gradient(ps, [&](Tape& t, const Params& p) {
                   HeteOut he = decode_hete(t, p, cfg, t.constant(l));
                   auto a = actor_forward(t, p, cfg, t.constant(o), t.constant(h), &he, mask);
                   return happo_actor_loss(ops::gather_cols(ops::log_softmax(a.logits), act), old, m, 0.2);
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "critic", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_critic(ps, cfg, rng);
                 randomize(ps, rng);
                 const Tensor og = uniform({4, cfg.global_dim}, rng), h = uniform({4, cfg.rnn_hidden}, rng);
                 const Tensor target = normal({4}, rng);
                 return check_gradient(ps, [&](Tape& t, const Params& p) {
                   return critic_loss(critic_forward(t, p, cfg, t.constant(og), t.constant(h)).value, target);
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "latent_value", [](Rng& rng, const Tamper& tm) {
                 const LatentBatch b(rng);
                 ParamStore latent, inference;
                 init_latent(latent, b.cfg, rng);
                 init_inference(inference, b.cfg, rng);
                 randomize(latent, rng);
                 randomize(inference, rng);
                 return check_gradient(latent, [&](Tape& t, const Params& p) {
                   auto d = latent_forward(t, p, b.cfg, t.constant(b.o), t.constant(b.h));
                   return latent_value_loss(inference_forward(
                       t, Params::frozen(inference), b.cfg, t.constant(b.og),
                       ops::scatter_rows(d.mu, b.slots, 3), ops::scatter_rows(d.sigma, b.slots, 3)));
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "entropy", [](Rng& rng, const Tamper& tm) {
                 const LatentBatch b(rng);
                 ParamStore latent;
                 init_latent(latent, b.cfg, rng);
                 randomize(latent, rng);
                 return check_gradient(latent, [&](Tape& t, const Params& p) {
                   return entropy_loss(latent_forward(t, p, b.cfg, t.constant(b.o), t.constant(b.h)).sigma,
                                       b.groups);
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "distance", [](Rng& rng, const Tamper& tm) {
                 const LatentBatch b(rng);
                 ParamStore latent;
                 init_latent(latent, b.cfg, rng);
                 randomize(latent, rng);
                 return check_gradient(latent, [&](Tape& t, const Params& p) {
                   auto d = latent_forward(t, p, b.cfg, t.constant(b.o), t.constant(b.h));
                   return distance_loss(sample_latent(d.mu, d.sigma, b.noise), b.groups).loss;
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "latent_total", [](Rng& rng, const Tamper& tm) {
                 const LatentBatch b(rng);
                 ParamStore latent, inference;
                 init_latent(latent, b.cfg, rng);
                 init_inference(inference, b.cfg, rng);
                 randomize(latent, rng);
                 randomize(inference, rng);
                 return check_gradient(latent, [&](Tape& t, const Params& p) {
                   auto d = latent_forward(t, p, b.cfg, t.constant(b.o), t.constant(b.h));
                   Var lv = latent_value_loss(inference_forward(
                       t, Params::frozen(inference), b.cfg, t.constant(b.og),
                       ops::scatter_rows(d.mu, b.slots, 3), ops::scatter_rows(d.sigma, b.slots, 3)));
                   Var le = entropy_loss(d.sigma, b.groups);
                   Var ld = distance_loss(sample_latent(d.mu, d.sigma, b.noise), b.groups).loss;
                   return latent_total_loss(lv, le, ld, 0.01, 0.1);
                 }, 1e-5, tm);
               }});
  v.push_back({"losses", "inference", [](Rng& rng, const Tamper& tm) {
                 const NetConfig cfg = small();
                 ParamStore ps;
                 init_inference(ps, cfg, rng);
                 randomize(ps, rng);
                 const std::size_t w = cfg.n_agents * cfg.latent_dim;
                 const Tensor og = uniform({4, cfg.global_dim}, rng);
                 const Tensor mu = normal({4, w}, rng), sigma = uniform({4, w}, rng, 0.1, 1.0);
                 const Tensor returns = normal({4}, rng);
                 return check_gradient(ps, [&](Tape& t, const Params& p) {
                   return inference_loss(inference_forward(t, p, cfg, t.constant(og), t.constant(mu),
                                                           t.constant(sigma)), returns);
                 }, 1e-5, tm);
               }});
  return v;
}

void corrupt_gradient(ParamStore& ps) {
  for (auto& [_, e] : ps) {
    if (e.grad.numel() == 0) continue;
    e.grad[0] += 1e-2 * (1.0 + std::abs(e.grad[0]));
    return;
  }
}

}  // namespace

std::vector<std::string> audit_modules() { return {"diffcore", "nets", "losses"}; }

std::vector<AuditResult> run_gradient_audit(const std::string& scope, int seeds, bool corrupt) {
  const auto mods = audit_modules();
  if (scope != "all" && std::find(mods.begin(), mods.end(), scope) == mods.end())
    throw std::invalid_argument("unknown gradcheck scope '" + scope + "' (all, diffcore, nets, losses)");
  const Tamper tamper = corrupt ? Tamper(corrupt_gradient) : Tamper();
  std::vector<AuditResult> out;
  std::uint64_t case_index = 0;
  for (const Case& c : cases()) {
    ++case_index;
    if (scope != "all" && c.module != scope) continue;
    AuditResult r{c.module, c.name};
    for (std::uint64_t s = 0; r.checked < seeds && s < std::uint64_t(4 * seeds); ++s) {
      Rng rng(mix_seed(case_index, s));
      const GradCheck g = c.run(rng, tamper);
      if (!g.admissible()) {
        ++r.skipped;
        continue;
      }
      ++r.checked;
      r.worst_rel_error = std::max(r.worst_rel_error, std::isnan(g.rel_error) ? 1e300 : g.rel_error);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace shppo
