#include <doctest.h>

#include <cmath>
#include <numbers>

#include "shppo/gradcheck.hpp"
#include "shppo/losses.hpp"
#include "shppo/nets.hpp"
#include "test_util.hpp"

using namespace shppo;
using shppo::testing::random_tensor;
using shppo::testing::randomize;

namespace {

NetConfig tiny() {
  NetConfig c;
  c.obs_dim = 4;
  c.n_actions = 3;
  c.mlp_hidden = 8;
  c.rnn_hidden = 5;
  c.latent_dim = 3;
  c.n_agents = 3;
  c.global_dim = 6;
  return c;
}

Tensor column(std::initializer_list<double> v) {
  return Tensor({v.size(), 1}, std::vector<double>(v));
}

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.normal();
  return t;
}

double loop_clip_loss(const Tensor& lp_new, const Tensor& lp_old, const Tensor& adv, double eps) {
  double s = 0.0;
  for (std::size_t k = 0; k < adv.numel(); ++k) {
    const double rho = std::exp(lp_new[k] - lp_old[k]);
    double clipped = rho;
    if (clipped < 1 - eps) clipped = 1 - eps;
    if (clipped > 1 + eps) clipped = 1 + eps;
    s += -std::min(rho * adv[k], clipped * adv[k]);
  }
  return s / adv.numel();
}

}  // namespace

TEST_CASE("gae: one-step TD when lambda is zero") {
  const std::vector<double> r = {0.5, -1.0, 2.0, 0.25};
  const std::vector<double> v = {0.1, 0.7, -0.3, 1.2, 0.9};
  const std::vector<std::uint8_t> d = {0, 0, 0, 0};
  const auto out = gae(r, v, d, 0.95, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    CHECK(out.advantages[t] == r[t] + 0.95 * v[t + 1] - v[t]);
    CHECK(out.returns[t] == out.advantages[t] + v[t]);
  }
}

TEST_CASE("gae: zero rewards and values give zero advantages") {
  const std::vector<double> r(5, 0.0), v(6, 0.0);
  const std::vector<std::uint8_t> d = {0, 1, 0, 0, 1};
  const auto out = gae(r, v, d, 0.95, 0.95);
  for (double a : out.advantages) CHECK(a == 0.0);
  for (double x : out.returns) CHECK(x == 0.0);
}

TEST_CASE("gae: three-step episode matches the unrolled recursion") {
  const std::vector<double> r = {1, 1, 1}, v = {0, 0, 0, 0};
  const std::vector<std::uint8_t> d = {0, 0, 1};
  const auto out = gae(r, v, d, 0.95, 0.95);
  const double k = 0.95 * 0.95;
  const double a2 = 1.0;
  const double a1 = 1.0 + k * a2;
  const double a0 = 1.0 + k * a1;
  CHECK(std::abs(out.advantages[2] - a2) <= 1e-15);
  CHECK(std::abs(out.advantages[1] - a1) <= 1e-15);
  CHECK(std::abs(out.advantages[0] - a0) <= 1e-15);
  CHECK(std::abs(a0 - 2.71700625) <= 1e-12);
  CHECK(out.returns[0] == out.advantages[0]);
}

TEST_CASE("gae: terminal steps cut the bootstrap and the trace") {
  const std::vector<double> r = {1, 2}, v = {0.5, 0.25, 100.0};
  const std::vector<std::uint8_t> d = {1, 1};
  const auto out = gae(r, v, d, 0.9, 0.9);
  CHECK(out.advantages[1] == 2.0 - 0.25);
  CHECK(out.advantages[0] == 1.0 - 0.5);
}

TEST_CASE("gae: length mismatch is a dimension error") {
  const std::vector<double> r = {1, 2}, v = {0, 0};
  const std::vector<std::uint8_t> d = {0, 0};
  CHECK_THROWS_AS(gae(r, v, d, 0.95, 0.95), DimensionError);
}

TEST_CASE("normalize: zero mean and unit standard deviation") {
  std::vector<double> x = {3, -1, 4, 1, -5, 9, 2, 6};
  normalize(x);
  double m = 0, s = 0;
  for (double v : x) m += v;
  m /= x.size();
  for (double v : x) s += (v - m) * (v - m);
  CHECK(std::abs(m) <= 1e-12);
  CHECK(std::abs(std::sqrt(s / x.size()) - 1.0) <= 1e-12);
}

TEST_CASE("ppo_clip_loss: unit ratio gives minus the mean advantage") {
  Tape t;
  const Tensor lp = column({-0.3, -1.2, -2.0});
  const Tensor adv = column({1.0, -2.0, 0.5});
  const double loss = ppo_clip_loss(t.constant(lp), lp, adv, 0.2).value()[0];
  CHECK(std::abs(loss - (-(1.0 - 2.0 + 0.5) / 3.0)) <= 1e-15);
}

TEST_CASE("ppo_clip_loss: ratio 1.5 with eps 0.2 and unit advantage contributes -1.2") {
  Tape t;
  const double loss =
      ppo_clip_loss(t.constant(column({std::log(1.5)})), column({0.0}), column({1.0}), 0.2)
          .value()[0];
  CHECK(loss == -1.2);
}

TEST_CASE("ppo_clip_loss: random batches match the per-sample loop") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t B = 1 + rng.below(30);
    const Tensor lp_new = random_tensor({B, 1}, rng, -2, 0);
    const Tensor lp_old = random_tensor({B, 1}, rng, -2, 0);
    const Tensor adv = normal_tensor({B, 1}, rng);
    Tape t;
    const double got = ppo_clip_loss(t.constant(lp_new), lp_old, adv, 0.2).value()[0];
    CHECK(std::abs(got - loop_clip_loss(lp_new, lp_old, adv, 0.2)) <= 1e-12);
  }
}

TEST_CASE("ppo_clip_loss: clipped active samples receive no gradient") {
  ParamStore ps;
  // rho = 1.5 with A > 0 and rho = 0.5 with A < 0: clipped branch is the min.
  ps.add("lp", column({std::log(1.5), std::log(0.5), std::log(1.1)}));
  Tape t;
  t.backward(ppo_clip_loss(t.param(ps, "lp"), column({0, 0, 0}), column({1.0, -1.0, 2.0}), 0.2));
  const Tensor& g = ps.grad("lp");
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(std::abs(g[2] - (-1.1 * 2.0 / 3.0)) <= 1e-12);
}

TEST_CASE("ppo_clip_loss: gradient matches finite differences over 60 seeds") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 80 && checked < 60; ++seed) {
    Rng rng(100 + seed);
    const std::size_t B = 2 + rng.below(10);
    ParamStore ps;
    ps.add("lp", random_tensor({B, 1}, rng, -1.5, -0.1));
    const Tensor lp_old = random_tensor({B, 1}, rng, -1.5, -0.1);
    const Tensor adv = normal_tensor({B, 1}, rng);
    const auto r = check_gradient(ps, [&](Tape& t, const Params& p) {
      return ppo_clip_loss(p(t, "lp"), lp_old, adv, 0.2);
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 60);
}

TEST_CASE("happo_actor_loss: M = A reduces to ppo; M = 0 gives zero loss and gradient") {
  Rng rng(2);
  const Tensor lp_old = random_tensor({6, 1}, rng, -2, 0);
  const Tensor adv = normal_tensor({6, 1}, rng);
  ParamStore ps;
  ps.add("lp", random_tensor({6, 1}, rng, -2, 0));
  {
    Tape t;
    const double a = happo_actor_loss(t.frozen(ps, "lp"), lp_old, adv, 0.2).value()[0];
    const double b = ppo_clip_loss(t.frozen(ps, "lp"), lp_old, adv, 0.2).value()[0];
    CHECK(a == b);
  }
  Tape t;
  Var loss = happo_actor_loss(t.param(ps, "lp"), lp_old, Tensor({6, 1}), 0.2);
  CHECK(loss.value()[0] == 0.0);
  t.backward(loss);
  CHECK(ps.grad_max_abs() == 0.0);
}

TEST_CASE("happo_actor_loss: two-agent sequence matches a hand-computed product factor") {
  // Agent 1 moves from old log-probs to new ones; agent 2 sees M = A * rho_1.
  const std::vector<double> adv = {1.0, -0.5};
  const std::vector<double> old1 = {std::log(0.5), std::log(0.25)};
  const std::vector<double> new1 = {std::log(0.6), std::log(0.2)};
  const std::vector<double> old2 = {std::log(0.4), std::log(0.3)};
  const std::vector<double> new2 = {std::log(0.46), std::log(0.33)};

  std::vector<double> m = adv;
  refresh_factor(m, new1, old1);
  // rho_1 = (1.2, 0.8): M = (1.2, -0.4).
  CHECK(std::abs(m[0] - 1.2) <= 1e-12);
  CHECK(std::abs(m[1] + 0.4) <= 1e-12);

  // rho_2 = (1.15, 1.1). Sample 0: min(1.15*1.2, 1.15*1.2) = 1.38.
  // Sample 1: M < 0, min(1.1*-0.4, 1.1*-0.4) = -0.44. Loss = -(1.38 - 0.44)/2.
  Tape t;
  const double loss =
      happo_actor_loss(t.constant(column({new2[0], new2[1]})), column({old2[0], old2[1]}),
                       column({m[0], m[1]}), 0.2)
          .value()[0];
  CHECK(std::abs(loss - (-(1.38 - 0.44) / 2.0)) <= 1e-12);

  // A third agent with ratio (1.5, 0.5) hits both clip edges.
  std::vector<double> m3 = m;
  refresh_factor(m3, std::vector<double>{std::log(0.46), std::log(0.33)},
                 std::vector<double>{std::log(0.4), std::log(0.3)});
  const double l3 = happo_actor_loss(t.constant(column({std::log(1.5), std::log(0.5)})),
                                     column({0.0, 0.0}), column({m3[0], m3[1]}), 0.2)
                        .value()[0];
  const double expect = -(1.2 * m3[0] + 0.8 * m3[1]) / 2.0;
  CHECK(std::abs(l3 - expect) <= 1e-12);
}

TEST_CASE("critic_loss: zero at the target, one at unit offset, loop oracle on random batches") {
  Tape t;
  const Tensor r = column({0.5, -2.0, 3.0});
  CHECK(critic_loss(t.constant(r), r).value()[0] == 0.0);
  Tensor shifted = r;
  for (auto& v : shifted.span()) v += 1.0;
  CHECK(critic_loss(t.constant(shifted), r).value()[0] == 1.0);

  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t B = 1 + rng.below(20);
    const Tensor v = normal_tensor({B, 1}, rng);
    const Tensor target = normal_tensor({B}, rng);
    double s = 0.0;
    for (std::size_t k = 0; k < B; ++k) s += (v[k] - target[k]) * (v[k] - target[k]);
    CHECK(std::abs(critic_loss(t.constant(v), target).value()[0] - s / B) <= 1e-12);
  }
}

TEST_CASE("critic_loss: gradient through CriticNet matches finite differences") {
  const NetConfig cfg = tiny();
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 70 && checked < 50; ++seed) {
    Rng rng(200 + seed);
    ParamStore critic;
    init_critic(critic, cfg, rng);
    randomize(critic, rng);
    const Tensor og = random_tensor({4, cfg.global_dim}, rng);
    const Tensor hc = random_tensor({4, cfg.rnn_hidden}, rng);
    const Tensor R = normal_tensor({4}, rng);
    const auto r = check_gradient(critic, [&](Tape& t, const Params& p) {
      return critic_loss(critic_forward(t, p, cfg, t.constant(og), t.constant(hc)).value, R);
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("entropy: closed form for unit sigma in three dimensions") {
  const std::vector<double> sigma = {1, 1, 1};
  const double h = gaussian_entropy(sigma);
  CHECK(std::abs(h - 1.5 * std::log(2 * std::numbers::pi * std::numbers::e)) <= 1e-15);
  CHECK(std::abs(h - 4.2568) <= 1e-4);
}

TEST_CASE("entropy: closed form agrees with a 1e6-sample Monte-Carlo -E[log p]") {
  Rng rng(4);
  const std::vector<double> mu = {0.3, -1.0, 2.0};
  const std::vector<double> sigma = {0.5, 1.0, 2.5};
  constexpr int kDraws = 1000000;
  double acc = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    double logp = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double x = mu[j] + sigma[j] * rng.normal();
      const double z = (x - mu[j]) / sigma[j];
      logp += -0.5 * z * z - std::log(sigma[j]) - 0.5 * std::log(2 * std::numbers::pi);
    }
    acc -= logp;
  }
  CHECK(std::abs(acc / kDraws - gaussian_entropy(sigma)) <= 1e-2);
}

TEST_CASE("entropy_loss: halving sigma, identical agents, permutation, invalid sigma") {
  Rng rng(5);
  const Tensor sigma = random_tensor({4, 3}, rng, 0.2, 2.0);
  Tensor halved = sigma;
  for (auto& v : halved.span()) v *= 0.5;
  Tape t;
  const double full = entropy_loss(t.constant(sigma)).value()[0];
  const double half = entropy_loss(t.constant(halved)).value()[0];
  CHECK(std::abs((full - half) - 3 * std::log(2.0)) <= 1e-12);

  Tensor same({5, 3});
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 3; ++j) same.at(r, j) = sigma.at(0, j);
  CHECK(std::abs(entropy_loss(t.constant(same)).value()[0] - gaussian_entropy(sigma.row(0))) <=
        1e-12);

  Tensor perm = sigma;
  for (std::size_t j = 0; j < 3; ++j) std::swap(perm.at(0, j), perm.at(3, j));
  CHECK(std::abs(entropy_loss(t.constant(perm)).value()[0] - full) <= 1e-12);

  Tensor bad = sigma;
  bad.at(2, 1) = 0.0;
  CHECK_THROWS_AS(entropy_loss(t.constant(bad)), ContractError);
}

TEST_CASE("entropy_loss: groups average per step, then across steps") {
  Rng rng(6);
  const Tensor sigma = random_tensor({5, 3}, rng, 0.2, 2.0);
  const std::vector<std::size_t> groups = {2, 3};
  Tape t;
  const double got = entropy_loss(t.constant(sigma), groups).value()[0];
  const double g0 = (gaussian_entropy(sigma.row(0)) + gaussian_entropy(sigma.row(1))) / 2;
  const double g1 = (gaussian_entropy(sigma.row(2)) + gaussian_entropy(sigma.row(3)) +
                     gaussian_entropy(sigma.row(4))) / 3;
  CHECK(std::abs(got - (g0 + g1) / 2) <= 1e-12);
}

TEST_CASE("distance_loss: identical latents give zero") {
  Tape t;
  Tensor l({4, 3});
  for (std::size_t r = 0; r < 4; ++r) {
    l.at(r, 0) = 0.3;
    l.at(r, 1) = -1.0;
    l.at(r, 2) = 2.0;
  }
  const auto d = distance_loss(t.constant(l));
  CHECK(d.loss.value()[0] == 0.0);
  CHECK(std::abs(d.raw_mean) <= 1e-15);
}

TEST_CASE("distance_loss: two opposite latents collapse to zero after Norm") {
  Tape t;
  const auto d = distance_loss(t.constant(Tensor::matrix(2, 3, {1, 0, 0, -1, 0, 0})));
  CHECK(d.loss.value()[0] == 0.0);
  CHECK(d.raw_mean == 2.0);
  const auto raw = pairwise_cosine_distances(Tensor::matrix(2, 3, {1, 0, 0, -1, 0, 0}));
  CHECK(raw == std::vector<double>{2.0, 2.0});
}

TEST_CASE("Norm: non-degenerate multisets map onto [0, 1] with min to 0 and max to 1") {
  Rng rng(7);
  const std::vector<double> fixed = {0, 1, 2, 0.5, 1.5, 2};
  const auto nf = min_max_normalize(fixed);
  CHECK(nf[0] == 0.0);
  CHECK(std::abs(nf[2] - 1.0) <= 1e-11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(2 + rng.below(20));
    for (auto& v : x) v = rng.uniform(0, 2);
    const auto n = min_max_normalize(x);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    for (double v : n) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(n[lo - x.begin()] == 0.0);
    CHECK(std::abs(n[hi - x.begin()] - 1.0) <= 1e-9);
  }
}

TEST_CASE("distance_loss: matches Norm over the ordered-pair multiset and stays in [0, 1]") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const Tensor l = normal_tensor({n, 3}, rng);
    const auto raw = pairwise_cosine_distances(l);
    const auto norm = min_max_normalize(raw);
    double expect = 0.0;
    for (double v : norm) expect += v;
    expect /= norm.size();
    Tape t;
    const double got = distance_loss(t.constant(l)).loss.value()[0];
    CHECK(std::abs(got - expect) <= 1e-12);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("distance_loss: zero vectors count as distance one") {
  const auto raw = pairwise_cosine_distances(Tensor::matrix(3, 3, {0, 0, 0, 1, 0, 0, 1, 1, 0}));
  CHECK(raw[0] == 1.0);
  CHECK(raw[1] == 1.0);
  CHECK(raw[2] == 1.0);
  CHECK(raw[4] == 1.0);
  Tape t;
  CHECK(std::isfinite(
      distance_loss(t.constant(Tensor::matrix(3, 3, {0, 0, 0, 1, 0, 0, 1, 1, 0}))).loss.value()[0]));
}

TEST_CASE("distance_loss: tied extremes share the gradient; degenerate sets get none") {
  ParamStore ps;
  ps.add("l", Tensor::matrix(2, 3, {1, 0, 0, -1, 0, 0}));
  Tape t;
  t.backward(distance_loss(t.param(ps, "l")).loss);
  CHECK(ps.grad_max_abs() == 0.0);
}

// LatentNet -> reparameterized sample -> L_d, over per-step groups.
TEST_CASE("distance_loss: gradient into the LatentNet matches finite differences") {
  const NetConfig cfg = tiny();
  const std::vector<std::size_t> groups = {3, 2, 3};
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 120 && checked < 50; ++seed) {
    Rng rng(300 + seed);
    ParamStore latent;
    init_latent(latent, cfg, rng);
    randomize(latent, rng);
    const Tensor o = random_tensor({8, cfg.obs_dim}, rng);
    const Tensor h = random_tensor({8, cfg.rnn_hidden}, rng);
    const Tensor noise = normal_tensor({8, cfg.latent_dim}, rng);
    const auto r = check_gradient(latent, [&](Tape& t, const Params& p) {
      auto d = latent_forward(t, p, cfg, t.constant(o), t.constant(h));
      return distance_loss(sample_latent(d.mu, d.sigma, noise), groups).loss;
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("entropy_loss: gradient into the LatentNet matches finite differences") {
  const NetConfig cfg = tiny();
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 70 && checked < 50; ++seed) {
    Rng rng(400 + seed);
    ParamStore latent;
    init_latent(latent, cfg, rng);
    randomize(latent, rng);
    const Tensor o = random_tensor({5, cfg.obs_dim}, rng);
    const Tensor h = random_tensor({5, cfg.rnn_hidden}, rng);
    const std::vector<std::size_t> groups = {2, 3};
    const auto r = check_gradient(latent, [&](Tape& t, const Params& p) {
      return entropy_loss(latent_forward(t, p, cfg, t.constant(o), t.constant(h)).sigma, groups);
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("latent_value_loss: zero InferenceNet gives zero loss and no LatentNet gradient") {
  const NetConfig cfg = tiny();
  Rng rng(9);
  ParamStore latent, inference;
  init_latent(latent, cfg, rng);
  init_inference(inference, cfg, rng);
  for (auto& [_, e] : inference) e.value.fill(0.0);
  const std::size_t W = cfg.n_agents * cfg.latent_dim;
  Tape t;
  auto d = latent_forward(t, Params::trainable(latent), cfg,
                          t.constant(random_tensor({cfg.n_agents, cfg.obs_dim}, rng)),
                          t.constant(random_tensor({cfg.n_agents, cfg.rnn_hidden}, rng)));
  const std::vector<long> slots = {0, 1, 2};
  Var mu_all = ops::scatter_rows(d.mu, slots, cfg.n_agents);
  Var sg_all = ops::scatter_rows(d.sigma, slots, cfg.n_agents);
  CHECK(mu_all.cols() == W);
  Var lv = latent_value_loss(inference_forward(t, Params::frozen(inference), cfg,
                                               t.constant(random_tensor({1, cfg.global_dim}, rng)),
                                               mu_all, sg_all));
  CHECK(lv.value()[0] == 0.0);
  t.backward(lv);
  CHECK(latent.grad_max_abs() == 0.0);
  CHECK(inference.grad_max_abs() == 0.0);
}

namespace {

// Full LatentNet objective over `steps` environment steps with n agents each.
struct LatentFixture {
  NetConfig cfg = tiny();
  std::size_t steps = 2;
  Tensor o, h, noise, og;
  ParamStore latent, inference;

  explicit LatentFixture(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t rows = steps * cfg.n_agents;
    init_latent(latent, cfg, rng);
    init_inference(inference, cfg, rng);
    randomize(latent, rng);
    randomize(inference, rng);
    o = random_tensor({rows, cfg.obs_dim}, rng);
    h = random_tensor({rows, cfg.rnn_hidden}, rng);
    noise = normal_tensor({rows, cfg.latent_dim}, rng);
    og = random_tensor({steps, cfg.global_dim}, rng);
  }

  struct Parts {
    Var lv, le, ld;
  };

  Parts parts(Tape& t, const Params& p) const {
    auto d = latent_forward(t, p, cfg, t.constant(o), t.constant(h));
    std::vector<long> slots(steps * cfg.n_agents);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<long>(i);
    const std::vector<std::size_t> groups(steps, cfg.n_agents);
    Var vi = inference_forward(t, Params::frozen(inference), cfg, t.constant(og),
                               ops::scatter_rows(d.mu, slots, cfg.n_agents),
                               ops::scatter_rows(d.sigma, slots, cfg.n_agents));
    return {latent_value_loss(vi), entropy_loss(d.sigma, groups),
            distance_loss(sample_latent(d.mu, d.sigma, noise), groups).loss};
  }
};

}  // namespace

TEST_CASE("latent_value_loss: frozen InferenceNet gets no gradient; LatentNet gradient matches FD") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 70 && checked < 50; ++seed) {
    LatentFixture f(500 + seed);
    {
      Tape t;
      t.backward(f.parts(t, Params::trainable(f.latent)).lv);
      CHECK(f.inference.grad_max_abs() == 0.0);
      CHECK(f.latent.grad_max_abs() > 0.0);
    }
    const auto r = check_gradient(f.latent, [&](Tape& t, const Params& p) {
      return f.parts(t, p).lv;
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("latent_total_loss: arithmetic and weight switches") {
  Tape t;
  Var lv = t.constant(Tensor::vector({1.0}));
  Var le = t.constant(Tensor::vector({2.0}));
  Var ld = t.constant(Tensor::vector({3.0}));
  CHECK(std::abs(latent_total_loss(lv, le, ld, 0.01, 0.1).value()[0] - (-1.28)) <= 1e-15);
  CHECK(latent_total_loss(lv, le, ld, 0.0, 0.0).value()[0] == -1.0);
}

TEST_CASE("latent_total_loss: gradient into the LatentNet matches finite differences") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 90 && checked < 50; ++seed) {
    LatentFixture f(600 + seed);
    const auto r = check_gradient(f.latent, [&](Tape& t, const Params& p) {
      auto parts = f.parts(t, p);
      return latent_total_loss(parts.lv, parts.le, parts.ld, 0.01, 0.1);
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("inference_loss: arithmetic, detachment, and gradient into the InferenceNet") {
  Tape t0;
  CHECK(inference_loss(t0.constant(column({1, 2})), Tensor::vector({0, 0})).value()[0] == 2.5);
  CHECK(inference_loss(t0.constant(column({1, 2})), Tensor::vector({1, 2})).value()[0] == 0.0);

  int checked = 0;
  for (std::uint64_t seed = 0; seed < 70 && checked < 50; ++seed) {
    LatentFixture f(700 + seed);
    Rng rng(seed);
    const Tensor R = normal_tensor({f.steps}, rng);
    Tensor mu, sigma;
    {
      Tape t;
      auto d = latent_forward(t, Params::frozen(f.latent), f.cfg, t.constant(f.o),
                              t.constant(f.h));
      mu = d.mu.value().reshaped({f.steps, f.cfg.n_agents * f.cfg.latent_dim});
      sigma = d.sigma.value().reshaped({f.steps, f.cfg.n_agents * f.cfg.latent_dim});
    }
    auto build = [&](Tape& t, const Params& p) {
      return inference_loss(
          inference_forward(t, p, f.cfg, t.constant(f.og), t.constant(mu), t.constant(sigma)), R);
    };
    {
      Tape t;
      t.backward(build(t, Params::trainable(f.inference)));
      CHECK(f.latent.grad_max_abs() == 0.0);
    }
    const auto r = check_gradient(f.inference, build);
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}

TEST_CASE("actor loss: HAPPO surrogate through decoders and HeteLayer matches FD") {
  const NetConfig cfg = tiny();
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 90 && checked < 50; ++seed) {
    Rng rng(800 + seed);
    ParamStore actor;
    init_actor(actor, cfg, true, rng);
    randomize(actor, rng);
    const std::size_t B = 4;
    const Tensor o = random_tensor({B, cfg.obs_dim}, rng);
    const Tensor h = random_tensor({B, cfg.rnn_hidden}, rng);
    const Tensor l = normal_tensor({B, cfg.latent_dim}, rng);
    Tensor mask({B, cfg.n_actions}, 1.0);
    mask.at(0, 1) = 0.0;
    const std::vector<int> act = {0, 2, 1, 2};
    const Tensor lp_old = random_tensor({B, 1}, rng, -1.6, -0.6);
    const Tensor m = normal_tensor({B, 1}, rng);
    const auto r = check_gradient(actor, [&](Tape& t, const Params& p) {
      HeteOut hp = decode_hete(t, p, cfg, t.constant(l));
      auto out = actor_forward(t, p, cfg, t.constant(o), t.constant(h), &hp, mask);
      return happo_actor_loss(ops::gather_cols(ops::log_softmax(out.logits), act), lp_old, m, 0.2);
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-4);
  }
  CHECK(checked == 50);
}
