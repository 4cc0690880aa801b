#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "shppo/checkpoint.hpp"
#include "shppo/gradcheck.hpp"
#include "shppo/layers.hpp"
#include "shppo/ops.hpp"
#include "shppo/optim.hpp"

using namespace shppo;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.uniform(lo, hi);
  return t;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("linear: identity and zero-weight cases") {
  ParamStore ps;
  ps.add("l.w", Tensor::identity(2));
  ps.add("l.b", Tensor({2}));
  Tape t;
  Var y = linear_layer(t, Params::frozen(ps), "l", t.constant(Tensor::vector({3.0, -1.0})));
  CHECK(y.value() == Tensor::vector({3.0, -1.0}));

  ps.value("l.w").fill(0.0);
  ps.value("l.b") = Tensor::vector({5.0, 5.0});
  Var z = linear_layer(t, Params::frozen(ps), "l", t.constant(Tensor::vector({0.3, 9.0})));
  CHECK(z.value() == Tensor::vector({5.0, 5.0}));
}

TEST_CASE("linear: matches a naive triple-loop matmul") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng.below(5);
    const Tensor w = random_tensor({4, 3}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Tensor x = random_tensor({batch, 3}, rng);
    Tape t;
    const Tensor& y = ops::linear(t.constant(x), t.constant(w), t.constant(b)).value();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t o = 0; o < 4; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < 3; ++i) s += w.at(o, i) * x.at(r, i);
        CHECK(std::abs(y.at(r, o) - s) <= 1e-12);
      }
  }
}

TEST_CASE("linear: shape mismatch names both shapes") {
  Tape t;
  Var w = t.constant(Tensor({4, 3}));
  Var b = t.constant(Tensor({4}));
  Var x = t.constant(Tensor({2, 5}));
  try {
    ops::linear(x, w, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(4, 3)") != std::string::npos);
    CHECK(msg.find("(2, 5)") != std::string::npos);
  }
}

TEST_CASE("gru_step: zero parameters and zero state stay at zero") {
  Rng rng(2);
  ParamStore ps;
  init_gru(ps, "g", 5, 6, rng);
  for (auto& [_, e] : ps) e.value.fill(0.0);
  Tape t;
  Var h = gru_step(t, Params::frozen(ps), "g", t.constant(random_tensor({3, 5}, rng)),
                   t.constant(Tensor({3, 6})));
  for (double v : h.value().span()) CHECK(v == 0.0);
}

TEST_CASE("gru_step: matches the hand-unrolled update formula") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t in = 4, hid = 5;
    ParamStore ps;
    init_gru(ps, "g", in, hid, rng);
    for (auto name : {"g.b_ih", "g.b_hh"})
      for (auto& v : ps.value(name).span()) v = rng.uniform(-0.5, 0.5);
    const Tensor x = random_tensor({2, in}, rng);
    const Tensor h = random_tensor({2, hid}, rng, -0.9, 0.9);
    Tape t;
    const Tensor& out =
        gru_step(t, Params::frozen(ps), "g", t.constant(x), t.constant(h)).value();

    const Tensor& wi = ps.value("g.w_ih");
    const Tensor& wh = ps.value("g.w_hh");
    const Tensor& bi = ps.value("g.b_ih");
    const Tensor& bh = ps.value("g.b_hh");
    for (std::size_t r = 0; r < 2; ++r) {
      auto pre = [&](const Tensor& w, const Tensor& b, const Tensor& v, std::size_t row,
                     std::size_t width) {
        double s = b[row];
        for (std::size_t j = 0; j < width; ++j) s += w.at(row, j) * v.at(r, j);
        return s;
      };
      for (std::size_t k = 0; k < hid; ++k) {
        const double rg = sigmoid_ref(pre(wi, bi, x, k, in) + pre(wh, bh, h, k, hid));
        const double zg =
            sigmoid_ref(pre(wi, bi, x, hid + k, in) + pre(wh, bh, h, hid + k, hid));
        const double ng =
            std::tanh(pre(wi, bi, x, 2 * hid + k, in) + rg * pre(wh, bh, h, 2 * hid + k, hid));
        const double expected = (1.0 - zg) * ng + zg * h.at(r, k);
        CHECK(std::abs(out.at(r, k) - expected) <= 1e-12);
        CHECK(std::abs(out.at(r, k)) < 1.0);
      }
    }
  }
}

TEST_CASE("gru_step: gradient of sum(h_next) matches finite differences") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore ps;
    init_gru(ps, "g", 3, 4, rng);
    for (auto name : {"g.b_ih", "g.b_hh"})
      for (auto& v : ps.value(name).span()) v = rng.uniform(-0.5, 0.5);
    const Tensor x = random_tensor({2, 3}, rng);
    const Tensor h = random_tensor({2, 4}, rng);
    const auto r = check_gradient(ps, [&](Tape& t, const Params& p) {
      return ops::sum(gru_step(t, p, "g", t.constant(x), t.constant(h)));
    });
    CHECK(r.rel_error <= 1e-6);
  }
}

TEST_CASE("gru_step: hidden-size mismatch is a dimension error") {
  Rng rng(5);
  ParamStore ps;
  init_gru(ps, "g", 3, 4, rng);
  Tape t;
  CHECK_THROWS_AS(gru_step(t, Params::frozen(ps), "g", t.constant(Tensor({1, 3})),
                           t.constant(Tensor({1, 5}))),
                  DimensionError);
  CHECK_THROWS_AS(gru_step(t, Params::frozen(ps), "g", t.constant(Tensor({1, 2})),
                           t.constant(Tensor({1, 4}))),
                  DimensionError);
}

TEST_CASE("backward: quadratic, constant, and non-scalar loss") {
  ParamStore ps;
  ps.add("x", Tensor::vector({3.0}));
  {
    Tape t;
    Var x = t.param(ps, "x");
    t.backward(ops::mul(x, x));
    CHECK(ps.grad("x")[0] == 6.0);
  }
  ps.zero_grad();
  {
    Tape t;
    t.param(ps, "x");
    t.backward(t.constant(Tensor::vector({4.0})));
    CHECK(ps.grad("x")[0] == 0.0);
  }
  {
    Tape t;
    t.param(ps, "x");
    Var two = ops::concat_cols(std::vector<Var>{t.constant(Tensor({1, 1})), t.constant(Tensor({1, 1}))});
    CHECK_THROWS_AS(t.backward(ops::add_constant(two, Tensor({1, 2}))), ContractError);
  }
}

TEST_CASE("backward: composite MLP matches finite differences") {
  Rng rng(6);
  int checked = 0;
  for (int trial = 0; checked < 10 && trial < 40; ++trial) {
    ParamStore ps;
    init_linear(ps, "l0", 5, 8, rng);
    init_linear(ps, "l1", 8, 8, rng);
    init_linear(ps, "l2", 8, 1, rng);
    for (auto& [_, e] : ps)
      if (e.value.rank() == 1)
        for (auto& v : e.value.span()) v = rng.uniform(-0.3, 0.3);
    const Tensor x = random_tensor({3, 5}, rng);
    const auto r = check_gradient(ps, [&](Tape& t, const Params& p) {
      Var h = ops::relu(linear_layer(t, p, "l0", t.constant(x)));
      h = ops::tanh(linear_layer(t, p, "l1", h));
      return ops::mean(ops::mul(linear_layer(t, p, "l2", h), linear_layer(t, p, "l2", h)));
    });
    if (!r.admissible()) continue;
    ++checked;
    CHECK(r.rel_error <= 1e-6);
  }
  CHECK(checked == 10);
}

TEST_CASE("backward: twice on the same tape doubles gradients") {
  Rng rng(7);
  ParamStore ps;
  init_linear(ps, "l", 3, 2, rng);
  Tape t;
  Var y = ops::sum(ops::tanh(linear_layer(t, Params::trainable(ps), "l",
                                          t.constant(random_tensor({4, 3}, rng)))));
  t.backward(y);
  const Tensor once = ps.grad("l.w");
  t.backward(y);
  const Tensor& twice = ps.grad("l.w");
  for (std::size_t i = 0; i < once.numel(); ++i) CHECK(twice[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("backward: frozen parameters and unused parameters receive zero") {
  Rng rng(8);
  ParamStore used, frozen;
  init_linear(used, "a", 3, 3, rng);
  init_linear(used, "unused", 3, 3, rng);
  init_linear(frozen, "f", 3, 1, rng);
  Tape t;
  Var h = linear_layer(t, Params::trainable(used), "a", t.constant(random_tensor({2, 3}, rng)));
  Var out = linear_layer(t, Params::frozen(frozen), "f", ops::tanh(h));
  t.backward(ops::sum(out));
  CHECK(used.grad("a.w") != Tensor(used.grad("a.w").shape()));
  CHECK(used.grad("unused.w") == Tensor(used.grad("unused.w").shape()));
  CHECK(frozen.grad_max_abs() == 0.0);
}

// Every primitive op appears in this graph; over many seeds the analytic
// gradient must agree with central differences.
TEST_CASE("property: every tape op matches finite differences over 100 seeds") {
  int failures = 0;
  int skipped = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t batch = 2 + rng.below(3);
    const std::size_t in = 2 + rng.below(6);
    const std::size_t hid = 2 + rng.below(7);
    const std::size_t actions = 2 + rng.below(4);
    ParamStore ps;
    init_linear(ps, "a", in, hid, rng);
    init_linear(ps, "w", hid, hid * hid, rng);
    init_linear(ps, "b", hid, hid, rng);
    init_linear(ps, "head", hid, actions, rng);
    init_gru(ps, "g", hid, hid, rng);
    for (auto& [_, e] : ps)
      if (e.value.rank() == 1)
        for (auto& v : e.value.span()) v = rng.uniform(-0.2, 0.2);
    const Tensor x = random_tensor({batch, in}, rng);
    const Tensor h0 = random_tensor({batch, hid}, rng, -0.5, 0.5);
    const Tensor positive = random_tensor({batch, hid}, rng, 0.5, 1.5);
    std::vector<int> pick(batch);
    for (auto& a : pick) a = static_cast<int>(rng.below(actions));
    std::vector<long> layout;
    for (std::size_t r = 0; r < batch; ++r) layout.push_back(static_cast<long>(batch - 1 - r));
    layout.push_back(-1);
    layout.push_back(0);
    if (layout.size() % 2 != 0) layout.push_back(-1);

    const auto r = check_gradient(ps, [&](Tape& t, const Params& p) {
      Var f = ops::softplus(linear_layer(t, p, "a", t.constant(x)));
      Var h = gru_step(t, p, "g", f, t.constant(h0));
      Var w = ops::scale(linear_layer(t, p, "w", ops::sigmoid(h)), 0.5);
      Var bias = linear_layer(t, p, "b", ops::relu(ops::sub(h, f)));
      Var het = ops::hete_linear(w, h, bias);
      Var both = ops::concat_cols(std::vector<Var>{het, f});
      Var back = ops::add(ops::slice_cols(both, 0, hid), ops::slice_cols(both, hid, hid));
      Var lp = ops::log_softmax(linear_layer(t, p, "head", back));
      Var chosen = ops::gather_cols(lp, pick);
      Var logs = ops::log(ops::add_constant(ops::exp(ops::scale(h, 0.3)), positive));
      Var spread = ops::scatter_rows(logs, layout, 2);
      return ops::add(ops::mean(chosen), ops::mean(ops::mul(spread, spread)));
    });
    if (!r.admissible()) {
      ++skipped;
      continue;
    }
    worst = std::max(worst, r.rel_error);
    if (r.rel_error > 1e-4) ++failures;
  }
  CAPTURE(worst);
  CHECK(failures == 0);
  CHECK(skipped <= 20);
}

TEST_CASE("adam: zero gradient leaves value unchanged, steps descend") {
  ParamStore ps;
  ps.add("x", Tensor::vector({1.5}));
  Adam opt({.lr = 0.1});
  opt.step(ps);
  CHECK(ps.value("x")[0] == 1.5);
  CHECK(opt.steps() == 1);

  for (int i = 0; i < 20; ++i) {
    const double before = ps.value("x")[0];
    ps.grad("x")[0] = 2.0;
    opt.step(ps);
    CHECK(ps.value("x")[0] < before);
    CHECK(ps.grad("x")[0] == 0.0);
  }
  ParamStore fresh;
  fresh.add("x", Tensor::vector({1.5}));
  Adam up({.lr = 0.1});
  for (int i = 0; i < 20; ++i) {
    const double before = fresh.value("x")[0];
    fresh.grad("x")[0] = -0.5;
    up.step(fresh);
    CHECK(fresh.value("x")[0] > before);
  }
}

TEST_CASE("adam: ten steps on x^2 from x=1 strictly shrink |x|") {
  // Scalar simulation of the Adam recurrence as the oracle.
  double x_ref = 1.0, m = 0.0, v = 0.0;
  ParamStore ps;
  ps.add("x", Tensor::vector({1.0}));
  Adam opt({.lr = 0.1});
  double prev = 1.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * x_ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x_ref -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);

    ps.grad("x")[0] = 2.0 * ps.value("x")[0];
    opt.step(ps);
    const double x = ps.value("x")[0];
    CHECK(x == doctest::Approx(x_ref).epsilon(1e-12));
    CHECK(std::abs(x) < prev);
    prev = std::abs(x);
  }
}

TEST_CASE("adam: non-finite gradient is rejected with the parameter name") {
  ParamStore ps;
  ps.add("good", Tensor::vector({1.0}));
  ps.add("bad.weight", Tensor::vector({1.0}));
  ps.grad("bad.weight")[0] = std::numeric_limits<double>::quiet_NaN();
  Adam opt;
  try {
    opt.step(ps);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
  }
  CHECK(ps.value("good")[0] == 1.0);
}

TEST_CASE("finite_diff_grad: closed-form cases") {
  ParamStore ps;
  ps.add("theta", Tensor::vector({2.0}));
  auto g = finite_diff_grad([](ParamStore& p) { return p.value("theta")[0] * p.value("theta")[0]; },
                            ps);
  CHECK(std::abs(g.at("theta")[0] - 4.0) <= 1e-8);
  CHECK(ps.value("theta")[0] == 2.0);

  ParamStore many;
  many.add("a", Tensor({2, 3}, 0.7));
  many.add("b", Tensor({4}, -1.0));
  auto ones = finite_diff_grad(
      [](ParamStore& p) {
        double s = 0.0;
        for (auto& [_, e] : p)
          for (double v : e.value.span()) s += v;
        return s;
      },
      many);
  for (const auto& [_, t] : ones)
    for (double v : t.span()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(finite_diff_grad([](ParamStore&) { return std::nan(""); }, many),
                  ContractError);
}

TEST_CASE("checkpoint: manifest round-trip is bit-exact") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Checkpoint ck;
    ck.tag = "full";
    ck.meta = {{"algo", "shppo"}};
    const std::size_t n_entries = 1 + rng.below(4);
    for (std::size_t e = 0; e < n_entries; ++e) {
      Tensor t = random_tensor({1 + rng.below(5), 1 + rng.below(7)}, rng, -1e6, 1e6);
      t[0] = std::numeric_limits<double>::denorm_min();
      if (t.numel() > 1) t[1] = -0.0;
      ck.params.add("p" + std::to_string(e), std::move(t));
    }
    const Checkpoint back = checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(ck).dump()));
    CHECK(back.tag == "full");
    CHECK(back.meta == ck.meta);
    CHECK(values_equal(back.params, ck.params));
  }
  CHECK(decode_f64(encode_f64(std::vector<double>{})).empty());
}

TEST_CASE("checkpoint: manifest layout") {
  Checkpoint ck;
  ck.tag = "transfer";
  ck.params.add("x", Tensor::vector({1.0}));
  const auto doc = checkpoint_to_json(ck);
  CHECK(doc["format_version"] == 1);
  CHECK(doc["entries"][0]["name"] == "x");
  CHECK(doc["entries"][0]["dtype"] == "f64");
  CHECK(doc["entries"][0]["shape"] == nlohmann::json::array({1}));
  // 1.0 as little-endian bytes 00 00 00 00 00 00 f0 3f
  CHECK(doc["entries"][0]["data"] == "AAAAAAAA8D8=");
  CHECK_THROWS(load_checkpoint("/nonexistent/ckpt.json"));
}
