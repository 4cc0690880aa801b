#include <doctest.h>

#include "shppo/config.hpp"

using namespace shppo;

TEST_CASE("empty text yields defaults") {
  CHECK(parse_config("") == RunConfig{});
  CHECK(parse_config("algo = shppo\n") == RunConfig{});
}

TEST_CASE("to_ini round-trips a non-default config exactly") {
  RunConfig c;
  c.algo = Algo::happo_shared;
  c.seed = 987654321;
  c.total_env_steps = 12345;
  c.workers = 3;
  c.output_dir = "runs/x";
  c.env.n_fighters = 3;
  c.env.k_enemies = 2;
  c.nets.latent_dim = 5;
  c.hyper.lr_actor = 0.1 + 0.2;  // not representable in few digits
  c.hyper.gamma = 0.99;
  c.hyper.rollout_envs = 7;
  c.ablation.drop_Ld = true;
  c.ablation.zero_latents = true;
  const RunConfig back = parse_config(to_ini(c));
  CHECK(back == c);
  CHECK(to_ini(back) == to_ini(c));
}

TEST_CASE("sections and comments parse") {
  const auto c = parse_config(
      "; run\nalgo = mappo_shared\nseed = 9\n[env]\nn_enemies = 6\n[hyper]\nclip = 0.1\n"
      "[ablation]\ndrop_Lv = true\n");
  CHECK(c.algo == Algo::mappo_shared);
  CHECK(c.seed == 9);
  CHECK(c.env.n_enemies == 6);
  CHECK(c.hyper.clip == 0.1);
  CHECK(c.ablation.drop_Lv);
}

TEST_CASE("unknown keys and sections are rejected with the field name") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("colour = red\n").find("colour") != std::string::npos);
  CHECK(message("[hyper]\nlr = 1\n").find("hyper.lr") != std::string::npos);
  CHECK(message("[optim]\nlr = 1\n").find("optim") != std::string::npos);
  CHECK(message("[hyper]\nclip = abc\n").find("hyper.clip") != std::string::npos);
  CHECK(message("[hyper]\nclip = 1.5\n").find("hyper.clip") != std::string::npos);
  CHECK(message("[ablation]\ndrop_Le = maybe\n").find("ablation.drop_Le") != std::string::npos);
  CHECK(message("algo = ppo\n").find("algo") != std::string::npos);
  CHECK(message("[env]\nn_enemies = 0\n").find("env.") != std::string::npos);
  CHECK(message("workers = 0\n").find("workers") != std::string::npos);
}

TEST_CASE("environment overrides take precedence") {
  RunConfig c = parse_config("seed = 4\n[hyper]\nlr_actor = 0.001\n");
  apply_overrides(c, {{"SHPPO_SEED", "11"},
                      {"SHPPO_HYPER__LR_ACTOR", "0.25"},
                      {"SHPPO_ABLATION__DROP_LV", "true"},
                      {"PATH", "/bin"}});
  CHECK(c.seed == 11);
  CHECK(c.hyper.lr_actor == 0.25);
  CHECK(c.ablation.drop_Lv);
  CHECK_THROWS_AS(apply_overrides(c, {{"SHPPO_NOPE", "1"}}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(c, {{"SHPPO_HYPER__GAMMA", "2"}}), ConfigError);
}

TEST_CASE("missing file is a config error") {
  CHECK_THROWS_AS(load_config("/nonexistent/run.ini"), ConfigError);
}

TEST_CASE("team list: sections start from the base team and keep file order") {
  TeamConfig base;
  const auto teams = parse_team_list("[same]\n[bigger]\nn_fighters = 5\nn_enemies = 6\n[smaller]\nn_fighters = 3\nn_enemies = 4\n", base);
  REQUIRE(teams.size() == 3);
  CHECK(teams[0] == base);
  CHECK(teams[1].label() == "5F+1H_vs_6G");
  CHECK(teams[2].label() == "3F+1H_vs_4G");
  CHECK_THROWS_AS(parse_team_list("[x]\nlr = 1\n", base), ConfigError);
  CHECK_THROWS_AS(parse_team_list("n_fighters = 2\n", base), ConfigError);
  CHECK_THROWS_AS(parse_team_list("", base), ConfigError);
}
