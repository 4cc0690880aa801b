#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "shppo/audit.hpp"
#include "shppo/evaluate.hpp"
#include "shppo/run.hpp"

using namespace shppo;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  apply_overrides(cfg, shppo_environment());
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.out.empty()) cfg.output_dir = c.out;
  validate(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_workers) {
  cmd->add_option("--config", c.config, "INI run config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Run seed");
  if (with_workers) cmd->add_option("--workers", c.workers, "Rollout threads");
  cmd->add_option("--out", c.out, "Output directory");
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve(c);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  RunOptions opts;
  opts.stop = &g_stop;
  opts.log = &std::cout;
  const RunSummary s = run_training(cfg, opts);
  std::cout << (s.interrupted ? "interrupted" : "finished") << " after " << s.updates << " updates, "
            << s.env_steps << " env steps; outputs in " << cfg.output_dir << '\n';
  return s.interrupted ? 130 : 0;
}

int cmd_ablate(const Common& c) {
  const RunConfig cfg = resolve(c);
  std::signal(SIGINT, on_signal);
  RunOptions opts;
  opts.stop = &g_stop;
  opts.log = &std::cout;
  const auto runs = run_ablation(cfg, opts);
  std::cout << "comparison table: " << (fs::path(cfg.output_dir) / "ablation_summary.csv").string() << '\n';
  return runs.size() == ablation_variants().size() ? 0 : 130;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::optional<int> episodes;
  bool greedy = false;
  std::uint64_t seed = 0;
  std::string out;
  std::string trace;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  std::optional<TeamConfig> team;
  int episodes = HyperConfig{}.eval_episodes;
  if (!a.config.empty()) {
    RunConfig cfg = load_config(a.config);
    apply_overrides(cfg, shppo_environment());
    team = cfg.env;
    episodes = cfg.hyper.eval_episodes;
  }
  if (a.episodes) episodes = *a.episodes;
  const Model model = model_from_checkpoint(ckpt, team);

  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace);
    if (!trace) throw std::runtime_error("cannot write trace '" + a.trace + "'");
  }
  std::vector<std::pair<std::string, EvalResult>> results;
  for (const bool greedy : {true, false}) {
    if (a.greedy && !greedy) continue;
    EvalOptions eo{.episodes = episodes, .greedy = greedy, .seed = a.seed};
    if (greedy && trace.is_open()) eo.trace = &trace;
    results.push_back({greedy ? "greedy" : "stochastic", evaluate(model, eo)});
  }
  std::cout << std::setprecision(17);
  for (const auto& [mode, r] : results)
    std::cout << mode << ": win_rate=" << r.win_rate << " mean_return=" << r.mean_return
              << " episodes=" << r.episodes << '\n';
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream os(fs::path(a.out) / "eval.csv");
    os << std::setprecision(17) << "mode,config,episodes,win_rate,mean_return\n";
    for (const auto& [mode, r] : results)
      os << mode << ',' << model.team.label() << ',' << r.episodes << ',' << r.win_rate << ','
         << r.mean_return << '\n';
  }
  return 0;
}

struct TransferArgs {
  std::string checkpoint;
  std::string configs;
  int episodes = HyperConfig{}.eval_episodes;
  int seeds = 1;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_transfer(const TransferArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const TeamConfig trained = model_from_checkpoint(ckpt).team;
  const auto teams = load_team_list(a.configs, trained);
  const EvalOptions eo{.episodes = a.episodes, .greedy = true, .seed = a.seed};
  const auto rows = transfer_eval(ckpt, teams, eo, a.seeds);
  write_transfer_table(std::cout, rows);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream os(fs::path(a.out) / "transfer.csv");
    write_transfer_csv(os, rows);
  }
  return 0;
}

struct GradArgs {
  std::string scope = "all";
  int seeds = 50;
  double tolerance = 1e-4;
  bool corrupt = false;
};

int cmd_gradcheck(const GradArgs& a) {
  const auto results = run_gradient_audit(a.scope, a.seeds, a.corrupt);
  bool ok = true;
  std::cout << std::left << std::setw(10) << "module" << std::setw(36) << "check" << std::setw(14)
            << "worst_rel" << std::setw(9) << "checked" << "status\n";
  for (const auto& r : results) {
    const bool pass = r.pass(a.seeds, a.tolerance);
    ok = ok && pass;
    std::ostringstream worst;
    worst << std::scientific << std::setprecision(3) << r.worst_rel_error;
    std::cout << std::setw(10) << r.module << std::setw(36) << r.name << std::setw(14) << worst.str()
              << std::setw(9) << r.checked << (pass ? "ok" : "FAIL") << '\n';
  }
  std::cout << (ok ? "all gradients within " : "gradient check failed at tolerance ") << a.tolerance << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SHPPO training, evaluation and transfer on FocusFire"};
  app.set_version_flag("--version", std::string(SHPPO_VERSION));
  app.require_subcommand(1);

  Common train_args, ablate_args;
  add_common(app.add_subcommand("train", "Train to total_env_steps"), train_args, true);
  add_common(app.add_subcommand("ablate", "Run the five ablations and the full method"), ablate_args, true);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (greedy and stochastic)");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--config", eval_args.config, "Config whose [env] and eval_episodes apply")
      ->check(CLI::ExistingFile);
  eval->add_option("--episodes", eval_args.episodes, "Episodes per mode");
  eval->add_flag("--greedy", eval_args.greedy, "Only the greedy mode");
  eval->add_option("--seed", eval_args.seed, "Episode seed");
  eval->add_option("--out", eval_args.out, "Directory for eval.csv");
  eval->add_option("--trace", eval_args.trace, "JSON-lines trace of the greedy episodes");

  TransferArgs transfer_args;
  auto* transfer = app.add_subcommand("transfer", "Zero-shot evaluation on other team sizes");
  transfer->add_option("--checkpoint", transfer_args.checkpoint, "Checkpoint JSON")->required();
  transfer->add_option("--configs", transfer_args.configs, "INI team list, one section per team")
      ->required()
      ->check(CLI::ExistingFile);
  transfer->add_option("--episodes", transfer_args.episodes, "Episodes per seed");
  transfer->add_option("--seeds", transfer_args.seeds, "Evaluation seeds per team");
  transfer->add_option("--seed", transfer_args.seed, "First evaluation seed");
  transfer->add_option("--out", transfer_args.out, "Directory for transfer.csv");

  GradArgs grad_args;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference audit of every gradient path");
  grad->add_option("--scope", grad_args.scope, "all | diffcore | nets | losses");
  grad->add_option("--seeds", grad_args.seeds, "Admissible seeds per check");
  grad->add_option("--tolerance", grad_args.tolerance, "Maximum relative error");
  grad->add_flag("--corrupt", grad_args.corrupt, "Perturb analytic gradients (harness self-test)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("transfer")) return cmd_transfer(transfer_args);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(grad_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const LayoutError& e) {
    std::cerr << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
