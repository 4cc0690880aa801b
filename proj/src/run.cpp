#include "shppo/run.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace shppo {
namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << std::setprecision(17);
  return os;
}

void save_checkpoints(const fs::path& dir, const Trainer& tr) {
  const nlohmann::json meta = {{"update_idx", tr.updates()},
                               {"env_steps", tr.env_steps()},
                               {"seed", tr.config().seed}};
  save_checkpoint(dir / "checkpoint_full.json", model_checkpoint(tr.model(), true, meta));
  save_checkpoint(dir / "checkpoint_transfer.json", model_checkpoint(tr.model(), false, meta));
}

}  // namespace

void write_metrics_header(std::ostream& os) {
  os << "update_idx,env_steps,win_rate,mean_return,L_actor,L_critic,L_v,L_e,L_d,L_I,latent_spread\n";
}

void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  os << r.update_idx << ',' << r.env_steps << ',' << r.win_rate << ',' << r.mean_return << ','
     << r.l_actor << ',' << r.l_critic << ',' << r.l_v << ',' << r.l_e << ',' << r.l_d << ','
     << r.l_i << ',' << r.latent_spread << '\n';
}

std::uint64_t eval_seed(const RunConfig& cfg) { return mix_seed(cfg.seed, 0xE7A1); }

RunSummary run_training(const RunConfig& cfg, const RunOptions& options) {
  validate(cfg);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "resolved_config.ini");
    os << to_ini(cfg);
    auto vs = open_out(dir / "version.txt");
    vs << SHPPO_VERSION << '\n';
  }
  auto metrics = open_out(dir / "metrics.csv");
  auto losses = open_out(dir / "losses.csv");
  auto latents = open_out(dir / "latents.csv");
  write_metrics_header(metrics);
  losses << "update_idx,env_steps,L_actor,L_critic,L_v,L_e,L_d,L_L,L_I,latent_spread\n";
  write_latents_header(latents, std::size_t(cfg.nets.latent_dim));

  Trainer tr(cfg);
  RunSummary summary;
  std::uint64_t evals = 0;
  const double nan = std::nan("");

  auto evaluate_now = [&](const UpdateReport* rep) {
    std::vector<LatentRecord> recs;
    EvalOptions eo;
    eo.episodes = cfg.hyper.eval_episodes;
    eo.greedy = true;
    eo.seed = eval_seed(cfg);
    eo.zero_latent_inputs = cfg.ablation.zero_latent_inputs;
    eo.zero_latents = cfg.ablation.zero_latents;
    eo.latents = &recs;
    eo.episode_offset = evals * std::uint64_t(eo.latent_episodes);
    const EvalResult r = evaluate(tr.model(), eo);
    MetricsRow row{tr.updates(), tr.env_steps(), r.win_rate, r.mean_return,
                   rep ? rep->actor_mean() : nan, rep ? rep->critic : nan,
                   rep ? rep->l_v : nan, rep ? rep->l_e : nan, rep ? rep->l_d : nan,
                   rep ? rep->l_i : nan, tr.model().hete() ? r.latent_spread : nan};
    write_metrics_row(metrics, row);
    metrics.flush();
    for (const auto& rec : recs) write_latent_row(latents, rec);
    latents.flush();
    save_checkpoints(dir, tr);
    summary.evaluations.push_back(row);
    ++evals;
    if (options.log) {
      *options.log << "update " << row.update_idx << "  steps " << row.env_steps << "  win "
                   << row.win_rate << "  return " << row.mean_return << std::endl;
    }
    return row;
  };

  const MetricsRow first = evaluate_now(nullptr);
  bool done = options.early_stop && options.early_stop(first);
  summary.stopped_early = done;
  bool evaluated_last = true;
  while (!done && tr.env_steps() < cfg.total_env_steps) {
    if (options.stop && options.stop->load()) {
      summary.interrupted = true;
      break;
    }
    RolloutBuffer buf = tr.collect();
    const UpdateReport rep = tr.update(buf);
    losses << tr.updates() << ',' << tr.env_steps() << ',' << rep.actor_mean() << ',' << rep.critic
           << ',' << rep.l_v << ',' << rep.l_e << ',' << rep.l_d << ',' << rep.l_latent << ','
           << rep.l_i << ',' << rep.latent_spread << '\n';
    evaluated_last = false;
    const bool last = tr.env_steps() >= cfg.total_env_steps;
    if (tr.updates() % std::uint64_t(cfg.hyper.eval_interval) == 0 || last) {
      const MetricsRow row = evaluate_now(&rep);
      evaluated_last = true;
      if (options.early_stop && options.early_stop(row)) {
        summary.stopped_early = true;
        done = true;
      }
    }
  }
  if (!evaluated_last) save_checkpoints(dir, tr);
  summary.updates = tr.updates();
  summary.env_steps = tr.env_steps();
  return summary;
}

std::vector<std::pair<std::string, AblationFlags>> ablation_variants() {
  std::vector<std::pair<std::string, AblationFlags>> v;
  v.push_back({"full", {}});
  v.push_back({"zero_latent_inputs", {.zero_latent_inputs = true}});
  v.push_back({"zero_latents", {.zero_latents = true}});
  v.push_back({"drop_Lv", {.drop_Lv = true}});
  v.push_back({"drop_Le", {.drop_Le = true}});
  v.push_back({"drop_Ld", {.drop_Ld = true}});
  return v;
}

std::vector<RunSummary> run_ablation(const RunConfig& cfg, const RunOptions& options) {
  validate(cfg);
  const fs::path base = cfg.output_dir;
  fs::create_directories(base);
  std::vector<RunSummary> out;
  auto table = open_out(base / "ablation.csv");
  table << "variant,update_idx,env_steps,win_rate,mean_return,latent_spread\n";
  auto summary = open_out(base / "ablation_summary.csv");
  summary << "variant,seed,updates,env_steps,final_win_rate,final_mean_return,best_win_rate,"
             "max_latent_spread\n";
  for (const auto& [name, flags] : ablation_variants()) {
    RunConfig c = cfg;
    c.algo = Algo::shppo;
    c.ablation = flags;
    c.output_dir = (base / name).string();
    if (options.log) *options.log << "== " << name << std::endl;
    RunSummary s = run_training(c, options);
    double best = 0.0, spread = 0.0;
    for (const auto& r : s.evaluations) {
      table << name << ',' << r.update_idx << ',' << r.env_steps << ',' << r.win_rate << ','
            << r.mean_return << ',' << r.latent_spread << '\n';
      best = std::max(best, r.win_rate);
      spread = std::max(spread, r.latent_spread);
    }
    const MetricsRow& last = s.evaluations.back();
    summary << name << ',' << c.seed << ',' << s.updates << ',' << s.env_steps << ',' << last.win_rate
            << ',' << last.mean_return << ',' << best << ',' << spread << '\n';
    out.push_back(std::move(s));
    if (out.back().interrupted) break;
  }
  return out;
}

}  // namespace shppo
