#include "shppo/evaluate.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "shppo/trainer.hpp"

namespace shppo {
namespace {

bool rows_differ(const Tensor& t, std::size_t a, std::size_t b) {
  const auto ra = t.row(a), rb = t.row(b);
  for (std::size_t k = 0; k < ra.size(); ++k)
    if (std::abs(ra[k] - rb[k]) > 1e-6) return true;
  return false;
}

double distance_norm(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

void finish(EvalResult& r) {
  r.episodes = static_cast<int>(r.returns.size());
  double ret = 0.0, wins = 0.0;
  for (std::size_t k = 0; k < r.returns.size(); ++k) {
    ret += r.returns[k];
    wins += r.wins[k] ? 1.0 : 0.0;
  }
  r.mean_return = ret / r.episodes;
  r.win_rate = wins / r.episodes;
}

}  // namespace

double HeteroProbe::inter_fraction() const {
  return multi_agent_steps ? double(differing_steps) / double(multi_agent_steps) : 0.0;
}

double HeteroProbe::temporal_fraction() const {
  return agent_episodes ? double(temporal_changes) / double(agent_episodes) : 0.0;
}

EvalResult evaluate(const Model& model, const EvalOptions& opt) {
  if (opt.episodes < 1) throw ContractError("evaluate: episodes must be >= 1");
  const NetConfig& cfg = model.net;
  const std::size_t n = cfg.n_agents, L = cfg.latent_dim, H = cfg.rnn_hidden;
  const ExecOptions ex{.greedy = opt.greedy,
                       .zero_latent_inputs = opt.zero_latent_inputs,
                       .zero_latents = opt.zero_latents,
                       .keep_hete = opt.probe != nullptr};
  EvalResult result;
  double spread_sum = 0.0;
  std::size_t spread_steps = 0;

  for (int k = 0; k < opt.episodes; ++k) {
    const std::uint64_t episode_seed = mix_seed(opt.seed, std::uint64_t(k));
    FocusFire env(model.team);
    env.reset(episode_seed);
    Rng rng(mix_seed(episode_seed, 1));
    Tensor h({n, H});
    std::vector<std::vector<double>> first_l(n), last_l(n);
    double ret = 0.0;
    bool won = false;

    while (!env.done()) {
      std::vector<int> ids;
      for (int i = 0; i < int(n); ++i)
        if (env.ally_alive(i)) ids.push_back(i);
      const std::size_t R = ids.size();
      ExecBatch batch{Tensor({R, cfg.obs_dim}), Tensor({R, H}), Tensor({R, cfg.n_actions}), Tensor({R, L})};
      for (std::size_t r = 0; r < R; ++r) {
        const auto o = env.observe(ids[r]);
        std::copy(o.begin(), o.end(), batch.obs.row(r).begin());
        std::copy(h.row(ids[r]).begin(), h.row(ids[r]).end(), batch.h_prev.row(r).begin());
        const auto m = env.action_mask(ids[r]);
        for (std::size_t a = 0; a < cfg.n_actions; ++a) batch.mask.at(r, a) = m[a];
        if (model.hete() && !opt.greedy)
          for (std::size_t c = 0; c < L; ++c) batch.noise.at(r, c) = rng.normal();
      }
      const std::vector<Rng*> rngs(R, &rng);
      const ExecResult res = execute_step(model, batch, rngs, ex);

      if (model.hete()) {
        if (R >= 2) {
          if (opt.probe) {
            ++opt.probe->multi_agent_steps;
            for (std::size_t r = 1; r < R; ++r) {
              if (rows_differ(res.hete_w, 0, r) || rows_differ(res.hete_b, 0, r)) {
                ++opt.probe->differing_steps;
                break;
              }
            }
          }
          double sum = 0.0;
          for (std::size_t a = 0; a < R; ++a)
            for (std::size_t b = 0; b < R; ++b)
              if (a != b) sum += latent_distance(res.l.row(a), res.l.row(b));
          spread_sum += sum / double(R * (R - 1));
          ++spread_steps;
        }
        for (std::size_t r = 0; r < R; ++r) {
          std::vector<double> l(res.l.row(r).begin(), res.l.row(r).end());
          if (first_l[ids[r]].empty()) first_l[ids[r]] = l;
          if (opt.latents && k < opt.latent_episodes) {
            opt.latents->push_back({opt.episode_offset + std::uint64_t(k), std::uint64_t(env.state().step_count),
                                    ids[r], unit_type_name(env.state().units[ids[r]].type), l});
          }
          last_l[ids[r]] = std::move(l);
        }
      }

      std::vector<int> actions(n, -1);
      for (std::size_t r = 0; r < R; ++r) {
        actions[ids[r]] = res.actions[r];
        std::copy(res.h_next.row(r).begin(), res.h_next.row(r).end(), h.row(ids[r]).begin());
      }
      const StepResult sr = env.step(actions);
      ret += sr.reward;
      won = sr.won;
      if (opt.trace) write_trace_line(*opt.trace, env.state(), actions, sr.reward);
    }

    if (opt.probe && model.hete()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (first_l[i].empty()) continue;
        ++opt.probe->agent_episodes;
        if (distance_norm(first_l[i], last_l[i]) > 1e-6) ++opt.probe->temporal_changes;
      }
    }
    result.returns.push_back(ret);
    result.wins.push_back(won);
  }
  finish(result);
  result.latent_spread = spread_steps ? spread_sum / double(spread_steps) : 0.0;
  return result;
}

EvalResult evaluate_random(const TeamConfig& team, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ContractError("evaluate_random: episodes must be >= 1");
  EvalResult result;
  for (int k = 0; k < episodes; ++k) {
    const std::uint64_t episode_seed = mix_seed(seed, std::uint64_t(k));
    FocusFire env(team);
    env.reset(episode_seed);
    Rng rng(mix_seed(episode_seed, 1));
    double ret = 0.0;
    bool won = false;
    while (!env.done()) {
      std::vector<int> actions(team.n_allies(), -1);
      for (int i = 0; i < team.n_allies(); ++i) {
        if (!env.ally_alive(i)) continue;
        const auto mask = env.action_mask(i);
        std::vector<int> valid;
        for (int a = 0; a < int(kNumActions); ++a)
          if (mask[a]) valid.push_back(a);
        actions[i] = valid[rng.below(valid.size())];
      }
      const StepResult sr = env.step(actions);
      ret += sr.reward;
      won = sr.won;
    }
    result.returns.push_back(ret);
    result.wins.push_back(won);
  }
  finish(result);
  return result;
}

std::vector<TransferRow> transfer_eval(const Checkpoint& ckpt, std::span<const TeamConfig> teams,
                                       const EvalOptions& options, int seeds) {
  if (seeds < 1) throw ContractError("transfer_eval: seeds must be >= 1");
  std::vector<Model> models;
  for (const TeamConfig& team : teams) models.push_back(model_from_checkpoint(ckpt, team));
  for (const Model& m : models) {
    if (m.per_agent_parameter_count() != models.front().per_agent_parameter_count())
      throw ContractError("transfer_eval: per-agent parameter count differs across teams");
  }
  std::vector<TransferRow> rows;
  for (const Model& m : models) {
    TransferRow row;
    row.team = m.team;
    row.per_agent_parameters = m.per_agent_parameter_count();
    std::vector<double> wins;
    double ret = 0.0;
    for (int s = 0; s < seeds; ++s) {
      EvalOptions o = options;
      o.seed = options.seed + std::uint64_t(s);
      const EvalResult r = evaluate(m, o);
      wins.push_back(r.win_rate);
      ret += r.mean_return;
    }
    double mean = 0.0;
    for (double w : wins) mean += w;
    mean /= seeds;
    double var = 0.0;
    for (double w : wins) var += (w - mean) * (w - mean);
    row.win_rate = mean;
    row.win_std = std::sqrt(var / seeds);
    row.mean_return = ret / seeds;
    rows.push_back(row);
  }
  return rows;
}

void write_transfer_csv(std::ostream& os, std::span<const TransferRow> rows) {
  os << "config,win_rate,win_std,mean_return,per_agent_parameters\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.team.label() << ',' << r.win_rate << ',' << r.win_std << ',' << r.mean_return << ','
       << r.per_agent_parameters << '\n';
}

void write_transfer_table(std::ostream& os, std::span<const TransferRow> rows) {
  os << std::left << std::setw(16) << "config" << std::setw(22) << "win_rate" << std::setw(14)
     << "mean_return" << "params/agent\n";
  for (const auto& r : rows) {
    std::ostringstream win;
    win << std::fixed << std::setprecision(3) << r.win_rate << " +- " << r.win_std;
    std::ostringstream ret;
    ret << std::fixed << std::setprecision(3) << r.mean_return;
    os << std::left << std::setw(16) << r.team.label() << std::setw(22) << win.str() << std::setw(14)
       << ret.str() << r.per_agent_parameters << '\n';
  }
}

}  // namespace shppo
