#pragma once

// The training driver behind `shppo train` and `shppo ablate`. A run directory
// holds resolved_config.ini, version.txt, metrics.csv, losses.csv,
// latents.csv, checkpoint_full.json and checkpoint_transfer.json.

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "shppo/config.hpp"
#include "shppo/evaluate.hpp"
#include "shppo/trainer.hpp"

namespace shppo {

struct MetricsRow {
  std::uint64_t update_idx = 0;
  std::uint64_t env_steps = 0;
  double win_rate = 0.0;
  double mean_return = 0.0;
  double l_actor = 0.0;
  double l_critic = 0.0;
  double l_v = 0.0;
  double l_e = 0.0;
  double l_d = 0.0;
  double l_i = 0.0;
  double latent_spread = 0.0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

struct RunOptions {
  /// Polled between updates; when set the run checkpoints and returns.
  const std::atomic<bool>* stop = nullptr;
  /// Progress lines.
  std::ostream* log = nullptr;
  /// Ends the run early once it returns true for an evaluation row.
  std::function<bool(const MetricsRow&)> early_stop;
};

struct RunSummary {
  std::vector<MetricsRow> evaluations;
  std::uint64_t updates = 0;
  std::uint64_t env_steps = 0;
  bool interrupted = false;
  bool stopped_early = false;
};

/// The fixed seed evaluation episodes are drawn from during a run.
std::uint64_t eval_seed(const RunConfig& cfg);

RunSummary run_training(const RunConfig& cfg, const RunOptions& options = {});

/// Variant name and flags for the five ablations plus the full method.
std::vector<std::pair<std::string, AblationFlags>> ablation_variants();

/// Trains every variant under `cfg.output_dir/<variant>` with the same seed and
/// writes ablation.csv (all evaluation rows) and ablation_summary.csv.
std::vector<RunSummary> run_ablation(const RunConfig& cfg, const RunOptions& options = {});

}  // namespace shppo
