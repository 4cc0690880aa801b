#pragma once

#include <functional>

#include "shppo/layers.hpp"
#include "shppo/optim.hpp"

namespace shppo {

/// Builds a scalar loss on `tape` reading parameters through `params`.
using LossBuilder = std::function<Var(Tape& tape, const Params& params)>;

struct GradCheck {
  double rel_error = 0.0;
  /// Smallest distance of any kinked op input from its kink at the base point.
  double kink_margin = 0.0;

  /// Central differences are only meaningful away from kinks.
  bool admissible(double min_margin = 1e-3) const { return kink_margin >= min_margin; }
};

/// Runs backward() once with `params` trainable, then finite_diff_grad with
/// the same builder over frozen parameters, and compares the two gradients.
/// Leaves the analytic gradient in `params`. `tamper`, when set, edits the
/// analytic gradient before the comparison (used to prove the harness fails).
GradCheck check_gradient(ParamStore& params, const LossBuilder& build, double h = 1e-5,
                         const std::function<void(ParamStore&)>& tamper = {});

}  // namespace shppo
