#pragma once

// Finite-difference audit of every differentiable path, on randomized small
// networks (all layer widths <= 16).

#include <string>
#include <vector>

namespace shppo {

struct AuditResult {
  std::string module;  // diffcore | nets | losses
  std::string name;
  double worst_rel_error = 0.0;
  int checked = 0;
  /// Seeds rejected because a kink sat too close to the sample point.
  int skipped = 0;

  bool pass(int seeds, double tolerance) const {
    return checked >= seeds && worst_rel_error <= tolerance;
  }
};

std::vector<std::string> audit_modules();

/// Runs every check whose module matches `scope` ("all" runs everything) until
/// `seeds` admissible samples each. `corrupt` perturbs every analytic gradient
/// before comparison. Throws std::invalid_argument for an unknown scope.
std::vector<AuditResult> run_gradient_audit(const std::string& scope, int seeds = 50,
                                            bool corrupt = false);

}  // namespace shppo
