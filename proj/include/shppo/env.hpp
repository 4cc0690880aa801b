#pragma once

// FocusFire: allies (fighters, healers) against scripted grunts on a small
// grid. Deterministic given the reset seed and the action sequence.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shppo/tensor.hpp"

namespace shppo {

enum class UnitType { fighter, healer, grunt };
enum class Side { ally, enemy };

const char* unit_type_name(UnitType t);
double max_hp(UnitType t);

/// Discrete actions. Moves step one cell; north is +y.
enum Action : int { kNoop = 0, kNorth = 1, kSouth = 2, kEast = 3, kWest = 4, kEngage = 5 };
inline constexpr std::size_t kNumActions = 6;

inline constexpr double kFighterDamage = 2.0;
inline constexpr int kFighterRange = 2;
inline constexpr double kHealAmount = 2.0;
inline constexpr int kHealRange = 3;
inline constexpr double kGruntDamage = 1.0;
inline constexpr int kGruntRange = 1;
inline constexpr double kWinBonus = 10.0;

struct TeamConfig {
  int n_fighters = 4;
  int n_healers = 1;
  int n_enemies = 5;
  int width = 16;
  int height = 16;
  int k_allies = 3;
  int k_enemies = 4;
  int max_steps = 160;

  int n_allies() const { return n_fighters + n_healers; }
  int n_units() const { return n_allies() + n_enemies; }
  std::size_t obs_dim() const { return 5 + 6 * std::size_t(k_allies) + 5 * std::size_t(k_enemies); }
  std::size_t global_dim() const { return 8 * std::size_t(n_units()); }
  /// "4F+1H_vs_5G" style label.
  std::string label() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const TeamConfig&, const TeamConfig&) = default;
};

/// Human-readable differences in observation layout, empty when compatible.
std::vector<std::string> layout_diff(const TeamConfig& trained, const TeamConfig& target);

struct Unit {
  int id = 0;
  Side side = Side::ally;
  UnitType type = UnitType::fighter;
  int x = 0;
  int y = 0;
  double hp = 0.0;
  bool alive = true;
};

struct EnvState {
  std::vector<Unit> units;  // allies first (fighters, then healers), then grunts
  int step_count = 0;
  std::uint64_t seed = 0;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool won = false;
  double damage_dealt = 0.0;
  double hp_healed = 0.0;
};

class FocusFire {
 public:
  explicit FocusFire(TeamConfig config);

  void reset(std::uint64_t seed);
  /// One action per ally id; dead allies must pass -1.
  StepResult step(std::span<const int> actions);

  const TeamConfig& config() const { return config_; }
  const EnvState& state() const { return state_; }
  /// Replaces the state wholesale (for hand-built scenarios).
  void set_state(EnvState state);
  bool done() const { return done_; }

  bool ally_alive(int agent) const;
  std::vector<double> observe(int agent) const;
  std::vector<double> global_observation() const;
  std::vector<std::uint8_t> action_mask(int agent) const;

 private:
  const Unit* occupant(int x, int y) const;
  bool in_bounds(int x, int y) const;
  const Unit& living_ally(int agent, const char* what) const;
  void refresh_done();

  TeamConfig config_;
  EnvState state_;
  bool done_ = false;
};

int chebyshev(const Unit& a, const Unit& b);
int squared_distance(const Unit& a, const Unit& b);

/// Appends one JSON line: {"step", "units": [...], "actions", "reward"}.
void write_trace_line(std::ostream& os, const EnvState& state, std::span<const int> actions,
                      double reward);

}  // namespace shppo
