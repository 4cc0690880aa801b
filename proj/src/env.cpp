#include "shppo/env.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "shppo/random.hpp"

namespace shppo {
namespace {

constexpr int kDx[5] = {0, 0, 0, 1, -1};
constexpr int kDy[5] = {0, 1, -1, 0, 0};

int sign(int v) { return (v > 0) - (v < 0); }

double norm_coord(int v, int extent) {
  return extent > 1 ? 2.0 * v / (extent - 1) - 1.0 : 0.0;
}

double norm_delta(int d, int extent) { return extent > 1 ? double(d) / (extent - 1) : 0.0; }

}  // namespace

const char* unit_type_name(UnitType t) {
  switch (t) {
    case UnitType::fighter: return "fighter";
    case UnitType::healer: return "healer";
    case UnitType::grunt: return "grunt";
  }
  return "?";
}

double max_hp(UnitType t) {
  switch (t) {
    case UnitType::fighter: return 10.0;
    case UnitType::healer: return 8.0;
    case UnitType::grunt: return 10.0;
  }
  return 0.0;
}

std::string TeamConfig::label() const {
  return std::to_string(n_fighters) + "F+" + std::to_string(n_healers) + "H_vs_" +
         std::to_string(n_enemies) + "G";
}

void TeamConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("env." + m); };
  if (n_fighters < 0) fail("n_fighters must be >= 0");
  if (n_healers < 0) fail("n_healers must be >= 0");
  if (n_allies() < 1) fail("n_fighters + n_healers must be >= 1");
  if (n_enemies < 1) fail("n_enemies must be >= 1");
  if (width < 4 || height < 1) fail("width must be >= 4 and height >= 1");
  if (k_allies < 0 || k_enemies < 0) fail("k_allies and k_enemies must be >= 0");
  if (max_steps < 1) fail("max_steps must be >= 1");
  const int quarter_cells = (width / 4) * height;
  if (n_allies() > quarter_cells) {
    fail("n_fighters + n_healers = " + std::to_string(n_allies()) + " exceeds the " +
         std::to_string(quarter_cells) + " cells of the ally quarter");
  }
  if (n_enemies > quarter_cells) {
    fail("n_enemies = " + std::to_string(n_enemies) + " exceeds the " +
         std::to_string(quarter_cells) + " cells of the enemy quarter");
  }
}

std::vector<std::string> layout_diff(const TeamConfig& trained, const TeamConfig& target) {
  std::vector<std::string> diff;
  auto cmp = [&](const char* name, int a, int b) {
    if (a != b)
      diff.push_back(std::string(name) + ": trained " + std::to_string(a) + ", target " +
                     std::to_string(b));
  };
  cmp("k_allies", trained.k_allies, target.k_allies);
  cmp("k_enemies", trained.k_enemies, target.k_enemies);
  return diff;
}

int chebyshev(const Unit& a, const Unit& b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

int squared_distance(const Unit& a, const Unit& b) {
  const int dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

FocusFire::FocusFire(TeamConfig config) : config_(config) { config_.validate(); }

void FocusFire::reset(std::uint64_t seed) {
  Rng rng(seed);
  state_ = EnvState{};
  state_.seed = seed;
  const int quarter = config_.width / 4;
  const int H = config_.height;

  // Sample distinct cells from a quarter by partial Fisher-Yates.
  auto draw_cells = [&](int x0, int count) {
    std::vector<std::pair<int, int>> cells;
    for (int x = x0; x < x0 + quarter; ++x)
      for (int y = 0; y < H; ++y) cells.emplace_back(x, y);
    for (int i = 0; i < count; ++i) {
      const auto j = i + static_cast<int>(rng.below(cells.size() - i));
      std::swap(cells[i], cells[j]);
    }
    cells.resize(count);
    return cells;
  };
  const auto ally_cells = draw_cells(0, config_.n_allies());
  const auto enemy_cells = draw_cells(config_.width - quarter, config_.n_enemies);

  int id = 0;
  auto add = [&](Side side, UnitType type, std::pair<int, int> cell) {
    state_.units.push_back({id++, side, type, cell.first, cell.second, max_hp(type), true});
  };
  for (int i = 0; i < config_.n_fighters; ++i) add(Side::ally, UnitType::fighter, ally_cells[i]);
  for (int i = 0; i < config_.n_healers; ++i)
    add(Side::ally, UnitType::healer, ally_cells[config_.n_fighters + i]);
  for (int i = 0; i < config_.n_enemies; ++i) add(Side::enemy, UnitType::grunt, enemy_cells[i]);
  done_ = false;
}

void FocusFire::set_state(EnvState state) {
  if (static_cast<int>(state.units.size()) != config_.n_units())
    throw std::invalid_argument("set_state: unit count does not match the team config");
  state_ = std::move(state);
  refresh_done();
}

void FocusFire::refresh_done() {
  bool allies = false, enemies = false;
  for (const Unit& u : state_.units) {
    if (!u.alive) continue;
    (u.side == Side::ally ? allies : enemies) = true;
  }
  done_ = !allies || !enemies || state_.step_count >= config_.max_steps;
}

bool FocusFire::in_bounds(int x, int y) const {
  return x >= 0 && y >= 0 && x < config_.width && y < config_.height;
}

const Unit* FocusFire::occupant(int x, int y) const {
  for (const Unit& u : state_.units)
    if (u.alive && u.x == x && u.y == y) return &u;
  return nullptr;
}

bool FocusFire::ally_alive(int agent) const {
  return agent >= 0 && agent < config_.n_allies() && state_.units[agent].alive;
}

const Unit& FocusFire::living_ally(int agent, const char* what) const {
  if (agent < 0 || agent >= config_.n_allies())
    throw std::out_of_range(std::string(what) + ": agent " + std::to_string(agent) + " out of range");
  const Unit& u = state_.units[agent];
  if (!u.alive) throw ContractError(std::string(what) + ": agent " + std::to_string(agent) + " is dead");
  return u;
}

std::vector<std::uint8_t> FocusFire::action_mask(int agent) const {
  const Unit& me = living_ally(agent, "action_mask");
  std::vector<std::uint8_t> mask(kNumActions, 0);
  mask[kNoop] = 1;
  for (int a = kNorth; a <= kWest; ++a) {
    const int nx = me.x + kDx[a], ny = me.y + kDy[a];
    mask[a] = in_bounds(nx, ny) && occupant(nx, ny) == nullptr;
  }
  for (const Unit& u : state_.units) {
    if (!u.alive) continue;
    if (me.type == UnitType::fighter && u.side == Side::enemy && chebyshev(me, u) <= kFighterRange)
      mask[kEngage] = 1;
    if (me.type == UnitType::healer && u.side == Side::ally && u.id != me.id &&
        chebyshev(me, u) <= kHealRange)
      mask[kEngage] = 1;
  }
  return mask;
}

std::vector<double> FocusFire::observe(int agent) const {
  const Unit& me = living_ally(agent, "observe");
  const int W = config_.width, H = config_.height;
  std::vector<double> obs;
  obs.reserve(config_.obs_dim());
  obs.insert(obs.end(), {norm_coord(me.x, W), norm_coord(me.y, H), me.hp / max_hp(me.type),
                         me.type == UnitType::fighter ? 1.0 : 0.0,
                         me.type == UnitType::healer ? 1.0 : 0.0});

  auto nearest = [&](Side side) {
    std::vector<const Unit*> v;
    for (const Unit& u : state_.units)
      if (u.alive && u.side == side && u.id != me.id) v.push_back(&u);
    std::stable_sort(v.begin(), v.end(), [&](const Unit* a, const Unit* b) {
      const int da = squared_distance(me, *a), db = squared_distance(me, *b);
      return da != db ? da < db : a->id < b->id;
    });
    return v;
  };

  const auto allies = nearest(Side::ally);
  for (int k = 0; k < config_.k_allies; ++k) {
    if (k < static_cast<int>(allies.size())) {
      const Unit& u = *allies[k];
      obs.insert(obs.end(), {norm_delta(u.x - me.x, W), norm_delta(u.y - me.y, H),
                             u.hp / max_hp(u.type), u.type == UnitType::fighter ? 1.0 : 0.0,
                             u.type == UnitType::healer ? 1.0 : 0.0, 1.0});
    } else {
      obs.insert(obs.end(), 6, 0.0);
    }
  }
  const auto enemies = nearest(Side::enemy);
  for (int k = 0; k < config_.k_enemies; ++k) {
    if (k < static_cast<int>(enemies.size())) {
      const Unit& u = *enemies[k];
      obs.insert(obs.end(), {norm_delta(u.x - me.x, W), norm_delta(u.y - me.y, H),
                             u.hp / max_hp(u.type), 1.0, 0.0});
    } else {
      obs.insert(obs.end(), 5, 0.0);
    }
  }
  return obs;
}

std::vector<double> FocusFire::global_observation() const {
  std::vector<double> g;
  g.reserve(config_.global_dim());
  for (const Unit& u : state_.units) {
    g.insert(g.end(), {norm_coord(u.x, config_.width), norm_coord(u.y, config_.height),
                       u.hp / max_hp(u.type), u.alive ? 1.0 : 0.0,
                       u.side == Side::enemy ? 1.0 : 0.0,
                       u.type == UnitType::fighter ? 1.0 : 0.0,
                       u.type == UnitType::healer ? 1.0 : 0.0,
                       u.type == UnitType::grunt ? 1.0 : 0.0});
  }
  return g;
}

StepResult FocusFire::step(std::span<const int> actions) {
  if (done_) throw ContractError("step: episode is over; call reset");
  const int n = config_.n_allies();
  if (static_cast<int>(actions.size()) != n) {
    throw DimensionError("step: expected " + std::to_string(n) + " actions, got " +
                         std::to_string(actions.size()));
  }
  for (int i = 0; i < n; ++i) {
    const bool alive = state_.units[i].alive;
    if (!alive && actions[i] != -1)
      throw ContractError("step: action " + std::to_string(actions[i]) + " for dead agent " + std::to_string(i));
    if (!alive) continue;
    if (actions[i] < 0 || actions[i] >= static_cast<int>(kNumActions))
      throw ContractError("step: agent " + std::to_string(i) + " has no valid action");
    if (!action_mask(i)[actions[i]])
      throw ContractError("step: action " + std::to_string(actions[i]) + " is masked for agent " + std::to_string(i));
  }

  auto& units = state_.units;
  auto living = [](const Unit& u) { return u.hp > 0.0; };

  // (1) Ally moves in id order; a cell taken earlier this phase blocks later movers.
  for (int i = 0; i < n; ++i) {
    const int a = actions[i];
    if (a < kNorth || a > kWest) continue;
    Unit& u = units[i];
    const int nx = u.x + kDx[a], ny = u.y + kDy[a];
    if (in_bounds(nx, ny) && occupant(nx, ny) == nullptr) {
      u.x = nx;
      u.y = ny;
    }
  }

  // (2) Engagements, resolved in id order against current hp.
  StepResult res;
  for (int i = 0; i < n; ++i) {
    if (actions[i] != kEngage) continue;
    const Unit& me = units[i];
    Unit* target = nullptr;
    if (me.type == UnitType::fighter) {
      for (Unit& u : units) {
        if (u.side != Side::enemy || !living(u) || chebyshev(me, u) > kFighterRange) continue;
        if (!target || squared_distance(me, u) < squared_distance(me, *target)) target = &u;
      }
      if (target) {
        const double dealt = std::min(kFighterDamage, target->hp);
        target->hp -= dealt;
        res.damage_dealt += dealt;
      }
    } else if (me.type == UnitType::healer) {
      for (Unit& u : units) {
        if (u.side != Side::ally || u.id == me.id || !living(u) || chebyshev(me, u) > kHealRange)
          continue;
        if (!target || u.hp < target->hp) target = &u;
      }
      if (target) {
        const double healed = std::min(kHealAmount, max_hp(target->type) - target->hp);
        target->hp += healed;
        res.hp_healed += healed;
      }
    }
  }

  // (3) Grunt script: approach the nearest ally (x first, then y), then strike.
  for (Unit& g : units) {
    if (g.side != Side::enemy || !living(g)) continue;
    Unit* prey = nullptr;
    for (Unit& u : units) {
      if (u.side != Side::ally || !living(u)) continue;
      if (!prey || squared_distance(g, u) < squared_distance(g, *prey)) prey = &u;
    }
    if (!prey) break;
    if (chebyshev(g, *prey) > kGruntRange) {
      const int sx = sign(prey->x - g.x), sy = sign(prey->y - g.y);
      auto free = [&](int x, int y) {
        for (const Unit& u : units)
          if (living(u) && u.x == x && u.y == y) return false;
        return in_bounds(x, y);
      };
      if (sx != 0 && free(g.x + sx, g.y)) {
        g.x += sx;
      } else if (sy != 0 && free(g.x, g.y + sy)) {
        g.y += sy;
      }
    }
    if (chebyshev(g, *prey) <= kGruntRange) prey->hp -= std::min(kGruntDamage, prey->hp);
  }

  // (4) Deaths and the clock.
  bool enemies_left = false;
  for (Unit& u : units) {
    if (u.alive && u.hp <= 0.0) {
      u.hp = 0.0;
      u.alive = false;
    }
    if (u.side == Side::enemy && u.alive) enemies_left = true;
  }
  ++state_.step_count;
  res.won = !enemies_left;
  res.reward = 0.1 * res.damage_dealt + 0.05 * res.hp_healed + (res.won ? kWinBonus : 0.0);
  refresh_done();
  res.done = done_;
  return res;
}

void write_trace_line(std::ostream& os, const EnvState& state, std::span<const int> actions,
                      double reward) {
  nlohmann::json units = nlohmann::json::array();
  for (const Unit& u : state.units) {
    units.push_back({{"id", u.id},
                     {"side", u.side == Side::ally ? "ally" : "enemy"},
                     {"type", unit_type_name(u.type)},
                     {"x", u.x},
                     {"y", u.y},
                     {"hp", u.hp},
                     {"alive", u.alive}});
  }
  nlohmann::json line = {{"step", state.step_count},
                         {"units", std::move(units)},
                         {"actions", std::vector<int>(actions.begin(), actions.end())},
                         {"reward", reward}};
  os << line.dump() << '\n';
}

}  // namespace shppo
