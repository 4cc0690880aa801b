#include "shppo/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

extern char** environ;

namespace shppo {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), value);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError(field + ": cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& field, const std::string& text) {
  const std::string s = lower(trim(text));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(field + ": expected true or false, got '" + text + "'");
}

struct Field {
  std::string section;  // empty for top level
  std::string key;
  std::function<void(RunConfig&, const std::string& field, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;

  std::string path() const { return section.empty() ? key : section + "." + key; }
};

#define SHPPO_INT(SECTION, GROUP, KEY)                                                   \
  Field {                                                                                \
    SECTION, #KEY,                                                                       \
        [](RunConfig& c, const std::string& f, const std::string& v) {                   \
          c.GROUP.KEY = parse_number<decltype(c.GROUP.KEY)>(f, v);                       \
        },                                                                               \
        [](const RunConfig& c) { return std::to_string(c.GROUP.KEY); }                   \
  }
#define SHPPO_DOUBLE(SECTION, GROUP, KEY)                                                \
  Field {                                                                                \
    SECTION, #KEY,                                                                       \
        [](RunConfig& c, const std::string& f, const std::string& v) {                   \
          c.GROUP.KEY = parse_number<double>(f, v);                                      \
        },                                                                               \
        [](const RunConfig& c) { return format_double(c.GROUP.KEY); }                    \
  }
#define SHPPO_BOOL(SECTION, GROUP, KEY)                                                  \
  Field {                                                                                \
    SECTION, #KEY,                                                                       \
        [](RunConfig& c, const std::string& f, const std::string& v) {                   \
          c.GROUP.KEY = parse_bool(f, v);                                                \
        },                                                                               \
        [](const RunConfig& c) { return std::string(c.GROUP.KEY ? "true" : "false"); }   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"", "algo", [](RunConfig& c, const std::string&, const std::string& v) { c.algo = parse_algo(trim(v)); },
       [](const RunConfig& c) { return std::string(algo_name(c.algo)); }},
      {"", "seed",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.seed = parse_number<std::uint64_t>(f, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"", "total_env_steps",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         c.total_env_steps = parse_number<std::uint64_t>(f, v);
       },
       [](const RunConfig& c) { return std::to_string(c.total_env_steps); }},
      {"", "workers",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.workers = parse_number<int>(f, v); },
       [](const RunConfig& c) { return std::to_string(c.workers); }},
      {"", "output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
       [](const RunConfig& c) { return c.output_dir; }},
      SHPPO_INT("env", env, n_fighters),
      SHPPO_INT("env", env, n_healers),
      SHPPO_INT("env", env, n_enemies),
      SHPPO_INT("env", env, width),
      SHPPO_INT("env", env, height),
      SHPPO_INT("env", env, k_allies),
      SHPPO_INT("env", env, k_enemies),
      SHPPO_INT("env", env, max_steps),
      SHPPO_INT("nets", nets, mlp_hidden),
      SHPPO_INT("nets", nets, rnn_hidden),
      SHPPO_INT("nets", nets, latent_dim),
      SHPPO_DOUBLE("hyper", hyper, lr_actor),
      SHPPO_DOUBLE("hyper", hyper, lr_critic),
      SHPPO_DOUBLE("hyper", hyper, lr_latent),
      SHPPO_DOUBLE("hyper", hyper, lr_inference),
      SHPPO_DOUBLE("hyper", hyper, gamma),
      SHPPO_DOUBLE("hyper", hyper, gae_lambda),
      SHPPO_DOUBLE("hyper", hyper, clip),
      SHPPO_DOUBLE("hyper", hyper, lambda_e),
      SHPPO_DOUBLE("hyper", hyper, lambda_d),
      SHPPO_INT("hyper", hyper, steps_per_update),
      SHPPO_INT("hyper", hyper, ppo_epochs),
      SHPPO_INT("hyper", hyper, eval_interval),
      SHPPO_INT("hyper", hyper, eval_episodes),
      SHPPO_INT("hyper", hyper, rollout_envs),
      SHPPO_BOOL("ablation", ablation, zero_latent_inputs),
      SHPPO_BOOL("ablation", ablation, zero_latents),
      SHPPO_BOOL("ablation", ablation, drop_Lv),
      SHPPO_BOOL("ablation", ablation, drop_Le),
      SHPPO_BOOL("ablation", ablation, drop_Ld),
  };
  return table;
}

#undef SHPPO_INT
#undef SHPPO_DOUBLE
#undef SHPPO_BOOL

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields())
    if (lower(f.section) == lower(section) && lower(f.key) == lower(key)) return &f;
  return nullptr;
}

bool is_section(const std::string& name) {
  const std::string n = lower(name);
  return n == "env" || n == "nets" || n == "hyper" || n == "ablation";
}

}  // namespace

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::shppo: return "shppo";
    case Algo::mappo_shared: return "mappo_shared";
    case Algo::happo_shared: return "happo_shared";
  }
  return "?";
}

Algo parse_algo(const std::string& s) {
  if (s == "shppo") return Algo::shppo;
  if (s == "mappo_shared") return Algo::mappo_shared;
  if (s == "happo_shared") return Algo::happo_shared;
  throw ConfigError("algo: expected shppo, mappo_shared or happo_shared, got '" + s + "'");
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty() && !is_section(name)) {
      const Field* f = find_field("", name);
      if (!f) throw ConfigError(name + ": unknown key");
      f->set(cfg, f->path(), node.data());
      continue;
    }
    if (!is_section(name)) throw ConfigError("[" + name + "]: unknown section");
    for (const auto& [key, leaf] : node) {
      const Field* f = find_field(name, key);
      if (!f) throw ConfigError(lower(name) + "." + key + ": unknown key");
      f->set(cfg, f->path(), leaf.data());
    }
  }
  validate(cfg);
  return cfg;
}

static std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::vector<TeamConfig> parse_team_list(const std::string& text, const TeamConfig& base) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("team list syntax: ") + e.what());
  }
  for (const auto& [name, node] : tree)
    if (node.empty() && !node.data().empty())
      throw ConfigError(name + ": team list entries must sit inside a [section]");
  // The INI reader drops sections without keys, so headers are listed directly.
  std::vector<std::string> names;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const std::string t = trim(line);
    if (t.size() > 2 && t.front() == '[' && t.back() == ']') names.push_back(trim(t.substr(1, t.size() - 2)));
  }
  std::vector<TeamConfig> teams;
  for (const std::string& name : names) {
    RunConfig cfg;
    cfg.env = base;
    const auto it = tree.find(name);
    const pt::ptree empty;
    const pt::ptree& node = it == tree.not_found() ? empty : it->second;
    for (const auto& [key, leaf] : node) {
      const Field* f = find_field("env", key);
      if (!f) throw ConfigError("[" + name + "]." + key + ": unknown team key");
      f->set(cfg, "[" + name + "]." + key, leaf.data());
    }
    try {
      cfg.env.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("[" + name + "] " + e.what());
    }
    teams.push_back(cfg.env);
  }
  if (teams.empty()) throw ConfigError("team list has no sections");
  return teams;
}

std::vector<TeamConfig> load_team_list(const std::string& path, const TeamConfig& base) {
  return parse_team_list(read_file(path), base);
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      section = f.section;
      os << "\n[" << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

void apply_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    if (!name.starts_with("SHPPO_")) continue;
    const std::string rest = name.substr(6);
    const auto sep = rest.find("__");
    const std::string section = sep == std::string::npos ? "" : rest.substr(0, sep);
    const std::string key = sep == std::string::npos ? rest : rest.substr(sep + 2);
    const Field* f = find_field(section, key);
    if (!f) throw ConfigError(name + ": no matching config key");
    f->set(cfg, f->path() + " (from " + name + ")", value);
  }
  validate(cfg);
}

std::map<std::string, std::string> shppo_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    if (entry.starts_with("SHPPO_")) out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

void validate(const RunConfig& cfg) {
  try {
    cfg.env.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(cfg.workers >= 1, "workers: must be >= 1");
  require(cfg.nets.mlp_hidden >= 1, "nets.mlp_hidden: must be >= 1");
  require(cfg.nets.rnn_hidden >= 1, "nets.rnn_hidden: must be >= 1");
  require(cfg.nets.latent_dim >= 1, "nets.latent_dim: must be >= 1");
  const HyperConfig& h = cfg.hyper;
  require(h.lr_actor > 0, "hyper.lr_actor: must be > 0");
  require(h.lr_critic > 0, "hyper.lr_critic: must be > 0");
  require(h.lr_latent > 0, "hyper.lr_latent: must be > 0");
  require(h.lr_inference > 0, "hyper.lr_inference: must be > 0");
  require(h.gamma >= 0 && h.gamma <= 1, "hyper.gamma: must lie in [0, 1]");
  require(h.gae_lambda >= 0 && h.gae_lambda <= 1, "hyper.gae_lambda: must lie in [0, 1]");
  require(h.clip > 0 && h.clip < 1, "hyper.clip: must lie in (0, 1)");
  require(h.lambda_e >= 0, "hyper.lambda_e: must be >= 0");
  require(h.lambda_d >= 0, "hyper.lambda_d: must be >= 0");
  require(h.steps_per_update >= 1, "hyper.steps_per_update: must be >= 1");
  require(h.ppo_epochs >= 1, "hyper.ppo_epochs: must be >= 1");
  require(h.eval_interval >= 1, "hyper.eval_interval: must be >= 1");
  require(h.eval_episodes >= 1, "hyper.eval_episodes: must be >= 1");
  require(h.rollout_envs >= 1, "hyper.rollout_envs: must be >= 1");
}

}  // namespace shppo
