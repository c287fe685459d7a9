#include "wmft/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "wmft/errors.hpp"

namespace wmft {
namespace {

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text, const std::string& key) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("'" + key + "': cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

struct Field {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

Field real(std::string section, std::string name, std::string help,
           std::function<double&(RunConfig&)> ref) {
  const std::string full = section + "." + name;
  return Field{{std::move(section), std::move(name), std::move(help)},
               [ref](const RunConfig& c) { return format_real(ref(const_cast<RunConfig&>(c))); },
               [ref, full](RunConfig& c, std::string_view v) { ref(c) = parse_number<double>(v, full); }};
}

template <typename Int>
Field int_field(std::string section, std::string name, std::string help,
                std::function<Int&(RunConfig&)> ref) {
  const std::string full = section + "." + name;
  return Field{{std::move(section), std::move(name), std::move(help)},
               [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
               [ref, full](RunConfig& c, std::string_view v) { ref(c) = parse_number<Int>(v, full); }};
}

std::vector<Field> build_fields() {
  std::vector<Field> f;
  using C = RunConfig;
  f.push_back({{"env", "id", "reach2d | push2d"},
               [](const C& c) { return to_string(c.env.id); },
               [](C& c, std::string_view v) { c.env.id = parse_env_id(std::string(v)); }});
  f.push_back({{"env", "reward", "sparse | dense"},
               [](const C& c) { return to_string(c.env.reward_mode); },
               [](C& c, std::string_view v) { c.env.reward_mode = parse_reward_mode(std::string(v)); }});
  f.push_back(int_field<int>("env", "episode_length", "time limit in steps",
                             [](C& c) -> int& { return c.env.episode_length; }));
  f.push_back(int_field<int>("env", "action_repeat", "simulator steps per action",
                             [](C& c) -> int& { return c.env.action_repeat; }));
  f.push_back(real("env", "step_scale", "displacement per unit action",
                   [](C& c) -> double& { return c.env.step_scale; }));
  f.push_back(real("env", "goal_threshold", "success distance",
                   [](C& c) -> double& { return c.env.goal_threshold; }));
  f.push_back(real("env", "contact_radius", "agent-block contact distance (push2d)",
                   [](C& c) -> double& { return c.env.contact_radius; }));
  f.push_back(real("env", "friction", "fraction of a push lost (push2d)",
                   [](C& c) -> double& { return c.env.friction; }));
  f.push_back(real("env", "arena", "half-width of the arena",
                   [](C& c) -> double& { return c.env.arena; }));
  f.push_back(real("env", "init_extent", "half-width of the start region",
                   [](C& c) -> double& { return c.env.init_extent; }));
  f.push_back(real("env", "goal_offset_x", "goal region translation",
                   [](C& c) -> double& { return c.env.goal_offset_x; }));
  f.push_back(real("env", "goal_offset_y", "goal region translation",
                   [](C& c) -> double& { return c.env.goal_offset_y; }));

  f.push_back(int_field<int>("model", "latent_state_dimension", "latent size",
                             [](C& c) -> int& { return c.latent_dim; }));
  f.push_back(int_field<int>("model", "mlp_hidden_size", "hidden width of every network",
                             [](C& c) -> int& { return c.hidden_dim; }));
  f.push_back(int_field<int>("model", "hidden_layers", "hidden layers per network",
                             [](C& c) -> int& { return c.hidden_layers; }));
  f.push_back(int_field<int>("model", "q_ensemble_size", "number of Q heads",
                             [](C& c) -> int& { return c.num_q; }));

  f.push_back(real("loss", "value_loss_coefficient", "weight of the Q and V terms",
                   [](C& c) -> double& { return c.loss.value_coef; }));
  f.push_back(real("loss", "reward_loss_coefficient", "weight of the reward term",
                   [](C& c) -> double& { return c.loss.reward_coef; }));
  f.push_back(real("loss", "latent_dynamics_loss_coefficient", "weight of the consistency term",
                   [](C& c) -> double& { return c.loss.consistency_coef; }));
  f.push_back(real("loss", "temporal_coefficient", "per-step loss decay",
                   [](C& c) -> double& { return c.loss.temporal_coef; }));
  f.push_back({{"loss", "discount", "discount for TD targets and planning"},
               [](const C& c) { return format_real(c.loss.discount); },
               [](C& c, std::string_view v) {
                 c.loss.discount = parse_number<double>(v, "loss.discount");
                 c.plan.discount = c.loss.discount;
               }});
  f.push_back(real("loss", "expectile", "expectile tau of the value loss",
                   [](C& c) -> double& { return c.loss.expectile; }));
  f.push_back(real("loss", "awr_temperature", "AWR beta",
                   [](C& c) -> double& { return c.loss.awr_temperature; }));
  f.push_back(real("loss", "awr_weight_cap", "upper bound on AWR weights",
                   [](C& c) -> double& { return c.loss.awr_weight_cap; }));

  f.push_back(real("optim", "learning_rate", "Adam step size",
                   [](C& c) -> double& { return c.optim.adam.learning_rate; }));
  f.push_back(real("optim", "adam_beta1", "Adam first-moment decay",
                   [](C& c) -> double& { return c.optim.adam.beta1; }));
  f.push_back(real("optim", "adam_beta2", "Adam second-moment decay",
                   [](C& c) -> double& { return c.optim.adam.beta2; }));
  f.push_back(real("optim", "adam_epsilon", "Adam denominator offset",
                   [](C& c) -> double& { return c.optim.adam.epsilon; }));
  f.push_back(real("optim", "grad_clip_norm", "global gradient norm bound",
                   [](C& c) -> double& { return c.optim.grad_clip_norm; }));
  f.push_back(real("optim", "polyak", "target network averaging rate",
                   [](C& c) -> double& { return c.optim.polyak; }));
  f.push_back(int_field<int>("optim", "target_network_update_frequency", "updates between Polyak steps",
                             [](C& c) -> int& { return c.optim.target_update_every; }));
  f.push_back(real("optim", "policy_std", "std of the policy Gaussian in the AWR likelihood",
                   [](C& c) -> double& { return c.optim.policy_std; }));

  f.push_back(int_field<int>("plan", "planning_horizon", "planning and training horizon",
                             [](C& c) -> int& { return c.plan.horizon; }));
  f.push_back(int_field<int>("plan", "population_size", "candidate sequences per iteration",
                             [](C& c) -> int& { return c.plan.population; }));
  f.push_back(int_field<int>("plan", "elite_fraction", "number of elites kept per iteration",
                             [](C& c) -> int& { return c.plan.elites; }));
  f.push_back(real("plan", "policy_fraction", "share of candidates from the policy prior",
                   [](C& c) -> double& { return c.plan.policy_fraction; }));
  f.push_back(int_field<int>("plan", "planning_iterations", "refit iterations per step",
                             [](C& c) -> int& { return c.plan.iterations; }));
  f.push_back(real("plan", "planning_temperature", "elite weighting temperature",
                   [](C& c) -> double& { return c.plan.temperature; }));
  f.push_back(real("plan", "planning_momentum_coefficient", "weight of the previous mean",
                   [](C& c) -> double& { return c.plan.momentum; }));
  f.push_back(real("plan", "lambda", "uncertainty coefficient",
                   [](C& c) -> double& { return c.plan.lambda; }));
  f.push_back(real("plan", "min_std", "lower bound on the sampling std",
                   [](C& c) -> double& { return c.plan.min_std; }));
  f.push_back(real("plan", "max_std", "initial and upper sampling std",
                   [](C& c) -> double& { return c.plan.max_std; }));
  f.push_back(real("plan", "policy_noise", "noise on policy-prior rollouts",
                   [](C& c) -> double& { return c.plan.policy_noise; }));

  f.push_back(int_field<int>("replay", "batch_size", "subsequences per update",
                             [](C& c) -> int& { return c.batch_size; }));
  f.push_back(real("replay", "per_alpha", "priority exponent",
                   [](C& c) -> double& { return c.per.alpha; }));
  f.push_back(real("replay", "per_beta", "importance-weight exponent",
                   [](C& c) -> double& { return c.per.beta; }));
  f.push_back(real("replay", "per_priority_floor", "added to every |TD error|",
                   [](C& c) -> double& { return c.per.priority_floor; }));
  f.push_back(int_field<std::size_t>("replay", "online_capacity", "online buffer transitions",
                                     [](C& c) -> std::size_t& { return c.online_capacity; }));

  f.push_back(int_field<std::uint64_t>("run", "seed", "master seed",
                                       [](C& c) -> std::uint64_t& { return c.seed; }));
  f.push_back(int_field<std::uint64_t>("run", "eval_seed", "evaluation seed grid",
                                       [](C& c) -> std::uint64_t& { return c.eval_seed; }));
  f.push_back({{"run", "dataset", "offline dataset path"},
               [](const C& c) { return c.dataset; },
               [](C& c, std::string_view v) { c.dataset = std::string(v); }});
  f.push_back(int_field<std::int64_t>("run", "pretrain_steps", "offline updates",
                                      [](C& c) -> std::int64_t& { return c.pretrain_steps; }));
  f.push_back(int_field<int>("run", "online_trials", "online episodes",
                             [](C& c) -> int& { return c.online_trials; }));
  f.push_back(int_field<int>("run", "updates_per_online_step", "updates per collected transition",
                             [](C& c) -> int& { return c.updates_per_online_step; }));
  f.push_back(int_field<int>("run", "eval_episodes", "evaluation episodes",
                             [](C& c) -> int& { return c.eval_episodes; }));
  f.push_back(int_field<std::int64_t>("run", "checkpoint_every", "pretrain steps between checkpoints",
                                      [](C& c) -> std::int64_t& { return c.checkpoint_every; }));
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = build_fields();
  return table;
}

const Field* find_field(std::string_view section, std::string_view name) {
  for (const auto& f : fields()) {
    if (f.key.section == section && f.key.name == name) return &f;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  for (const auto& f : fields()) {
    if (f.key.section == section) return true;
  }
  return false;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

RunConfig parse_config(std::string_view text, const RunConfig& base) {
  RunConfig cfg = base;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* f = find_field(section, key);
    if (f == nullptr) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(where + "key '" + section + "." + key + "' set twice");
    }
    try {
      f->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string_view lhs = trim(assignment.substr(0, eq));
  const std::string_view value = trim(assignment.substr(eq + 1));
  const Field* target = nullptr;
  const auto dot = lhs.find('.');
  if (dot != std::string_view::npos) {
    target = find_field(lhs.substr(0, dot), lhs.substr(dot + 1));
  } else {
    for (const auto& f : fields()) {
      if (f.key.name != lhs) continue;
      if (target != nullptr) {
        throw ConfigError("override key '" + std::string(lhs) + "' is ambiguous; use section.key");
      }
      target = &f;
    }
  }
  if (target == nullptr) throw ConfigError("override names unknown key '" + std::string(lhs) + "'");
  target->set(cfg, value);
}

std::string echo_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.key.section != section) {
      if (!section.empty()) out += '\n';
      section = f.key.section;
      out += "[" + section + "]\n";
    }
    const std::string value = f.get(cfg);
    out += f.key.name + " =" + (value.empty() ? "" : " " + value) + "\n";
  }
  return out;
}

}  // namespace wmft
