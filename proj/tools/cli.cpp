#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "wmft/config.hpp"
#include "wmft/dataset_io.hpp"
#include "wmft/errors.hpp"
#include "wmft/pipeline.hpp"

namespace wmft::cli {
namespace {

namespace fs = std::filesystem;

// Bad invocation or input: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw UsageError("config file not found: " + g.config);
    cfg = load_config(g.config);
  }
  for (const auto& o : g.overrides) apply_override(cfg, o);
  if (g.seed.has_value()) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

fs::path require_out_dir(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required for this command");
  const fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + g.out);
  return dir;
}

void write_echo(const fs::path& dir, const RunConfig& cfg) {
  std::ofstream f(dir / "config.cfg", std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write " + (dir / "config.cfg").string());
  f << echo_config(cfg);
}

Dataset read_dataset_arg(const std::string& path, const EnvSpec& env) {
  if (path.empty()) throw UsageError("no dataset given (use --dataset or run.dataset)");
  if (!fs::exists(path)) throw UsageError("dataset not found: " + path);
  Dataset data = read_dataset(fs::path(path));
  if (data.env.id != env.id) {
    throw ConfigError("dataset holds " + to_string(data.env.id) + " episodes, config asks for " +
                      to_string(env.id));
  }
  return data;
}

WorldModel read_checkpoint_arg(const std::string& path, const EnvSpec& env) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_run_checkpoint(path, env);
}

void print_eval(std::ostream& out, const std::string& label, const EvalReport& r, bool verbose) {
  out << label << ": episodes=" << r.episodes.size() << " success_rate=" << fixed(r.success_rate, 4)
      << " mean_return=" << fixed(r.mean_return, 4) << '\n';
  if (!verbose) return;
  for (std::size_t i = 0; i < r.episodes.size(); ++i) {
    const auto& e = r.episodes[i];
    out << "  episode " << i << " seed=" << e.reset_seed << " return=" << fixed(e.episode_return, 4)
        << " success=" << (e.success ? 1 : 0) << " steps=" << e.steps << '\n';
  }
}

int cmd_gen_data(const Globals& g, const std::string& env_id, const std::string& kind, int episodes,
                 std::size_t transitions, double noise, std::ostream& out) {
  RunConfig cfg = resolve_config(g);
  if (!env_id.empty()) {
    cfg.env = make_env_spec(parse_env_id(env_id), cfg.env.reward_mode);
    cfg.validate();
  }
  if (g.out.empty()) throw UsageError("--out is required for gen-data");
  const std::uint64_t seed = cfg.seed;

  Dataset data;
  data.env = cfg.env;
  if (kind == "medium") {
    if (episodes <= 0) throw UsageError("--episodes must be positive");
    data.episodes = gen_medium_dataset(cfg.env, episodes, noise, seed);
  } else if (kind == "medium-replay") {
    if (transitions == 0) throw UsageError("--transitions must be positive");
    data.episodes = gen_medium_replay_dataset(cfg, transitions, seed);
  } else {
    throw UsageError("unknown dataset kind '" + kind + "' (expected medium or medium-replay)");
  }
  data.provenance = data.episodes.front().provenance;

  std::ofstream f(g.out, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot write dataset to " + g.out);
  write_dataset(f, data);
  f.close();
  if (!f) throw Error("failed writing dataset to " + g.out);
  out << "wrote " << data.episodes.size() << " episodes (" << data.num_transitions()
      << " transitions, success rate " << fixed(success_rate(data.episodes), 4) << ") to " << g.out
      << '\n';
  return kExitOk;
}

int cmd_pretrain(const Globals& g, const std::string& dataset_arg, std::ostream& out) {
  RunConfig cfg = resolve_config(g);
  if (!dataset_arg.empty()) cfg.dataset = dataset_arg;
  const Dataset data = read_dataset_arg(cfg.dataset, cfg.env);
  const fs::path dir = require_out_dir(g);
  write_echo(dir, cfg);
  MetricsLog log = MetricsLog::open(dir);
  const WorldModel model = pretrain(cfg, data.episodes, RunSink{dir, &log});
  out << "pretrained " << cfg.pretrain_steps << " steps on " << data.episodes.size()
      << " episodes; checkpoint " << checkpoint_path(dir, "pretrain", cfg.pretrain_steps).string()
      << '\n';
  print_eval(out, "offline eval", evaluate(model, cfg.env, cfg.plan, cfg.eval_episodes, cfg.eval_seed),
             false);
  return kExitOk;
}

int cmd_finetune(const Globals& g, const std::string& checkpoint, bool from_scratch,
                 std::optional<int> trials, const std::string& dataset_arg, std::ostream& out) {
  RunConfig cfg = resolve_config(g);
  if (trials.has_value()) {
    if (*trials < 0) throw UsageError("--trials must be non-negative");
    cfg.online_trials = *trials;
  }
  if (!dataset_arg.empty()) cfg.dataset = dataset_arg;
  if (from_scratch == !checkpoint.empty()) {
    throw UsageError("give exactly one of --checkpoint and --from-scratch");
  }
  WorldModel model = from_scratch ? init_model(cfg) : read_checkpoint_arg(checkpoint, cfg.env);
  if (!(model.dims == cfg.model_dims())) {
    throw ConfigError("checkpoint model dimensions do not match the config [model] section");
  }
  std::vector<Episode> offline;
  if (!from_scratch && !cfg.dataset.empty()) offline = read_dataset_arg(cfg.dataset, cfg.env).episodes;
  const fs::path dir = require_out_dir(g);
  write_echo(dir, cfg);
  if (cfg.online_trials == 0) {
    out << "0 trials requested; nothing to do\n";
    return kExitOk;
  }
  MetricsLog log = MetricsLog::open(dir);
  const std::string stage = from_scratch ? "online" : "finetune";
  const FinetuneResult res = finetune(cfg, std::move(model), offline, RunSink{dir, &log}, stage);
  for (const auto& r : res.trials) {
    out << "trial " << (r.trial + 1) << "/" << cfg.online_trials << " return=" << fixed(r.episode_return, 4)
        << " success=" << (r.success ? 1 : 0) << " steps=" << r.steps
        << " uncertainty=" << fixed(r.mean_uncertainty, 4) << (r.aborted ? " aborted" : "") << '\n';
  }
  print_eval(out, stage + " eval", evaluate(res.model, cfg.env, cfg.plan, cfg.eval_episodes, cfg.eval_seed),
             false);
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, std::optional<double> lambda,
             std::optional<int> episodes, bool verbose, std::ostream& out) {
  RunConfig cfg = resolve_config(g);
  if (lambda.has_value()) cfg.plan.lambda = *lambda;
  if (episodes.has_value()) cfg.eval_episodes = *episodes;
  cfg.validate();
  const WorldModel model = read_checkpoint_arg(checkpoint, cfg.env);
  const EvalReport r = evaluate(model, cfg.env, cfg.plan, cfg.eval_episodes, cfg.eval_seed);
  print_eval(out, "eval lambda=" + num(cfg.plan.lambda), r, verbose);
  return kExitOk;
}

int cmd_sweep(const Globals& g, const std::string& checkpoint, const std::vector<double>& lambdas,
              std::optional<int> episodes, std::ostream& out) {
  RunConfig cfg = resolve_config(g);
  if (episodes.has_value()) cfg.eval_episodes = *episodes;
  const WorldModel model = read_checkpoint_arg(checkpoint, cfg.env);
  std::ostringstream table;
  table << "lambda,success_rate,mean_return\n";
  out << "lambda      success_rate  mean_return\n";
  for (double lambda : lambdas) {
    PlanConfig plan = cfg.plan;
    plan.lambda = lambda;
    plan.validate();
    const EvalReport r = evaluate(model, cfg.env, plan, cfg.eval_episodes, cfg.eval_seed);
    std::string l = num(lambda);
    l.resize(std::max<std::size_t>(l.size(), 12), ' ');
    std::string s = fixed(r.success_rate, 4);
    s.resize(std::max<std::size_t>(s.size(), 14), ' ');
    out << l << s << fixed(r.mean_return, 4) << '\n';
    table << num(lambda) << ',' << num(r.success_rate) << ',' << num(r.mean_return) << '\n';
  }
  if (!g.out.empty()) {
    const fs::path dir = require_out_dir(g);
    std::ofstream f(dir / "sweep.csv", std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write " + (dir / "sweep.csv").string());
    f << table.str();
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline pretraining and online finetuning of latent world models", "wmft"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Run configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides run.seed)");
  app.add_option("--out", g.out, "Output file (gen-data) or run directory");
  app.add_option("--override", g.overrides, "key=value or section.key=value, repeatable");

  std::string env_id, kind = "medium", dataset;
  int episodes = 100;
  std::size_t transitions = 2500;
  double noise = kMediumNoise;
  auto* gen = app.add_subcommand("gen-data", "Generate an offline dataset");
  gen->add_option("--env", env_id, "reach2d or push2d (default: config env.id)");
  gen->add_option("--kind", kind, "medium or medium-replay");
  gen->add_option("--episodes", episodes, "Episodes for the medium composition");
  gen->add_option("--transitions", transitions, "Transitions for the medium-replay composition");
  gen->add_option("--noise", noise, "Action noise std of the scripted controller");

  auto* pre = app.add_subcommand("pretrain", "Offline pretraining on a dataset");
  pre->add_option("--dataset", dataset, "Dataset file (overrides run.dataset)");

  std::string checkpoint;
  bool from_scratch = false;
  int trials = 0;
  auto* fine = app.add_subcommand("finetune", "Online finetuning with planner-driven trials");
  fine->add_option("--checkpoint", checkpoint, "Pretrained checkpoint");
  fine->add_flag("--from-scratch", from_scratch, "Start from a fresh model without offline data");
  auto* trials_opt = fine->add_option("--trials", trials, "Online trials (overrides run.online_trials)");
  fine->add_option("--dataset", dataset, "Offline dataset for balanced sampling");

  double lambda = 0.0;
  int eval_episodes = 0;
  bool verbose = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint with deterministic planning");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  auto* lambda_opt = ev->add_option("--lambda", lambda, "Uncertainty coefficient for this evaluation");
  auto* ev_episodes_opt = ev->add_option("--episodes", eval_episodes, "Evaluation episodes");
  ev->add_flag("--verbose", verbose, "Print one row per episode");

  std::vector<double> lambdas{0.0, 0.3, 1.0, 3.0, 10.0, 20.0};
  auto* sw = app.add_subcommand("sweep", "Evaluate one checkpoint across uncertainty coefficients");
  sw->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  sw->add_option("--lambdas", lambdas, "Coefficients to evaluate")->delimiter(',');
  auto* sw_episodes_opt = sw->add_option("--episodes", eval_episodes, "Evaluation episodes");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "wmft: " << e.what() << '\n';
    return kExitUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (gen->parsed()) return cmd_gen_data(g, env_id, kind, episodes, transitions, noise, out);
    if (pre->parsed()) return cmd_pretrain(g, dataset, out);
    if (fine->parsed()) {
      return cmd_finetune(g, checkpoint, from_scratch,
                          trials_opt->count() > 0 ? std::optional<int>(trials) : std::nullopt, dataset,
                          out);
    }
    const auto eps = [&](CLI::Option* o) {
      return o->count() > 0 ? std::optional<int>(eval_episodes) : std::nullopt;
    };
    if (ev->parsed()) {
      return cmd_eval(g, checkpoint, lambda_opt->count() > 0 ? std::optional<double>(lambda) : std::nullopt,
                      eps(ev_episodes_opt), verbose, out);
    }
    if (sw->parsed()) return cmd_sweep(g, checkpoint, lambdas, eps(sw_episodes_opt), out);
  } catch (const UsageError& e) {
    err << "wmft: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "wmft: configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "wmft: malformed input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "wmft: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace wmft::cli
