#include "wmft/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

#include "wmft/checkpoint.hpp"
#include "wmft/errors.hpp"

namespace wmft {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPretrainSampleStream = 2;
constexpr std::uint64_t kPretrainUpdateStream = 3;
constexpr std::uint64_t kOnlineSampleStream = 4;
constexpr std::uint64_t kOnlineUpdateStream = 5;
constexpr std::uint64_t kOnlinePlanStream = 6;
constexpr std::uint64_t kTrainResetBase = 0x7A1A'0000ULL;
constexpr std::uint64_t kEvalResetBase = 0xE7A1'0000ULL;
constexpr std::uint64_t kEvalPlanBase = 0xE7A2'0000ULL;
constexpr std::uint64_t kTopBit = 1ULL << 63;

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void accumulate(UpdateMetrics& sum, const UpdateMetrics& m) {
  sum.consistency += m.consistency;
  sum.reward += m.reward;
  sum.q += m.q;
  sum.value += m.value;
  sum.awr += m.awr;
  sum.total += m.total;
  sum.mean_q += m.mean_q;
  sum.mean_uncertainty += m.mean_uncertainty;
  sum.grad_norm += m.grad_norm;
}

UpdateMetrics divided(UpdateMetrics sum, int n) {
  if (n <= 0) return sum;
  const double k = 1.0 / n;
  sum.consistency *= k;
  sum.reward *= k;
  sum.q *= k;
  sum.value *= k;
  sum.awr *= k;
  sum.total *= k;
  sum.mean_q *= k;
  sum.mean_uncertainty *= k;
  sum.grad_norm *= k;
  return sum;
}

void check_dataset_env(const std::vector<Episode>& data, const EnvSpec& env) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Episode& ep = data[i];
    validate_episode(ep);
    if (ep.states.front().size() != env.state_dim() || ep.actions.front().size() != env.action_dim()) {
      throw ConfigError("dataset episode " + std::to_string(i) + " does not match environment " +
                        to_string(env.id));
    }
  }
}

// Collects planner-driven episodes and runs the balanced-batch updates that
// follow each one. Shared by finetune and the medium-replay generator.
class OnlineLoop {
 public:
  OnlineLoop(const RunConfig& cfg, WorldModel& model, const std::vector<Episode>& offline,
             const RunSink& sink, std::string stage, const StepTrace& trace)
      : cfg_(cfg),
        model_(model),
        sink_(sink),
        stage_(std::move(stage)),
        trace_(trace),
        offline_(Source::kOffline, cfg.train_horizon(), 0, cfg.per),
        online_(Source::kOnline, cfg.train_horizon(), cfg.online_capacity, cfg.per),
        sample_rng_(make_stream(cfg.seed, kOnlineSampleStream)),
        update_rng_(make_stream(cfg.seed, kOnlineUpdateStream)),
        plan_rng_(make_stream(cfg.seed, kOnlinePlanStream)) {
    for (const auto& ep : offline) offline_.add_episode(ep);
  }

  TrialRecord run_trial(int trial) {
    TrialRecord rec;
    rec.trial = trial;
    const EnvSpec& env = cfg_.env;
    Episode ep;
    ep.provenance = stage_ + ": seed=" + std::to_string(cfg_.seed) + " trial=" + std::to_string(trial);
    ep.states.push_back(reset(env, training_reset_seed(cfg_.seed, static_cast<std::uint64_t>(trial))));
    std::optional<PlanState> warm;
    double unc_sum = 0.0;
    for (int t = 0; t < env.episode_length; ++t) {
      PlanResult pr;
      try {
        pr = plan(model_, ep.states.back(), warm, cfg_.plan, plan_rng_, true);
      } catch (const PlanningError&) {
        rec.aborted = true;
        break;
      }
      warm = pr.next;
      if (trace_) trace_(trial, t, ep.states.back(), pr.action);
      StepResult r = step(env, ep.states.back(), pr.action);
      if (r.clamped) ++rec.clamped_actions;
      unc_sum += pr.uncertainty;
      rec.max_uncertainty = std::max(rec.max_uncertainty, pr.uncertainty);
      const bool last = r.done || t + 1 == env.episode_length;
      ep.actions.push_back(pr.action);
      ep.rewards.push_back(r.reward);
      ep.dones.push_back(last);
      ep.states.push_back(std::move(r.next_state));
      if (r.success) ep.success = true;
      if (last) break;
    }
    rec.steps = static_cast<int>(ep.length());
    rec.episode_return = ep.length() > 0 ? ep.total_return() : 0.0;
    rec.success = ep.success && !rec.aborted;
    rec.mean_uncertainty = rec.steps > 0 ? unc_sum / rec.steps : 0.0;

    if (ep.length() > 0) {
      ep.dones.back() = true;
      online_.add_episode(ep);
      collected.push_back(std::move(ep));
    }

    const int n_updates = cfg_.updates_per_online_step * rec.steps;
    UpdateMetrics sum;
    for (int k = 0; k < n_updates; ++k) {
      const SubsequenceBatch batch =
          sample_balanced(offline_, online_, cfg_.batch_size, cfg_.train_horizon(), sample_rng_);
      const UpdateMetrics um = update(model_, batch, cfg_.loss, update_rng_);
      update_priorities(offline_, online_, batch, um.td_errors);
      if (sink_.metrics != nullptr) sink_.metrics->log_update(stage_, model_.update_count, trial, um);
      accumulate(sum, um);
    }
    rec.num_updates = n_updates;
    rec.update_summary = divided(sum, n_updates);
    if (sink_.metrics != nullptr) sink_.metrics->log_trial(stage_, model_.update_count, rec);
    if (!sink_.dir.empty()) {
      save_run_checkpoint(checkpoint_path(sink_.dir, stage_, trial + 1), model_, env);
    }
    return rec;
  }

  std::size_t collected_transitions() const {
    std::size_t n = 0;
    for (const auto& e : collected) n += e.length();
    return n;
  }

  std::vector<Episode> collected;

 private:
  const RunConfig& cfg_;
  WorldModel& model_;
  RunSink sink_;
  std::string stage_;
  StepTrace trace_;
  EpisodeBuffer offline_;
  EpisodeBuffer online_;
  Rng sample_rng_;
  Rng update_rng_;
  Rng plan_rng_;
};

}  // namespace

ModelDims RunConfig::model_dims() const {
  ModelDims d;
  d.state_dim = env.state_dim();
  d.action_dim = env.action_dim();
  d.latent_dim = latent_dim;
  d.hidden_dim = hidden_dim;
  d.hidden_layers = hidden_layers;
  d.num_q = num_q;
  return d;
}

void RunConfig::validate() const {
  env.validate();
  model_dims().validate();
  loss.validate();
  optim.validate();
  plan.validate();
  if (per.alpha < 0.0 || per.beta < 0.0 || per.priority_floor < 0.0) {
    throw ConfigError("PER alpha, beta and priority floor must be non-negative");
  }
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be positive and even");
  if (pretrain_steps < 0) throw ConfigError("pretrain_steps must be non-negative");
  if (online_trials < 0) throw ConfigError("online_trials must be non-negative");
  if (updates_per_online_step < 0) throw ConfigError("updates_per_online_step must be non-negative");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be at least 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (online_capacity != 0 && online_capacity < static_cast<std::size_t>(env.episode_length)) {
    throw ConfigError("online_capacity must hold at least one full episode");
  }
  if (env.episode_length < plan.horizon) {
    throw ConfigError("episode_length must be at least the planning horizon");
  }
}

const char* MetricsLog::header() {
  return "stage,kind,step,trial,total,consistency,reward,q,value,awr,grad_norm,mean_q,"
         "mean_uncertainty,episode_return,success,steps,plan_uncertainty_mean,"
         "plan_uncertainty_max,clamped_actions,aborted";
}

MetricsLog::MetricsLog(std::ostream* out, std::ostream* timing) : out_(out), timing_(timing) {
  if (out_ != nullptr) *out_ << header() << '\n';
  if (timing_ != nullptr) *timing_ << "row,wall_seconds\n";
}

MetricsLog MetricsLog::open(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  MetricsLog log;
  const auto open_csv = [](const std::filesystem::path& path, const std::string& head) {
    bool fresh = true;
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
      std::ifstream in(path);
      std::string first;
      std::getline(in, first);
      if (first != head) throw FormatError("existing " + path.string() + " has a different header");
      fresh = false;
    }
    auto f = std::make_shared<std::ofstream>(path, std::ios::binary | std::ios::app);
    if (!*f) throw Error("cannot open " + path.string());
    if (fresh) *f << head << '\n';
    return f;
  };
  log.owned_out_ = open_csv(dir / "metrics.csv", header());
  log.owned_timing_ = open_csv(dir / "timing.csv", "row,wall_seconds");
  log.out_ = log.owned_out_.get();
  log.timing_ = log.owned_timing_.get();
  return log;
}

void MetricsLog::timing_row() {
  if (timing_ == nullptr) return;
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - started_;
  *timing_ << rows_ << ',' << num(dt.count()) << '\n';
}

void MetricsLog::log_update(const std::string& stage, std::int64_t step, int trial,
                            const UpdateMetrics& m) {
  if (out_ == nullptr) return;
  *out_ << stage << ",update," << step << ',' << (trial >= 0 ? std::to_string(trial) : "") << ','
        << num(m.total) << ',' << num(m.consistency) << ',' << num(m.reward) << ',' << num(m.q)
        << ',' << num(m.value) << ',' << num(m.awr) << ',' << num(m.grad_norm) << ','
        << num(m.mean_q) << ',' << num(m.mean_uncertainty) << ",,,,,,,\n";
  ++rows_;
  timing_row();
}

void MetricsLog::log_trial(const std::string& stage, std::int64_t step, const TrialRecord& rec) {
  if (out_ == nullptr) return;
  const UpdateMetrics& m = rec.update_summary;
  *out_ << stage << ",trial," << step << ',' << rec.trial << ',' << num(m.total) << ','
        << num(m.consistency) << ',' << num(m.reward) << ',' << num(m.q) << ',' << num(m.value)
        << ',' << num(m.awr) << ',' << num(m.grad_norm) << ',' << num(m.mean_q) << ','
        << num(m.mean_uncertainty) << ',' << num(rec.episode_return) << ','
        << (rec.success ? 1 : 0) << ',' << rec.steps << ',' << num(rec.mean_uncertainty) << ','
        << num(rec.max_uncertainty) << ',' << rec.clamped_actions << ',' << (rec.aborted ? 1 : 0)
        << '\n';
  out_->flush();
  ++rows_;
  timing_row();
}

WorldModel init_model(const RunConfig& cfg) {
  Rng rng = make_stream(cfg.seed, kInitStream);
  return WorldModel(cfg.model_dims(), rng, cfg.optim);
}

void save_run_checkpoint(const std::filesystem::path& path, const WorldModel& m,
                         const EnvSpec& env) {
  Checkpoint ckpt;
  save_model(ckpt, m);
  ckpt.put_string("run.env", to_string(env.id));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ckpt.save(path);
}

WorldModel load_run_checkpoint(const std::filesystem::path& path, const EnvSpec& env) {
  const Checkpoint ckpt = Checkpoint::load(path);
  if (ckpt.has("run.env") && ckpt.string("run.env") != to_string(env.id)) {
    throw ConfigError("checkpoint was trained on " + ckpt.string("run.env") + ", config asks for " +
                      to_string(env.id));
  }
  WorldModel m = load_model(ckpt);
  if (m.dims.state_dim != env.state_dim() || m.dims.action_dim != env.action_dim()) {
    throw ConfigError("checkpoint dimensions do not match environment " + to_string(env.id));
  }
  return m;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& stage,
                                      std::int64_t step) {
  return dir / (stage + "_" + std::to_string(step));
}

WorldModel pretrain(const RunConfig& cfg, const std::vector<Episode>& dataset, const RunSink& sink,
                    std::optional<WorldModel> init) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("pretrain: the offline dataset is empty");
  check_dataset_env(dataset, cfg.env);
  WorldModel model = init.has_value() ? std::move(*init) : init_model(cfg);
  if (!(model.dims == cfg.model_dims())) throw ConfigError("pretrain: model dimensions differ from config");

  EpisodeBuffer offline(Source::kOffline, cfg.train_horizon(), 0, cfg.per);
  for (const auto& ep : dataset) offline.add_episode(ep);
  EpisodeBuffer online(Source::kOnline, cfg.train_horizon(), cfg.online_capacity, cfg.per);
  Rng sample_rng = make_stream(cfg.seed, kPretrainSampleStream);
  Rng update_rng = make_stream(cfg.seed, kPretrainUpdateStream);

  for (std::int64_t s = 1; s <= cfg.pretrain_steps; ++s) {
    const SubsequenceBatch batch =
        sample_balanced(offline, online, cfg.batch_size, cfg.train_horizon(), sample_rng);
    UpdateMetrics um;
    try {
      um = update(model, batch, cfg.loss, update_rng);
    } catch (const NumericError& e) {
      std::string where;
      if (!sink.dir.empty()) {
        const auto path = checkpoint_path(sink.dir, "pretrain", s - 1);
        save_run_checkpoint(path, model, cfg.env);
        where = "; last good model saved to " + path.string();
      }
      throw NumericError("pretrain step " + std::to_string(s) + ": " + e.what() + where);
    }
    update_priorities(offline, online, batch, um.td_errors);
    if (sink.metrics != nullptr) sink.metrics->log_update("pretrain", s, -1, um);
    if (!sink.dir.empty() && cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0 &&
        s != cfg.pretrain_steps) {
      save_run_checkpoint(checkpoint_path(sink.dir, "pretrain", s), model, cfg.env);
    }
  }
  if (!sink.dir.empty()) {
    save_run_checkpoint(checkpoint_path(sink.dir, "pretrain", cfg.pretrain_steps), model, cfg.env);
  }
  return model;
}

FinetuneResult finetune(const RunConfig& cfg, WorldModel model, const std::vector<Episode>& offline,
                        const RunSink& sink, const std::string& stage, const StepTrace& trace) {
  cfg.validate();
  check_dataset_env(offline, cfg.env);
  if (!(model.dims == cfg.model_dims())) throw ConfigError("finetune: model dimensions differ from config");
  FinetuneResult out;
  {
    OnlineLoop loop(cfg, model, offline, sink, stage, trace);
    for (int trial = 0; trial < cfg.online_trials; ++trial) out.trials.push_back(loop.run_trial(trial));
    out.collected = std::move(loop.collected);
  }
  out.model = std::move(model);
  return out;
}

std::uint64_t training_reset_seed(std::uint64_t run_seed, std::uint64_t trial) {
  return make_stream(run_seed, kTrainResetBase + trial)() | kTopBit;
}

std::uint64_t evaluation_reset_seed(std::uint64_t eval_seed, std::uint64_t episode) {
  return make_stream(eval_seed, kEvalResetBase + episode)() & ~kTopBit;
}

EvalReport evaluate(const WorldModel& m, const EnvSpec& env, const PlanConfig& plan_cfg,
                    int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be at least 1");
  plan_cfg.validate();
  EvalReport report;
  double successes = 0.0;
  double returns = 0.0;
  for (int i = 0; i < n_episodes; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    EvalEpisode row;
    row.reset_seed = evaluation_reset_seed(seed, idx);
    Rng rng = make_stream(seed, kEvalPlanBase + idx);
    std::optional<PlanState> warm;
    const Episode ep = rollout(env, row.reset_seed, [&](const Vector& s, int) {
      PlanResult pr = plan(m, s, warm, plan_cfg, rng, false);
      warm = std::move(pr.next);
      return pr.action;
    });
    row.episode_return = ep.total_return();
    row.success = ep.success;
    row.steps = static_cast<int>(ep.length());
    successes += row.success ? 1.0 : 0.0;
    returns += row.episode_return;
    report.episodes.push_back(row);
  }
  report.success_rate = successes / n_episodes;
  report.mean_return = returns / n_episodes;
  return report;
}

std::vector<Episode> gen_medium_replay_dataset(const RunConfig& cfg, std::size_t n_transitions,
                                               std::uint64_t seed) {
  if (n_transitions == 0) throw ConfigError("n_transitions must be positive");
  RunConfig run = cfg;
  run.seed = seed;
  run.validate();
  WorldModel model = init_model(run);
  std::vector<Episode> collected;
  {
    OnlineLoop loop(run, model, {}, {}, "online", {});
    for (int trial = 0; loop.collected_transitions() < n_transitions; ++trial) loop.run_trial(trial);
    collected = std::move(loop.collected);
  }
  const std::string provenance = "medium-replay:from-scratch-prefix env=" + to_string(run.env.id) +
                                 " n_transitions=" + std::to_string(n_transitions) +
                                 " seed=" + std::to_string(seed);
  std::vector<Episode> out;
  std::size_t total = 0;
  for (auto& ep : collected) {
    if (total >= n_transitions) break;
    const std::size_t keep = std::min(ep.length(), n_transitions - total);
    if (keep < ep.length()) {
      ep.states.resize(keep + 1);
      ep.actions.resize(keep);
      ep.rewards.resize(keep);
      ep.dones.resize(keep);
      ep.dones.back() = true;
      ep.success = false;
    }
    ep.provenance = provenance;
    total += keep;
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace wmft
