// emcom command line: training, evaluation, interpretability passes, probe
// dataset recording and training, and cross-run export. Every command reads
// and writes a run directory; artifacts carry the run's config hash.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "emcom/checkpoint.hpp"
#include "emcom/config.hpp"
#include "emcom/errors.hpp"
#include "emcom/export.hpp"
#include "emcom/interpret.hpp"
#include "emcom/probes.hpp"
#include "emcom/runio.hpp"
#include "emcom/trainer.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace emcom;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string run_name_from(const cfg::RunConfig& config) {
  return config.env + "_V" + std::to_string(config.lang.vocab_size) + "L" +
         std::to_string(config.lang.seq_len) + "_s" + std::to_string(config.seed);
}

void require_channel(const cfg::RunConfig& config, const std::string& command) {
  if (!config.lang.enabled())
    throw UsageError("the '" + command +
                     "' command needs a language channel, but lang.seq_len is 0 in this run");
}

runio::CsvSchema training_schema() {
  return {"training", 1,
          {"iteration", "global_step", "lr", "mean_ep_reward", "mean_ep_length", "episodes",
           "pg_loss", "v_loss", "entropy", "approx_kl", "clip_frac"}};
}

runio::CsvSchema episodes_schema() {
  return {"episodes", 1, {"global_step", "env_index", "team_reward", "length", "truncated"}};
}

// A finished or in-progress run reloaded for analysis: its config plus the
// checkpointed policy cast to double.
struct LoadedRun {
  cfg::RunConfig config;
  runio::RunPaths paths;
  nn::ParamSet<double> actor;
  agent::HeadLayout heads;
  agent::InputLayout layout;
  int update_index = 0;
  long long global_step = 0;
};

LoadedRun load_run(const std::string& run_dir) {
  runio::RunPaths paths{run_dir};
  if (!fs::exists(paths.config()))
    throw ArtifactError(run_dir + " has no config.json; is it a run directory?");
  LoadedRun out;
  out.paths = paths;
  out.config = cfg::load_run_config(paths.config().string());
  if (!fs::exists(paths.checkpoint()))
    throw ArtifactError(run_dir + " has no checkpoint; train the run first");
  train::Trainer<float> trainer(out.config.trainer_setup());
  ckpt::resume_from_checkpoint(trainer, paths.checkpoint().string(), out.config.config_hash());
  out.actor = trainer.nets().actor.cast<double>();
  out.heads = trainer.nets().heads;
  out.layout = trainer.nets().layout;
  out.update_index = trainer.update_index();
  out.global_step = trainer.global_step();
  return out;
}

void write_training_rows(runio::CsvWriter& training, runio::CsvWriter& episodes,
                         const train::IterationLog& log,
                         const std::vector<train::EpisodeRecord>& eps) {
  training.row({std::to_string(log.iteration), std::to_string(log.global_step), fmt(log.lr),
                fmt(log.mean_ep_reward), fmt(log.mean_ep_length), std::to_string(log.episodes),
                fmt(log.stats.pg_loss), fmt(log.stats.v_loss), fmt(log.stats.entropy),
                fmt(log.stats.approx_kl), fmt(log.stats.clip_frac)});
  for (const auto& e : eps)
    episodes.row({std::to_string(e.global_step), std::to_string(e.env_index),
                  fmt(e.team_reward), std::to_string(e.length), e.truncated ? "1" : "0"});
}

int cmd_train(const std::string& config_path, const std::string& resume_dir,
              const std::string& out_dir, std::int64_t seed_flag, int checkpoint_every) {
  cfg::RunConfig config;
  runio::RunPaths paths;
  std::unique_ptr<train::Trainer<float>> trainer;

  if (!resume_dir.empty()) {
    if (!config_path.empty())
      throw UsageError("--resume continues an existing run; do not also pass --config");
    if (seed_flag >= 0)
      throw UsageError("--seed cannot change a resumed run");
    paths = runio::RunPaths{resume_dir};
    if (!fs::exists(paths.config()))
      throw ArtifactError(resume_dir + " has no config.json; is it a run directory?");
    config = cfg::load_run_config(paths.config().string());
    if (!fs::exists(paths.checkpoint()))
      throw ArtifactError(resume_dir + " has no checkpoint to resume from");
  } else {
    if (config_path.empty())
      throw UsageError("train needs --config (new run) or --resume (continue a run)");
    config = cfg::load_run_config(config_path);
    if (seed_flag >= 0) {
      config.seed = static_cast<std::uint64_t>(seed_flag);
      config.provenance["seed"] = "explicit";
    }
    paths = runio::resolve_run_dir(out_dir, run_name_from(config));
    if (fs::exists(paths.config()))
      throw UsageError(paths.root.string() +
                       " already holds a run; use --resume or a fresh directory");
  }

  runio::RunLock lock(paths);
  const std::string config_hash = config.config_hash();
  const std::string env_hash = config.env_hash();

  if (resume_dir.empty()) {
    std::ofstream cfg_out(paths.config());
    cfg_out << config.canonical_json() << "\n";
    trainer = std::make_unique<train::Trainer<float>>(config.trainer_setup());
    runio::append_event(paths.events(), "run_start",
                        {{"config", config_hash}, {"env", env_hash}});
  } else {
    trainer = std::make_unique<train::Trainer<float>>(config.trainer_setup());
    ckpt::resume_from_checkpoint(*trainer, paths.checkpoint().string(), config_hash);
    // Cut both series back to the checkpoint so rows written after the saved
    // state (by a crashed or interrupted process) do not repeat.
    if (fs::exists(paths.training_csv()))
      runio::truncate_series(paths.training_csv(), trainer->update_index());
    if (fs::exists(paths.episodes_csv()))
      runio::truncate_series(paths.episodes_csv(), trainer->global_step());
    runio::append_event(paths.events(), "run_resumed",
                        {{"update", std::to_string(trainer->update_index())}});
  }

  runio::CsvWriter training(paths.training_csv(), training_schema(), config_hash, env_hash);
  runio::CsvWriter episodes(paths.episodes_csv(), episodes_schema(), config_hash, env_hash);

  const int total = trainer->num_updates();
  std::printf("run dir: %s\n", paths.root.string().c_str());
  std::printf("env %s | vocab %d | seq %d | seed %llu | updates %d | batch %lld\n",
              config.env.c_str(), config.lang.vocab_size, config.lang.seq_len,
              static_cast<unsigned long long>(config.seed), total,
              static_cast<long long>(config.ppo.batch_samples()));

  while (!trainer->finished()) {
    const auto log = trainer->run_update();
    write_training_rows(training, episodes, log, trainer->last_episodes());
    std::printf("u %5d/%d  step %10lld  lr %.3e  reward %8.3f  len %7.1f  eps %4d  kl %.4f\n",
                log.iteration, total, log.global_step, log.lr, log.mean_ep_reward,
                log.mean_ep_length, log.episodes, log.stats.approx_kl);
    std::fflush(stdout);
    if (log.iteration % checkpoint_every == 0 && !trainer->finished()) {
      ckpt::save_checkpoint(*trainer, config_hash, paths.checkpoint().string());
      training.flush();
      episodes.flush();
      runio::append_event(paths.events(), "checkpoint_saved",
                          {{"update", std::to_string(log.iteration)}});
    }
  }

  ckpt::save_checkpoint(*trainer, config_hash, paths.checkpoint().string());
  runio::append_event(paths.events(), "run_end",
                      {{"update", std::to_string(trainer->update_index())},
                       {"global_step", std::to_string(trainer->global_step())}});
  std::printf("done: %d updates, %lld steps\n", trainer->update_index(),
              trainer->global_step());
  return 0;
}

int cmd_evaluate(const std::string& run_dir, int episodes, std::int64_t seed_flag) {
  LoadedRun run = load_run(run_dir);
  const int n = episodes > 0 ? episodes : run.config.interpret.episodes;
  const std::uint64_t seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                                            : run.config.seed;
  const auto res = interpret::evaluate_policy(run.config.make_env_factory(), run.actor,
                                              run.heads, run.layout, n, seed);
  std::printf("evaluated %d episodes at update %d: mean team reward %.4f, mean length %.1f "
              "(%lld steps)\n",
              res.episodes, run.update_index, res.mean_reward, res.mean_length, res.steps);
  runio::append_event(run.paths.events(), "evaluate",
                      {{"episodes", std::to_string(res.episodes)},
                       {"mean_reward", fmt(res.mean_reward)},
                       {"mean_length", fmt(res.mean_length)}});
  return 0;
}

int cmd_saliency(const std::string& run_dir, std::int64_t samples_flag, int window_flag,
                 std::int64_t seed_flag) {
  LoadedRun run = load_run(run_dir);
  require_channel(run.config, "saliency-track");
  const long long samples =
      samples_flag > 0 ? samples_flag : run.config.interpret.saliency_samples;
  const int window = window_flag > 0 ? window_flag : run.config.interpret.saliency_window;
  if (samples < window)
    throw UsageError("saliency needs at least as many samples (" + std::to_string(samples) +
                     ") as the importance window (" + std::to_string(window) + ")");
  const std::uint64_t seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                                            : run.config.seed;

  const auto series = interpret::saliency_rollout(run.config.make_env_factory(), run.actor,
                                                  run.heads, run.layout, samples, seed);
  std::vector<nn::Vec<double>> maps;
  maps.reserve(series.size());
  for (const auto& s : series) maps.push_back(s.saliency);
  const double rate = interpret::message_importance_rate(maps, run.layout, window);

  const std::string config_hash = run.config.config_hash();
  const std::string env_hash = run.config.env_hash();
  fs::remove(run.paths.saliency_csv());
  fs::remove(run.paths.saliency_summary_csv());
  {
    runio::CsvWriter w(run.paths.saliency_csv(),
                       {"saliency", 1, {"episode", "step", "agent", "salient", "norm_msg_max"}},
                       config_hash, env_hash);
    for (const auto& s : series) {
      const double lo = s.saliency.minCoeff(), hi = s.saliency.maxCoeff();
      double norm_max = 0.0;
      if (hi - lo > 0.0) {
        for (int k = run.layout.message_offset(); k < run.layout.input_dim(); ++k)
          norm_max = std::max(norm_max, (s.saliency[k] - lo) / (hi - lo));
      }
      w.row({std::to_string(s.episode), std::to_string(s.step), std::to_string(s.agent),
             norm_max > 0.8 ? "1" : "0", fmt(norm_max)});
    }
  }
  {
    runio::CsvWriter w(run.paths.saliency_summary_csv(),
                       {"saliency_summary", 1, {"samples", "window", "rate"}}, config_hash,
                       env_hash);
    w.row({std::to_string(series.size()), std::to_string(window), fmt(rate)});
  }
  std::printf("saliency: %zu samples, importance rate %.4f over the trailing %d\n",
              series.size(), rate, window);
  runio::append_event(run.paths.events(), "saliency",
                      {{"samples", std::to_string(series.size())}, {"rate", fmt(rate)}});
  return 0;
}

int cmd_perturb(const std::string& run_dir, int episodes_flag, bool full_distribution,
                std::int64_t seed_flag) {
  LoadedRun run = load_run(run_dir);
  require_channel(run.config, "perturb");
  const int episodes = episodes_flag > 0 ? episodes_flag : run.config.interpret.episodes;
  const bool full = full_distribution || run.config.interpret.full_distribution_kl;
  const std::uint64_t seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                                            : run.config.seed;
  const double threshold = run.config.interpret.threshold;

  const auto trace = interpret::sensitivity_trace(run.config.make_env_factory(), run.actor,
                                                  run.heads, run.layout, episodes, threshold,
                                                  full, seed);
  fs::remove(run.paths.sensitivity_csv());
  runio::CsvWriter w(run.paths.sensitivity_csv(),
                     {"sensitivity", 1, {"episode", "step", "agent", "max_kl", "above", "argmax_message"}},
                     run.config.config_hash(), run.config.env_hash());
  double kl_sum = 0;
  long long above = 0;
  for (const auto& t : trace) {
    w.row({std::to_string(t.episode), std::to_string(t.step), std::to_string(t.agent),
           fmt(t.max_kl), t.above ? "1" : "0", agent::format_message(t.argmax)});
    kl_sum += t.max_kl;
    above += t.above ? 1 : 0;
  }
  std::printf("perturbation: %zu agent-steps, mean max-KL %.5f, %.1f%% above threshold %g\n",
              trace.size(), trace.empty() ? 0.0 : kl_sum / trace.size(),
              trace.empty() ? 0.0 : 100.0 * above / trace.size(), threshold);
  runio::append_event(run.paths.events(), "perturb",
                      {{"steps", std::to_string(trace.size())},
                       {"mean_max_kl", fmt(trace.empty() ? 0.0 : kl_sum / trace.size())}});
  return 0;
}

int cmd_noise(const std::string& run_dir, int episodes_flag, double threshold_flag,
              std::int64_t seed_flag) {
  LoadedRun run = load_run(run_dir);
  require_channel(run.config, "noise-test");
  interpret::NoiseConfig ncfg;
  ncfg.threshold = threshold_flag >= 0 ? threshold_flag : run.config.interpret.threshold;
  ncfg.episodes = episodes_flag > 0 ? episodes_flag : run.config.interpret.episodes;
  ncfg.uniform_real_noise = run.config.interpret.uniform_real_noise;
  ncfg.full_distribution_kl = run.config.interpret.full_distribution_kl;
  ncfg.seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : run.config.seed;

  const auto results = interpret::noise_ablation(run.config.make_env_factory(), run.actor,
                                                 run.heads, run.layout, ncfg);
  fs::remove(run.paths.noise_csv());
  runio::CsvWriter w(run.paths.noise_csv(),
                     {"noise", 1, {"condition", "episodes", "mean_length", "mean_reward", "steps", "replaced"}},
                     run.config.config_hash(), run.config.env_hash());
  std::printf("%-8s %9s %12s %12s %10s %10s\n", "cond", "episodes", "mean_len", "mean_reward",
              "steps", "replaced");
  for (const auto& r : results) {
    w.row({interpret::condition_name(r.condition), std::to_string(r.episodes),
           fmt(r.mean_length), fmt(r.mean_reward), std::to_string(r.steps),
           std::to_string(r.replaced)});
    std::printf("%-8s %9d %12.2f %12.4f %10lld %10lld\n",
                interpret::condition_name(r.condition), r.episodes, r.mean_length,
                r.mean_reward, r.steps, r.replaced);
  }
  runio::append_event(run.paths.events(), "noise_test",
                      {{"episodes", std::to_string(ncfg.episodes)},
                       {"threshold", fmt(ncfg.threshold)}});
  return 0;
}

probes::ProbeDataset record_for_env(const LoadedRun& run, const probes::RecordConfig& rcfg) {
  const auto factory = run.config.make_env_factory();
  if (run.config.env == "pong")
    return probes::record_pong_dataset(factory, run.actor, run.heads, run.layout, rcfg);
  return probes::record_collectors_dataset(factory, run.actor, run.heads, run.layout, rcfg);
}

int cmd_record(const std::string& run_dir, std::int64_t steps_flag,
               std::int64_t valid_steps_flag, double threshold_flag, std::int64_t seed_flag) {
  LoadedRun run = load_run(run_dir);
  require_channel(run.config, "record");
  probes::RecordConfig rcfg;
  rcfg.steps = steps_flag > 0 ? steps_flag : run.config.probe.record_steps;
  rcfg.threshold = threshold_flag >= 0 ? threshold_flag : run.config.probe.threshold;
  rcfg.horizon = run.config.probe.horizon;
  rcfg.seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : run.config.seed;

  const auto train_set = record_for_env(run, rcfg);
  probes::save_dataset(train_set, run.paths.probe_train_set().string());
  std::printf("probe training set: %zu records kept, %lld skipped -> %s\n",
              train_set.records.size(), train_set.skipped,
              run.paths.probe_train_set().string().c_str());

  probes::RecordConfig vcfg = rcfg;
  vcfg.steps = valid_steps_flag > 0 ? valid_steps_flag : run.config.probe.validation_steps;
  vcfg.seed = rcfg.seed + 1;  // held-out rollouts
  const auto valid_set = record_for_env(run, vcfg);
  probes::save_dataset(valid_set, run.paths.probe_valid_set().string());
  std::printf("probe validation set: %zu records kept, %lld skipped -> %s\n",
              valid_set.records.size(), valid_set.skipped,
              run.paths.probe_valid_set().string().c_str());

  runio::append_event(run.paths.events(), "record",
                      {{"train_records", std::to_string(train_set.records.size())},
                       {"valid_records", std::to_string(valid_set.records.size())}});
  return 0;
}

int cmd_probe(const std::string& run_dir, std::vector<std::string> modes,
              std::int64_t seed_flag) {
  LoadedRun run = load_run(run_dir);
  require_channel(run.config, "probe");
  if (!fs::exists(run.paths.probe_train_set()) || !fs::exists(run.paths.probe_valid_set()))
    throw ArtifactError(run_dir + " has no recorded probe datasets; run 'emcom record' first");
  const auto train_set = probes::load_dataset(run.paths.probe_train_set().string());
  const auto valid_set = probes::load_dataset(run.paths.probe_valid_set().string());

  if (modes.empty()) modes = {"lang_only", "obs_only", "full"};
  std::vector<probes::ProbeInput> inputs;
  for (const auto& m : modes) {
    if (m == "lang_only") inputs.push_back(probes::ProbeInput::LangOnly);
    else if (m == "obs_only") inputs.push_back(probes::ProbeInput::ObsOnly);
    else if (m == "full") inputs.push_back(probes::ProbeInput::Full);
    else throw UsageError("unknown probe input '" + m +
                          "' (expected lang_only, obs_only, or full)");
  }

  probes::ProbeConfig pcfg;
  pcfg.batch_size = run.config.probe.batch_size;
  pcfg.learning_rate = run.config.probe.learning_rate;
  pcfg.epochs = run.config.probe.epochs;
  pcfg.hidden = run.config.probe.hidden;
  pcfg.max_train_records = run.config.probe.max_train_records;
  pcfg.seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : run.config.seed;

  fs::remove(run.paths.probe_results_csv());
  runio::CsvWriter w(run.paths.probe_results_csv(),
                     {"probe_results", 1,
                      {"env", "seq_len", "vocab", "input_mode", "accuracy", "train_accuracy",
                       "n_train", "n_valid", "n_skipped"}},
                     run.config.config_hash(), run.config.env_hash());
  for (const auto mode : inputs) {
    const auto res = probes::train_probe(train_set, valid_set, mode, pcfg);
    w.row({train_set.env_name, std::to_string(train_set.lang.seq_len),
           std::to_string(train_set.lang.vocab_size), probes::probe_input_name(mode),
           fmt(res.accuracy), fmt(res.train_accuracy), std::to_string(res.n_train),
           std::to_string(res.n_valid), std::to_string(train_set.skipped)});
    std::printf("probe %-9s accuracy %.4f (train %.4f, n_train %lld, n_valid %lld)\n",
                probes::probe_input_name(mode), res.accuracy, res.train_accuracy, res.n_train,
                res.n_valid);
  }
  runio::append_event(run.paths.events(), "probe", {{"modes", std::to_string(inputs.size())}});
  return 0;
}

int cmd_export(const std::vector<std::string>& run_dirs, const std::string& out_dir,
               const std::vector<std::string>& kind_names) {
  std::vector<report::RunRef> runs;
  std::set<std::string> seen;
  for (const auto& dir : run_dirs) {
    fs::path p(dir);
    std::string name = p.filename().string();
    if (name.empty()) name = p.parent_path().filename().string();
    if (!seen.insert(name).second)
      throw UsageError("two run directories share the name '" + name +
                       "'; export needs distinct final path components");
    runs.push_back({name, p});
  }
  std::vector<report::Kind> kinds;
  if (kind_names.empty())
    kinds = report::all_kinds();
  else
    for (const auto& k : kind_names) kinds.push_back(report::kind_from_name(k));

  const auto written = report::export_series(runs, kinds, out_dir);
  for (const auto& p : written) std::printf("wrote %s\n", p.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emcom: a laboratory for emergent token-based communication"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a run from a config, or resume one");
  std::string train_config, train_resume, train_out;
  std::int64_t train_seed = -1;
  int checkpoint_every = 50;
  train_cmd->add_option("--config", train_config, "JSON run configuration for a new run");
  train_cmd->add_option("--resume", train_resume, "existing run directory to continue");
  train_cmd->add_option("--out", train_out, "run directory for a new run");
  train_cmd->add_option("--seed", train_seed, "override the config seed for a new run");
  train_cmd->add_option("--checkpoint-every", checkpoint_every, "updates between checkpoints")
      ->check(CLI::PositiveNumber);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Roll out a trained policy and report returns");
  std::string eval_run;
  int eval_episodes = 0;
  std::int64_t eval_seed = -1;
  eval_cmd->add_option("run", eval_run, "run directory")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "evaluation episodes");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed (default: run seed)");

  // saliency-track
  auto* sal_cmd = app.add_subcommand("saliency-track", "Input-saliency series and importance rate");
  std::string sal_run;
  std::int64_t sal_samples = 0, sal_seed = -1;
  int sal_window = 0;
  sal_cmd->add_option("run", sal_run, "run directory")->required();
  sal_cmd->add_option("--samples", sal_samples, "agent-step samples to collect");
  sal_cmd->add_option("--window", sal_window, "trailing window for the importance rate");
  sal_cmd->add_option("--seed", sal_seed, "rollout seed (default: run seed)");

  // perturb
  auto* pert_cmd = app.add_subcommand("perturb", "Per-step message perturbation sensitivity");
  std::string pert_run;
  int pert_episodes = 0;
  bool pert_full = false;
  std::int64_t pert_seed = -1;
  pert_cmd->add_option("run", pert_run, "run directory")->required();
  pert_cmd->add_option("--episodes", pert_episodes, "episodes to trace");
  pert_cmd->add_flag("--full-distribution", pert_full, "include token heads in the KL");
  pert_cmd->add_option("--seed", pert_seed, "rollout seed (default: run seed)");

  // noise-test
  auto* noise_cmd = app.add_subcommand("noise-test", "Selective channel-noise ablation");
  std::string noise_run;
  int noise_episodes = 0;
  double noise_threshold = -1;
  std::int64_t noise_seed = -1;
  noise_cmd->add_option("run", noise_run, "run directory")->required();
  noise_cmd->add_option("--episodes", noise_episodes, "episodes per condition");
  noise_cmd->add_option("--threshold", noise_threshold, "sensitivity gate T");
  noise_cmd->add_option("--seed", noise_seed, "rollout seed (default: run seed)");

  // record
  auto* rec_cmd = app.add_subcommand("record", "Record labelled probe datasets");
  std::string rec_run;
  std::int64_t rec_steps = 0, rec_valid_steps = 0, rec_seed = -1;
  double rec_threshold = -1;
  rec_cmd->add_option("run", rec_run, "run directory")->required();
  rec_cmd->add_option("--steps", rec_steps, "environment steps for the training set");
  rec_cmd->add_option("--validation-steps", rec_valid_steps, "steps for the validation set");
  rec_cmd->add_option("--threshold", rec_threshold, "sensitivity filter");
  rec_cmd->add_option("--seed", rec_seed, "rollout seed (default: run seed)");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Train diagnostic classifiers on recordings");
  std::string probe_run;
  std::vector<std::string> probe_modes;
  std::int64_t probe_seed = -1;
  probe_cmd->add_option("run", probe_run, "run directory")->required();
  probe_cmd->add_option("--input", probe_modes, "lang_only, obs_only, or full (repeatable)");
  probe_cmd->add_option("--seed", probe_seed, "probe training seed (default: run seed)");

  // export
  auto* export_cmd = app.add_subcommand("export", "Merge artifacts from several runs");
  std::vector<std::string> export_runs, export_kinds;
  std::string export_out;
  export_cmd->add_option("runs", export_runs, "run directories")->required()->expected(-1);
  export_cmd->add_option("--out", export_out, "output directory")->required();
  export_cmd->add_option("--kinds", export_kinds,
                         "training, saliency, sensitivity, noise, probes (repeatable)");

  try {
    app.parse(argc, argv);
    if (*train_cmd)
      return cmd_train(train_config, train_resume, train_out, train_seed, checkpoint_every);
    if (*eval_cmd) return cmd_evaluate(eval_run, eval_episodes, eval_seed);
    if (*sal_cmd) return cmd_saliency(sal_run, sal_samples, sal_window, sal_seed);
    if (*pert_cmd) return cmd_perturb(pert_run, pert_episodes, pert_full, pert_seed);
    if (*noise_cmd) return cmd_noise(noise_run, noise_episodes, noise_threshold, noise_seed);
    if (*rec_cmd)
      return cmd_record(rec_run, rec_steps, rec_valid_steps, rec_threshold, rec_seed);
    if (*probe_cmd) return cmd_probe(probe_run, probe_modes, probe_seed);
    if (*export_cmd) return cmd_export(export_runs, export_out, export_kinds);
    throw UsageError("no command given");
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const ArtifactError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return 4;
  }
}
