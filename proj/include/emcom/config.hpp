#pragma once

// Run configuration: one JSON document describing an experiment end to end
// (environment constants, channel, networks, optimisation, analysis knobs).
// Parsing is strict: unknown keys are rejected, every value is validated,
// and the origin of each setting (explicit or default) is recorded.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emcom/agent.hpp"
#include "emcom/collectors.hpp"
#include "emcom/env.hpp"
#include "emcom/pong.hpp"
#include "emcom/trainer.hpp"

namespace emcom::cfg {

struct InterpretSettings {
  double threshold = 0.02;
  int episodes = 50;
  int saliency_window = 10000;
  long long saliency_samples = 10000;
  bool full_distribution_kl = false;
  bool uniform_real_noise = false;
};

struct ProbeSettings {
  long long record_steps = 300000;
  long long validation_steps = 30000;
  double threshold = 0.02;
  int horizon = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int epochs = 120;
  std::vector<int> hidden{64, 32};
  long long max_train_records = 300000;
};

struct RunConfig {
  std::string env;  // "pong" or "collectors"; the one field with no default
  std::uint64_t seed = 1;
  agent::LanguageSpec lang;
  agent::AgentNetConfig net;
  train::PpoConfig ppo;
  env::PongConfig pong;
  env::CollectorsConfig collectors;
  InterpretSettings interpret;
  ProbeSettings probe;

  // Dotted key -> "explicit" | "default" for every leaf setting.
  std::map<std::string, std::string> provenance;

  env::EnvFactory make_env_factory() const;
  train::TrainerSetup trainer_setup() const;

  // Canonical form with every default materialised and keys sorted; the two
  // hashes are derived from it. The environment hash covers only the chosen
  // environment's physical constants — not the channel — so runs that differ
  // only in vocabulary or message length stay comparable.
  std::string canonical_json() const;
  std::string config_hash() const;
  std::string env_hash() const;
};

// Strict parse + validation. Throws ConfigError with the offending dotted
// key in the message.
RunConfig parse_run_config(const std::string& json_text);

// Reads the file (ArtifactError when unreadable) and parses it.
RunConfig load_run_config(const std::string& path);

}  // namespace emcom::cfg
