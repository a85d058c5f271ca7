#pragma once

// Diagnostic probing: record (message traffic, observation, latent label)
// tuples along evaluation rollouts, then train small supervised classifiers
// to measure how much task-relevant state the channel carries.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emcom/agent.hpp"
#include "emcom/env.hpp"
#include "emcom/language.hpp"
#include "emcom/nn.hpp"

namespace emcom::probes {

// One training example. `messages` holds the one-hot blocks both agents sent
// this step (agent 0 first, 2*L*|V| values); `input` is the subject agent's
// full policy input (environment features plus its incoming message block).
struct ProbeRecord {
  std::vector<double> messages;
  std::vector<double> input;
  int agent = 0;
  int label = 0;
  double max_kl = 0.0;  // subject's message sensitivity at this step
};

struct ProbeDataset {
  std::string env_name;
  agent::LanguageSpec lang;
  int env_dim = 0;
  int num_labels = 0;
  double threshold = 0.02;  // only steps with max_kl above this were kept
  long long skipped = 0;    // candidate records dropped by filter or labeler
  std::vector<ProbeRecord> records;
};

// What the classifier gets to see.
enum class ProbeInput { LangOnly, ObsOnly, Full };

const char* probe_input_name(ProbeInput m);
int probe_input_width(const ProbeDataset& d, ProbeInput m);

struct RecordConfig {
  long long steps = 30000;  // environment steps to roll out
  double threshold = 0.02;
  int horizon = 5;  // look-ahead for approach labels
  std::uint64_t seed = 1;
};

// Pong: label 1 when agent 0's paddle sits strictly above agent 1's.
int pong_label(double paddle0_y, double paddle1_y);

// Collectors: which target slot the agent approached most over the horizon.
// Empty when nothing got closer or when the winning slot respawned inside
// the window (its generation changed).
struct TargetSnapshot {
  double x = 0, y = 0;
  int generation = 0;
};
std::optional<int> approach_label(const std::array<double, 2>& pos_now,
                                  const std::array<double, 2>& pos_later,
                                  const std::vector<TargetSnapshot>& targets_now,
                                  const std::vector<TargetSnapshot>& targets_later);

// Roll the policy and build the labelled dataset. The factory must produce
// the matching environment type; a disabled language channel is refused.
ProbeDataset record_pong_dataset(const env::EnvFactory& factory,
                                 const nn::ParamSet<double>& actor,
                                 const agent::HeadLayout& heads,
                                 const agent::InputLayout& layout, const RecordConfig& cfg);
ProbeDataset record_collectors_dataset(const env::EnvFactory& factory,
                                       const nn::ParamSet<double>& actor,
                                       const agent::HeadLayout& heads,
                                       const agent::InputLayout& layout,
                                       const RecordConfig& cfg);

struct ProbeConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  int epochs = 120;
  std::vector<int> hidden{64, 32};
  long long max_train_records = 300000;
  std::uint64_t seed = 1;
};

struct ProbeTrainLog {
  int epochs_run = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::vector<int> hidden;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

struct ProbeResult {
  double accuracy = 0.0;  // on the validation dataset
  double train_accuracy = 0.0;
  long long n_train = 0, n_valid = 0;
  ProbeTrainLog log;
  nn::ParamSet<double> net;
};

// Supervised training of a small MLP classifier on the chosen input view.
// The training set must contain at least two distinct labels.
ProbeResult train_probe(const ProbeDataset& train, const ProbeDataset& valid, ProbeInput mode,
                        const ProbeConfig& cfg = {});

// Columnar binary persistence with a versioned, self-describing header, plus
// a plain CSV export for external analysis.
void save_dataset(const ProbeDataset& d, const std::string& path);
ProbeDataset load_dataset(const std::string& path);
void export_dataset_csv(const ProbeDataset& d, const std::string& path);

}  // namespace emcom::probes
