#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "emcom/agent.hpp"
#include "emcom/env.hpp"
#include "emcom/gae.hpp"

namespace emcom::train {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 1e-4;
  bool anneal_lr = true;
  int num_envs = 64;
  int horizon = 256;
  int num_minibatches = 256;
  int update_epochs = 4;
  long long total_timesteps = 20000000;

  int batch_samples() const { return num_envs * horizon * 2; }
  int num_updates() const {
    return static_cast<int>(total_timesteps /
                            (static_cast<long long>(num_envs) * horizon));
  }
};

// Linear decay from lr0 at the first update down to lr0/N at the last.
double lr_at(int update, double lr0, int num_updates);

struct UpdateStats {
  double pg_loss = 0, v_loss = 0, entropy = 0, approx_kl = 0, clip_frac = 0;
};

struct IterationLog {
  int iteration = 0;  // 1-based update index
  long long global_step = 0;
  double lr = 0;
  double mean_ep_reward = 0;
  double mean_ep_length = 0;
  int episodes = 0;  // episodes completed during this iteration
  UpdateStats stats;
};

struct EpisodeRecord {
  long long global_step = 0;
  int env_index = 0;
  double team_reward = 0;
  int length = 0;
  bool truncated = false;
};

using EnvFactory = env::EnvFactory;

struct TrainerSetup {
  EnvFactory env_factory;
  agent::LanguageSpec lang;
  agent::AgentNetConfig net;
  PpoConfig ppo;
  std::uint64_t seed = 1;
};

// One iteration's worth of samples. Sample index s = ((t * num_envs + e) * 2
// + a); both agents of an env step share done/truncated flags and a critic
// input row (s >> 1).
template <class S>
struct Rollout {
  int n = 0;
  nn::Mat<S> inputs;         // n x input_dim
  nn::Mat<S> critic_inputs;  // (n / 2) x critic_dim
  std::vector<int> move;
  std::vector<int> tokens;  // n * seq_len
  std::vector<S> logprob;
  std::vector<double> value, reward, step_boot, advantage, ret;
  std::vector<std::uint8_t> done, trunc;
};

// Shared-parameter self-play PPO: both agents act through one actor and are
// valued by one centralized critic; every agent transition is a training
// sample. Single-threaded and bit-reproducible under a fixed seed; the full
// state (params, optimizer, env states, message routing, RNG streams)
// round-trips through serialize_state/restore_state.
template <class S>
class Trainer {
public:
  explicit Trainer(TrainerSetup setup);

  // One collect -> GAE -> PPO-update cycle.
  IterationLog run_update();

  int num_updates() const { return setup_.ppo.num_updates(); }
  int update_index() const { return update_count_; }
  long long global_step() const { return global_step_; }
  bool finished() const { return update_count_ >= num_updates(); }

  const agent::AgentNets<S>& nets() const { return nets_; }
  const TrainerSetup& setup() const { return setup_; }
  int env_obs_dim() const { return obs_dim_; }
  int env_num_actions() const { return num_move_; }

  // Episodes that finished during the last run_update call.
  const std::vector<EpisodeRecord>& last_episodes() const { return last_episodes_; }

  std::string serialize_state() const;
  void restore_state(const std::string& blob);

  // Test-only observation point: called with the filled sample batch after
  // every collection phase, before any gradient step.
  void set_rollout_hook(std::function<void(const Rollout<S>&)> hook) {
    rollout_hook_ = std::move(hook);
  }

private:
  void collect(Rollout<S>& buf);
  UpdateStats optimize(Rollout<S>& buf, double lr);
  nn::Vec<S> agent_input(int e, int a) const;
  void reset_env_slot(int e);

  TrainerSetup setup_;
  std::vector<std::unique_ptr<env::TwoAgentEnv>> envs_;
  int obs_dim_ = 0, num_move_ = 0;

  agent::AgentNets<S> nets_;
  nn::AdamState<S> adam_actor_, adam_critic_;
  Rng act_rng_, shuffle_rng_;

  // Message routing: incoming_[e][a] is what agent a receives this step,
  // i.e. the message its partner sent last step; empty right after reset.
  std::vector<std::array<std::optional<agent::Message>, 2>> incoming_;
  std::vector<std::array<std::vector<double>, 2>> obs_;
  std::vector<int> ep_len_;
  std::vector<double> ep_ret_;

  int update_count_ = 0;
  long long global_step_ = 0;
  std::vector<EpisodeRecord> last_episodes_;
  Rollout<S> rollout_;
  std::function<void(const Rollout<S>&)> rollout_hook_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace emcom::train
