#pragma once

#include "emcom/env.hpp"

namespace emcom::env {

struct CollectorsConfig {
  double agent_speed = 0.03;
  double collect_radius = 0.05;
  int countdown_min = 60;
  int countdown_max = 120;
  double min_spawn_dist = 0.2;
  int max_episode_steps = 1024;
};

// Two agents gather timed targets on the unit square. Collecting a target
// pays +1 and respawns it elsewhere; any countdown expiring ends the episode
// with -1 for both. Agents never observe each other.
//
// Movement actions: 0 = up, 1 = down, 2 = left, 3 = right, 4 = stay.
// Observation (18): own (x, y), last-direction one-hot(5), per target slot
// (x, y, countdown / countdown_max), agent-id one-hot.
class CollectorsEnv final : public TwoAgentEnv {
public:
  struct Target {
    double x, y;
    int countdown;
    int generation;  // bumped on every respawn, so probes can detect slot turnover
  };

  explicit CollectorsEnv(const CollectorsConfig& cfg = {});

  StepResult reset(std::uint64_t seed) override;
  StepResult begin_episode() override;
  StepResult step(const std::array<int, 2>& movement_actions) override;

  int obs_dim() const override { return 18; }
  int num_actions() const override { return 5; }
  std::string name() const override { return "collectors"; }
  bool terminal() const override { return done_; }

  std::string serialize_state() const override;
  void restore_state(const std::string& blob) override;

  const std::array<std::array<double, 2>, 2>& agent_pos() const { return agent_pos_; }
  const std::array<Target, 3>& targets() const { return targets_; }
  int step_count() const { return step_count_; }

  static constexpr int kNumTargets = 3;

private:
  std::vector<double> make_obs(int agent) const;
  StepResult obs_only() const;
  Target spawn_target();

  CollectorsConfig cfg_;
  Rng rng_;
  std::array<std::array<double, 2>, 2> agent_pos_{};
  std::array<int, 2> last_dir_{4, 4};
  std::array<Target, 3> targets_{};
  int step_count_ = 0;
  bool done_ = true;
};

}  // namespace emcom::env
