#pragma once

#include "emcom/env.hpp"

namespace emcom::env {

struct PongConfig {
  double paddle_half_height = 0.1;
  double paddle_speed = 0.04;
  double ball_speed = 0.025;
  double spawn_x = 0.3;
  double spawn_cone_deg = 60.0;  // heading drawn uniform in +-cone around +x
  int max_episode_steps = 1024;
};

// Two paddles on the right edge, two balls in play. Catching a ball reflects
// it (+1 for the catcher); a ball reaching the right edge with no paddle in
// reach ends the episode with -1 for both agents. Neither agent observes the
// other's paddle.
//
// Movement actions: 0 = up, 1 = stay, 2 = down.
// Observation (11): own paddle y, then per ball (x, y, vx/speed, vy/speed),
// then agent-id one-hot.
class PongEnv final : public TwoAgentEnv {
public:
  struct Ball {
    double x, y, vx, vy;
  };

  explicit PongEnv(const PongConfig& cfg = {});

  StepResult reset(std::uint64_t seed) override;
  StepResult begin_episode() override;
  StepResult step(const std::array<int, 2>& movement_actions) override;

  int obs_dim() const override { return 11; }
  int num_actions() const override { return 3; }
  std::string name() const override { return "pong"; }
  bool terminal() const override { return done_; }

  std::string serialize_state() const override;
  void restore_state(const std::string& blob) override;

  const std::array<double, 2>& paddle_y() const { return paddle_y_; }
  const std::array<Ball, 2>& balls() const { return balls_; }
  int step_count() const { return step_count_; }

private:
  std::vector<double> make_obs(int agent) const;
  StepResult obs_only() const;

  PongConfig cfg_;
  Rng rng_;
  std::array<double, 2> paddle_y_{0.5, 0.5};
  std::array<Ball, 2> balls_{};
  int step_count_ = 0;
  bool done_ = true;
};

}  // namespace emcom::env
