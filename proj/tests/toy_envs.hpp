#pragma once

// Small deterministic environments and hand-built policies used by the
// trainer, interpretability, and acceptance tests. They follow the same
// TwoAgentEnv contract as the real environments but have closed-form
// optimal behaviour, which makes learning progress and analysis results
// checkable against exact references.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "emcom/agent.hpp"
#include "emcom/bytes.hpp"
#include "emcom/env.hpp"
#include "emcom/errors.hpp"
#include "emcom/language.hpp"
#include "emcom/nn.hpp"
#include "emcom/rng.hpp"

namespace toy {

using emcom::ByteReader;
using emcom::ByteWriter;
using emcom::Rng;
using emcom::UsageError;

// Two-armed bandit: every episode is a single step, arm 0 pays +1 to the
// agent that pulled it, arm 1 pays nothing. Observation is a constant.
class BanditEnv : public emcom::env::TwoAgentEnv {
public:
  emcom::env::StepResult reset(std::uint64_t seed) override {
    rng_.seed(seed);
    return begin_episode();
  }

  emcom::env::StepResult begin_episode() override {
    done_ = false;
    emcom::env::StepResult r;
    r.obs = {make_obs(), make_obs()};
    return r;
  }

  emcom::env::StepResult step(const std::array<int, 2>& actions) override {
    if (done_) throw UsageError("step on finished bandit episode");
    for (int a : actions)
      if (a < 0 || a >= num_actions()) throw UsageError("bandit action out of range");
    emcom::env::StepResult r;
    r.rewards = {actions[0] == 0 ? 1.0 : 0.0, actions[1] == 0 ? 1.0 : 0.0};
    r.done = true;
    done_ = true;
    r.obs = {make_obs(), make_obs()};
    return r;
  }

  int obs_dim() const override { return 1; }
  int num_actions() const override { return 2; }
  std::string name() const override { return "bandit"; }
  bool terminal() const override { return done_; }

  std::string serialize_state() const override {
    ByteWriter w;
    w.u8(done_ ? 1 : 0);
    w.str(rng_.state());
    return w.take();
  }

  void restore_state(const std::string& blob) override {
    ByteReader r(blob);
    done_ = r.u8() != 0;
    rng_.set_state(r.str());
  }

private:
  std::vector<double> make_obs() const { return {1.0}; }

  Rng rng_;
  bool done_ = true;
};

// Each agent independently chases its own target on the unit square. A step
// costs -0.01; touching the target (within reach_radius) pays +1 and the
// target respawns at least min_respawn_dist away. Episodes run for a fixed
// number of steps and end by truncation only. The optimal behaviour is
// greedy axis-wise pursuit, provided by greedy_action below.
class MoveToTargetEnv : public emcom::env::TwoAgentEnv {
public:
  static constexpr double kSpeed = 0.05;
  static constexpr double kReachRadius = 0.05;
  static constexpr double kMinRespawnDist = 0.15;
  static constexpr double kStepCost = -0.01;
  static constexpr int kEpisodeSteps = 128;

  emcom::env::StepResult reset(std::uint64_t seed) override {
    rng_.seed(seed);
    return begin_episode();
  }

  emcom::env::StepResult begin_episode() override {
    done_ = false;
    step_count_ = 0;
    for (int a = 0; a < 2; ++a) {
      pos_[a] = {rng_.uniform(), rng_.uniform()};
      respawn_target(a);
    }
    emcom::env::StepResult r;
    r.obs = {make_obs(0), make_obs(1)};
    return r;
  }

  emcom::env::StepResult step(const std::array<int, 2>& actions) override {
    if (done_) throw UsageError("step on finished move-to-target episode");
    emcom::env::StepResult r;
    for (int a = 0; a < 2; ++a) {
      apply_move(a, actions[a]);
      r.rewards[a] = kStepCost;
      const double dx = target_[a][0] - pos_[a][0];
      const double dy = target_[a][1] - pos_[a][1];
      if (std::sqrt(dx * dx + dy * dy) <= kReachRadius) {
        r.rewards[a] += 1.0;
        respawn_target(a);
      }
    }
    ++step_count_;
    if (step_count_ >= kEpisodeSteps) {
      done_ = true;
      r.done = true;
      r.truncated = true;
    }
    r.obs = {make_obs(0), make_obs(1)};
    return r;
  }

  int obs_dim() const override { return 6; }
  int num_actions() const override { return 5; }  // up, down, left, right, stay
  std::string name() const override { return "move-to-target"; }
  bool terminal() const override { return done_; }

  std::string serialize_state() const override {
    ByteWriter w;
    for (int a = 0; a < 2; ++a) {
      w.f64(pos_[a][0]);
      w.f64(pos_[a][1]);
      w.f64(target_[a][0]);
      w.f64(target_[a][1]);
    }
    w.i32(step_count_);
    w.u8(done_ ? 1 : 0);
    w.str(rng_.state());
    return w.take();
  }

  void restore_state(const std::string& blob) override {
    ByteReader r(blob);
    for (int a = 0; a < 2; ++a) {
      pos_[a][0] = r.f64();
      pos_[a][1] = r.f64();
      target_[a][0] = r.f64();
      target_[a][1] = r.f64();
    }
    step_count_ = r.i32();
    done_ = r.u8() != 0;
    rng_.set_state(r.str());
  }

  // Move along the axis with the larger remaining distance; reference
  // behaviour used as the performance yardstick.
  static int greedy_action(const std::vector<double>& obs) {
    const double dx = obs[2], dy = obs[3];
    if (std::abs(dx) < 1e-12 && std::abs(dy) < 1e-12) return 4;
    if (std::abs(dy) > std::abs(dx)) return dy > 0 ? 0 : 1;
    return dx > 0 ? 3 : 2;
  }

private:
  std::vector<double> make_obs(int a) const {
    return {pos_[a][0],
            pos_[a][1],
            target_[a][0] - pos_[a][0],
            target_[a][1] - pos_[a][1],
            a == 0 ? 1.0 : 0.0,
            a == 1 ? 1.0 : 0.0};
  }

  void apply_move(int a, int action) {
    switch (action) {
      case 0: pos_[a][1] += kSpeed; break;
      case 1: pos_[a][1] -= kSpeed; break;
      case 2: pos_[a][0] -= kSpeed; break;
      case 3: pos_[a][0] += kSpeed; break;
      case 4: break;
      default: throw UsageError("move-to-target action out of range");
    }
    pos_[a][0] = std::clamp(pos_[a][0], 0.0, 1.0);
    pos_[a][1] = std::clamp(pos_[a][1], 0.0, 1.0);
  }

  void respawn_target(int a) {
    for (int tries = 0; tries < 10000; ++tries) {
      const double x = rng_.uniform(), y = rng_.uniform();
      const double dx = x - pos_[a][0], dy = y - pos_[a][1];
      if (std::sqrt(dx * dx + dy * dy) >= kMinRespawnDist) {
        target_[a] = {x, y};
        return;
      }
    }
    throw UsageError("could not place move-to-target goal");
  }

  Rng rng_;
  std::array<std::array<double, 2>, 2> pos_{};
  std::array<std::array<double, 2>, 2> target_{};
  int step_count_ = 0;
  bool done_ = true;
};

// Relay task: agent 1 sees a fresh cue in {0..V-1} every step; on every
// test step (multiples of test_interval) agent 0 must take the movement
// action matching the cue agent 1 saw one step earlier. Passing pays +1 to
// both, failing ends the episode at -1 for both. The only channel through
// which agent 0 can learn the cue is the message its partner sent, so
// episode length directly measures whether the channel carries the cue.
//
// Observation layout: [test_flag, cue one-hot (V), id0, id1]. Agent 0 sees
// the flag and a zero cue block; agent 1 sees the cue and a zero flag.
class TokenRelayEnv : public emcom::env::TwoAgentEnv {
public:
  explicit TokenRelayEnv(int vocab = 4, int test_interval = 4, int max_steps = 64)
      : vocab_(vocab), interval_(test_interval), max_steps_(max_steps) {
    if (vocab < 2) throw UsageError("token relay needs at least two cues");
    if (test_interval < 2) throw UsageError("test interval must leave a relay step");
  }

  emcom::env::StepResult reset(std::uint64_t seed) override {
    rng_.seed(seed);
    return begin_episode();
  }

  emcom::env::StepResult begin_episode() override {
    done_ = false;
    step_count_ = 0;
    prev_cue_ = 0;
    cue_ = rng_.uniform_int(vocab_);
    emcom::env::StepResult r;
    r.obs = {make_obs(0), make_obs(1)};
    return r;
  }

  emcom::env::StepResult step(const std::array<int, 2>& actions) override {
    if (done_) throw UsageError("step on finished relay episode");
    for (int a : actions)
      if (a < 0 || a >= num_actions()) throw UsageError("relay action out of range");
    emcom::env::StepResult r;
    const int t = step_count_;
    if (t > 0 && t % interval_ == 0) {
      if (actions[0] == prev_cue_) {
        r.rewards = {1.0, 1.0};
      } else {
        r.rewards = {-1.0, -1.0};
        r.done = true;
        done_ = true;
      }
    }
    prev_cue_ = cue_;
    cue_ = rng_.uniform_int(vocab_);
    ++step_count_;
    if (!done_ && step_count_ >= max_steps_) {
      done_ = true;
      r.done = true;
      r.truncated = true;
    }
    r.obs = {make_obs(0), make_obs(1)};
    return r;
  }

  int obs_dim() const override { return vocab_ + 3; }
  int num_actions() const override { return vocab_; }
  std::string name() const override { return "token-relay"; }
  bool terminal() const override { return done_; }

  std::string serialize_state() const override {
    ByteWriter w;
    w.i32(cue_);
    w.i32(prev_cue_);
    w.i32(step_count_);
    w.u8(done_ ? 1 : 0);
    w.str(rng_.state());
    return w.take();
  }

  void restore_state(const std::string& blob) override {
    ByteReader r(blob);
    cue_ = r.i32();
    prev_cue_ = r.i32();
    step_count_ = r.i32();
    done_ = r.u8() != 0;
    rng_.set_state(r.str());
  }

  int current_cue() const { return cue_; }
  int test_interval() const { return interval_; }
  int max_steps() const { return max_steps_; }

private:
  std::vector<double> make_obs(int a) const {
    std::vector<double> o(static_cast<std::size_t>(vocab_) + 3, 0.0);
    if (a == 0) {
      o[0] = (step_count_ > 0 && step_count_ % interval_ == 0) ? 1.0 : 0.0;
    } else {
      o[1 + cue_] = 1.0;
    }
    o[static_cast<std::size_t>(vocab_) + 1 + a] = 1.0;
    return o;
  }

  int vocab_, interval_, max_steps_;
  Rng rng_;
  int cue_ = 0, prev_cue_ = 0, step_count_ = 0;
  bool done_ = true;
};

inline emcom::agent::LanguageSpec relay_language(int vocab) {
  emcom::agent::LanguageSpec lang;
  lang.vocab_size = vocab;
  lang.seq_len = 1;
  return lang;
}

inline emcom::agent::InputLayout relay_layout(int vocab) {
  return emcom::agent::InputLayout{vocab + 3, relay_language(vocab)};
}

inline emcom::agent::HeadLayout relay_heads(int vocab) {
  return emcom::agent::HeadLayout{vocab, relay_language(vocab)};
}

// Hand-built relay actor with saturated tanh gates. On test steps agent 0's
// movement head copies the incoming message token; off test steps movement
// logits are flat. The token head always copies the cue block, so agent 1
// emits its cue every step. Shared by both agents; each block only "fires"
// for the agent whose observation feeds it.
inline emcom::nn::ParamSet<double> relay_policy(int vocab) {
  const auto layout = relay_layout(vocab);
  const int in = layout.input_dim();
  const int hidden = 2 * vocab;
  const int out = 2 * vocab;
  const double gate = 50.0, amp = 20.0;

  emcom::nn::ParamSet<double> p;
  p.activation = emcom::nn::Activation::Tanh;
  p.layers.resize(2);
  auto& l0 = p.layers[0];
  l0.w = emcom::nn::Mat<double>::Zero(hidden, in);
  l0.b = emcom::nn::Vec<double>::Zero(hidden);
  auto& l1 = p.layers[1];
  l1.w = emcom::nn::Mat<double>::Zero(out, hidden);
  l1.b = emcom::nn::Vec<double>::Zero(out);

  for (int m = 0; m < vocab; ++m) {
    // Gate m: open only when test_flag and message token m are both set.
    l0.w(m, 0) = gate;
    l0.w(m, layout.message_offset() + m) = gate;
    l0.b(m) = -1.5 * gate;
    l1.w(m, m) = amp;
    // Gate vocab+m: open when cue m is set; feeds token logit m.
    l0.w(vocab + m, 1 + m) = gate;
    l0.b(vocab + m) = -0.5 * gate;
    l1.w(vocab + m, vocab + m) = amp;
  }
  return p;
}

// Single linear layer whose movement logits read only the incoming message
// block (weight eps) and whose token logits copy the cue. Every input state
// is message-sensitive, and message features are the only ones with
// non-zero saliency.
inline emcom::nn::ParamSet<double> token_copy_policy(int vocab, double eps = 0.1) {
  const auto layout = relay_layout(vocab);
  emcom::nn::ParamSet<double> p;
  p.activation = emcom::nn::Activation::Tanh;
  p.layers.resize(1);
  auto& l = p.layers[0];
  l.w = emcom::nn::Mat<double>::Zero(2 * vocab, layout.input_dim());
  l.b = emcom::nn::Vec<double>::Zero(2 * vocab);
  for (int m = 0; m < vocab; ++m) {
    l.w(m, layout.message_offset() + m) = eps;
    l.w(vocab + m, 1 + m) = 1.0;
  }
  return p;
}

// Same shape but with every message column zeroed: movement follows the
// cue/flag features only, so messages have no influence at all.
inline emcom::nn::ParamSet<double> message_ignoring_policy(int vocab) {
  const auto layout = relay_layout(vocab);
  emcom::nn::ParamSet<double> p;
  p.activation = emcom::nn::Activation::Tanh;
  p.layers.resize(1);
  auto& l = p.layers[0];
  l.w = emcom::nn::Mat<double>::Zero(2 * vocab, layout.input_dim());
  l.b = emcom::nn::Vec<double>::Zero(2 * vocab);
  for (int m = 0; m < vocab; ++m) {
    l.w(m, 0) = 0.3;
    l.w(m, 1 + m) = 0.5;
    l.w(vocab + m, 1 + m) = 1.0;
  }
  return p;
}

}  // namespace toy
