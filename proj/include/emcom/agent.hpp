#pragma once

#include <array>
#include <vector>

#include "emcom/categorical.hpp"
#include "emcom/language.hpp"
#include "emcom/nn.hpp"
#include "emcom/rng.hpp"

namespace emcom::agent {

// Actor head layout within the output row: movement logits first, then one
// block of vocab_size logits per token slot.
struct HeadLayout {
  int num_move = 0;
  LanguageSpec lang;

  int output_dim() const { return num_move + lang.block_width(); }
  int move_offset() const { return 0; }
  int token_offset(int slot) const { return num_move + slot * lang.vocab_size; }
};

template <class S>
struct PolicyOutput {
  nn::Categorical<S> movement;
  std::vector<nn::Categorical<S>> tokens;
  S joint_log_prob = 0;
  S entropy = 0;
};

enum class ActMode { Sample, Argmax };

template <class S>
struct ActResult {
  int movement = 0;
  Message message;
  PolicyOutput<S> output;
};

template <class S>
nn::Categorical<S> slice_head(const nn::Vec<S>& logits, int offset, int size) {
  return nn::Categorical<S>(logits.segment(offset, size));
}

// One forward pass produces every head; sampling draws movement first, then
// tokens in slot order (fixed rng consumption order).
template <class S>
ActResult<S> policy_act(const nn::ParamSet<S>& actor, const nn::Vec<S>& input,
                        const HeadLayout& heads, Rng& rng, ActMode mode) {
  const nn::Vec<S> logits = nn::forward_vec(actor, input);
  if (logits.size() != heads.output_dim())
    throw ConfigError("actor output width does not match head layout");

  nn::Categorical<S> move = slice_head(logits, heads.move_offset(), heads.num_move);
  ActResult<S> res{0, {}, PolicyOutput<S>{move, {}, S(0), S(0)}};
  res.movement = (mode == ActMode::Sample) ? move.sample(rng) : move.argmax();
  res.output.joint_log_prob = move.log_prob(res.movement);
  res.output.entropy = move.entropy();

  res.message.tokens.reserve(heads.lang.seq_len);
  for (int t = 0; t < heads.lang.seq_len; ++t) {
    nn::Categorical<S> head = slice_head(logits, heads.token_offset(t), heads.lang.vocab_size);
    const int tok = (mode == ActMode::Sample) ? head.sample(rng) : head.argmax();
    res.message.tokens.push_back(tok);
    res.output.joint_log_prob += head.log_prob(tok);
    res.output.entropy += head.entropy();
    res.output.tokens.push_back(std::move(head));
  }
  return res;
}

// Centralized critic: both agents' inputs concatenated (agent 0 first), one
// value estimate per agent from a two-unit output head.
template <class S>
nn::Vec<S> critic_values(const nn::ParamSet<S>& critic, const nn::Vec<S>& joint_input) {
  if (joint_input.size() != critic.layers.front().w.cols())
    throw ConfigError("critic input width mismatch");
  return nn::forward_vec(critic, joint_input);
}

struct AgentNetConfig {
  std::vector<int> hidden{128, 64};
  bool critic_sees_messages = true;
  double actor_head_scale = 0.01;  // small policy-head init
};

template <class S>
struct AgentNets {
  nn::ParamSet<S> actor;
  nn::ParamSet<S> critic;
  HeadLayout heads;
  InputLayout layout;
  int critic_input_dim = 0;
};

template <class S>
AgentNets<S> make_agent_nets(const InputLayout& layout, int num_move,
                             const AgentNetConfig& cfg, Rng& rng) {
  AgentNets<S> nets;
  nets.layout = layout;
  nets.heads = HeadLayout{num_move, layout.lang};

  std::vector<int> actor_sizes{layout.input_dim()};
  actor_sizes.insert(actor_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  actor_sizes.push_back(nets.heads.output_dim());
  nets.actor = nn::uniform_fanin_init<S>(actor_sizes, rng, cfg.actor_head_scale);

  const int per_agent = cfg.critic_sees_messages ? layout.input_dim() : layout.env_dim;
  nets.critic_input_dim = 2 * per_agent;
  std::vector<int> critic_sizes{nets.critic_input_dim};
  critic_sizes.insert(critic_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  critic_sizes.push_back(2);
  nets.critic = nn::uniform_fanin_init<S>(critic_sizes, rng, 1.0);
  return nets;
}

// Builds the critic input from both agents' actor inputs, dropping the
// message blocks when the critic is configured not to see them.
template <class S>
nn::Vec<S> make_critic_input(const nn::Vec<S>& input0, const nn::Vec<S>& input1,
                             const InputLayout& layout, bool critic_sees_messages) {
  const int per_agent = critic_sees_messages ? layout.input_dim() : layout.env_dim;
  nn::Vec<S> joint(2 * per_agent);
  joint.segment(0, per_agent) = input0.segment(0, per_agent);
  joint.segment(per_agent, per_agent) = input1.segment(0, per_agent);
  return joint;
}

}  // namespace emcom::agent
