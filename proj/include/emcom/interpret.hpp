#pragma once

// Analysis tools for trained (or hand-built) policies: input saliency,
// message perturbation sensitivity, and selective channel-noise ablations.
// Everything here runs in double precision on a frozen policy; nothing
// mutates the network.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emcom/agent.hpp"
#include "emcom/env.hpp"
#include "emcom/language.hpp"
#include "emcom/nn.hpp"

namespace emcom::interpret {

// |d logit / d input| for every input feature, maximised over the movement
// logits only; language-head outputs are deliberately excluded so the map
// reflects what drives the physical action.
nn::Vec<double> saliency_map(const nn::ParamSet<double>& actor, const agent::HeadLayout& heads,
                             const nn::Vec<double>& input);

// Fraction of the trailing `window` saliency samples in which at least one
// message feature is salient: each sample is min-max normalised to [0, 1]
// and counts as message-important when any message-block entry exceeds 0.8.
// A flat sample normalises to all zeros. Series shorter than the window are
// refused.
double message_importance_rate(const std::vector<nn::Vec<double>>& series,
                               const agent::InputLayout& layout, int window = 10000);

struct Sensitivity {
  double max_kl = 0.0;
  agent::Message argmax;  // the counterfactual message that maximises the shift
};

// Substitute every possible message into the input's message block and
// measure the largest KL(original action dist || perturbed action dist).
// Movement head only by default; full_distribution adds the token heads.
// Vocabularies with more than 256 message combinations are refused.
Sensitivity perturb_sensitivity(const nn::ParamSet<double>& actor,
                                const agent::HeadLayout& heads,
                                const agent::InputLayout& layout, const nn::Vec<double>& input,
                                bool full_distribution = false);

enum class NoiseCondition { None, BelowT, AboveT, Always };

const char* condition_name(NoiseCondition c);

// Whether a given condition replaces the incoming message at a step whose
// pre-noise sensitivity is `max_kl`. BelowT and AboveT partition the step
// space exactly.
bool noise_applies(NoiseCondition c, double max_kl, double threshold);

struct NoiseConfig {
  double threshold = 0.02;
  int episodes = 50;
  bool uniform_real_noise = false;   // dense uniform block instead of a valid one-hot
  bool full_distribution_kl = false; // gate on the full factorised distribution
  std::uint64_t seed = 1;
};

struct ConditionResult {
  NoiseCondition condition = NoiseCondition::None;
  int episodes = 0;
  double mean_length = 0.0;
  double mean_reward = 0.0;  // team return per episode
  long long steps = 0;
  long long replaced = 0;  // agent-steps whose incoming message was noised
};

// Run `episodes` evaluation episodes under each of the four conditions with
// a frozen policy. Episode seeds, action sampling and noise draws are all
// derived per (episode, step, agent), so conditions that replace a message
// at the same point draw identical noise and stay comparable pairwise.
std::vector<ConditionResult> noise_ablation(const env::EnvFactory& factory,
                                            const nn::ParamSet<double>& actor,
                                            const agent::HeadLayout& heads,
                                            const agent::InputLayout& layout,
                                            const NoiseConfig& cfg);

struct EvalResult {
  int episodes = 0;
  double mean_length = 0.0;
  double mean_reward = 0.0;  // team return per episode
  long long steps = 0;
};

// Plain evaluation of a frozen policy with the channel left untouched; also
// works with the channel disabled.
EvalResult evaluate_policy(const env::EnvFactory& factory, const nn::ParamSet<double>& actor,
                           const agent::HeadLayout& heads, const agent::InputLayout& layout,
                           int episodes, std::uint64_t seed);

struct TraceStep {
  int episode = 0;
  int step = 0;
  int agent = 0;
  double max_kl = 0.0;
  bool above = false;
  agent::Message argmax;
};

// Per-step sensitivity of every agent along noise-free rollouts.
std::vector<TraceStep> sensitivity_trace(const env::EnvFactory& factory,
                                         const nn::ParamSet<double>& actor,
                                         const agent::HeadLayout& heads,
                                         const agent::InputLayout& layout, int episodes,
                                         double threshold, bool full_distribution,
                                         std::uint64_t seed);

struct SaliencySample {
  int episode = 0;
  int step = 0;
  int agent = 0;
  nn::Vec<double> saliency;
};

// Saliency of both agents' inputs along rollouts until `agent_samples`
// samples are collected (two per environment step).
std::vector<SaliencySample> saliency_rollout(const env::EnvFactory& factory,
                                             const nn::ParamSet<double>& actor,
                                             const agent::HeadLayout& heads,
                                             const agent::InputLayout& layout,
                                             long long agent_samples, std::uint64_t seed);

}  // namespace emcom::interpret
