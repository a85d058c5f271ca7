#include "emcom/interpret.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "emcom/categorical.hpp"
#include "emcom/errors.hpp"
#include "emcom/rng.hpp"

namespace emcom::interpret {

namespace {

void check_actor_shape(const nn::ParamSet<double>& actor, const agent::HeadLayout& heads,
                       const agent::InputLayout& layout) {
  if (actor.input_dim() != layout.input_dim())
    throw ConfigError("actor expects " + std::to_string(actor.input_dim()) +
                      " inputs but the layout provides " + std::to_string(layout.input_dim()));
  if (actor.output_dim() != heads.output_dim())
    throw ConfigError("actor emits " + std::to_string(actor.output_dim()) +
                      " logits but the head layout expects " +
                      std::to_string(heads.output_dim()));
  if (heads.lang.vocab_size != layout.lang.vocab_size || heads.lang.seq_len != layout.lang.seq_len)
    throw ConfigError("head and input layouts disagree about the language channel");
}

// KL between the action distributions encoded by two logit rows.
double distribution_shift(const nn::Vec<double>& from, const nn::Vec<double>& to,
                          const agent::HeadLayout& heads, bool full_distribution) {
  double kl = nn::kl_divergence(
      nn::Categorical<double>(from.segment(heads.move_offset(), heads.num_move)),
      nn::Categorical<double>(to.segment(heads.move_offset(), heads.num_move)));
  if (full_distribution) {
    for (int t = 0; t < heads.lang.seq_len; ++t) {
      const int off = heads.token_offset(t);
      kl += nn::kl_divergence(
          nn::Categorical<double>(from.segment(off, heads.lang.vocab_size)),
          nn::Categorical<double>(to.segment(off, heads.lang.vocab_size)));
    }
  }
  return kl;
}

// Shared evaluation rollout: frozen policy, per-episode derived rng streams,
// one-step message delay. The pre-act hook sees each agent's input built
// from the true incoming message and may substitute the message block that
// is actually acted on (used for noise injection).
class EvalDriver {
public:
  using PreAct = std::function<void(int step, int agent, const nn::Vec<double>& true_input,
                                    std::optional<nn::Vec<double>>& acting_block)>;

  struct EpisodeStats {
    int length = 0;
    double team_reward = 0.0;
  };

  EvalDriver(const env::EnvFactory& factory, const nn::ParamSet<double>& actor,
             const agent::HeadLayout& heads, const agent::InputLayout& layout,
             std::uint64_t seed)
      : actor_(actor), heads_(heads), layout_(layout),
        act_root_(derive_seed(seed, 101)), env_root_(derive_seed(seed, 102)) {
    if (!factory) throw ConfigError("evaluation needs an environment factory");
    env_ = factory();
    check_actor_shape(actor, heads, layout);
    if (env_->obs_dim() != layout.env_dim)
      throw ConfigError("environment emits " + std::to_string(env_->obs_dim()) +
                        " features but the layout expects " + std::to_string(layout.env_dim));
    if (env_->num_actions() != heads.num_move)
      throw ConfigError("environment takes " + std::to_string(env_->num_actions()) +
                        " actions but the movement head has " + std::to_string(heads.num_move));
  }

  EpisodeStats run_episode(int ep, const PreAct& pre_act) {
    Rng act_rng(derive_seed(act_root_, static_cast<std::uint64_t>(ep)));
    auto res = env_->reset(derive_seed(env_root_, static_cast<std::uint64_t>(ep)));
    std::array<std::optional<agent::Message>, 2> incoming;
    EpisodeStats stats;
    for (int t = 0; !env_->terminal(); ++t) {
      std::array<agent::Message, 2> sent;
      std::array<int, 2> act{};
      for (int a = 0; a < 2; ++a) {
        nn::Vec<double> input = agent::encode_input<double>(
            res.obs[a], incoming[a] ? &*incoming[a] : nullptr, layout_.lang);
        if (pre_act) {
          std::optional<nn::Vec<double>> block;
          pre_act(t, a, input, block);
          if (block) {
            if (block->size() != layout_.lang.block_width())
              throw ConfigError("noise block width mismatch");
            input.segment(layout_.message_offset(), layout_.lang.block_width()) = *block;
          }
        }
        auto r = agent::policy_act(actor_, input, heads_, act_rng, agent::ActMode::Sample);
        act[a] = r.movement;
        sent[a] = std::move(r.message);
      }
      res = env_->step(act);
      stats.length += 1;
      stats.team_reward += res.rewards[0] + res.rewards[1];
      if (layout_.lang.enabled()) {
        incoming[0] = std::move(sent[1]);
        incoming[1] = std::move(sent[0]);
      }
    }
    return stats;
  }

private:
  const nn::ParamSet<double>& actor_;
  agent::HeadLayout heads_;
  agent::InputLayout layout_;
  std::unique_ptr<env::TwoAgentEnv> env_;
  std::uint64_t act_root_, env_root_;
};

}  // namespace

nn::Vec<double> saliency_map(const nn::ParamSet<double>& actor, const agent::HeadLayout& heads,
                             const nn::Vec<double>& input) {
  if (actor.output_dim() != heads.output_dim())
    throw ConfigError("actor output width does not match head layout");
  if (input.size() != actor.input_dim())
    throw ConfigError("saliency input width " + std::to_string(input.size()) +
                      " does not match the actor's " + std::to_string(actor.input_dim()));
  const nn::Mat<double> row = input.transpose();
  const auto acts = nn::forward(actor, row);
  nn::Vec<double> sal = nn::Vec<double>::Zero(input.size());
  nn::Mat<double> cotangent = nn::Mat<double>::Zero(1, actor.output_dim());
  nn::Mat<double> input_grad(1, input.size());
  for (int j = 0; j < heads.num_move; ++j) {
    cotangent.setZero();
    cotangent(0, heads.move_offset() + j) = 1.0;
    nn::backward<double>(actor, acts, cotangent, nullptr, &input_grad);
    sal = sal.cwiseMax(input_grad.row(0).transpose().cwiseAbs());
  }
  return sal;
}

double message_importance_rate(const std::vector<nn::Vec<double>>& series,
                               const agent::InputLayout& layout, int window) {
  if (!layout.lang.enabled())
    throw UsageError("message importance needs an enabled language channel");
  if (window <= 0) throw UsageError("importance window must be positive");
  if (static_cast<int>(series.size()) < window)
    throw UsageError("saliency series of " + std::to_string(series.size()) +
                     " samples is shorter than the " + std::to_string(window) +
                     "-sample window");
  long long important = 0;
  for (std::size_t i = series.size() - window; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.size() != layout.input_dim())
      throw ConfigError("saliency sample width does not match the input layout");
    const double lo = s.minCoeff(), hi = s.maxCoeff();
    if (hi - lo <= 0.0) continue;  // flat map normalises to zeros: nothing salient
    for (int k = layout.message_offset(); k < layout.input_dim(); ++k) {
      if ((s[k] - lo) / (hi - lo) > 0.8) {
        ++important;
        break;
      }
    }
  }
  return static_cast<double>(important) / window;
}

Sensitivity perturb_sensitivity(const nn::ParamSet<double>& actor,
                                const agent::HeadLayout& heads,
                                const agent::InputLayout& layout, const nn::Vec<double>& input,
                                bool full_distribution) {
  check_actor_shape(actor, heads, layout);
  if (!layout.lang.enabled())
    throw UsageError("perturbation analysis needs an enabled language channel");
  if (input.size() != layout.input_dim())
    throw ConfigError("input width does not match the layout");
  const long long count = agent::message_count(layout.lang);
  if (count > 256)
    throw UsageError("message space has " + std::to_string(count) +
                     " combinations; enumeration caps at 256, sample messages instead");

  const nn::Vec<double> base = nn::forward_vec(actor, input);
  nn::Mat<double> batch(count, input.size());
  nn::Vec<double> candidate = input;
  for (long long i = 0; i < count; ++i) {
    const agent::Message m = agent::message_from_index(static_cast<int>(i), layout.lang);
    agent::write_message_block(&m, layout.lang, candidate, layout.message_offset());
    batch.row(i) = candidate.transpose();
  }
  const nn::Mat<double> logits = nn::forward(actor, batch).output();

  Sensitivity best;
  best.max_kl = -1.0;
  for (long long i = 0; i < count; ++i) {
    const nn::Vec<double> row = logits.row(i).transpose();
    const double kl = distribution_shift(base, row, heads, full_distribution);
    if (kl > best.max_kl) {
      best.max_kl = kl;
      best.argmax = agent::message_from_index(static_cast<int>(i), layout.lang);
    }
  }
  return best;
}

const char* condition_name(NoiseCondition c) {
  switch (c) {
    case NoiseCondition::None: return "none";
    case NoiseCondition::BelowT: return "below_T";
    case NoiseCondition::AboveT: return "above_T";
    case NoiseCondition::Always: return "always";
  }
  return "?";
}

bool noise_applies(NoiseCondition c, double max_kl, double threshold) {
  switch (c) {
    case NoiseCondition::None: return false;
    case NoiseCondition::BelowT: return max_kl <= threshold;
    case NoiseCondition::AboveT: return max_kl > threshold;
    case NoiseCondition::Always: return true;
  }
  return false;
}

std::vector<ConditionResult> noise_ablation(const env::EnvFactory& factory,
                                            const nn::ParamSet<double>& actor,
                                            const agent::HeadLayout& heads,
                                            const agent::InputLayout& layout,
                                            const NoiseConfig& cfg) {
  if (!layout.lang.enabled())
    throw UsageError("noise ablation needs an enabled language channel");
  if (cfg.episodes < 1) throw UsageError("noise ablation needs at least one episode");
  if (cfg.threshold < 0) throw UsageError("noise threshold must be non-negative");

  const std::uint64_t noise_root = derive_seed(cfg.seed, 103);
  std::vector<ConditionResult> results;
  for (NoiseCondition c : {NoiseCondition::None, NoiseCondition::BelowT, NoiseCondition::AboveT,
                           NoiseCondition::Always}) {
    ConditionResult res;
    res.condition = c;
    res.episodes = cfg.episodes;
    EvalDriver driver(factory, actor, heads, layout, cfg.seed);
    double len_sum = 0, rew_sum = 0;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
      const auto pre = [&](int t, int a, const nn::Vec<double>& true_input,
                           std::optional<nn::Vec<double>>& block) {
        res.steps += 1;
        if (c == NoiseCondition::None) return;
        bool apply = true;
        if (c == NoiseCondition::BelowT || c == NoiseCondition::AboveT) {
          // The gate always looks at the real incoming message.
          const double kl =
              perturb_sensitivity(actor, heads, layout, true_input, cfg.full_distribution_kl)
                  .max_kl;
          apply = noise_applies(c, kl, cfg.threshold);
        }
        if (!apply) return;
        res.replaced += 1;
        // Noise draws are keyed by (episode, step, agent) so every condition
        // that replaces this particular message replaces it identically.
        Rng nrng(derive_seed(derive_seed(derive_seed(noise_root, ep), t), a));
        nn::Vec<double> b = nn::Vec<double>::Zero(layout.lang.block_width());
        if (cfg.uniform_real_noise) {
          for (int i = 0; i < b.size(); ++i) b[i] = nrng.uniform();
        } else {
          agent::Message m;
          for (int s = 0; s < layout.lang.seq_len; ++s)
            m.tokens.push_back(nrng.uniform_int(layout.lang.vocab_size));
          agent::write_message_block(&m, layout.lang, b, 0);
        }
        block = std::move(b);
      };
      const auto stats = driver.run_episode(ep, pre);
      len_sum += stats.length;
      rew_sum += stats.team_reward;
    }
    res.mean_length = len_sum / cfg.episodes;
    res.mean_reward = rew_sum / cfg.episodes;
    results.push_back(res);
  }
  return results;
}

EvalResult evaluate_policy(const env::EnvFactory& factory, const nn::ParamSet<double>& actor,
                           const agent::HeadLayout& heads, const agent::InputLayout& layout,
                           int episodes, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("evaluation needs at least one episode");
  EvalDriver driver(factory, actor, heads, layout, seed);
  EvalResult res;
  res.episodes = episodes;
  for (int ep = 0; ep < episodes; ++ep) {
    const auto stats = driver.run_episode(ep, nullptr);
    res.mean_length += stats.length;
    res.mean_reward += stats.team_reward;
    res.steps += stats.length;
  }
  res.mean_length /= episodes;
  res.mean_reward /= episodes;
  return res;
}

std::vector<TraceStep> sensitivity_trace(const env::EnvFactory& factory,
                                         const nn::ParamSet<double>& actor,
                                         const agent::HeadLayout& heads,
                                         const agent::InputLayout& layout, int episodes,
                                         double threshold, bool full_distribution,
                                         std::uint64_t seed) {
  if (!layout.lang.enabled())
    throw UsageError("sensitivity traces need an enabled language channel");
  if (episodes < 1) throw UsageError("sensitivity trace needs at least one episode");
  std::vector<TraceStep> trace;
  EvalDriver driver(factory, actor, heads, layout, seed);
  for (int ep = 0; ep < episodes; ++ep) {
    driver.run_episode(ep, [&](int t, int a, const nn::Vec<double>& true_input,
                               std::optional<nn::Vec<double>>&) {
      const auto s = perturb_sensitivity(actor, heads, layout, true_input, full_distribution);
      trace.push_back({ep, t, a, s.max_kl, s.max_kl > threshold, s.argmax});
    });
  }
  return trace;
}

std::vector<SaliencySample> saliency_rollout(const env::EnvFactory& factory,
                                             const nn::ParamSet<double>& actor,
                                             const agent::HeadLayout& heads,
                                             const agent::InputLayout& layout,
                                             long long agent_samples, std::uint64_t seed) {
  if (agent_samples < 1) throw UsageError("saliency rollout needs a positive sample count");
  std::vector<SaliencySample> out;
  out.reserve(agent_samples);
  EvalDriver driver(factory, actor, heads, layout, seed);
  for (int ep = 0; static_cast<long long>(out.size()) < agent_samples; ++ep) {
    driver.run_episode(ep, [&](int t, int a, const nn::Vec<double>& true_input,
                               std::optional<nn::Vec<double>>&) {
      if (static_cast<long long>(out.size()) >= agent_samples) return;
      out.push_back({ep, t, a, saliency_map(actor, heads, true_input)});
    });
  }
  return out;
}

}  // namespace emcom::interpret
