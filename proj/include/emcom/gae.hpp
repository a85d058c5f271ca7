#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "emcom/errors.hpp"

namespace emcom::train {

// Generalized advantage estimation over one (env, agent) sequence.
//
//   delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t
//   A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
//
// Truncated steps are episode boundaries for the recursion but bootstrap
// with the critic's value of the cut-off state (step_bootstrap[t]) instead
// of zero. final_bootstrap is v(s_T) for a rollout that ends mid-episode.
// returns = advantages + values.
struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones,
                             std::span<const std::uint8_t> truncateds,
                             std::span<const double> step_bootstrap, double final_bootstrap,
                             double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || truncateds.size() != n ||
      step_bootstrap.size() != n)
    throw UsageError("gae: sequence length mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    double next_value;
    if (dones[i])
      next_value = truncateds[i] ? step_bootstrap[i] : 0.0;
    else
      next_value = (i + 1 < n) ? values[i + 1] : final_bootstrap;
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
  }
  return out;
}

}  // namespace emcom::train
