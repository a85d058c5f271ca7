#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "emcom/errors.hpp"
#include "emcom/nn.hpp"
#include "emcom/rng.hpp"

namespace emcom::nn {

// Discrete distribution over k >= 2 outcomes, parameterized by logits.
// log_prob and entropy go through log-sum-exp; probabilities are only
// materialized for sampling and KL.
template <class S>
struct Categorical {
  Vec<S> logits;

  explicit Categorical(Vec<S> l) : logits(std::move(l)) {
    if (logits.size() < 2)
      throw ConfigError("categorical needs at least 2 outcomes, got " +
                        std::to_string(logits.size()));
  }

  int size() const { return static_cast<int>(logits.size()); }

  S log_sum_exp() const {
    const S mx = logits.maxCoeff();
    return mx + std::log((logits.array() - mx).exp().sum());
  }

  Vec<S> probs() const {
    const S mx = logits.maxCoeff();
    Vec<S> p = (logits.array() - mx).exp();
    return p / p.sum();
  }

  S log_prob(int index) const {
    if (index < 0 || index >= size()) throw UsageError("categorical index out of range");
    return logits[index] - log_sum_exp();
  }

  S entropy() const {
    const S lse = log_sum_exp();
    const Vec<S> p = probs();
    return lse - p.dot(logits);
  }

  int sample(Rng& rng) const {
    const Vec<S> p = probs();
    const double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < size(); ++i) {
      acc += static_cast<double>(p[i]);
      if (u < acc) return i;
    }
    return size() - 1;
  }

  int argmax() const {
    int idx = 0;
    logits.maxCoeff(&idx);
    return idx;
  }
};

// KL(p || q) in nats. Terms with p_i = 0 contribute nothing; q_i = 0 under
// p_i > 0 yields +infinity rather than an error so max-scans never abort.
template <class S>
S kl_divergence(const Categorical<S>& p, const Categorical<S>& q) {
  if (p.size() != q.size()) throw UsageError("KL over mismatched supports");
  const Vec<S> pp = p.probs();
  const S lse_p = p.log_sum_exp();
  const S lse_q = q.log_sum_exp();
  S sum = 0;
  for (int i = 0; i < p.size(); ++i) {
    if (pp[i] <= S(0)) continue;
    const S lq = q.logits[i] - lse_q;
    if (!std::isfinite(static_cast<double>(lq)))
      return std::numeric_limits<S>::infinity();
    sum += pp[i] * ((p.logits[i] - lse_p) - lq);
  }
  return sum < S(0) ? S(0) : sum;  // clamp tiny negative round-off
}

}  // namespace emcom::nn
