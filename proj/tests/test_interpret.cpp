#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "doctest.h"
#include "emcom/interpret.hpp"
#include "emcom/language.hpp"
#include "emcom/nn.hpp"
#include "net_helpers.hpp"
#include "reference_oracles.hpp"
#include "toy_envs.hpp"

using namespace emcom;
using interpret::NoiseCondition;
using nn::Mat;
using nn::Vec;

namespace {

// Brute-force reference for the perturbation sweep, on the oracle forward
// pass: substitute each message, softmax the movement slice, take the KL.
std::pair<double, int> brute_force_sensitivity(const nn::ParamSet<double>& actor,
                                               const agent::HeadLayout& heads,
                                               const agent::InputLayout& layout,
                                               const Vec<double>& input) {
  const auto ref = testutil::to_ref(actor);
  std::vector<double> x(input.data(), input.data() + input.size());
  const auto base_out = oracle::ref_forward(ref, x);
  const std::vector<double> base_move(base_out.begin(), base_out.begin() + heads.num_move);
  const auto p = oracle::ref_softmax(base_move);

  double best = -1.0;
  int best_index = -1;
  const int count = static_cast<int>(agent::message_count(layout.lang));
  for (int i = 0; i < count; ++i) {
    const auto msg = agent::message_from_index(i, layout.lang);
    std::vector<double> cand = x;
    for (int k = 0; k < layout.lang.block_width(); ++k) cand[layout.message_offset() + k] = 0.0;
    for (int t = 0; t < layout.lang.seq_len; ++t)
      cand[layout.message_offset() + t * layout.lang.vocab_size + msg.tokens[t]] = 1.0;
    const auto out = oracle::ref_forward(ref, cand);
    const std::vector<double> move(out.begin(), out.begin() + heads.num_move);
    const double kl = oracle::ref_kl(p, oracle::ref_softmax(move));
    if (kl > best) {
      best = kl;
      best_index = i;
    }
  }
  return {best, best_index};
}

}  // namespace

TEST_CASE("saliency of a linear policy is the absolute weight matrix") {
  agent::LanguageSpec lang{2, 1};
  agent::HeadLayout heads{2, lang};
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Zero(4, 3), Vec<double>::Zero(4)});
  p.layers[0].w(0, 0) = 0.7;
  p.layers[0].w(0, 1) = -0.2;
  p.layers[0].w(1, 1) = 0.5;
  p.layers[0].w(1, 2) = -1.5;
  // Token-head rows carry huge weights that must not leak into the map.
  p.layers[0].w(2, 0) = 100.0;
  p.layers[0].w(3, 2) = -100.0;

  Vec<double> x(3);
  x << 0.3, -0.8, 0.1;
  const Vec<double> s = interpret::saliency_map(p, heads, x);
  CHECK(s[0] == 0.7);
  CHECK(s[1] == 0.5);
  CHECK(s[2] == 1.5);
}

TEST_CASE("saliency matches finite differences on random deep nets") {
  Rng rng(404);
  agent::LanguageSpec lang{3, 1};
  agent::HeadLayout heads{4, lang};
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testutil::random_net({6, 10, 8, heads.output_dim()}, rng);
    Vec<double> x(6);
    for (int i = 0; i < 6; ++i) x[i] = rng.uniform_range(-1.5, 1.5);
    const Vec<double> s = interpret::saliency_map(p, heads, x);

    const auto ref = testutil::to_ref(p);
    std::vector<double> xv(x.data(), x.data() + x.size());
    std::vector<double> expected(6, 0.0);
    for (int j = 0; j < heads.num_move; ++j) {
      std::vector<double> g(heads.output_dim(), 0.0);
      g[j] = 1.0;
      const auto fd = oracle::finite_diff_grads(ref, xv, g);
      for (int i = 0; i < 6; ++i) expected[i] = std::max(expected[i], std::abs(fd.input[i]));
    }
    for (int i = 0; i < 6; ++i) {
      const double scale = std::max({std::abs(s[i]), std::abs(expected[i]), 1e-6});
      CHECK(std::abs(s[i] - expected[i]) / scale < 1e-3);
    }
  }
}

TEST_CASE("saliency rejects mismatched widths") {
  agent::LanguageSpec lang{2, 1};
  agent::HeadLayout heads{2, lang};
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Zero(4, 3), Vec<double>::Zero(4)});
  CHECK_THROWS_AS(interpret::saliency_map(p, heads, Vec<double>::Zero(5)), ConfigError);
  agent::HeadLayout wrong{3, lang};
  CHECK_THROWS_AS(interpret::saliency_map(p, wrong, Vec<double>::Zero(3)), ConfigError);
}

TEST_CASE("importance rate normalises each sample and thresholds at 0.8") {
  agent::InputLayout layout{1, agent::LanguageSpec{2, 1}};  // features: env, msg, msg
  auto vec = [](double a, double b, double c) {
    Vec<double> v(3);
    v << a, b, c;
    return v;
  };
  std::vector<Vec<double>> series{
      vec(0.2, 0.8, 1.0),    // msg features normalise to 0.75 and 1.0 -> important
      vec(1.0, 0.2, 0.2),    // msg features normalise to 0 -> not
      vec(0.5, 0.5, 0.5),    // flat map -> all zeros -> not
      vec(0.0, 0.8, 1.0),    // 0.8 is not strictly above the threshold, 1.0 is -> important
      vec(10.0, 8.2, 0.0),   // 0.82 -> important
      vec(10.0, 8.0, 0.0),   // exactly 0.8 -> not
  };
  CHECK(interpret::message_importance_rate(series, layout, 6) == doctest::Approx(3.0 / 6.0));

  // Trailing-window semantics: the first entry drops out of a window of 5.
  CHECK(interpret::message_importance_rate(series, layout, 5) == doctest::Approx(2.0 / 5.0));
}

TEST_CASE("importance rate refuses short series and disabled channels") {
  agent::InputLayout layout{1, agent::LanguageSpec{2, 1}};
  std::vector<Vec<double>> series(4, Vec<double>::Zero(3));
  CHECK_THROWS_AS(interpret::message_importance_rate(series, layout, 5), UsageError);
  CHECK_THROWS_AS(interpret::message_importance_rate(series, layout, 0), UsageError);
  agent::InputLayout no_lang{3, agent::LanguageSpec{0, 0}};
  CHECK_THROWS_AS(interpret::message_importance_rate(series, no_lang, 4), UsageError);
}

TEST_CASE("perturbation sweep finds the strongest counterfactual message") {
  const int V = 3;
  const auto actor = toy::relay_policy(V);
  const auto heads = toy::relay_heads(V);
  const auto layout = toy::relay_layout(V);

  // Agent 0 on a test step, hearing token 1: movement copies the message, so
  // swapping it moves nearly all probability mass.
  std::vector<double> obs(V + 3, 0.0);
  obs[0] = 1.0;                       // test flag
  obs[V + 1] = 1.0;                   // id0
  agent::Message heard{{1}};
  const Vec<double> input = agent::encode_input<double>(obs, &heard, layout.lang);
  const auto s = interpret::perturb_sensitivity(actor, heads, layout, input);
  CHECK(s.max_kl > 10.0);
  CHECK(s.argmax.tokens.size() == 1);
  CHECK(s.argmax.tokens[0] != 1);

  // Off the test step the movement head is exactly flat in the message.
  obs[0] = 0.0;
  const Vec<double> off = agent::encode_input<double>(obs, &heard, layout.lang);
  CHECK(interpret::perturb_sensitivity(actor, heads, layout, off).max_kl == 0.0);
}

TEST_CASE("message-ignoring policies have exactly zero sensitivity") {
  const int V = 4;
  const auto actor = toy::message_ignoring_policy(V);
  const auto layout = toy::relay_layout(V);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Vec<double> input(layout.input_dim());
    for (int i = 0; i < input.size(); ++i) input[i] = rng.uniform_range(-1.0, 1.0);
    CHECK(interpret::perturb_sensitivity(actor, toy::relay_heads(V), layout, input).max_kl ==
          0.0);
  }
}

TEST_CASE("perturbation sweep agrees with the brute-force oracle") {
  Rng rng(515);
  agent::LanguageSpec lang{3, 2};  // 9 candidate messages
  agent::InputLayout layout{5, lang};
  agent::HeadLayout heads{4, lang};
  for (int trial = 0; trial < 200; ++trial) {
    const auto actor =
        testutil::random_net({layout.input_dim(), 12, heads.output_dim()}, rng);
    Vec<double> input(layout.input_dim());
    for (int i = 0; i < input.size(); ++i) input[i] = rng.uniform_range(-2.0, 2.0);
    const auto got = interpret::perturb_sensitivity(actor, heads, layout, input);
    const auto [want_kl, want_index] = brute_force_sensitivity(actor, heads, layout, input);
    CHECK(std::abs(got.max_kl - want_kl) < 1e-9);
    int got_index = 0;
    for (int t = 0; t < lang.seq_len; ++t)
      got_index = got_index * lang.vocab_size + got.argmax.tokens[t];
    CHECK(got_index == want_index);
  }
}

TEST_CASE("full-distribution sensitivity also sees token-head shifts") {
  const int V = 3;
  const auto layout = toy::relay_layout(V);
  const auto heads = toy::relay_heads(V);
  // Token head echoes the incoming message; movement ignores everything.
  nn::ParamSet<double> p;
  p.layers.push_back(
      {Mat<double>::Zero(heads.output_dim(), layout.input_dim()), Vec<double>::Zero(heads.output_dim())});
  for (int m = 0; m < V; ++m) p.layers[0].w(V + m, layout.message_offset() + m) = 2.0;

  agent::Message heard{{0}};
  std::vector<double> obs(V + 3, 0.0);
  const Vec<double> input = agent::encode_input<double>(obs, &heard, layout.lang);
  CHECK(interpret::perturb_sensitivity(p, heads, layout, input, false).max_kl == 0.0);
  CHECK(interpret::perturb_sensitivity(p, heads, layout, input, true).max_kl > 0.1);
}

TEST_CASE("perturbation sweep rejects disabled or oversized channels") {
  agent::LanguageSpec big{4, 5};  // 1024 messages
  agent::InputLayout layout{2, big};
  agent::HeadLayout heads{3, big};
  nn::ParamSet<double> p;
  p.layers.push_back(
      {Mat<double>::Zero(heads.output_dim(), layout.input_dim()), Vec<double>::Zero(heads.output_dim())});
  CHECK_THROWS_AS(
      interpret::perturb_sensitivity(p, heads, layout, Vec<double>::Zero(layout.input_dim())),
      UsageError);

  agent::LanguageSpec off{0, 0};
  agent::InputLayout l2{4, off};
  agent::HeadLayout h2{3, off};
  nn::ParamSet<double> p2;
  p2.layers.push_back({Mat<double>::Zero(3, 4), Vec<double>::Zero(3)});
  CHECK_THROWS_AS(interpret::perturb_sensitivity(p2, h2, l2, Vec<double>::Zero(4)), UsageError);
}

TEST_CASE("noise gating partitions the step space at the threshold") {
  const double T = 0.02;
  for (double kl : {0.0, 0.0199, 0.02, 0.020001, 5.0, 1e9}) {
    CHECK_FALSE(interpret::noise_applies(NoiseCondition::None, kl, T));
    CHECK(interpret::noise_applies(NoiseCondition::Always, kl, T));
    const bool below = interpret::noise_applies(NoiseCondition::BelowT, kl, T);
    const bool above = interpret::noise_applies(NoiseCondition::AboveT, kl, T);
    CHECK(below != above);
    CHECK(below == (kl <= T));
  }
}

TEST_CASE("noise ablation leaves a message-ignoring policy untouched") {
  const int V = 3;
  const auto results = interpret::noise_ablation(
      [] { return std::make_unique<toy::TokenRelayEnv>(3, 4, 24); },
      toy::message_ignoring_policy(V), toy::relay_heads(V), toy::relay_layout(V),
      interpret::NoiseConfig{0.02, 4, false, false, 9});
  REQUIRE(results.size() == 4);
  for (const auto& r : results) {
    CHECK(r.episodes == 4);
    CHECK(r.mean_length == results[0].mean_length);
    CHECK(r.mean_reward == results[0].mean_reward);
    CHECK(r.steps == results[0].steps);
  }
  CHECK(results[0].replaced == 0);                  // none
  CHECK(results[1].replaced == results[1].steps);   // below_T: all steps have kl 0
  CHECK(results[2].replaced == 0);                  // above_T
  CHECK(results[3].replaced == results[3].steps);   // always
}

TEST_CASE("noise ablation pairs gated and ungated conditions exactly on the relay task") {
  const int V = 3;
  const auto results = interpret::noise_ablation(
      [] { return std::make_unique<toy::TokenRelayEnv>(3, 4, 32); }, toy::relay_policy(V),
      toy::relay_heads(V), toy::relay_layout(V), interpret::NoiseConfig{0.02, 6, false, false, 10});
  REQUIRE(results.size() == 4);
  const auto& none = results[0];
  const auto& below = results[1];
  const auto& above = results[2];
  const auto& always = results[3];

  // Noise on the steps the policy ignores changes nothing; noise on the
  // steps it listens to collapses the episode early.
  CHECK(none.mean_length == doctest::Approx(32.0));
  CHECK(below.mean_length == none.mean_length);
  CHECK(below.mean_reward == none.mean_reward);
  CHECK(above.mean_length == always.mean_length);
  CHECK(above.mean_reward == always.mean_reward);
  CHECK(always.mean_length < 16.0);
  CHECK(none.mean_reward > always.mean_reward);

  // The listening steps are exactly the complement of the ignored steps.
  CHECK(below.steps == none.steps);
  CHECK(above.steps == always.steps);
  CHECK(above.replaced > 0);
  CHECK(above.replaced < above.steps);
}

TEST_CASE("noise ablation refuses a disabled channel") {
  agent::LanguageSpec off{0, 0};
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Zero(5, 6), Vec<double>::Zero(5)});
  CHECK_THROWS_AS(
      interpret::noise_ablation([] { return std::make_unique<toy::MoveToTargetEnv>(); }, p,
                                agent::HeadLayout{5, off}, agent::InputLayout{6, off},
                                interpret::NoiseConfig{}),
      UsageError);
}

TEST_CASE("sensitivity trace marks exactly the decision-relevant steps") {
  const int V = 3, interval = 4, max_steps = 20;
  const auto trace = interpret::sensitivity_trace(
      [&] { return std::make_unique<toy::TokenRelayEnv>(V, interval, max_steps); },
      toy::relay_policy(V), toy::relay_heads(V), toy::relay_layout(V), 3, 0.02, false, 21);
  REQUIRE(!trace.empty());
  int spikes = 0;
  for (const auto& ts : trace) {
    const bool test_step = ts.step > 0 && ts.step % interval == 0;
    if (ts.agent == 0 && test_step) {
      CHECK(ts.above);
      CHECK(ts.max_kl > 1.0);
      ++spikes;
    } else {
      CHECK_FALSE(ts.above);
      CHECK(ts.max_kl == 0.0);
    }
  }
  CHECK(spikes == 3 * (max_steps / interval - (max_steps % interval == 0 ? 1 : 0)));
}

TEST_CASE("saliency rollout collects the requested number of agent samples") {
  const int V = 3;
  const auto samples = interpret::saliency_rollout(
      [] { return std::make_unique<toy::TokenRelayEnv>(3, 4, 10); }, toy::token_copy_policy(V),
      toy::relay_heads(V), toy::relay_layout(V), 50, 31);
  REQUIRE(static_cast<int>(samples.size()) == 50);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].agent == static_cast<int>(i % 2));
    CHECK(samples[i].saliency.size() == toy::relay_layout(V).input_dim());
  }

  std::vector<nn::Vec<double>> series;
  for (const auto& s : samples) series.push_back(s.saliency);
  CHECK(interpret::message_importance_rate(series, toy::relay_layout(V), 50) == 1.0);

  const auto quiet = interpret::saliency_rollout(
      [] { return std::make_unique<toy::TokenRelayEnv>(3, 4, 10); },
      toy::message_ignoring_policy(V), toy::relay_heads(V), toy::relay_layout(V), 50, 31);
  series.clear();
  for (const auto& s : quiet) series.push_back(s.saliency);
  CHECK(interpret::message_importance_rate(series, toy::relay_layout(V), 50) == 0.0);
}
