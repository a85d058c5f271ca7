#include "doctest.h"

#include <cmath>

#include "emcom/nn.hpp"
#include "net_helpers.hpp"
#include "reference_oracles.hpp"

using namespace emcom;
using nn::Mat;
using nn::Vec;
using testutil::random_net;
using testutil::to_ref;

TEST_CASE("forward: zero weights pass bias through") {
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Zero(3, 4), Vec<double>(3)});
  p.layers[0].b << 0.5, -1.0, 2.0;
  Vec<double> x(4);
  x << 1, 2, 3, 4;
  Vec<double> y = nn::forward_vec(p, x);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(-1.0));
  CHECK(y[2] == doctest::Approx(2.0));
}

TEST_CASE("forward: single linear layer, no hidden activation") {
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Constant(1, 1, 2.0), Vec<double>::Zero(1)});
  Vec<double> x(1);
  x << 3.0;
  CHECK(nn::forward_vec(p, x)[0] == doctest::Approx(6.0));
}

TEST_CASE("forward matches independent reference on a random 4-8-3 net") {
  Rng rng(42);
  auto p = random_net({4, 8, 3}, rng);
  Vec<double> x(4);
  for (int i = 0; i < 4; ++i) x[i] = rng.uniform_range(-2.0, 2.0);
  Vec<double> y = nn::forward_vec(p, x);
  std::vector<double> ref =
      oracle::ref_forward(to_ref(p), {x[0], x[1], x[2], x[3]});
  REQUIRE(ref.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("forward rejects mismatched input width") {
  Rng rng(1);
  auto p = random_net({4, 3}, rng);
  Mat<double> x = Mat<double>::Zero(1, 5);
  CHECK_THROWS_AS(nn::forward(p, x), ConfigError);
}

TEST_CASE("backward: zero cotangent gives zero gradients") {
  Rng rng(7);
  auto p = random_net({3, 5, 2}, rng);
  Mat<double> x = Mat<double>::Random(1, 3);
  auto acts = nn::forward(p, x);
  auto grads = nn::zeros_like(p);
  Mat<double> gin(1, 3);
  nn::backward(p, acts, Mat<double>(Mat<double>::Zero(1, 2)), &grads, &gin);
  for (const auto& l : grads.layers) {
    CHECK(l.w.cwiseAbs().maxCoeff() == 0.0);
    CHECK(l.b.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(gin.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: scalar product rule") {
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Constant(1, 1, 1.75), Vec<double>::Zero(1)});
  Mat<double> x = Mat<double>::Constant(1, 1, -0.6);
  auto acts = nn::forward(p, x);
  auto grads = nn::zeros_like(p);
  Mat<double> gin(1, 1);
  nn::backward(p, acts, Mat<double>(Mat<double>::Constant(1, 1, 1.0)), &grads, &gin);
  CHECK(grads.layers[0].w(0, 0) == doctest::Approx(-0.6));
  CHECK(gin(0, 0) == doctest::Approx(1.75));
}

TEST_CASE("gradients match central finite differences on 100 random nets") {
  Rng rng(1234);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> sizes{2 + rng.uniform_int(4)};
    const int depth = 1 + rng.uniform_int(2);  // 1..2 hidden layers
    for (int d = 0; d < depth; ++d) sizes.push_back(2 + rng.uniform_int(5));
    sizes.push_back(2 + rng.uniform_int(3));

    auto p = random_net(sizes, rng);
    Vec<double> x(sizes.front());
    for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform_range(-1.5, 1.5);
    Vec<double> g(sizes.back());
    for (int i = 0; i < g.size(); ++i) g[i] = rng.uniform_range(-1.0, 1.0);

    Mat<double> xrow = x.transpose();
    auto acts = nn::forward(p, xrow);
    auto grads = nn::zeros_like(p);
    Mat<double> gin(1, x.size());
    nn::backward(p, acts, Mat<double>(g.transpose()), &grads, &gin);

    std::vector<double> xs(x.data(), x.data() + x.size());
    std::vector<double> gs(g.data(), g.data() + g.size());
    auto fd = oracle::finite_diff_grads(to_ref(p), xs, gs);

    auto close = [&](double a, double b) {
      const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
      return std::abs(a - b) / scale < 1e-4;
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (int i = 0; i < p.layers[l].w.rows(); ++i) {
        for (int j = 0; j < p.layers[l].w.cols(); ++j) {
          CHECK(close(grads.layers[l].w(i, j), fd.weights[l][i][j]));
          ++checked;
        }
        CHECK(close(grads.layers[l].b[i], fd.biases[l][i]));
      }
    }
    for (int j = 0; j < x.size(); ++j) CHECK(close(gin(0, j), fd.input[j]));
  }
  CHECK(checked > 1000);
}

TEST_CASE("batched backward equals summed per-row gradients") {
  Rng rng(99);
  auto p = random_net({4, 6, 3}, rng);
  const int n = 5;
  Mat<double> X = Mat<double>::Random(n, 4);
  Mat<double> G = Mat<double>::Random(n, 3);

  auto acts = nn::forward(p, X);
  auto batch_grads = nn::zeros_like(p);
  Mat<double> gin(n, 4);
  nn::backward(p, acts, G, &batch_grads, &gin);

  auto sum_grads = nn::zeros_like(p);
  for (int r = 0; r < n; ++r) {
    Mat<double> xr = X.row(r);
    auto a = nn::forward(p, xr);
    Mat<double> gr(1, 4);
    nn::backward(p, a, Mat<double>(G.row(r)), &sum_grads, &gr);
    for (int j = 0; j < 4; ++j) CHECK(gr(0, j) == doctest::Approx(gin(r, j)).epsilon(1e-12));
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK((batch_grads.layers[l].w - sum_grads.layers[l].w).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((batch_grads.layers[l].b - sum_grads.layers[l].b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
  Rng rng(5);
  auto p = random_net({3, 4, 2}, rng);
  auto keep = p;
  auto st = nn::make_adam_state(p);
  nn::adam_step(st, p, nn::zeros_like(p), 1e-3);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK((p.layers[l].w - keep.layers[l].w).cwiseAbs().maxCoeff() == 0.0);
    CHECK((p.layers[l].b - keep.layers[l].b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam: first step moves by roughly lr") {
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Constant(1, 1, 1.0), Vec<double>::Zero(1)});
  auto st = nn::make_adam_state(p);
  auto g = nn::zeros_like(p);
  g.layers[0].w(0, 0) = 0.37;
  nn::adam_step(st, p, g, 0.01);
  CHECK(std::abs(1.0 - p.layers[0].w(0, 0)) == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam: two-step recursion matches hand-unrolled values") {
  // theta0 = 1, lr = 0.1, grads (1, -1); unrolled with the oracle recursion.
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Constant(1, 1, 1.0), Vec<double>::Zero(1)});
  auto st = nn::make_adam_state(p);
  auto g = nn::zeros_like(p);
  g.layers[0].w(0, 0) = 1.0;
  nn::adam_step(st, p, g, 0.1);
  CHECK(p.layers[0].w(0, 0) == doctest::Approx(0.900000001).epsilon(1e-9));
  g.layers[0].w(0, 0) = -1.0;
  nn::adam_step(st, p, g, 0.1);
  CHECK(p.layers[0].w(0, 0) == doctest::Approx(0.905263158842105).epsilon(1e-9));
  CHECK(p.layers[0].w(0, 0) ==
        doctest::Approx(oracle::ref_adam_unroll(1.0, {1.0, -1.0}, 0.1)).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients naming the layer") {
  Rng rng(3);
  auto p = random_net({2, 3, 2}, rng);
  auto st = nn::make_adam_state(p);
  auto g = nn::zeros_like(p);
  g.layers[1].w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    nn::adam_step(st, p, g, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("float/double casts round-trip and promotion is exact") {
  Rng rng(11);
  auto pf = nn::uniform_fanin_init<float>({4, 8, 3}, rng);
  auto pd = pf.cast<double>();
  for (std::size_t l = 0; l < pf.layers.size(); ++l)
    for (int i = 0; i < pf.layers[l].w.rows(); ++i)
      for (int j = 0; j < pf.layers[l].w.cols(); ++j)
        CHECK(static_cast<double>(pf.layers[l].w(i, j)) == pd.layers[l].w(i, j));
}

TEST_CASE("validate_chain flags dimension breaks") {
  nn::ParamSet<double> p;
  p.layers.push_back({Mat<double>::Zero(4, 3), Vec<double>::Zero(4)});
  p.layers.push_back({Mat<double>::Zero(2, 5), Vec<double>::Zero(2)});
  CHECK_THROWS_AS(nn::validate_chain(p), ConfigError);
}

TEST_CASE("determinism: same params, input, and seed give identical results") {
  Rng rng(2024);
  auto p = random_net({5, 7, 4}, rng);
  Mat<double> x = Mat<double>::Random(3, 5);
  auto a1 = nn::forward(p, x);
  auto a2 = nn::forward(p, x);
  CHECK((a1.output() - a2.output()).cwiseAbs().maxCoeff() == 0.0);
}
