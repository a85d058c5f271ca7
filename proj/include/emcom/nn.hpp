#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "emcom/errors.hpp"
#include "emcom/rng.hpp"

namespace emcom::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Activation { Tanh, Identity };

template <class S>
struct Layer {
  Mat<S> w;  // out x in
  Vec<S> b;  // out
};

// Dense feedforward net: hidden activation after every layer except the last,
// linear output. A single-layer net is purely linear.
template <class S>
struct ParamSet {
  std::vector<Layer<S>> layers;
  Activation activation = Activation::Tanh;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().w.rows()); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
  }

  template <class T>
  ParamSet<T> cast() const {
    ParamSet<T> out;
    out.activation = activation;
    out.layers.reserve(layers.size());
    for (const auto& l : layers)
      out.layers.push_back({l.w.template cast<T>(), l.b.template cast<T>()});
    return out;
  }
};

template <class S>
void validate_chain(const ParamSet<S>& p) {
  for (std::size_t k = 0; k + 1 < p.layers.size(); ++k) {
    if (p.layers[k].w.rows() != p.layers[k + 1].w.cols())
      throw ConfigError("layer dimension mismatch: layer " + std::to_string(k) + " outputs " +
                        std::to_string(p.layers[k].w.rows()) + " but layer " +
                        std::to_string(k + 1) + " expects " +
                        std::to_string(p.layers[k + 1].w.cols()));
  }
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    if (p.layers[k].w.rows() != p.layers[k].b.size())
      throw ConfigError("bias size mismatch at layer " + std::to_string(k));
    if (!p.layers[k].w.allFinite() || !p.layers[k].b.allFinite())
      throw NumericError("non-finite parameters at layer " + std::to_string(k));
  }
}

template <class S>
ParamSet<S> zeros_like(const ParamSet<S>& p) {
  ParamSet<S> out;
  out.activation = p.activation;
  out.layers.reserve(p.layers.size());
  for (const auto& l : p.layers)
    out.layers.push_back({Mat<S>::Zero(l.w.rows(), l.w.cols()), Vec<S>::Zero(l.b.size())});
  return out;
}

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. The final layer
// can be scaled down (small policy-head init).
template <class S>
ParamSet<S> uniform_fanin_init(const std::vector<int>& sizes, Rng& rng,
                               double final_layer_scale = 1.0,
                               Activation act = Activation::Tanh) {
  if (sizes.size() < 2) throw ConfigError("net needs at least input and output sizes");
  ParamSet<S> p;
  p.activation = act;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const int in = sizes[k], out = sizes[k + 1];
    if (in <= 0 || out <= 0) throw ConfigError("layer sizes must be positive");
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (k + 2 == sizes.size()) bound *= final_layer_scale;
    Layer<S> l{Mat<S>(out, in), Vec<S>::Zero(out)};
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j)
        l.w(i, j) = static_cast<S>(rng.uniform_range(-bound, bound));
    p.layers.push_back(std::move(l));
  }
  return p;
}

// Forward pass keeping every post-activation (input included); backward needs
// them and tanh' is recoverable as 1 - a^2.
template <class S>
struct Activations {
  std::vector<Mat<S>> post;  // post[0] = input (n x in), post[k] = layer k output
  const Mat<S>& output() const { return post.back(); }
};

template <class S>
Activations<S> forward(const ParamSet<S>& p, const Mat<S>& x) {
  if (p.layers.empty()) throw ConfigError("forward on empty net");
  if (x.cols() != p.layers.front().w.cols())
    throw ConfigError("input width " + std::to_string(x.cols()) + " does not match net input " +
                      std::to_string(p.layers.front().w.cols()));
  Activations<S> acts;
  acts.post.reserve(p.layers.size() + 1);
  acts.post.push_back(x);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    Mat<S> z = (acts.post.back() * p.layers[k].w.transpose()).rowwise() +
               p.layers[k].b.transpose();
    if (k + 1 < p.layers.size() && p.activation == Activation::Tanh)
      z = z.array().tanh();
    acts.post.push_back(std::move(z));
  }
  return acts;
}

template <class S>
Vec<S> forward_vec(const ParamSet<S>& p, const Vec<S>& x) {
  Mat<S> row = x.transpose();
  return forward(p, row).output().row(0).transpose();
}

// Exact gradients of <output, output_grad> w.r.t. parameters and input.
// Parameter gradients are summed over batch rows. grads must be zeros_like- or
// accumulation-shaped; contributions are added in place.
template <class S>
void backward(const ParamSet<S>& p, const Activations<S>& acts, const Mat<S>& output_grad,
              ParamSet<S>* grads, Mat<S>* input_grad) {
  const std::size_t L = p.layers.size();
  if (acts.post.size() != L + 1) throw ConfigError("activations do not match net depth");
  if (output_grad.rows() != acts.post[0].rows() || output_grad.cols() != p.layers.back().w.rows())
    throw ConfigError("output_grad shape mismatch");
  Mat<S> delta = output_grad;  // d objective / d pre-activation of current layer
  for (std::size_t k = L; k-- > 0;) {
    if (grads) {
      grads->layers[k].w.noalias() += delta.transpose() * acts.post[k];
      grads->layers[k].b += delta.colwise().sum().transpose();
    }
    if (k == 0) {
      if (input_grad) input_grad->noalias() = delta * p.layers[0].w;
    } else {
      Mat<S> next = delta * p.layers[k].w;
      if (p.activation == Activation::Tanh)
        next.array() *= (S(1) - acts.post[k].array().square());
      delta = std::move(next);
    }
  }
}

template <class S>
struct AdamState {
  std::vector<Layer<S>> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <class S>
AdamState<S> make_adam_state(const ParamSet<S>& p) {
  AdamState<S> st;
  for (const auto& l : p.layers) {
    st.m.push_back({Mat<S>::Zero(l.w.rows(), l.w.cols()), Vec<S>::Zero(l.b.size())});
    st.v.push_back({Mat<S>::Zero(l.w.rows(), l.w.cols()), Vec<S>::Zero(l.b.size())});
  }
  return st;
}

// Bias-corrected Adam update, applied in place.
template <class S>
void adam_step(AdamState<S>& st, ParamSet<S>& params, const ParamSet<S>& grads, double lr) {
  if (st.m.size() != params.layers.size() || grads.layers.size() != params.layers.size())
    throw ConfigError("adam state / gradient shape mismatch");
  if (lr <= 0.0) throw UsageError("adam learning rate must be positive");
  for (std::size_t k = 0; k < grads.layers.size(); ++k)
    if (!grads.layers[k].w.allFinite() || !grads.layers[k].b.allFinite())
      throw NumericError("non-finite gradient at layer " + std::to_string(k));
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const S b1 = static_cast<S>(st.beta1), b2 = static_cast<S>(st.beta2);
  const S step_scale = static_cast<S>(lr / bc1);
  const S vscale = static_cast<S>(1.0 / bc2);
  const S eps = static_cast<S>(st.eps);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto upd = [&](auto& m, auto& v, auto& theta, const auto& g) {
      m = b1 * m + (S(1) - b1) * g;
      v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
      theta.array() -= step_scale * m.array() / ((v.array() * vscale).sqrt() + eps);
    };
    upd(st.m[k].w, st.v[k].w, params.layers[k].w, grads.layers[k].w);
    upd(st.m[k].b, st.v[k].b, params.layers[k].b, grads.layers[k].b);
  }
}

}  // namespace emcom::nn
