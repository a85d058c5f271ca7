#include "emcom/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "emcom/bytes.hpp"

namespace emcom::train {

double lr_at(int update, double lr0, int num_updates) {
  if (num_updates < 1) throw UsageError("lr schedule needs at least one update");
  if (update < 1 || update > num_updates)
    throw UsageError("lr_at: update " + std::to_string(update) + " outside 1.." +
                     std::to_string(num_updates));
  return lr0 * (1.0 - static_cast<double>(update - 1) / num_updates);
}

namespace {

template <class S>
void set_zero(nn::ParamSet<S>& p) {
  for (auto& l : p.layers) {
    l.w.setZero();
    l.b.setZero();
  }
}

// Softmax head computed once per (row, head): probabilities, log
// probabilities, and entropy from a logit segment.
template <class S>
struct HeadDist {
  nn::Vec<S> probs, logprobs;
  S entropy;

  HeadDist(const nn::Mat<S>& logits, int row, int offset, int width) {
    nn::Vec<S> z = logits.row(row).segment(offset, width).transpose();
    const S mx = z.maxCoeff();
    nn::Vec<S> ex = (z.array() - mx).exp();
    const S zsum = ex.sum();
    const S lse = mx + std::log(zsum);
    probs = ex / zsum;
    logprobs = z.array() - lse;
    entropy = -(probs.dot(logprobs));
  }
};

template <class S>
std::string pack_params(const nn::ParamSet<S>& p) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(p.layers.size()));
  for (const auto& l : p.layers) {
    w.u32(static_cast<std::uint32_t>(l.w.rows()));
    w.u32(static_cast<std::uint32_t>(l.w.cols()));
    w.str(std::string(reinterpret_cast<const char*>(l.w.data()), sizeof(S) * l.w.size()));
    w.str(std::string(reinterpret_cast<const char*>(l.b.data()), sizeof(S) * l.b.size()));
  }
  return w.take();
}

template <class S>
void unpack_params(ByteReader& r, nn::ParamSet<S>& p, const char* what) {
  const std::string blob = r.str();
  ByteReader br(blob);
  const std::uint32_t n = br.u32();
  if (n != p.layers.size())
    throw ArtifactError(std::string("state mismatch: ") + what + " layer count");
  for (auto& l : p.layers) {
    const auto rows = br.u32(), cols = br.u32();
    if (rows != static_cast<std::uint32_t>(l.w.rows()) ||
        cols != static_cast<std::uint32_t>(l.w.cols()))
      throw ArtifactError(std::string("state mismatch: ") + what + " layer shape");
    const std::string wb = br.str(), bb = br.str();
    if (wb.size() != sizeof(S) * l.w.size() || bb.size() != sizeof(S) * l.b.size())
      throw ArtifactError(std::string("state mismatch: ") + what + " payload size");
    std::memcpy(l.w.data(), wb.data(), wb.size());
    std::memcpy(l.b.data(), bb.data(), bb.size());
  }
}

}  // namespace

template <class S>
Trainer<S>::Trainer(TrainerSetup setup) : setup_(std::move(setup)) {
  const auto& ppo = setup_.ppo;
  if (!setup_.env_factory) throw ConfigError("trainer needs an environment factory");
  if (ppo.num_envs < 1 || ppo.horizon < 1) throw ConfigError("num_envs and horizon must be positive");
  if (ppo.num_minibatches < 1 || ppo.update_epochs < 1)
    throw ConfigError("num_minibatches and update_epochs must be positive");
  if (ppo.batch_samples() % ppo.num_minibatches != 0)
    throw ConfigError("batch of " + std::to_string(ppo.batch_samples()) +
                      " samples is not divisible into " +
                      std::to_string(ppo.num_minibatches) + " minibatches");
  if (ppo.num_updates() < 1)
    throw ConfigError("total_timesteps below one full rollout");
  if (setup_.lang.seq_len < 0) throw ConfigError("seq_len must be non-negative");
  if (setup_.lang.enabled() && setup_.lang.vocab_size < 2)
    throw ConfigError("vocab_size must be at least 2 when the channel is enabled");

  const int E = ppo.num_envs;
  envs_.reserve(E);
  incoming_.assign(E, {});
  obs_.assign(E, {});
  ep_len_.assign(E, 0);
  ep_ret_.assign(E, 0.0);
  for (int e = 0; e < E; ++e) {
    envs_.push_back(setup_.env_factory());
    auto res = envs_[e]->reset(derive_seed(setup_.seed, 16 + static_cast<std::uint64_t>(e)));
    obs_[e] = res.obs;
  }
  obs_dim_ = envs_[0]->obs_dim();
  num_move_ = envs_[0]->num_actions();

  Rng init(derive_seed(setup_.seed, 0));
  nets_ = agent::make_agent_nets<S>(agent::InputLayout{obs_dim_, setup_.lang}, num_move_,
                                    setup_.net, init);
  adam_actor_ = nn::make_adam_state(nets_.actor);
  adam_critic_ = nn::make_adam_state(nets_.critic);
  act_rng_.seed(derive_seed(setup_.seed, 1));
  shuffle_rng_.seed(derive_seed(setup_.seed, 2));
}

template <class S>
nn::Vec<S> Trainer<S>::agent_input(int e, int a) const {
  const auto& msg = incoming_[e][a];
  return agent::encode_input<S>(obs_[e][a], msg ? &*msg : nullptr, setup_.lang);
}

template <class S>
void Trainer<S>::reset_env_slot(int e) {
  auto res = envs_[e]->begin_episode();
  obs_[e] = res.obs;
  incoming_[e] = {};
  ep_len_[e] = 0;
  ep_ret_[e] = 0.0;
}

template <class S>
void Trainer<S>::collect(Rollout<S>& buf) {
  const int E = setup_.ppo.num_envs, T = setup_.ppo.horizon, L = setup_.lang.seq_len;
  const int in_dim = nets_.layout.input_dim();
  const int crit_dim = nets_.critic_input_dim;
  const int per = setup_.net.critic_sees_messages ? in_dim : nets_.layout.env_dim;
  const int out_dim = nets_.heads.output_dim();

  buf.n = T * E * 2;
  buf.inputs.resize(buf.n, in_dim);
  buf.critic_inputs.resize(T * E, crit_dim);
  buf.move.assign(buf.n, 0);
  buf.tokens.assign(static_cast<std::size_t>(buf.n) * L, 0);
  buf.logprob.assign(buf.n, S(0));
  buf.value.assign(buf.n, 0.0);
  buf.reward.assign(buf.n, 0.0);
  buf.step_boot.assign(buf.n, 0.0);
  buf.done.assign(buf.n, 0);
  buf.trunc.assign(buf.n, 0);

  last_episodes_.clear();

  nn::Mat<S> X(2 * E, in_dim), C(E, crit_dim);
  std::vector<int> term_envs;
  nn::Mat<S> term_inputs;

  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < E; ++e)
      for (int a = 0; a < 2; ++a) X.row(2 * e + a) = agent_input(e, a).transpose();
    const nn::Mat<S> logits = nn::forward(nets_.actor, X).output();
    if (logits.cols() != out_dim) throw ConfigError("actor output width mismatch");

    for (int e = 0; e < E; ++e) {
      C.block(e, 0, 1, per) = X.block(2 * e, 0, 1, per);
      C.block(e, per, 1, per) = X.block(2 * e + 1, 0, 1, per);
    }
    const nn::Mat<S> values = nn::forward(nets_.critic, C).output();

    term_envs.clear();
    std::vector<std::array<agent::Message, 2>> sent(E);
    const long long step_global = global_step_ + E;

    for (int e = 0; e < E; ++e) {
      const int crow = t * E + e;
      buf.critic_inputs.row(crow) = C.row(e);
      std::array<int, 2> mv{};
      for (int a = 0; a < 2; ++a) {
        const int row = 2 * e + a;
        const int s = crow * 2 + a;
        nn::Categorical<S> m(logits.row(row).segment(0, num_move_).transpose());
        mv[a] = m.sample(act_rng_);
        S lp = m.log_prob(mv[a]);
        sent[e][a].tokens.reserve(L);
        for (int k = 0; k < L; ++k) {
          nn::Categorical<S> h(
              logits.row(row).segment(nets_.heads.token_offset(k), setup_.lang.vocab_size)
                  .transpose());
          const int tok = h.sample(act_rng_);
          sent[e][a].tokens.push_back(tok);
          lp += h.log_prob(tok);
          buf.tokens[static_cast<std::size_t>(s) * L + k] = tok;
        }
        buf.inputs.row(s) = X.row(row);
        buf.move[s] = mv[a];
        buf.logprob[s] = lp;
        buf.value[s] = static_cast<double>(values(e, a));
      }

      auto res = envs_[e]->step(mv);
      const int s0 = crow * 2, s1 = s0 + 1;
      buf.reward[s0] = res.rewards[0];
      buf.reward[s1] = res.rewards[1];
      buf.done[s0] = buf.done[s1] = res.done ? 1 : 0;
      buf.trunc[s0] = buf.trunc[s1] = res.truncated ? 1 : 0;
      ep_len_[e] += 1;
      ep_ret_[e] += res.rewards[0] + res.rewards[1];

      if (res.done) {
        if (res.truncated) {
          // Value the cut-off state: its observations plus the messages that
          // were just sent and would have been delivered next step.
          term_inputs.conservativeResize(static_cast<int>(term_envs.size()) * 2 + 2, in_dim);
          for (int a = 0; a < 2; ++a) {
            const agent::Message* m = setup_.lang.enabled() ? &sent[e][1 - a] : nullptr;
            term_inputs.row(static_cast<int>(term_envs.size()) * 2 + a) =
                agent::encode_input<S>(res.obs[a], m, setup_.lang).transpose();
          }
          term_envs.push_back(e);
        }
        last_episodes_.push_back(
            {step_global, e, ep_ret_[e], ep_len_[e], res.truncated});
        reset_env_slot(e);
      } else {
        obs_[e] = res.obs;
        if (setup_.lang.enabled()) {
          incoming_[e][0] = sent[e][1];
          incoming_[e][1] = sent[e][0];
        }
      }
    }

    if (!term_envs.empty()) {
      const int k = static_cast<int>(term_envs.size());
      nn::Mat<S> tc(k, crit_dim);
      for (int i = 0; i < k; ++i) {
        tc.block(i, 0, 1, per) = term_inputs.block(2 * i, 0, 1, per);
        tc.block(i, per, 1, per) = term_inputs.block(2 * i + 1, 0, 1, per);
      }
      const nn::Mat<S> tv = nn::forward(nets_.critic, tc).output();
      for (int i = 0; i < k; ++i) {
        const int s0 = (t * E + term_envs[i]) * 2;
        buf.step_boot[s0] = static_cast<double>(tv(i, 0));
        buf.step_boot[s0 + 1] = static_cast<double>(tv(i, 1));
      }
      term_inputs.resize(0, in_dim);
    }

    global_step_ = step_global;
  }

  // Bootstrap values for rollouts cut mid-episode.
  for (int e = 0; e < E; ++e)
    for (int a = 0; a < 2; ++a) X.row(2 * e + a) = agent_input(e, a).transpose();
  for (int e = 0; e < E; ++e) {
    C.block(e, 0, 1, per) = X.block(2 * e, 0, 1, per);
    C.block(e, per, 1, per) = X.block(2 * e + 1, 0, 1, per);
  }
  const nn::Mat<S> final_v = nn::forward(nets_.critic, C).output();

  buf.advantage.assign(buf.n, 0.0);
  buf.ret.assign(buf.n, 0.0);
  std::vector<double> rew(T), val(T), boot(T);
  std::vector<std::uint8_t> don(T), tru(T);
  for (int e = 0; e < E; ++e) {
    for (int a = 0; a < 2; ++a) {
      for (int t = 0; t < T; ++t) {
        const int s = ((t * E + e) * 2) + a;
        rew[t] = buf.reward[s];
        val[t] = buf.value[s];
        boot[t] = buf.step_boot[s];
        don[t] = buf.done[s];
        tru[t] = buf.trunc[s];
      }
      auto g = compute_gae(rew, val, don, tru, boot, static_cast<double>(final_v(e, a)),
                           setup_.ppo.gamma, setup_.ppo.gae_lambda);
      for (int t = 0; t < T; ++t) {
        const int s = ((t * E + e) * 2) + a;
        buf.advantage[s] = g.advantages[t];
        buf.ret[s] = g.returns[t];
      }
    }
  }
}

template <class S>
UpdateStats Trainer<S>::optimize(Rollout<S>& buf, double lr) {
  const auto& ppo = setup_.ppo;
  const int n = buf.n;
  const int msize = n / ppo.num_minibatches;
  const int L = setup_.lang.seq_len, V = setup_.lang.vocab_size;
  const int in_dim = nets_.layout.input_dim();
  const int out_dim = nets_.heads.output_dim();
  const int crit_dim = nets_.critic_input_dim;

  // Whole-batch advantage normalization (population std).
  double mean = 0.0;
  for (double a : buf.advantage) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : buf.advantage) var += (a - mean) * (a - mean);
  var /= n;
  const double stddev = std::sqrt(var);
  std::vector<S> norm_adv(n), ret(n);
  for (int s = 0; s < n; ++s) {
    norm_adv[s] = static_cast<S>((buf.advantage[s] - mean) / (stddev + 1e-8));
    ret[s] = static_cast<S>(buf.ret[s]);
  }

  std::vector<int> perm(n);
  for (int s = 0; s < n; ++s) perm[s] = s;

  nn::Mat<S> X(msize, in_dim), C(msize, crit_dim);
  nn::Mat<S> Ga(msize, out_dim), Gc(msize, 2);
  auto grads_a = nn::zeros_like(nets_.actor);
  auto grads_c = nn::zeros_like(nets_.critic);

  UpdateStats acc;
  long long batches = 0;

  for (int epoch = 0; epoch < ppo.update_epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      const int j = shuffle_rng_.uniform_int(i + 1);
      std::swap(perm[i], perm[j]);
    }
    for (int mb = 0; mb < ppo.num_minibatches; ++mb) {
      const int* idx = perm.data() + static_cast<std::size_t>(mb) * msize;
      for (int r = 0; r < msize; ++r) {
        X.row(r) = buf.inputs.row(idx[r]);
        C.row(r) = buf.critic_inputs.row(idx[r] >> 1);
      }
      auto acts_a = nn::forward(nets_.actor, X);
      auto acts_c = nn::forward(nets_.critic, C);
      const nn::Mat<S>& logits = acts_a.output();
      const nn::Mat<S>& vals = acts_c.output();

      Ga.setZero();
      Gc.setZero();
      double pg_sum = 0, v_sum = 0, ent_sum = 0, kl_sum = 0;
      int clip_count = 0;

      for (int r = 0; r < msize; ++r) {
        const int s = idx[r];
        HeadDist<S> mhead(logits, r, 0, num_move_);
        S new_lp = mhead.logprobs[buf.move[s]];
        S ent = mhead.entropy;

        std::vector<HeadDist<S>> theads;
        theads.reserve(L);
        for (int k = 0; k < L; ++k) {
          theads.emplace_back(logits, r, nets_.heads.token_offset(k), V);
          new_lp += theads.back().logprobs[buf.tokens[static_cast<std::size_t>(s) * L + k]];
          ent += theads.back().entropy;
        }

        const double logratio = static_cast<double>(new_lp) - static_cast<double>(buf.logprob[s]);
        const double rho = std::exp(logratio);
        const double adv = static_cast<double>(norm_adv[s]);
        const double clipped = std::clamp(rho, 1.0 - ppo.clip_eps, 1.0 + ppo.clip_eps);
        const double pg1 = -adv * rho;
        const double pg2 = -adv * clipped;
        pg_sum += std::max(pg1, pg2);
        kl_sum += (rho - 1.0) - logratio;
        if (std::abs(rho - 1.0) > ppo.clip_eps) ++clip_count;

        // d(loss)/d(new log-prob): the clipped branch is flat.
        const S d_lp = static_cast<S>((pg1 >= pg2 ? -adv * rho : 0.0) / msize);
        const S ent_scale = static_cast<S>(ppo.entropy_coef / msize);

        auto head_grad = [&](const HeadDist<S>& h, int offset, int width, int action) {
          for (int j = 0; j < width; ++j) {
            const S onehot = (j == action) ? S(1) : S(0);
            Ga(r, offset + j) =
                d_lp * (onehot - h.probs[j]) +
                ent_scale * h.probs[j] * (h.logprobs[j] + h.entropy);
          }
        };
        head_grad(mhead, 0, num_move_, buf.move[s]);
        for (int k = 0; k < L; ++k)
          head_grad(theads[k], nets_.heads.token_offset(k), V,
                    buf.tokens[static_cast<std::size_t>(s) * L + k]);

        const int a = s & 1;
        const double v = static_cast<double>(vals(r, a));
        const double verr = v - static_cast<double>(ret[s]);
        v_sum += 0.5 * verr * verr;
        Gc(r, a) = static_cast<S>(ppo.value_coef * verr / msize);

        ent_sum += static_cast<double>(ent);
      }

      const double pg_loss = pg_sum / msize;
      const double v_loss = v_sum / msize;
      const double ent_mean = ent_sum / msize;
      const double total = pg_loss + ppo.value_coef * v_loss - ppo.entropy_coef * ent_mean;
      if (!std::isfinite(total))
        throw NumericError("non-finite loss at update " + std::to_string(update_count_ + 1) +
                           " epoch " + std::to_string(epoch) + " minibatch " +
                           std::to_string(mb) + " (pg=" + std::to_string(pg_loss) +
                           " v=" + std::to_string(v_loss) +
                           " ent=" + std::to_string(ent_mean) + ")");

      set_zero(grads_a);
      set_zero(grads_c);
      nn::backward<S>(nets_.actor, acts_a, Ga, &grads_a, nullptr);
      nn::backward<S>(nets_.critic, acts_c, Gc, &grads_c, nullptr);
      nn::adam_step(adam_actor_, nets_.actor, grads_a, lr);
      nn::adam_step(adam_critic_, nets_.critic, grads_c, lr);

      acc.pg_loss += pg_loss;
      acc.v_loss += v_loss;
      acc.entropy += ent_mean;
      acc.approx_kl += kl_sum / msize;
      acc.clip_frac += static_cast<double>(clip_count) / msize;
      ++batches;
    }
  }

  acc.pg_loss /= batches;
  acc.v_loss /= batches;
  acc.entropy /= batches;
  acc.approx_kl /= batches;
  acc.clip_frac /= batches;
  return acc;
}

template <class S>
IterationLog Trainer<S>::run_update() {
  if (finished()) throw UsageError("training already completed all updates");
  Rollout<S>& buf = rollout_;
  collect(buf);
  if (rollout_hook_) rollout_hook_(buf);

  const int u = update_count_ + 1;
  const double lr = setup_.ppo.anneal_lr
                        ? lr_at(u, setup_.ppo.learning_rate, num_updates())
                        : setup_.ppo.learning_rate;
  IterationLog log;
  log.stats = optimize(buf, lr);
  update_count_ = u;

  log.iteration = u;
  log.global_step = global_step_;
  log.lr = lr;
  log.episodes = static_cast<int>(last_episodes_.size());
  if (!last_episodes_.empty()) {
    double rsum = 0, lsum = 0;
    for (const auto& ep : last_episodes_) {
      rsum += ep.team_reward;
      lsum += ep.length;
    }
    log.mean_ep_reward = rsum / log.episodes;
    log.mean_ep_length = lsum / log.episodes;
  } else {
    log.mean_ep_reward = std::numeric_limits<double>::quiet_NaN();
    log.mean_ep_length = std::numeric_limits<double>::quiet_NaN();
  }
  return log;
}

template <class S>
std::string Trainer<S>::serialize_state() const {
  ByteWriter w;
  w.u32(1);  // state format version
  w.u64(static_cast<std::uint64_t>(global_step_));
  w.i32(update_count_);
  w.str(pack_params(nets_.actor));
  w.str(pack_params(nets_.critic));
  auto pack_adam = [&](const nn::AdamState<S>& st) {
    ByteWriter aw;
    aw.i64(st.step);
    aw.u32(static_cast<std::uint32_t>(st.m.size()));
    for (std::size_t k = 0; k < st.m.size(); ++k) {
      for (const auto* layer : {&st.m[k], &st.v[k]}) {
        aw.str(std::string(reinterpret_cast<const char*>(layer->w.data()),
                           sizeof(S) * layer->w.size()));
        aw.str(std::string(reinterpret_cast<const char*>(layer->b.data()),
                           sizeof(S) * layer->b.size()));
      }
    }
    w.str(aw.take());
  };
  pack_adam(adam_actor_);
  pack_adam(adam_critic_);
  w.str(act_rng_.state());
  w.str(shuffle_rng_.state());

  const int E = setup_.ppo.num_envs;
  w.u32(static_cast<std::uint32_t>(E));
  for (int e = 0; e < E; ++e) {
    w.str(envs_[e]->serialize_state());
    for (int a = 0; a < 2; ++a) {
      const auto& msg = incoming_[e][a];
      w.u8(msg ? 1 : 0);
      if (msg) {
        w.u32(static_cast<std::uint32_t>(msg->tokens.size()));
        for (int tok : msg->tokens) w.i32(tok);
      }
      w.u32(static_cast<std::uint32_t>(obs_[e][a].size()));
      for (double v : obs_[e][a]) w.f64(v);
    }
    w.i32(ep_len_[e]);
    w.f64(ep_ret_[e]);
  }
  return w.take();
}

template <class S>
void Trainer<S>::restore_state(const std::string& blob) {
  ByteReader r(blob);
  if (r.u32() != 1) throw ArtifactError("unsupported trainer state version");
  global_step_ = static_cast<long long>(r.u64());
  update_count_ = r.i32();
  unpack_params(r, nets_.actor, "actor");
  unpack_params(r, nets_.critic, "critic");
  auto unpack_adam = [&](nn::AdamState<S>& st) {
    const std::string ab = r.str();
    ByteReader ar(ab);
    st.step = ar.i64();
    const std::uint32_t nl = ar.u32();
    if (nl != st.m.size()) throw ArtifactError("state mismatch: optimizer layer count");
    for (std::size_t k = 0; k < st.m.size(); ++k) {
      for (auto* layer : {&st.m[k], &st.v[k]}) {
        const std::string wb = ar.str(), bb = ar.str();
        if (wb.size() != sizeof(S) * layer->w.size() ||
            bb.size() != sizeof(S) * layer->b.size())
          throw ArtifactError("state mismatch: optimizer payload size");
        std::memcpy(layer->w.data(), wb.data(), wb.size());
        std::memcpy(layer->b.data(), bb.data(), bb.size());
      }
    }
  };
  unpack_adam(adam_actor_);
  unpack_adam(adam_critic_);
  act_rng_.set_state(r.str());
  shuffle_rng_.set_state(r.str());

  const std::uint32_t E = r.u32();
  if (E != static_cast<std::uint32_t>(setup_.ppo.num_envs))
    throw ArtifactError("state mismatch: env count");
  for (std::uint32_t e = 0; e < E; ++e) {
    envs_[e]->restore_state(r.str());
    for (int a = 0; a < 2; ++a) {
      if (r.u8()) {
        agent::Message m;
        const std::uint32_t nt = r.u32();
        m.tokens.reserve(nt);
        for (std::uint32_t k = 0; k < nt; ++k) m.tokens.push_back(r.i32());
        incoming_[e][a] = std::move(m);
      } else {
        incoming_[e][a].reset();
      }
      const std::uint32_t no = r.u32();
      obs_[e][a].resize(no);
      for (std::uint32_t k = 0; k < no; ++k) obs_[e][a][k] = r.f64();
    }
    ep_len_[e] = r.i32();
    ep_ret_[e] = r.f64();
  }
  if (!r.at_end()) throw ArtifactError("trailing bytes in trainer state");
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace emcom::train
