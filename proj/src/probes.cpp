#include "emcom/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "emcom/bytes.hpp"
#include "emcom/categorical.hpp"
#include "emcom/collectors.hpp"
#include "emcom/errors.hpp"
#include "emcom/interpret.hpp"
#include "emcom/pong.hpp"
#include "emcom/rng.hpp"

namespace emcom::probes {

const char* probe_input_name(ProbeInput m) {
  switch (m) {
    case ProbeInput::LangOnly: return "lang_only";
    case ProbeInput::ObsOnly: return "obs_only";
    case ProbeInput::Full: return "full";
  }
  return "?";
}

int probe_input_width(const ProbeDataset& d, ProbeInput m) {
  switch (m) {
    case ProbeInput::LangOnly: return 2 * d.lang.block_width();
    case ProbeInput::ObsOnly: return d.env_dim;
    case ProbeInput::Full: return d.env_dim + d.lang.block_width();
  }
  return 0;
}

int pong_label(double paddle0_y, double paddle1_y) { return paddle0_y > paddle1_y ? 1 : 0; }

std::optional<int> approach_label(const std::array<double, 2>& pos_now,
                                  const std::array<double, 2>& pos_later,
                                  const std::vector<TargetSnapshot>& targets_now,
                                  const std::vector<TargetSnapshot>& targets_later) {
  if (targets_now.size() != targets_later.size())
    throw ConfigError("target snapshots disagree about the slot count");
  int best = -1;
  double best_delta = 0.0;  // strictly positive progress required; ties keep the lowest slot
  for (std::size_t s = 0; s < targets_now.size(); ++s) {
    const double d_now = std::hypot(targets_now[s].x - pos_now[0], targets_now[s].y - pos_now[1]);
    const double d_later =
        std::hypot(targets_later[s].x - pos_later[0], targets_later[s].y - pos_later[1]);
    const double delta = d_now - d_later;
    if (delta > best_delta) {
      best_delta = delta;
      best = static_cast<int>(s);
    }
  }
  if (best < 0) return std::nullopt;
  if (targets_now[best].generation != targets_later[best].generation) return std::nullopt;
  return best;
}

namespace {

// One environment step of an evaluation rollout, with everything a labeler
// might need captured before the step was applied.
struct StepTrace {
  int episode = 0;
  std::array<nn::Vec<double>, 2> input;
  nn::Vec<double> messages;  // both agents' sent blocks, agent 0 first
  std::array<double, 2> max_kl{};
  std::array<double, 2> paddle{};                // pong
  std::array<std::array<double, 2>, 2> pos{};    // collectors
  std::vector<TargetSnapshot> targets;           // collectors
};

// Frozen-policy rollout mirroring the evaluation tools: the same derived rng
// streams, agent order, and one-step message delay, so recorded trajectories
// line up with sensitivity traces taken at the same seed.
template <class EnvT, class Snap>
std::vector<StepTrace> roll_policy(const env::EnvFactory& factory,
                                   const nn::ParamSet<double>& actor,
                                   const agent::HeadLayout& heads,
                                   const agent::InputLayout& layout, const RecordConfig& cfg,
                                   const char* env_name, Snap&& snap) {
  if (!layout.lang.enabled())
    throw UsageError("probe recording needs an enabled language channel");
  if (cfg.steps < 1) throw UsageError("probe recording needs a positive step budget");
  if (!factory) throw ConfigError("probe recording needs an environment factory");
  auto base = factory();
  auto* env = dynamic_cast<EnvT*>(base.get());
  if (!env)
    throw UsageError("this probe labeler needs the " + std::string(env_name) +
                     " environment, got " + base->name());
  if (actor.input_dim() != layout.input_dim() || actor.output_dim() != heads.output_dim())
    throw ConfigError("actor shape does not match the input and head layouts");
  if (env->obs_dim() != layout.env_dim)
    throw ConfigError("environment emits " + std::to_string(env->obs_dim()) +
                      " features but the layout expects " + std::to_string(layout.env_dim));
  if (env->num_actions() != heads.num_move)
    throw ConfigError("environment takes " + std::to_string(env->num_actions()) +
                      " actions but the movement head has " + std::to_string(heads.num_move));

  const std::uint64_t act_root = derive_seed(cfg.seed, 101);
  const std::uint64_t env_root = derive_seed(cfg.seed, 102);
  const int bw = layout.lang.block_width();
  std::vector<StepTrace> steps;
  steps.reserve(static_cast<std::size_t>(cfg.steps));
  for (int ep = 0; static_cast<long long>(steps.size()) < cfg.steps; ++ep) {
    Rng act_rng(derive_seed(act_root, static_cast<std::uint64_t>(ep)));
    auto res = env->reset(derive_seed(env_root, static_cast<std::uint64_t>(ep)));
    std::array<std::optional<agent::Message>, 2> incoming;
    while (!env->terminal() && static_cast<long long>(steps.size()) < cfg.steps) {
      StepTrace st;
      st.episode = ep;
      st.messages = nn::Vec<double>::Zero(2 * bw);
      snap(*env, st);
      std::array<agent::Message, 2> sent;
      std::array<int, 2> act{};
      for (int a = 0; a < 2; ++a) {
        st.input[a] = agent::encode_input<double>(res.obs[a],
                                                  incoming[a] ? &*incoming[a] : nullptr,
                                                  layout.lang);
        st.max_kl[a] = interpret::perturb_sensitivity(actor, heads, layout, st.input[a]).max_kl;
        auto r = agent::policy_act(actor, st.input[a], heads, act_rng, agent::ActMode::Sample);
        act[a] = r.movement;
        agent::write_message_block(&r.message, layout.lang, st.messages, a * bw);
        sent[a] = std::move(r.message);
      }
      res = env->step(act);
      incoming[0] = std::move(sent[1]);
      incoming[1] = std::move(sent[0]);
      steps.push_back(std::move(st));
    }
  }
  return steps;
}

ProbeRecord make_record(const StepTrace& st, int a, int label) {
  ProbeRecord r;
  r.messages.assign(st.messages.data(), st.messages.data() + st.messages.size());
  r.input.assign(st.input[a].data(), st.input[a].data() + st.input[a].size());
  r.agent = a;
  r.label = label;
  r.max_kl = st.max_kl[a];
  return r;
}

}  // namespace

ProbeDataset record_pong_dataset(const env::EnvFactory& factory,
                                 const nn::ParamSet<double>& actor,
                                 const agent::HeadLayout& heads,
                                 const agent::InputLayout& layout, const RecordConfig& cfg) {
  ProbeDataset d;
  d.env_name = "pong";
  d.lang = layout.lang;
  d.env_dim = layout.env_dim;
  d.num_labels = 2;
  d.threshold = cfg.threshold;
  const auto steps = roll_policy<env::PongEnv>(
      factory, actor, heads, layout, cfg, "pong",
      [](const env::PongEnv& e, StepTrace& st) { st.paddle = e.paddle_y(); });
  for (const auto& st : steps) {
    const int label = pong_label(st.paddle[0], st.paddle[1]);
    for (int a = 0; a < 2; ++a) {
      if (!(st.max_kl[a] > cfg.threshold)) {
        ++d.skipped;
        continue;
      }
      d.records.push_back(make_record(st, a, label));
    }
  }
  return d;
}

ProbeDataset record_collectors_dataset(const env::EnvFactory& factory,
                                       const nn::ParamSet<double>& actor,
                                       const agent::HeadLayout& heads,
                                       const agent::InputLayout& layout,
                                       const RecordConfig& cfg) {
  if (cfg.horizon < 1) throw UsageError("approach labels need a positive horizon");
  ProbeDataset d;
  d.env_name = "collectors";
  d.lang = layout.lang;
  d.env_dim = layout.env_dim;
  d.num_labels = env::CollectorsEnv::kNumTargets;
  d.threshold = cfg.threshold;
  const auto steps = roll_policy<env::CollectorsEnv>(
      factory, actor, heads, layout, cfg, "collectors",
      [](const env::CollectorsEnv& e, StepTrace& st) {
        st.pos = e.agent_pos();
        for (const auto& t : e.targets()) st.targets.push_back({t.x, t.y, t.generation});
      });
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(cfg.horizon);
    for (int a = 0; a < 2; ++a) {
      if (j >= steps.size() || steps[j].episode != steps[i].episode) {
        ++d.skipped;  // look-ahead window runs off the episode
        continue;
      }
      if (!(steps[i].max_kl[a] > cfg.threshold)) {
        ++d.skipped;
        continue;
      }
      const auto label =
          approach_label(steps[i].pos[a], steps[j].pos[a], steps[i].targets, steps[j].targets);
      if (!label) {
        ++d.skipped;
        continue;
      }
      d.records.push_back(make_record(steps[i], a, *label));
    }
  }
  return d;
}

namespace {

void check_compatible(const ProbeDataset& a, const ProbeDataset& b) {
  if (a.env_name != b.env_name || a.env_dim != b.env_dim ||
      a.lang.vocab_size != b.lang.vocab_size || a.lang.seq_len != b.lang.seq_len ||
      a.num_labels != b.num_labels)
    throw ConfigError("probe training and validation datasets are incompatible");
}

nn::Mat<double> gather_inputs(const ProbeDataset& d, ProbeInput mode, long long n) {
  const int width = probe_input_width(d, mode);
  const int full_width = d.env_dim + d.lang.block_width();
  nn::Mat<double> x(n, width);
  for (long long i = 0; i < n; ++i) {
    const auto& r = d.records[static_cast<std::size_t>(i)];
    if (static_cast<int>(r.messages.size()) != 2 * d.lang.block_width() ||
        static_cast<int>(r.input.size()) != full_width)
      throw ConfigError("probe record width does not match the dataset header");
    const std::vector<double>& src = mode == ProbeInput::LangOnly ? r.messages : r.input;
    for (int k = 0; k < width; ++k) x(i, k) = src[static_cast<std::size_t>(k)];
  }
  return x;
}

double accuracy_of(const nn::ParamSet<double>& net, const nn::Mat<double>& x,
                   const std::vector<int>& y) {
  if (y.empty()) return 0.0;
  const nn::Mat<double> logits = nn::forward(net, x).output();
  long long hits = 0;
  for (long long i = 0; i < logits.rows(); ++i) {
    int arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == y[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace

ProbeResult train_probe(const ProbeDataset& train, const ProbeDataset& valid, ProbeInput mode,
                        const ProbeConfig& cfg) {
  if (cfg.batch_size < 1) throw UsageError("probe batch size must be positive");
  if (cfg.epochs < 1) throw UsageError("probe epoch count must be positive");
  if (cfg.learning_rate <= 0.0) throw UsageError("probe learning rate must be positive");
  if (cfg.max_train_records < 1) throw UsageError("probe training cap must be positive");
  check_compatible(train, valid);
  if (train.records.empty()) throw UsageError("probe training set is empty");
  if (valid.records.empty()) throw UsageError("probe validation set is empty");
  const int classes = train.num_labels;
  if (classes < 2) throw ConfigError("probe dataset declares fewer than two classes");

  const long long n =
      std::min<long long>(static_cast<long long>(train.records.size()), cfg.max_train_records);
  std::vector<int> y(static_cast<std::size_t>(n));
  std::vector<char> seen(static_cast<std::size_t>(classes), 0);
  for (long long i = 0; i < n; ++i) {
    const int label = train.records[static_cast<std::size_t>(i)].label;
    if (label < 0 || label >= classes)
      throw ConfigError("probe label " + std::to_string(label) + " is outside the declared " +
                        std::to_string(classes) + " classes");
    y[static_cast<std::size_t>(i)] = label;
    seen[static_cast<std::size_t>(label)] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2)
    throw UsageError("probe training set contains a single class; nothing to separate");
  std::vector<int> yv;
  yv.reserve(valid.records.size());
  for (const auto& r : valid.records) {
    if (r.label < 0 || r.label >= classes)
      throw ConfigError("probe validation label out of range");
    yv.push_back(r.label);
  }

  const int width = probe_input_width(train, mode);
  const nn::Mat<double> x = gather_inputs(train, mode, n);
  const nn::Mat<double> xv =
      gather_inputs(valid, mode, static_cast<long long>(valid.records.size()));

  std::vector<int> sizes{width};
  for (int h : cfg.hidden) {
    if (h < 1) throw ConfigError("probe hidden sizes must be positive");
    sizes.push_back(h);
  }
  sizes.push_back(classes);
  Rng init_rng(derive_seed(cfg.seed, 0));
  nn::ParamSet<double> net = nn::uniform_fanin_init<double>(sizes, init_rng);
  auto adam = nn::make_adam_state(net);
  auto grads = nn::zeros_like(net);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  std::vector<long long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  ProbeResult out;
  out.log.batch_size = cfg.batch_size;
  out.log.learning_rate = cfg.learning_rate;
  out.log.hidden = cfg.hidden;
  out.log.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (long long i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i) + 1))]);
    double loss_sum = 0.0;
    for (long long start = 0; start < n; start += cfg.batch_size) {
      const int b = static_cast<int>(std::min<long long>(cfg.batch_size, n - start));
      nn::Mat<double> xb(b, width);
      for (int r = 0; r < b; ++r) xb.row(r) = x.row(order[static_cast<std::size_t>(start + r)]);
      const auto acts = nn::forward(net, xb);
      nn::Mat<double> g(b, classes);
      for (int r = 0; r < b; ++r) {
        const nn::Categorical<double> dist(acts.output().row(r).transpose());
        const int label = y[static_cast<std::size_t>(order[static_cast<std::size_t>(start + r)])];
        loss_sum -= dist.log_prob(label);
        g.row(r) = dist.probs().transpose() / static_cast<double>(b);
        g(r, label) -= 1.0 / static_cast<double>(b);
      }
      for (auto& l : grads.layers) {
        l.w.setZero();
        l.b.setZero();
      }
      nn::backward<double>(net, acts, g, &grads, nullptr);
      nn::adam_step(adam, net, grads, cfg.learning_rate);
    }
    out.log.epoch_loss.push_back(loss_sum / static_cast<double>(n));
  }
  out.log.epochs_run = cfg.epochs;
  out.n_train = n;
  out.n_valid = static_cast<long long>(yv.size());
  out.train_accuracy = accuracy_of(net, x, y);
  out.accuracy = accuracy_of(net, xv, yv);
  out.net = std::move(net);
  return out;
}

namespace {

constexpr std::uint32_t kMagic = 0x44504D45;  // "EMPD"
constexpr std::uint32_t kVersion = 1;

void check_records(const ProbeDataset& d) {
  const int mw = 2 * d.lang.block_width();
  const int iw = d.env_dim + d.lang.block_width();
  for (const auto& r : d.records) {
    if (static_cast<int>(r.messages.size()) != mw || static_cast<int>(r.input.size()) != iw)
      throw ConfigError("probe record width does not match the dataset header");
    if (r.agent < 0 || r.agent > 1) throw ConfigError("probe record agent index out of range");
    if (r.label < 0 || r.label >= d.num_labels)
      throw ConfigError("probe record label out of range");
  }
}

}  // namespace

void save_dataset(const ProbeDataset& d, const std::string& path) {
  if (!d.lang.enabled()) throw UsageError("probe datasets need an enabled language channel");
  if (d.env_dim < 1 || d.num_labels < 2)
    throw ConfigError("probe dataset header is malformed");
  check_records(d);
  ByteWriter w;
  w.u32(kMagic);
  w.u32(kVersion);
  w.str(d.env_name);
  w.i32(d.lang.vocab_size);
  w.i32(d.lang.seq_len);
  w.i32(d.env_dim);
  w.i32(d.num_labels);
  w.u8(8);  // bytes per real-valued field
  w.f64(d.threshold);
  w.u64(static_cast<std::uint64_t>(d.skipped));
  const int mw = 2 * d.lang.block_width();
  const int iw = d.env_dim + d.lang.block_width();
  w.u32(static_cast<std::uint32_t>(mw));
  w.u32(static_cast<std::uint32_t>(iw));
  w.u64(d.records.size());
  for (const auto& r : d.records)
    for (double v : r.messages) w.f64(v);
  for (const auto& r : d.records)
    for (double v : r.input) w.f64(v);
  for (const auto& r : d.records) w.i32(r.agent);
  for (const auto& r : d.records) w.i32(r.label);
  for (const auto& r : d.records) w.f64(r.max_kl);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArtifactError("cannot write probe dataset to " + path);
  const std::string& blob = w.data();
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw ArtifactError("failed while writing probe dataset to " + path);
}

ProbeDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError("cannot read probe dataset from " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string blob = buf.str();

  ByteReader r(blob);
  if (r.u32() != kMagic) throw ArtifactError(path + " is not a probe dataset file");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw ArtifactError("unsupported probe dataset version " + std::to_string(version));
  ProbeDataset d;
  d.env_name = r.str();
  d.lang.vocab_size = r.i32();
  d.lang.seq_len = r.i32();
  d.env_dim = r.i32();
  d.num_labels = r.i32();
  if (r.u8() != 8) throw ArtifactError("unsupported probe dataset field width");
  d.threshold = r.f64();
  d.skipped = static_cast<long long>(r.u64());
  if (!d.lang.enabled() || d.lang.vocab_size < 2 || d.env_dim < 1 || d.num_labels < 2)
    throw ArtifactError("probe dataset header is inconsistent");
  const int mw = 2 * d.lang.block_width();
  const int iw = d.env_dim + d.lang.block_width();
  if (r.u32() != static_cast<std::uint32_t>(mw) || r.u32() != static_cast<std::uint32_t>(iw))
    throw ArtifactError("probe dataset column widths disagree with its header");
  const std::uint64_t count = r.u64();
  d.records.resize(count);
  for (auto& rec : d.records) {
    rec.messages.resize(static_cast<std::size_t>(mw));
    for (double& v : rec.messages) v = r.f64();
  }
  for (auto& rec : d.records) {
    rec.input.resize(static_cast<std::size_t>(iw));
    for (double& v : rec.input) v = r.f64();
  }
  for (auto& rec : d.records) rec.agent = r.i32();
  for (auto& rec : d.records) rec.label = r.i32();
  for (auto& rec : d.records) rec.max_kl = r.f64();
  if (!r.at_end()) throw ArtifactError("trailing bytes after probe dataset");
  check_records(d);
  return d;
}

void export_dataset_csv(const ProbeDataset& d, const std::string& path) {
  check_records(d);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ArtifactError("cannot write probe dataset csv to " + path);
  f << std::setprecision(17);
  f << "# probe_dataset v" << kVersion << " env=" << d.env_name
    << " vocab=" << d.lang.vocab_size << " seq_len=" << d.lang.seq_len
    << " env_dim=" << d.env_dim << " labels=" << d.num_labels
    << " threshold=" << d.threshold << " skipped=" << d.skipped << "\n";
  f << "agent,label,max_kl";
  const int mw = 2 * d.lang.block_width();
  const int iw = d.env_dim + d.lang.block_width();
  for (int k = 0; k < mw; ++k) f << ",m" << k;
  for (int k = 0; k < iw; ++k) f << ",x" << k;
  f << "\n";
  for (const auto& rec : d.records) {
    f << rec.agent << "," << rec.label << "," << rec.max_kl;
    for (double v : rec.messages) f << "," << v;
    for (double v : rec.input) f << "," << v;
    f << "\n";
  }
  if (!f) throw ArtifactError("failed while writing probe dataset csv to " + path);
}

}  // namespace emcom::probes
