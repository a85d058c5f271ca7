#include "emcom/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "emcom/errors.hpp"
#include "json.hpp"

namespace emcom::cfg {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void read_value(const json& v, const std::string& key, int& out) {
  if (!v.is_number_integer()) throw ConfigError(key + " must be an integer");
  const long long x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw ConfigError(key + " is out of range");
  out = static_cast<int>(x);
}

void read_value(const json& v, const std::string& key, long long& out) {
  if (!v.is_number_integer()) throw ConfigError(key + " must be an integer");
  out = v.get<long long>();
}

void read_value(const json& v, const std::string& key, std::uint64_t& out) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<long long>() < 0))
    throw ConfigError(key + " must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read_value(const json& v, const std::string& key, double& out) {
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  out = v.get<double>();
  if (!std::isfinite(out)) throw ConfigError(key + " must be finite");
}

void read_value(const json& v, const std::string& key, bool& out) {
  if (!v.is_boolean()) throw ConfigError(key + " must be a boolean");
  out = v.get<bool>();
}

void read_value(const json& v, const std::string& key, std::string& out) {
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  out = v.get<std::string>();
}

void read_value(const json& v, const std::string& key, std::vector<int>& out) {
  if (!v.is_array()) throw ConfigError(key + " must be an array of integers");
  out.clear();
  for (const auto& e : v) {
    int x = 0;
    read_value(e, key + " entries", x);
    out.push_back(x);
  }
}

// Strict view over one JSON object level: fields must be known, and each
// present key is consumed exactly once. Absent fields keep their defaults,
// and either way the provenance map records which happened.
class Section {
public:
  Section(const json& j, std::string prefix, std::map<std::string, std::string>& prov)
      : j_(j), prefix_(std::move(prefix)), prov_(prov) {
    if (!j_.is_object())
      throw ConfigError((prefix_.empty() ? std::string("config root") : prefix_) +
                        " must be a JSON object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <class T>
  void field(const std::string& k, T& out) {
    const std::string dotted = key(k);
    taken_.insert(k);
    if (!j_.contains(k)) {
      prov_[dotted] = "default";
      return;
    }
    prov_[dotted] = "explicit";
    read_value(j_.at(k), dotted, out);
  }

  json sub(const std::string& k) {
    taken_.insert(k);
    if (!j_.contains(k)) return json::object();
    if (!j_.at(k).is_object()) throw ConfigError(key(k) + " must be a JSON object");
    return j_.at(k);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!taken_.count(it.key())) throw ConfigError("unknown config key '" + key(it.key()) + "'");
  }

private:
  std::string key(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

  const json& j_;
  std::string prefix_;
  std::map<std::string, std::string>& prov_;
  std::set<std::string> taken_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void validate(const RunConfig& c) {
  require(c.env == "pong" || c.env == "collectors",
          "env must be \"pong\" or \"collectors\", got \"" + c.env + "\"");
  require(c.lang.vocab_size >= 2, "lang.vocab_size must be at least 2, got " +
                                      std::to_string(c.lang.vocab_size));
  require(c.lang.seq_len >= 0, "lang.seq_len must be non-negative");

  for (int h : c.net.hidden) require(h >= 1, "net.hidden sizes must be positive");
  require(c.net.actor_head_scale > 0, "net.actor_head_scale must be positive");

  const auto& p = c.ppo;
  require(p.gamma > 0 && p.gamma <= 1, "ppo.gamma must be in (0, 1]");
  require(p.gae_lambda >= 0 && p.gae_lambda <= 1, "ppo.gae_lambda must be in [0, 1]");
  require(p.clip_eps > 0, "ppo.clip_eps must be positive");
  require(p.entropy_coef >= 0, "ppo.entropy_coef must be non-negative");
  require(p.value_coef >= 0, "ppo.value_coef must be non-negative");
  require(p.learning_rate > 0, "ppo.learning_rate must be positive");
  require(p.num_envs >= 1, "ppo.num_envs must be positive");
  require(p.horizon >= 1, "ppo.horizon must be positive");
  require(p.num_minibatches >= 1, "ppo.num_minibatches must be positive");
  require(p.update_epochs >= 1, "ppo.update_epochs must be positive");
  require(p.total_timesteps >= static_cast<long long>(p.num_envs) * p.horizon,
          "ppo.total_timesteps is smaller than one iteration of num_envs * horizon steps");
  require(p.batch_samples() % p.num_minibatches == 0,
          "ppo.num_minibatches must divide the batch of " + std::to_string(p.batch_samples()) +
              " samples");

  const auto& pg = c.pong;
  require(pg.paddle_half_height > 0 && pg.paddle_half_height <= 0.5,
          "pong.paddle_half_height must be in (0, 0.5]");
  require(pg.paddle_speed > 0, "pong.paddle_speed must be positive");
  require(pg.ball_speed > 0, "pong.ball_speed must be positive");
  require(pg.spawn_x > 0 && pg.spawn_x < 1, "pong.spawn_x must be inside the field");
  require(pg.spawn_cone_deg > 0 && pg.spawn_cone_deg < 90,
          "pong.spawn_cone_deg must be in (0, 90)");
  require(pg.max_episode_steps >= 1, "pong.max_episode_steps must be positive");

  const auto& cl = c.collectors;
  require(cl.agent_speed > 0, "collectors.agent_speed must be positive");
  require(cl.collect_radius > 0, "collectors.collect_radius must be positive");
  require(cl.countdown_min >= 1, "collectors.countdown_min must be positive");
  require(cl.countdown_max >= cl.countdown_min,
          "collectors.countdown_max must be at least countdown_min");
  require(cl.min_spawn_dist >= 0 && cl.min_spawn_dist < 1,
          "collectors.min_spawn_dist must be in [0, 1)");
  require(cl.max_episode_steps >= 1, "collectors.max_episode_steps must be positive");

  const auto& it = c.interpret;
  require(it.threshold >= 0, "interpret.threshold must be non-negative");
  require(it.episodes >= 1, "interpret.episodes must be positive");
  require(it.saliency_window >= 1, "interpret.saliency_window must be positive");
  require(it.saliency_samples >= 1, "interpret.saliency_samples must be positive");

  const auto& pr = c.probe;
  require(pr.record_steps >= 1, "probe.record_steps must be positive");
  require(pr.validation_steps >= 1, "probe.validation_steps must be positive");
  require(pr.threshold >= 0, "probe.threshold must be non-negative");
  require(pr.horizon >= 1, "probe.horizon must be positive");
  require(pr.batch_size >= 1, "probe.batch_size must be positive");
  require(pr.learning_rate > 0, "probe.learning_rate must be positive");
  require(pr.epochs >= 1, "probe.epochs must be positive");
  for (int h : pr.hidden) require(h >= 1, "probe.hidden sizes must be positive");
  require(pr.max_train_records >= 1, "probe.max_train_records must be positive");
}

json pong_json(const env::PongConfig& p) {
  return json{{"paddle_half_height", p.paddle_half_height},
              {"paddle_speed", p.paddle_speed},
              {"ball_speed", p.ball_speed},
              {"spawn_x", p.spawn_x},
              {"spawn_cone_deg", p.spawn_cone_deg},
              {"max_episode_steps", p.max_episode_steps}};
}

json collectors_json(const env::CollectorsConfig& c) {
  return json{{"agent_speed", c.agent_speed},
              {"collect_radius", c.collect_radius},
              {"countdown_min", c.countdown_min},
              {"countdown_max", c.countdown_max},
              {"min_spawn_dist", c.min_spawn_dist},
              {"max_episode_steps", c.max_episode_steps}};
}

}  // namespace

env::EnvFactory RunConfig::make_env_factory() const {
  if (env == "pong") {
    const env::PongConfig c = pong;
    return [c] { return std::make_unique<env::PongEnv>(c); };
  }
  const env::CollectorsConfig c = collectors;
  return [c] { return std::make_unique<env::CollectorsEnv>(c); };
}

train::TrainerSetup RunConfig::trainer_setup() const {
  train::TrainerSetup s;
  s.env_factory = make_env_factory();
  s.lang = lang;
  s.net = net;
  s.ppo = ppo;
  s.seed = seed;
  return s;
}

std::string RunConfig::canonical_json() const {
  json j;
  j["env"] = env;
  j["seed"] = seed;
  j["lang"] = {{"vocab_size", lang.vocab_size}, {"seq_len", lang.seq_len}};
  j["net"] = {{"hidden", net.hidden},
              {"critic_sees_messages", net.critic_sees_messages},
              {"actor_head_scale", net.actor_head_scale}};
  j["ppo"] = {{"gamma", ppo.gamma},
              {"gae_lambda", ppo.gae_lambda},
              {"clip_eps", ppo.clip_eps},
              {"entropy_coef", ppo.entropy_coef},
              {"value_coef", ppo.value_coef},
              {"learning_rate", ppo.learning_rate},
              {"anneal_lr", ppo.anneal_lr},
              {"num_envs", ppo.num_envs},
              {"horizon", ppo.horizon},
              {"num_minibatches", ppo.num_minibatches},
              {"update_epochs", ppo.update_epochs},
              {"total_timesteps", ppo.total_timesteps}};
  j["pong"] = pong_json(pong);
  j["collectors"] = collectors_json(collectors);
  j["interpret"] = {{"threshold", interpret.threshold},
                    {"episodes", interpret.episodes},
                    {"saliency_window", interpret.saliency_window},
                    {"saliency_samples", interpret.saliency_samples},
                    {"full_distribution_kl", interpret.full_distribution_kl},
                    {"uniform_real_noise", interpret.uniform_real_noise}};
  j["probe"] = {{"record_steps", probe.record_steps},
                {"validation_steps", probe.validation_steps},
                {"threshold", probe.threshold},
                {"horizon", probe.horizon},
                {"batch_size", probe.batch_size},
                {"learning_rate", probe.learning_rate},
                {"epochs", probe.epochs},
                {"hidden", probe.hidden},
                {"max_train_records", probe.max_train_records}};
  return j.dump();
}

std::string RunConfig::config_hash() const { return hex64(fnv1a64(canonical_json())); }

std::string RunConfig::env_hash() const {
  json j;
  j["env"] = env;
  j["constants"] = env == "pong" ? pong_json(pong) : collectors_json(collectors);
  return hex64(fnv1a64(j.dump()));
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig c;
  Section top(j, "", c.provenance);
  if (!top.has("env")) throw ConfigError("config is missing required key 'env'");
  top.field("env", c.env);
  top.field("seed", c.seed);

  {
    const json sj = top.sub("lang");
    Section s(sj, "lang", c.provenance);
    s.field("vocab_size", c.lang.vocab_size);
    s.field("seq_len", c.lang.seq_len);
    s.finish();
  }
  {
    const json sj = top.sub("net");
    Section s(sj, "net", c.provenance);
    s.field("hidden", c.net.hidden);
    s.field("critic_sees_messages", c.net.critic_sees_messages);
    s.field("actor_head_scale", c.net.actor_head_scale);
    s.finish();
  }
  {
    const json sj = top.sub("ppo");
    Section s(sj, "ppo", c.provenance);
    s.field("gamma", c.ppo.gamma);
    s.field("gae_lambda", c.ppo.gae_lambda);
    s.field("clip_eps", c.ppo.clip_eps);
    s.field("entropy_coef", c.ppo.entropy_coef);
    s.field("value_coef", c.ppo.value_coef);
    s.field("learning_rate", c.ppo.learning_rate);
    s.field("anneal_lr", c.ppo.anneal_lr);
    s.field("num_envs", c.ppo.num_envs);
    s.field("horizon", c.ppo.horizon);
    s.field("num_minibatches", c.ppo.num_minibatches);
    s.field("update_epochs", c.ppo.update_epochs);
    s.field("total_timesteps", c.ppo.total_timesteps);
    s.finish();
  }
  {
    const json sj = top.sub("pong");
    Section s(sj, "pong", c.provenance);
    s.field("paddle_half_height", c.pong.paddle_half_height);
    s.field("paddle_speed", c.pong.paddle_speed);
    s.field("ball_speed", c.pong.ball_speed);
    s.field("spawn_x", c.pong.spawn_x);
    s.field("spawn_cone_deg", c.pong.spawn_cone_deg);
    s.field("max_episode_steps", c.pong.max_episode_steps);
    s.finish();
  }
  {
    const json sj = top.sub("collectors");
    Section s(sj, "collectors", c.provenance);
    s.field("agent_speed", c.collectors.agent_speed);
    s.field("collect_radius", c.collectors.collect_radius);
    s.field("countdown_min", c.collectors.countdown_min);
    s.field("countdown_max", c.collectors.countdown_max);
    s.field("min_spawn_dist", c.collectors.min_spawn_dist);
    s.field("max_episode_steps", c.collectors.max_episode_steps);
    s.finish();
  }
  {
    const json sj = top.sub("interpret");
    Section s(sj, "interpret", c.provenance);
    s.field("threshold", c.interpret.threshold);
    s.field("episodes", c.interpret.episodes);
    s.field("saliency_window", c.interpret.saliency_window);
    s.field("saliency_samples", c.interpret.saliency_samples);
    s.field("full_distribution_kl", c.interpret.full_distribution_kl);
    s.field("uniform_real_noise", c.interpret.uniform_real_noise);
    s.finish();
  }
  {
    const json sj = top.sub("probe");
    Section s(sj, "probe", c.provenance);
    s.field("record_steps", c.probe.record_steps);
    s.field("validation_steps", c.probe.validation_steps);
    s.field("threshold", c.probe.threshold);
    s.field("horizon", c.probe.horizon);
    s.field("batch_size", c.probe.batch_size);
    s.field("learning_rate", c.probe.learning_rate);
    s.field("epochs", c.probe.epochs);
    s.field("hidden", c.probe.hidden);
    s.field("max_train_records", c.probe.max_train_records);
    s.finish();
  }
  top.finish();
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArtifactError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace emcom::cfg
