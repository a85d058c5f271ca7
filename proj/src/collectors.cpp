#include "emcom/collectors.hpp"

#include <cmath>

#include "emcom/bytes.hpp"

namespace emcom::env {

namespace {

double dist(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

}  // namespace

CollectorsEnv::CollectorsEnv(const CollectorsConfig& cfg) : cfg_(cfg) {}

StepResult CollectorsEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return begin_episode();
}

StepResult CollectorsEnv::begin_episode() {
  agent_pos_[0] = {0.25, 0.5};
  agent_pos_[1] = {0.75, 0.5};
  last_dir_ = {4, 4};
  for (auto& t : targets_) {
    t = spawn_target();
    t.generation = 0;
  }
  step_count_ = 0;
  done_ = false;
  return obs_only();
}

CollectorsEnv::Target CollectorsEnv::spawn_target() {
  Target t{0.5, 0.5, 0, 0};
  // Rejection sampling; with min_spawn_dist 0.2 on the unit square this
  // accepts quickly. The cap keeps pathological configs from spinning.
  for (int tries = 0; tries < 10000; ++tries) {
    t.x = rng_.uniform();
    t.y = rng_.uniform();
    if (dist(t.x, t.y, agent_pos_[0][0], agent_pos_[0][1]) >= cfg_.min_spawn_dist &&
        dist(t.x, t.y, agent_pos_[1][0], agent_pos_[1][1]) >= cfg_.min_spawn_dist)
      break;
  }
  t.countdown = cfg_.countdown_min + rng_.uniform_int(cfg_.countdown_max - cfg_.countdown_min + 1);
  return t;
}

StepResult CollectorsEnv::step(const std::array<int, 2>& movement_actions) {
  if (done_) throw UsageError("collectors: step on terminal state");
  StepResult res;

  for (int a = 0; a < 2; ++a) {
    const int act = movement_actions[a];
    if (act < 0 || act > 4) throw UsageError("collectors: movement action out of range");
    double dx = 0.0, dy = 0.0;
    switch (act) {
      case 0: dy = cfg_.agent_speed; break;
      case 1: dy = -cfg_.agent_speed; break;
      case 2: dx = -cfg_.agent_speed; break;
      case 3: dx = cfg_.agent_speed; break;
      default: break;
    }
    agent_pos_[a][0] = std::clamp(agent_pos_[a][0] + dx, 0.0, 1.0);
    agent_pos_[a][1] = std::clamp(agent_pos_[a][1] + dy, 0.0, 1.0);
    last_dir_[a] = act;
  }

  for (int s = 0; s < kNumTargets; ++s) {
    bool collected = false;
    for (int a = 0; a < 2; ++a) {
      if (dist(agent_pos_[a][0], agent_pos_[a][1], targets_[s].x, targets_[s].y) <=
          cfg_.collect_radius) {
        collected = true;
        res.rewards[a] += 1.0;
        res.events.push_back({EventType::Collect, a, s});
      }
    }
    if (collected) {
      const int gen = targets_[s].generation;
      targets_[s] = spawn_target();
      targets_[s].generation = gen + 1;
    }
  }

  bool expired = false;
  for (int s = 0; s < kNumTargets; ++s) {
    targets_[s].countdown -= 1;
    if (targets_[s].countdown <= 0) {
      expired = true;
      res.events.push_back({EventType::Expire, -1, s});
    }
  }
  if (expired) {
    res.rewards[0] -= 1.0;
    res.rewards[1] -= 1.0;
    done_ = true;
  }

  ++step_count_;
  if (!done_ && step_count_ >= cfg_.max_episode_steps) {
    done_ = true;
    res.truncated = true;
  }
  res.done = done_;
  res.obs = {make_obs(0), make_obs(1)};
  return res;
}

std::vector<double> CollectorsEnv::make_obs(int agent) const {
  std::vector<double> o;
  o.reserve(18);
  o.push_back(agent_pos_[agent][0]);
  o.push_back(agent_pos_[agent][1]);
  for (int d = 0; d < 5; ++d) o.push_back(last_dir_[agent] == d ? 1.0 : 0.0);
  for (const Target& t : targets_) {
    o.push_back(t.x);
    o.push_back(t.y);
    o.push_back(static_cast<double>(t.countdown) / cfg_.countdown_max);
  }
  o.push_back(agent == 0 ? 1.0 : 0.0);
  o.push_back(agent == 1 ? 1.0 : 0.0);
  return o;
}

StepResult CollectorsEnv::obs_only() const {
  StepResult res;
  res.obs = {make_obs(0), make_obs(1)};
  return res;
}

std::string CollectorsEnv::serialize_state() const {
  ByteWriter w;
  for (const auto& p : agent_pos_) {
    w.f64(p[0]);
    w.f64(p[1]);
  }
  w.i32(last_dir_[0]);
  w.i32(last_dir_[1]);
  for (const Target& t : targets_) {
    w.f64(t.x);
    w.f64(t.y);
    w.i32(t.countdown);
    w.i32(t.generation);
  }
  w.i32(step_count_);
  w.u8(done_ ? 1 : 0);
  w.str(rng_.state());
  return w.take();
}

void CollectorsEnv::restore_state(const std::string& blob) {
  ByteReader r(blob);
  for (auto& p : agent_pos_) {
    p[0] = r.f64();
    p[1] = r.f64();
  }
  last_dir_[0] = r.i32();
  last_dir_[1] = r.i32();
  for (Target& t : targets_) {
    t.x = r.f64();
    t.y = r.f64();
    t.countdown = r.i32();
    t.generation = r.i32();
  }
  step_count_ = r.i32();
  done_ = r.u8() != 0;
  rng_.set_state(r.str());
}

}  // namespace emcom::env
