#include "emcom/pong.hpp"

#include <cmath>

#include "emcom/bytes.hpp"

namespace emcom::env {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

PongEnv::PongEnv(const PongConfig& cfg) : cfg_(cfg) {}

StepResult PongEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return begin_episode();
}

StepResult PongEnv::begin_episode() {
  paddle_y_ = {0.5, 0.5};
  const double cone = cfg_.spawn_cone_deg * kPi / 180.0;
  for (auto& b : balls_) {
    b.x = cfg_.spawn_x;
    b.y = rng_.uniform();
    const double heading = rng_.uniform_range(-cone, cone);
    b.vx = cfg_.ball_speed * std::cos(heading);
    b.vy = cfg_.ball_speed * std::sin(heading);
  }
  step_count_ = 0;
  done_ = false;
  return obs_only();
}

StepResult PongEnv::step(const std::array<int, 2>& movement_actions) {
  if (done_) throw UsageError("pong: step on terminal state");
  StepResult res;

  for (int a = 0; a < 2; ++a) {
    const int act = movement_actions[a];
    if (act < 0 || act > 2) throw UsageError("pong: movement action out of range");
    const double dir = (act == 0) ? 1.0 : (act == 2) ? -1.0 : 0.0;
    const double hh = cfg_.paddle_half_height;
    paddle_y_[a] = std::clamp(paddle_y_[a] + dir * cfg_.paddle_speed, hh, 1.0 - hh);
  }

  bool missed = false;
  for (int bi = 0; bi < 2; ++bi) {
    Ball& b = balls_[bi];
    b.x += b.vx;
    b.y += b.vy;
    if (b.y < 0.0) {
      b.y = -b.y;
      b.vy = -b.vy;
    } else if (b.y > 1.0) {
      b.y = 2.0 - b.y;
      b.vy = -b.vy;
    }
    if (b.x < 0.0) {
      b.x = -b.x;
      b.vx = -b.vx;
    }
    if (b.x >= 1.0) {
      bool caught = false;
      for (int a = 0; a < 2; ++a) {
        if (std::abs(b.y - paddle_y_[a]) <= cfg_.paddle_half_height) {
          caught = true;
          res.rewards[a] += 1.0;
          res.events.push_back({EventType::Catch, a, bi});
        }
      }
      if (caught) {
        b.x = 2.0 - b.x;
        b.vx = -b.vx;
      } else {
        missed = true;
        res.events.push_back({EventType::Miss, -1, bi});
      }
    }
  }

  if (missed) {
    // One -1 for both agents even if both balls got through the same step.
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

std::vector<double> PongEnv::make_obs(int agent) const {
  std::vector<double> o;
  o.reserve(11);
  o.push_back(paddle_y_[agent]);
  for (const Ball& b : balls_) {
    o.push_back(b.x);
    o.push_back(b.y);
    o.push_back(b.vx / cfg_.ball_speed);
    o.push_back(b.vy / cfg_.ball_speed);
  }
  o.push_back(agent == 0 ? 1.0 : 0.0);
  o.push_back(agent == 1 ? 1.0 : 0.0);
  return o;
}

StepResult PongEnv::obs_only() const {
  StepResult res;
  res.obs = {make_obs(0), make_obs(1)};
  return res;
}

std::string PongEnv::serialize_state() const {
  ByteWriter w;
  w.f64(paddle_y_[0]);
  w.f64(paddle_y_[1]);
  for (const Ball& b : balls_) {
    w.f64(b.x);
    w.f64(b.y);
    w.f64(b.vx);
    w.f64(b.vy);
  }
  w.i32(step_count_);
  w.u8(done_ ? 1 : 0);
  w.str(rng_.state());
  return w.take();
}

void PongEnv::restore_state(const std::string& blob) {
  ByteReader r(blob);
  paddle_y_[0] = r.f64();
  paddle_y_[1] = r.f64();
  for (Ball& b : balls_) {
    b.x = r.f64();
    b.y = r.f64();
    b.vx = r.f64();
    b.vy = r.f64();
  }
  step_count_ = r.i32();
  done_ = r.u8() != 0;
  rng_.set_state(r.str());
}

}  // namespace emcom::env
