#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emcom/errors.hpp"
#include "emcom/rng.hpp"

namespace emcom::env {

enum class EventType { Catch, Miss, Collect, Expire };

struct Event {
  EventType type;
  int agent;  // -1 when the event is not tied to one agent (miss/expire)
  int index;  // ball or target slot
};

struct StepResult {
  std::array<std::vector<double>, 2> obs;
  std::array<double, 2> rewards{0.0, 0.0};
  bool done = false;
  bool truncated = false;
  std::vector<Event> events;
};

// Common two-agent interface for the cooperative environments. One instance
// is single-owner mutable and carries its own random stream; reset(seed)
// reseeds that stream, begin_episode() starts a fresh episode continuing it
// (used for auto-reset during rollouts).
class TwoAgentEnv {
public:
  virtual ~TwoAgentEnv() = default;

  virtual StepResult reset(std::uint64_t seed) = 0;
  virtual StepResult begin_episode() = 0;
  virtual StepResult step(const std::array<int, 2>& movement_actions) = 0;

  virtual int obs_dim() const = 0;
  virtual int num_actions() const = 0;
  virtual std::string name() const = 0;
  virtual bool terminal() const = 0;

  // Full simulator state (positions, velocities, countdowns, rng stream) as
  // an opaque blob; restore() must reproduce the exact state bit for bit.
  virtual std::string serialize_state() const = 0;
  virtual void restore_state(const std::string& blob) = 0;
};

using EnvFactory = std::function<std::unique_ptr<TwoAgentEnv>()>;

}  // namespace emcom::env
