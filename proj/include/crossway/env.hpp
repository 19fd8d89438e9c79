// Episodic multi-vehicle intersection environment. Holds one vehicle per
// configured movement type, advances double-integrator kinematics along the
// fixed paths (optionally with actuation noise), detects disc-footprint
// collisions, and scores steps with the additive event rewards.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/geometry.hpp"
#include "crossway/rng.hpp"

namespace crossway {

struct RewardTable {
  double collision = -50.0;
  double step = -1.0;
  double vehicle_pass = 10.0;
  double all_pass = 50.0;
};

struct EnvConfig {
  std::vector<VehicleType> modes{kExperimentModes.begin(), kExperimentModes.end()};
  double dt = 0.1;              // s
  double a_min = -3.0;          // m/s^2
  double a_max = 3.0;
  double v_max = 15.0;          // m/s
  double v_init_min = 3.0;
  double v_init_max = 8.0;
  double d_init_min = 30.0;     // m, distance to path center at reset
  double d_init_max = 45.0;
  double gap_min = 8.0;         // m, same-entrance initial separation
  double d_pass = 15.0;         // m, pass threshold: passed once d <= -d_pass
  double r_veh = 1.25;          // m, disc footprint radius
  double sigma_noise = 0.1;     // m/s^2, actuation noise std
  int max_steps = 200;
  RewardTable rewards;
};

struct VehicleKinematicState {
  VehicleType type = VehicleType::DR;
  double d = 0.0;
  double v = 0.0;
  bool passed = false;
  bool collided = false;
};

struct EnvState {
  std::vector<VehicleKinematicState> vehicles;  // fixed concatenation order
  int step_count = 0;
};

struct StepEvents {
  std::vector<std::pair<VehicleType, VehicleType>> collisions;
  std::vector<VehicleType> passed;
  bool all_passed = false;
  bool time_limit = false;

  bool any() const {
    return all_passed || time_limit || !collisions.empty() || !passed.empty();
  }
};

struct StepOutcome {
  Eigen::VectorXd observation;  // [d_0/zone, v_0/v_max, d_1/zone, v_1/v_max, ...]
  double reward = 0.0;
  bool done = false;
  bool truncated = false;  // done by time limit only (critic may bootstrap)
  StepEvents events;
};

namespace detail {

inline void validate_modes(const std::vector<VehicleType>& modes) {
  if (modes.empty()) {
    throw std::invalid_argument("env.modes: at least one vehicle type required");
  }
  for (std::size_t i = 0; i + 1 < modes.size(); ++i) {
    if (static_cast<int>(modes[i]) >= static_cast<int>(modes[i + 1])) {
      throw std::invalid_argument(
          "env.modes: types must be unique and in ascending type-number order");
    }
  }
}

}  // namespace detail

// Euclidean-distance collision test over non-passed vehicles.
inline std::vector<std::pair<std::size_t, std::size_t>> detect_collisions(
    const EnvState& state, const PathSet& paths, double r_veh) {
  std::vector<std::pair<std::size_t, std::size_t>> hits;
  const std::size_t n = state.vehicles.size();
  std::vector<PathSample> pose(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!state.vehicles[i].passed) {
      pose[i] = path_position(paths.of(state.vehicles[i].type), state.vehicles[i].d);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (state.vehicles[i].passed) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (state.vehicles[j].passed) continue;
      const double dx = pose[i].x - pose[j].x;
      const double dy = pose[i].y - pose[j].y;
      if (std::hypot(dx, dy) < 2.0 * r_veh) {
        hits.emplace_back(i, j);
      }
    }
  }
  return hits;
}

// One kinematics transition, shared verbatim by the environment (noise from
// `noise` when non-null) and the prior dynamics model (null). Returns the
// new state plus the step outcome; `state` itself is not modified.
inline std::pair<EnvState, StepOutcome> step_kinematics(
    const EnvState& state, std::span<const double> action, const EnvConfig& cfg,
    const PathSet& paths, RandomStream* noise) {
  const std::size_t n = state.vehicles.size();
  if (action.size() != n) {
    throw std::invalid_argument("step: expected " + std::to_string(n) +
                                " accelerations, got " +
                                std::to_string(action.size()));
  }

  EnvState next = state;
  StepOutcome out;
  for (std::size_t i = 0; i < n; ++i) {
    VehicleKinematicState& veh = next.vehicles[i];
    if (veh.passed || veh.collided) continue;
    double a = std::clamp(action[i], cfg.a_min, cfg.a_max);
    if (noise != nullptr) {
      a += noise->normal(0.0, cfg.sigma_noise);
    }
    const double displacement =
        std::max(0.0, veh.v * cfg.dt + 0.5 * a * cfg.dt * cfg.dt);
    veh.v = std::clamp(veh.v + a * cfg.dt, 0.0, cfg.v_max);
    veh.d -= displacement;
    if (veh.d <= -cfg.d_pass) {
      veh.d = -cfg.d_pass;  // frozen from here on
      veh.passed = true;
      out.events.passed.push_back(veh.type);
    }
  }

  for (const auto& [i, j] : detect_collisions(next, paths, cfg.r_veh)) {
    next.vehicles[i].collided = true;
    next.vehicles[j].collided = true;
    out.events.collisions.emplace_back(next.vehicles[i].type,
                                       next.vehicles[j].type);
  }

  next.step_count = state.step_count + 1;

  bool all_passed = true;
  for (const auto& veh : next.vehicles) all_passed &= veh.passed;
  out.events.all_passed = all_passed;
  out.events.time_limit = next.step_count >= cfg.max_steps;

  out.reward = cfg.rewards.step +
               cfg.rewards.vehicle_pass * static_cast<double>(out.events.passed.size());
  if (all_passed) out.reward += cfg.rewards.all_pass;
  if (!out.events.collisions.empty()) out.reward += cfg.rewards.collision;

  const bool terminal = all_passed || !out.events.collisions.empty();
  out.done = terminal || out.events.time_limit;
  out.truncated = out.events.time_limit && !terminal;
  return {std::move(next), std::move(out)};
}

inline Eigen::VectorXd observe(const EnvState& state, const EnvConfig& cfg,
                               const PathSet& paths) {
  Eigen::VectorXd obs(2 * static_cast<Eigen::Index>(state.vehicles.size()));
  for (std::size_t i = 0; i < state.vehicles.size(); ++i) {
    obs[2 * static_cast<Eigen::Index>(i)] =
        state.vehicles[i].d / paths.layout.zone_radius;
    obs[2 * static_cast<Eigen::Index>(i) + 1] = state.vehicles[i].v / cfg.v_max;
  }
  return obs;
}

// Draws a fresh initial state: d uniform in [d_init_min, d_init_max] with
// same-entrance pairs resampled until separated by gap_min, then v uniform
// in [v_init_min, v_init_max]. Shared by Env::reset and model rollouts.
inline EnvState draw_initial_state(const EnvConfig& cfg, RandomStream& rng) {
  EnvState state;
  state.vehicles.resize(cfg.modes.size());
  for (std::size_t i = 0; i < cfg.modes.size(); ++i) {
    state.vehicles[i].type = cfg.modes[i];
  }

  std::map<Approach, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cfg.modes.size(); ++i) {
    groups[entrance_of(cfg.modes[i])].push_back(i);
  }
  for (const auto& [approach, members] : groups) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 10000) {
        throw std::runtime_error(
            std::string("env reset: cannot separate ") + to_string(approach) +
            "-entrance vehicles by gap_min within the d_init range");
      }
      for (std::size_t idx : members) {
        state.vehicles[idx].d = rng.uniform(cfg.d_init_min, cfg.d_init_max);
      }
      bool ok = true;
      for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
          ok &= std::abs(state.vehicles[members[i]].d -
                         state.vehicles[members[j]].d) >= cfg.gap_min;
        }
      }
      if (ok) break;
    }
  }
  for (auto& veh : state.vehicles) {
    veh.v = rng.uniform(cfg.v_init_min, cfg.v_init_max);
  }
  return state;
}

class Env {
 public:
  Env(std::shared_ptr<const PathSet> paths, EnvConfig cfg)
      : paths_(std::move(paths)), cfg_(std::move(cfg)) {
    detail::validate_modes(cfg_.modes);
    for (VehicleType t : cfg_.modes) {
      const Path& p = paths_->of(t);
      if (cfg_.d_init_max > p.center_offset) {
        throw std::invalid_argument(
            std::string("env.d_init_max: ") + to_string(t) +
            " path starts at d=" + std::to_string(p.center_offset) +
            ", below the requested initial distance");
      }
      if (cfg_.d_pass > p.total_length - p.center_offset) {
        throw std::invalid_argument(
            std::string("env.d_pass: beyond the end of the ") + to_string(t) +
            " path");
      }
    }
  }

  const EnvConfig& config() const { return cfg_; }
  const PathSet& paths() const { return *paths_; }
  std::shared_ptr<const PathSet> paths_ptr() const { return paths_; }
  std::size_t n_vehicles() const { return cfg_.modes.size(); }
  int obs_dim() const { return 2 * static_cast<int>(cfg_.modes.size()); }
  int act_dim() const { return static_cast<int>(cfg_.modes.size()); }

  Eigen::VectorXd reset(std::uint64_t seed) {
    rng_.seed(seed);
    return reset_from_stream();
  }

  // Inline episode restart that keeps consuming the current random stream.
  Eigen::VectorXd reset_from_stream() {
    state_ = draw_initial_state(cfg_, rng_);
    done_ = false;
    return observe(state_, cfg_, *paths_);
  }

  StepOutcome step(std::span<const double> action, bool noise_on = true) {
    if (done_) {
      throw std::logic_error("Env::step called on a finished episode");
    }
    auto [next, out] =
        step_kinematics(state_, action, cfg_, *paths_, noise_on ? &rng_ : nullptr);
    state_ = std::move(next);
    done_ = out.done;
    out.observation = observe(state_, cfg_, *paths_);
    return out;
  }

  Eigen::VectorXd observation() const { return observe(state_, cfg_, *paths_); }
  const EnvState& state() const { return state_; }
  bool done() const { return done_; }

  // Checkpoint / test hooks.
  void restore(EnvState state, bool done) {
    state_ = std::move(state);
    done_ = done;
  }
  std::string rng_state() const { return rng_.save_state(); }
  void restore_rng(const std::string& s) { rng_.restore_state(s); }

 private:
  std::shared_ptr<const PathSet> paths_;
  EnvConfig cfg_;
  EnvState state_;
  RandomStream rng_;
  bool done_ = true;
};

}  // namespace crossway
