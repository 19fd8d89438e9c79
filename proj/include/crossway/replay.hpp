// Replay export and greedy evaluation. A replay is one mean-action episode
// written as line-delimited JSON records, one per vehicle per timestep:
//   {"t":..,"vehicle_type":"DR","d":..,"v":..,"a":..,"x":..,"y":..,
//    "reward":..,"events":[..]}
// t=0 rows snapshot the initial state; later rows carry post-step state, the
// commanded (clamped) acceleration, the step reward and the step events.
#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crossway/env.hpp"
#include "crossway/net.hpp"

namespace crossway {

struct ReplayRecord {
  int t = 0;
  std::string vehicle_type;
  double d = 0.0;
  double v = 0.0;
  double a = 0.0;
  double x = 0.0;
  double y = 0.0;
  double reward = 0.0;
  std::vector<std::string> events;
};

inline std::vector<std::string> event_strings(const StepEvents& events) {
  std::vector<std::string> out;
  for (const auto& [a, b] : events.collisions) {
    out.push_back(std::string("collision(") + to_string(a) + "," + to_string(b) + ")");
  }
  for (VehicleType t : events.passed) {
    out.push_back(std::string("vehicle_passed(") + to_string(t) + ")");
  }
  if (events.all_passed) out.push_back("all_passed");
  if (events.time_limit) out.push_back("time_limit");
  return out;
}

// One evaluation episode under the deterministic mean action.
inline std::vector<ReplayRecord> run_greedy_episode(const ActorCriticNet& net,
                                                    const ParameterSet& params,
                                                    Env& env, std::uint64_t seed,
                                                    bool noise_on = true) {
  ActorCriticNet::Workspace ws;
  std::vector<ReplayRecord> records;
  env.reset(seed);

  auto emit = [&](int t, const Eigen::VectorXd* command, double reward,
                  const std::vector<std::string>& events) {
    for (std::size_t i = 0; i < env.state().vehicles.size(); ++i) {
      const auto& veh = env.state().vehicles[i];
      ReplayRecord rec;
      rec.t = t;
      rec.vehicle_type = to_string(veh.type);
      rec.d = veh.d;
      rec.v = veh.v;
      rec.a = (command != nullptr && !veh.passed && !veh.collided)
                  ? (*command)[static_cast<Eigen::Index>(i)]
                  : 0.0;
      const PathSample pose = path_position(env.paths().of(veh.type), veh.d);
      rec.x = pose.x;
      rec.y = pose.y;
      rec.reward = reward;
      rec.events = events;
      records.push_back(std::move(rec));
    }
  };

  emit(0, nullptr, 0.0, {});
  int t = 1;
  while (!env.done()) {
    const GaussianPolicyOutput policy =
        net.actor_forward_single(params, env.observation(), ws);
    Eigen::VectorXd command = policy.mean;
    for (Eigen::Index j = 0; j < command.size(); ++j) {
      command[j] = std::clamp(command[j], env.config().a_min, env.config().a_max);
    }
    const StepOutcome out = env.step(
        std::span<const double>(command.data(), static_cast<std::size_t>(command.size())),
        noise_on);
    emit(t, &command, out.reward, event_strings(out.events));
    ++t;
  }
  return records;
}

inline void write_replay(const std::filesystem::path& path,
                         const std::vector<ReplayRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("replay: cannot open " + path.string());
  }
  for (const auto& rec : records) {
    nlohmann::json j;
    j["t"] = rec.t;
    j["vehicle_type"] = rec.vehicle_type;
    j["d"] = rec.d;
    j["v"] = rec.v;
    j["a"] = rec.a;
    j["x"] = rec.x;
    j["y"] = rec.y;
    j["reward"] = rec.reward;
    j["events"] = rec.events;
    out << j.dump() << "\n";
  }
  out.flush();
  if (!out) {
    throw std::runtime_error("replay: write failed on " + path.string());
  }
}

inline std::vector<ReplayRecord> parse_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("replay: cannot open " + path.string());
  }
  std::vector<ReplayRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ReplayRecord rec;
    rec.t = j.at("t").get<int>();
    rec.vehicle_type = j.at("vehicle_type").get<std::string>();
    rec.d = j.at("d").get<double>();
    rec.v = j.at("v").get<double>();
    rec.a = j.at("a").get<double>();
    rec.x = j.at("x").get<double>();
    rec.y = j.at("y").get<double>();
    rec.reward = j.at("reward").get<double>();
    rec.events = j.at("events").get<std::vector<std::string>>();
    records.push_back(std::move(rec));
  }
  return records;
}

struct EvalStats {
  int episodes = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_length = 0.0;
  double collision_rate = 0.0;
};

// Greedy evaluation over N episodes with per-episode derived seeds.
inline EvalStats evaluate_policy(const ActorCriticNet& net,
                                 const ParameterSet& params, Env& env,
                                 int episodes, std::uint64_t base_seed,
                                 bool noise_on = true) {
  if (episodes <= 0) {
    throw std::invalid_argument("evaluate_policy: episodes must be positive");
  }
  ActorCriticNet::Workspace ws;
  std::vector<double> returns;
  int collisions = 0;
  std::int64_t total_len = 0;
  for (int e = 0; e < episodes; ++e) {
    env.reset(mix_seed(base_seed, static_cast<std::uint64_t>(e)));
    double ret = 0.0;
    bool collided = false;
    int len = 0;
    while (!env.done()) {
      const GaussianPolicyOutput policy =
          net.actor_forward_single(params, env.observation(), ws);
      const StepOutcome out = env.step(
          std::span<const double>(policy.mean.data(),
                                  static_cast<std::size_t>(policy.mean.size())),
          noise_on);
      ret += out.reward;
      len += 1;
      collided |= !out.events.collisions.empty();
    }
    returns.push_back(ret);
    collisions += collided ? 1 : 0;
    total_len += len;
  }
  EvalStats stats;
  stats.episodes = episodes;
  for (double r : returns) stats.mean_reward += r;
  stats.mean_reward /= episodes;
  for (double r : returns) {
    stats.std_reward += (r - stats.mean_reward) * (r - stats.mean_reward);
  }
  stats.std_reward = std::sqrt(stats.std_reward / episodes);
  stats.mean_length = static_cast<double>(total_len) / episodes;
  stats.collision_rate = static_cast<double>(collisions) / episodes;
  return stats;
}

}  // namespace crossway
