// Versioned training checkpoints: a plain-text manifest (counters, worker
// bookkeeping, rng engine states, config echo) followed by a little-endian
// binary block of 64-bit floats covering every real-valued quantity, guarded
// by an FNV-1a checksum. Save -> load is bitwise identity for all numbers.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/geometry.hpp"
#include "crossway/trainer.hpp"

namespace crossway {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string algo;         // effective algorithm for the run
  std::string config_text;  // full RunConfig echo
  TrainerSnapshot state;
};

namespace detail {

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline void push_doubles(std::vector<unsigned char>& bytes,
                         const std::vector<double>& values) {
  for (double v : values) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      bytes.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xff));
    }
  }
}

inline std::vector<double> pop_doubles(const std::vector<unsigned char>& bytes,
                                       std::size_t& cursor, std::size_t count) {
  if (cursor + 8 * count > bytes.size()) {
    throw CheckpointError("checkpoint: payload shorter than manifest promises");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t u = 0;
    for (int b = 7; b >= 0; --b) {
      u = (u << 8) | bytes[cursor + i * 8 + static_cast<std::size_t>(b)];
    }
    out[i] = std::bit_cast<double>(u);
  }
  cursor += 8 * count;
  return out;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ckpt) {
  const TrainerSnapshot& s = ckpt.state;

  // Assemble the numeric payload in manifest order.
  std::vector<unsigned char> payload;
  detail::push_doubles(payload, s.params);
  detail::push_doubles(payload, s.adam_m_actor);
  detail::push_doubles(payload, s.adam_v_actor);
  detail::push_doubles(payload, s.adam_m_critic);
  detail::push_doubles(payload, s.adam_v_critic);
  for (const auto& w : s.workers) {
    std::vector<double> values;
    for (const auto& veh : w.env_state.vehicles) {
      values.push_back(veh.d);
      values.push_back(veh.v);
    }
    values.push_back(w.episode_return);
    detail::push_doubles(payload, values);
  }
  detail::push_doubles(payload, {s.last_mean_ep_reward, s.last_mean_ep_len});

  std::ostringstream out;
  out << "crossway-checkpoint " << ckpt.version << "\n";
  out << "algo " << ckpt.algo << "\n";
  out << "iteration " << s.iteration << "\n";
  out << "env_steps " << s.env_steps << "\n";
  out << "model_steps " << s.model_steps << "\n";
  out << "seed " << s.seed << "\n";
  out << "params " << s.params.size() << "\n";
  out << "adam_actor " << s.adam_m_actor.size() << " " << s.adam_t_actor << "\n";
  out << "adam_critic " << s.adam_m_critic.size() << " " << s.adam_t_critic << "\n";
  out << "workers " << s.workers.size() << "\n";
  for (const auto& w : s.workers) {
    out << "worker_begin\n";
    out << "step_count " << w.env_state.step_count << "\n";
    out << "env_done " << (w.env_done ? 1 : 0) << "\n";
    out << "episode_length " << w.episode_length << "\n";
    out << "vehicles";
    for (const auto& veh : w.env_state.vehicles) {
      out << " " << to_string(veh.type) << ":" << (veh.passed ? 1 : 0)
          << (veh.collided ? 1 : 0);
    }
    out << "\n";
    out << "env_rng " << w.env_rng << "\n";
    out << "sampler_rng " << w.sampler_rng << "\n";
    out << "worker_end\n";
  }
  out << "config_begin\n" << ckpt.config_text;
  if (!ckpt.config_text.empty() && ckpt.config_text.back() != '\n') out << "\n";
  out << "config_end\n";
  out << "payload_bytes " << payload.size() << "\n";
  out << "payload_fnv1a " << detail::fnv1a(payload.data(), payload.size()) << "\n";
  out << "BINARY\n";

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) {
      throw CheckpointError("checkpoint: cannot open " + tmp.string());
    }
    const std::string header = out.str();
    file.write(header.data(), static_cast<std::streamsize>(header.size()));
    file.write(reinterpret_cast<const char*>(payload.data()),
               static_cast<std::streamsize>(payload.size()));
    if (!file) {
      throw CheckpointError("checkpoint: write failed on " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw CheckpointError("checkpoint: cannot open " + path.string());
  }

  Checkpoint ckpt;
  TrainerSnapshot& s = ckpt.state;
  std::string line;
  auto next_line = [&](const char* context) -> std::string {
    if (!std::getline(file, line)) {
      throw CheckpointError(std::string("checkpoint: truncated before ") + context);
    }
    return line;
  };

  {
    std::istringstream ss(next_line("magic"));
    std::string magic;
    std::uint32_t version = 0;
    ss >> magic >> version;
    if (magic != "crossway-checkpoint") {
      throw CheckpointError("checkpoint: bad magic in " + path.string());
    }
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint: unsupported version " +
                            std::to_string(version));
    }
    ckpt.version = version;
  }

  std::size_t params_count = 0, adam_a_count = 0, adam_c_count = 0,
              worker_count = 0;
  auto expect_kv = [&](const char* key) -> std::istringstream {
    std::istringstream ss(next_line(key));
    std::string k;
    ss >> k;
    if (k != key) {
      throw CheckpointError(std::string("checkpoint: expected '") + key +
                            "', got '" + k + "'");
    }
    return ss;
  };

  expect_kv("algo") >> ckpt.algo;
  expect_kv("iteration") >> s.iteration;
  expect_kv("env_steps") >> s.env_steps;
  expect_kv("model_steps") >> s.model_steps;
  expect_kv("seed") >> s.seed;
  expect_kv("params") >> params_count;
  expect_kv("adam_actor") >> adam_a_count >> s.adam_t_actor;
  expect_kv("adam_critic") >> adam_c_count >> s.adam_t_critic;
  expect_kv("workers") >> worker_count;

  std::vector<std::size_t> vehicle_counts;
  for (std::size_t k = 0; k < worker_count; ++k) {
    if (next_line("worker_begin") != "worker_begin") {
      throw CheckpointError("checkpoint: expected worker_begin");
    }
    TrainerSnapshot::WorkerSnapshot w;
    expect_kv("step_count") >> w.env_state.step_count;
    int done_flag = 0;
    expect_kv("env_done") >> done_flag;
    w.env_done = done_flag != 0;
    expect_kv("episode_length") >> w.episode_length;
    {
      std::istringstream ss = expect_kv("vehicles");
      std::string item;
      while (ss >> item) {
        const auto colon = item.find(':');
        if (colon == std::string::npos || item.size() != colon + 3) {
          throw CheckpointError("checkpoint: malformed vehicle entry '" + item + "'");
        }
        const auto type = vehicle_type_from_string(item.substr(0, colon));
        if (!type) {
          throw CheckpointError("checkpoint: unknown vehicle type in '" + item + "'");
        }
        VehicleKinematicState veh;
        veh.type = *type;
        veh.passed = item[colon + 1] == '1';
        veh.collided = item[colon + 2] == '1';
        w.env_state.vehicles.push_back(veh);
      }
    }
    {
      const std::string l = next_line("env_rng");
      if (l.rfind("env_rng ", 0) != 0) {
        throw CheckpointError("checkpoint: expected env_rng");
      }
      w.env_rng = l.substr(8);
    }
    {
      const std::string l = next_line("sampler_rng");
      if (l.rfind("sampler_rng ", 0) != 0) {
        throw CheckpointError("checkpoint: expected sampler_rng");
      }
      w.sampler_rng = l.substr(12);
    }
    if (next_line("worker_end") != "worker_end") {
      throw CheckpointError("checkpoint: expected worker_end");
    }
    vehicle_counts.push_back(w.env_state.vehicles.size());
    s.workers.push_back(std::move(w));
  }

  if (next_line("config_begin") != "config_begin") {
    throw CheckpointError("checkpoint: expected config_begin");
  }
  while (next_line("config body") != "config_end") {
    ckpt.config_text += line;
    ckpt.config_text += "\n";
  }

  std::size_t payload_bytes = 0;
  std::uint64_t expected_hash = 0;
  expect_kv("payload_bytes") >> payload_bytes;
  expect_kv("payload_fnv1a") >> expected_hash;
  if (next_line("BINARY") != "BINARY") {
    throw CheckpointError("checkpoint: expected BINARY marker");
  }

  std::vector<unsigned char> payload(payload_bytes);
  file.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::size_t>(file.gcount()) != payload_bytes) {
    throw CheckpointError("checkpoint: truncated payload in " + path.string());
  }
  if (detail::fnv1a(payload.data(), payload.size()) != expected_hash) {
    throw CheckpointError("checkpoint: payload checksum mismatch in " +
                          path.string());
  }

  std::size_t cursor = 0;
  s.params = detail::pop_doubles(payload, cursor, params_count);
  s.adam_m_actor = detail::pop_doubles(payload, cursor, adam_a_count);
  s.adam_v_actor = detail::pop_doubles(payload, cursor, adam_a_count);
  s.adam_m_critic = detail::pop_doubles(payload, cursor, adam_c_count);
  s.adam_v_critic = detail::pop_doubles(payload, cursor, adam_c_count);
  for (std::size_t k = 0; k < worker_count; ++k) {
    const std::vector<double> values =
        detail::pop_doubles(payload, cursor, 2 * vehicle_counts[k] + 1);
    auto& w = s.workers[k];
    for (std::size_t i = 0; i < vehicle_counts[k]; ++i) {
      w.env_state.vehicles[i].d = values[2 * i];
      w.env_state.vehicles[i].v = values[2 * i + 1];
    }
    w.episode_return = values.back();
  }
  {
    const std::vector<double> tail = detail::pop_doubles(payload, cursor, 2);
    s.last_mean_ep_reward = tail[0];
    s.last_mean_ep_len = tail[1];
  }
  if (cursor != payload.size()) {
    throw CheckpointError("checkpoint: trailing payload bytes in " + path.string());
  }
  return ckpt;
}

}  // namespace crossway
