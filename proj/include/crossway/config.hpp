// Run configuration: a flat key/value text format with dotted section names
// covering the intersection layout, environment constants, network shape and
// training hyperparameters. Unknown keys are rejected; unspecified keys take
// the published defaults. Serialization order is canonical so a load ->
// serialize -> load round trip is the identity.
#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/dynamics_model.hpp"
#include "crossway/env.hpp"
#include "crossway/geometry.hpp"
#include "crossway/net.hpp"
#include "crossway/trainer.hpp"

namespace crossway {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  IntersectionLayout layout;
  EnvConfig env;
  NetConfig net;  // obs/act dims are derived from env.modes, not keys
  ModelRolloutConfig model;
  TrainConfig train;
  bool deterministic = true;
  std::string out_dir;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

inline std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(value);
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) {
      item.erase(item.begin());
    }
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) {
      item.pop_back();
    }
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Field>& config_fields() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    auto dbl = [&f](const std::string& key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const std::string& v) {
                     c.*member = parse_double(key, v);
                   },
                   [member](const RunConfig& c) { return format_double(c.*member); }});
    };
    auto dbl2 = [&f](const std::string& key, auto outer, auto member) {
      f.push_back({key,
                   [key, outer, member](RunConfig& c, const std::string& v) {
                     (c.*outer).*member = parse_double(key, v);
                   },
                   [outer, member](const RunConfig& c) {
                     return format_double((c.*outer).*member);
                   }});
    };
    auto int2 = [&f](const std::string& key, auto outer, auto member) {
      f.push_back({key,
                   [key, outer, member](RunConfig& c, const std::string& v) {
                     using T = std::decay_t<decltype((c.*outer).*member)>;
                     (c.*outer).*member = static_cast<T>(parse_int(key, v));
                   },
                   [outer, member](const RunConfig& c) {
                     return std::to_string((c.*outer).*member);
                   }});
    };

    dbl2("layout.zone_radius", &RunConfig::layout, &IntersectionLayout::zone_radius);
    dbl2("layout.lane_width", &RunConfig::layout, &IntersectionLayout::lane_width);
    dbl2("layout.right_turn_radius", &RunConfig::layout,
         &IntersectionLayout::right_turn_radius);
    dbl2("layout.left_turn_radius", &RunConfig::layout,
         &IntersectionLayout::left_turn_radius);
    dbl2("layout.sample_resolution", &RunConfig::layout,
         &IntersectionLayout::sample_resolution);

    f.push_back({"env.modes",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<VehicleType> modes;
                   for (const std::string& name : split_list(v)) {
                     const auto t = vehicle_type_from_string(name);
                     if (!t) {
                       throw ConfigError("env.modes: unknown vehicle type '" +
                                         name + "'");
                     }
                     modes.push_back(*t);
                   }
                   c.env.modes = std::move(modes);
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.env.modes.size(); ++i) {
                     if (i > 0) out += ",";
                     out += to_string(c.env.modes[i]);
                   }
                   return out;
                 }});
    dbl2("env.dt", &RunConfig::env, &EnvConfig::dt);
    dbl2("env.a_min", &RunConfig::env, &EnvConfig::a_min);
    dbl2("env.a_max", &RunConfig::env, &EnvConfig::a_max);
    dbl2("env.v_max", &RunConfig::env, &EnvConfig::v_max);
    dbl2("env.v_init_min", &RunConfig::env, &EnvConfig::v_init_min);
    dbl2("env.v_init_max", &RunConfig::env, &EnvConfig::v_init_max);
    dbl2("env.d_init_min", &RunConfig::env, &EnvConfig::d_init_min);
    dbl2("env.d_init_max", &RunConfig::env, &EnvConfig::d_init_max);
    dbl2("env.gap_min", &RunConfig::env, &EnvConfig::gap_min);
    dbl2("env.d_pass", &RunConfig::env, &EnvConfig::d_pass);
    dbl2("env.r_veh", &RunConfig::env, &EnvConfig::r_veh);
    dbl2("env.sigma_noise", &RunConfig::env, &EnvConfig::sigma_noise);
    int2("env.max_steps", &RunConfig::env, &EnvConfig::max_steps);

    f.push_back({"reward.collision",
                 [](RunConfig& c, const std::string& v) {
                   c.env.rewards.collision = parse_double("reward.collision", v);
                 },
                 [](const RunConfig& c) {
                   return format_double(c.env.rewards.collision);
                 }});
    f.push_back({"reward.step",
                 [](RunConfig& c, const std::string& v) {
                   c.env.rewards.step = parse_double("reward.step", v);
                 },
                 [](const RunConfig& c) { return format_double(c.env.rewards.step); }});
    f.push_back({"reward.vehicle_pass",
                 [](RunConfig& c, const std::string& v) {
                   c.env.rewards.vehicle_pass = parse_double("reward.vehicle_pass", v);
                 },
                 [](const RunConfig& c) {
                   return format_double(c.env.rewards.vehicle_pass);
                 }});
    f.push_back({"reward.all_pass",
                 [](RunConfig& c, const std::string& v) {
                   c.env.rewards.all_pass = parse_double("reward.all_pass", v);
                 },
                 [](const RunConfig& c) {
                   return format_double(c.env.rewards.all_pass);
                 }});

    int2("net.hidden_layers", &RunConfig::net, &NetConfig::hidden_layers);
    int2("net.hidden_units", &RunConfig::net, &NetConfig::hidden_units);
    dbl2("net.sigma_min", &RunConfig::net, &NetConfig::sigma_min);
    dbl2("net.sigma_init", &RunConfig::net, &NetConfig::sigma_init);

    f.push_back({"train.algo",
                 [](RunConfig& c, const std::string& v) {
                   const auto a = algo_from_string(v);
                   if (!a) {
                     throw ConfigError("train.algo: expected ppo or mappo, got '" +
                                       v + "'");
                   }
                   c.train.algo = *a;
                 },
                 [](const RunConfig& c) { return to_string(c.train.algo); }});
    dbl2("train.gamma", &RunConfig::train, &TrainConfig::gamma);
    dbl2("train.lambda", &RunConfig::train, &TrainConfig::lambda);
    dbl2("train.clip_epsilon", &RunConfig::train, &TrainConfig::clip_epsilon);
    int2("train.total_timesteps", &RunConfig::train, &TrainConfig::total_timesteps);
    int2("train.inner_iterations", &RunConfig::train, &TrainConfig::inner_iterations);
    int2("train.batch_size", &RunConfig::train, &TrainConfig::batch_size);
    int2("train.minibatch_size", &RunConfig::train, &TrainConfig::minibatch_size);
    int2("train.epochs", &RunConfig::train, &TrainConfig::epochs);
    dbl2("train.lr_start", &RunConfig::train, &TrainConfig::lr_start);
    int2("train.workers", &RunConfig::train, &TrainConfig::workers);
    f.push_back({"train.seeds",
                 [](RunConfig& c, const std::string& v) {
                   std::vector<std::uint64_t> seeds;
                   for (const std::string& item : split_list(v)) {
                     seeds.push_back(static_cast<std::uint64_t>(
                         parse_int("train.seeds", item)));
                   }
                   c.train.seeds = std::move(seeds);
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.train.seeds.size(); ++i) {
                     if (i > 0) out += ",";
                     out += std::to_string(c.train.seeds[i]);
                   }
                   return out;
                 }});
    dbl2("train.adam_epsilon", &RunConfig::train, &TrainConfig::adam_epsilon);
    dbl2("train.adam_beta1", &RunConfig::train, &TrainConfig::adam_beta1);
    dbl2("train.adam_beta2", &RunConfig::train, &TrainConfig::adam_beta2);
    dbl2("train.entropy_coef", &RunConfig::train, &TrainConfig::entropy_coef);
    dbl2("train.value_clip_epsilon", &RunConfig::train,
         &TrainConfig::value_clip_epsilon);
    dbl2("train.max_grad_norm", &RunConfig::train, &TrainConfig::max_grad_norm);
    int2("train.checkpoint_interval", &RunConfig::train,
         &TrainConfig::checkpoint_interval);

    int2("model.horizon", &RunConfig::model, &ModelRolloutConfig::horizon);
    f.push_back({"model.restart",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "initial") {
                     c.model.restart = ModelRolloutConfig::Restart::InitialDistribution;
                   } else if (v == "real_states") {
                     c.model.restart = ModelRolloutConfig::Restart::RealStatePool;
                   } else {
                     throw ConfigError(
                         "model.restart: expected initial or real_states, got '" + v +
                         "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return c.model.restart ==
                                  ModelRolloutConfig::Restart::InitialDistribution
                              ? "initial"
                              : "real_states";
                 }});

    f.push_back({"io.deterministic",
                 [](RunConfig& c, const std::string& v) {
                   c.deterministic = parse_bool("io.deterministic", v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.deterministic ? "true" : "false");
                 }});
    f.push_back({"io.out_dir",
                 [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const RunConfig& c) { return c.out_dir; }});
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void validate_run_config(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };

  require(cfg.layout.zone_radius > 0.0, "layout.zone_radius: must be positive");
  require(cfg.layout.lane_width > 0.0, "layout.lane_width: must be positive");
  require(cfg.layout.sample_resolution > 0.0 && cfg.layout.sample_resolution <= 1.0,
          "layout.sample_resolution: must be in (0, 1]");
  require(cfg.layout.right_turn_radius > 0.0 &&
              cfg.layout.right_turn_radius <
                  cfg.layout.zone_radius - cfg.layout.lane_width / 2.0,
          "layout.right_turn_radius: infeasible for the lane offsets");
  require(cfg.layout.left_turn_radius > 0.0 &&
              cfg.layout.left_turn_radius <
                  cfg.layout.zone_radius + cfg.layout.lane_width / 2.0,
          "layout.left_turn_radius: infeasible for the lane offsets");

  require(!cfg.env.modes.empty(), "env.modes: at least one vehicle type required");
  for (std::size_t i = 0; i + 1 < cfg.env.modes.size(); ++i) {
    require(static_cast<int>(cfg.env.modes[i]) < static_cast<int>(cfg.env.modes[i + 1]),
            "env.modes: types must be unique and in ascending type-number order");
  }
  require(cfg.env.dt > 0.0, "env.dt: must be positive");
  require(cfg.env.a_min < cfg.env.a_max, "env.a_min: must be below env.a_max");
  require(cfg.env.v_max > 0.0, "env.v_max: must be positive");
  require(cfg.env.v_init_min >= 0.0 && cfg.env.v_init_min <= cfg.env.v_init_max &&
              cfg.env.v_init_max <= cfg.env.v_max,
          "env.v_init_min/env.v_init_max: need 0 <= min <= max <= v_max");
  require(cfg.env.d_init_min > 0.0 && cfg.env.d_init_min <= cfg.env.d_init_max,
          "env.d_init_min/env.d_init_max: need 0 < min <= max");
  require(cfg.env.gap_min >= 0.0, "env.gap_min: must be non-negative");
  require(cfg.env.d_pass > 0.0, "env.d_pass: must be positive");
  require(cfg.env.r_veh > 0.0, "env.r_veh: must be positive");
  require(cfg.env.sigma_noise >= 0.0, "env.sigma_noise: must be non-negative");
  require(cfg.env.max_steps > 0, "env.max_steps: must be positive");

  // Same-entrance separation must be feasible within the initial range.
  {
    std::map<Approach, int> group_sizes;
    for (VehicleType t : cfg.env.modes) group_sizes[entrance_of(t)] += 1;
    for (const auto& [approach, n] : group_sizes) {
      require(static_cast<double>(n - 1) * cfg.env.gap_min <
                  cfg.env.d_init_max - cfg.env.d_init_min ||
              n <= 1,
              std::string("env.gap_min: ") + std::to_string(n) + " vehicles on the " +
                  to_string(approach) +
                  " entrance cannot be separated within the d_init range");
    }
  }

  // Geometry-dependent checks: initial distances must lie on every path.
  {
    const PathSet paths = build_paths(cfg.layout);
    for (VehicleType t : cfg.env.modes) {
      const Path& p = paths.of(t);
      require(cfg.env.d_init_max <= p.center_offset,
              std::string("env.d_init_max: exceeds the ") + to_string(t) +
                  " path start (d=" + detail::format_double(p.center_offset) + ")");
      require(cfg.env.d_pass <= p.total_length - p.center_offset,
              std::string("env.d_pass: beyond the end of the ") + to_string(t) +
                  " path");
    }
  }

  require(cfg.net.hidden_layers >= 1, "net.hidden_layers: must be at least 1");
  require(cfg.net.hidden_units >= 1, "net.hidden_units: must be at least 1");
  require(cfg.net.sigma_min > 0.0, "net.sigma_min: must be positive");
  require(cfg.net.sigma_init > cfg.net.sigma_min,
          "net.sigma_init: must exceed net.sigma_min");

  require(cfg.train.gamma > 0.0 && cfg.train.gamma < 1.0,
          "train.gamma: must be in (0, 1)");
  require(cfg.train.lambda >= 0.0 && cfg.train.lambda <= 1.0,
          "train.lambda: must be in [0, 1]");
  require(cfg.train.clip_epsilon > 0.0 && cfg.train.clip_epsilon < 1.0,
          "train.clip_epsilon: must be in (0, 1)");
  require(cfg.train.total_timesteps >= 1, "train.total_timesteps: must be positive");
  require(cfg.train.inner_iterations >= 0,
          "train.inner_iterations: must be non-negative");
  require(cfg.train.batch_size >= 1, "train.batch_size: must be positive");
  require(cfg.train.minibatch_size >= 1 &&
              cfg.train.batch_size % cfg.train.minibatch_size == 0,
          "train.minibatch_size: must divide train.batch_size");
  require(cfg.train.epochs >= 1, "train.epochs: must be positive");
  require(cfg.train.lr_start >= 0.0, "train.lr_start: must be non-negative");
  require(cfg.train.workers >= 1, "train.workers: must be at least 1");
  require(!cfg.train.seeds.empty(), "train.seeds: at least one seed required");
  require(cfg.train.adam_epsilon > 0.0, "train.adam_epsilon: must be positive");
  require(cfg.train.adam_beta1 >= 0.0 && cfg.train.adam_beta1 < 1.0,
          "train.adam_beta1: must be in [0, 1)");
  require(cfg.train.adam_beta2 >= 0.0 && cfg.train.adam_beta2 < 1.0,
          "train.adam_beta2: must be in [0, 1)");
  require(cfg.train.checkpoint_interval >= 1,
          "train.checkpoint_interval: must be positive");
  require(cfg.env.max_steps <= cfg.train.batch_size,
          "env.max_steps: must not exceed train.batch_size");

  require(cfg.model.horizon >= 1, "model.horizon: must be positive");
}

inline RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.erase(s.begin());
      }
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.pop_back();
      }
      return s;
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& field : detail::config_fields()) {
      if (field.key == key) {
        field.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  validate_run_config(cfg);
  return cfg;
}

inline std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& field : detail::config_fields()) {
    out += field.key;
    out += " = ";
    out += field.get(cfg);
    out += "\n";
  }
  return out;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

// Network config with dimensions filled in from the environment modes.
inline NetConfig derive_net_config(const RunConfig& cfg) {
  NetConfig net = cfg.net;
  net.obs_dim = 2 * static_cast<int>(cfg.env.modes.size());
  net.act_dim = static_cast<int>(cfg.env.modes.size());
  return net;
}

}  // namespace crossway
