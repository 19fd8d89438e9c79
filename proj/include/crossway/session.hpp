// Per-seed run management: builds a trainer from a RunConfig, drives it to
// the timestep budget, streams metrics rows, writes periodic and final
// checkpoints, and isolates per-seed failures. Resuming from a checkpoint
// continues the metrics stream exactly as an uninterrupted run would in
// deterministic mode.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crossway/checkpoint.hpp"
#include "crossway/config.hpp"
#include "crossway/metrics.hpp"
#include "crossway/trainer.hpp"

namespace crossway {

struct SeedRunOptions {
  std::optional<std::int64_t> stop_after_iterations;  // hard cut for tests
  std::optional<double> stop_at_reward;  // stop once mean episode reward exceeds
  Trainer::Options trainer;              // worker-seed hooks for tests
  std::function<void(std::uint64_t, const IterationReport&)> on_report;
};

struct SeedRunResult {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::filesystem::path dir;
  std::vector<IterationReport> reports;
  // Real env steps at the end of the first iteration whose mean episode
  // reward exceeded stop_at_reward; -1 if never reached.
  std::int64_t first_threshold_steps = -1;
};

namespace detail {

inline SeedRunResult run_one_seed(const RunConfig& cfg, std::uint64_t seed,
                                  const std::filesystem::path& dir,
                                  const SeedRunOptions& opts,
                                  std::unique_ptr<Trainer> trainer,
                                  bool append_metrics) {
  SeedRunResult result;
  result.seed = seed;
  result.dir = dir;
  std::filesystem::create_directories(dir);

  try {
    MetricsWriter metrics(dir / "metrics.csv", append_metrics);
    if (!append_metrics) {
      std::ofstream echo(dir / "config.txt", std::ios::trunc);
      echo << serialize_run_config(cfg);
    }

    auto save = [&](const std::filesystem::path& path) {
      Checkpoint ckpt;
      ckpt.algo = to_string(cfg.train.algo);
      ckpt.config_text = serialize_run_config(cfg);
      ckpt.state = trainer->snapshot();
      save_checkpoint(path, ckpt);
    };

    std::int64_t iterations_run = 0;
    while (!trainer->finished()) {
      if (opts.stop_after_iterations &&
          iterations_run >= *opts.stop_after_iterations) {
        break;
      }
      const IterationReport report = trainer->run_iteration();
      metrics.write(report);
      result.reports.push_back(report);
      iterations_run += 1;
      if (opts.on_report) opts.on_report(seed, report);

      if (opts.stop_at_reward && result.first_threshold_steps < 0 &&
          report.episodes_completed > 0 &&
          report.mean_ep_reward > *opts.stop_at_reward) {
        result.first_threshold_steps = report.env_steps;
      }
      if (trainer->iteration() % cfg.train.checkpoint_interval == 0) {
        save(dir / "checkpoint.ckpt");
      }
      if (opts.stop_at_reward && result.first_threshold_steps >= 0) {
        break;  // threshold reached; stop early
      }
    }
    save(dir / "checkpoint_final.ckpt");
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = e.what();
  }
  return result;
}

}  // namespace detail

inline std::filesystem::path seed_dir(const std::filesystem::path& out_root,
                                      std::uint64_t seed) {
  return out_root / ("seed_" + std::to_string(seed));
}

// Trains every configured seed (or the override list); each seed gets an
// independent artifact directory with metrics.csv, config.txt and
// checkpoints. A failing seed reports its error and the rest continue.
inline std::vector<SeedRunResult> run_training(
    const RunConfig& cfg, const std::filesystem::path& out_root,
    const SeedRunOptions& opts = {},
    const std::optional<std::vector<std::uint64_t>>& seed_override = std::nullopt) {
  validate_run_config(cfg);
  const std::vector<std::uint64_t>& seeds =
      seed_override ? *seed_override : cfg.train.seeds;

  std::vector<SeedRunResult> results;
  for (std::uint64_t seed : seeds) {
    auto paths = std::make_shared<const PathSet>(build_paths(cfg.layout));
    Trainer::Options topts = opts.trainer;
    topts.deterministic = cfg.deterministic;
    std::unique_ptr<Trainer> trainer;
    SeedRunResult result;
    try {
      trainer = std::make_unique<Trainer>(paths, cfg.env, derive_net_config(cfg),
                                          cfg.model, cfg.train, seed, topts);
    } catch (const std::exception& e) {
      result.seed = seed;
      result.ok = false;
      result.error = e.what();
      result.dir = seed_dir(out_root, seed);
      results.push_back(std::move(result));
      continue;
    }
    results.push_back(detail::run_one_seed(cfg, seed, seed_dir(out_root, seed),
                                           opts, std::move(trainer),
                                           /*append_metrics=*/false));
  }
  return results;
}

// Continues a checkpointed run, appending to the directory's metrics stream.
inline SeedRunResult resume_training(const std::filesystem::path& checkpoint_path,
                                     const std::filesystem::path& dir,
                                     const SeedRunOptions& opts = {}) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RunConfig cfg = parse_run_config(ckpt.config_text);
  const auto algo = algo_from_string(ckpt.algo);
  if (!algo) {
    throw CheckpointError("checkpoint: unknown algorithm '" + ckpt.algo + "'");
  }
  cfg.train.algo = *algo;

  auto paths = std::make_shared<const PathSet>(build_paths(cfg.layout));
  Trainer::Options topts = opts.trainer;
  topts.deterministic = cfg.deterministic;
  auto trainer = std::make_unique<Trainer>(paths, cfg.env, derive_net_config(cfg),
                                           cfg.model, cfg.train, ckpt.state.seed,
                                           topts);
  trainer->restore(ckpt.state);
  return detail::run_one_seed(cfg, ckpt.state.seed, dir, opts, std::move(trainer),
                              /*append_metrics=*/true);
}

}  // namespace crossway
