// Command-line front end: train / eval / replay / validate-config.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crossway/checkpoint.hpp"
#include "crossway/config.hpp"
#include "crossway/replay.hpp"
#include "crossway/session.hpp"

namespace {

namespace fs = std::filesystem;
using namespace crossway;

fs::path resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("CROSSWAY_OUT"); env != nullptr && *env != '\0') {
    return env;
  }
  return "runs";
}

struct LoadedCheckpoint {
  Checkpoint ckpt;
  RunConfig cfg;
  ActorCriticNet net;
  ParameterSet params;
  std::shared_ptr<const PathSet> paths;
};

LoadedCheckpoint load_policy(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  RunConfig cfg = parse_run_config(ckpt.config_text);
  ActorCriticNet net(derive_net_config(cfg));
  ParameterSet params = net.make_parameter_set();
  if (ckpt.state.params.size() != params.size()) {
    throw CheckpointError("checkpoint: parameter count does not match its config");
  }
  std::copy(ckpt.state.params.begin(), ckpt.state.params.end(), params.data());
  auto paths = std::make_shared<const PathSet>(build_paths(cfg.layout));
  return {std::move(ckpt), std::move(cfg), std::move(net), std::move(params),
          std::move(paths)};
}

int cmd_train(const std::string& config_path, const std::string& algo,
              const std::string& out, std::optional<std::uint64_t> seed,
              const std::string& resume) {
  SeedRunOptions opts;
  opts.on_report = [](std::uint64_t s, const IterationReport& r) {
    std::printf("seed %llu iter %lld env_steps %lld mean_ep_reward %.2f "
                "mean_ep_len %.1f kl %.4f lr %.2e\n",
                static_cast<unsigned long long>(s),
                static_cast<long long>(r.iteration),
                static_cast<long long>(r.env_steps), r.mean_ep_reward,
                r.mean_ep_len, r.kl, r.lr);
    std::fflush(stdout);
  };

  std::vector<SeedRunResult> results;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    const fs::path dir = seed_dir(resolve_out_dir(out), ckpt.state.seed);
    results.push_back(resume_training(resume, dir, opts));
  } else {
    RunConfig cfg = load_run_config(config_path);
    const auto parsed_algo = algo_from_string(algo);
    if (!parsed_algo) {
      std::fprintf(stderr, "error: --algo must be ppo or mappo\n");
      return 2;
    }
    cfg.train.algo = *parsed_algo;
    std::optional<std::vector<std::uint64_t>> seeds;
    if (seed) seeds = std::vector<std::uint64_t>{*seed};
    results = run_training(cfg, resolve_out_dir(out), opts, seeds);
  }

  int failures = 0;
  for (const auto& r : results) {
    if (r.ok) {
      std::printf("seed %llu done: %zu iterations, artifacts in %s\n",
                  static_cast<unsigned long long>(r.seed), r.reports.size(),
                  r.dir.string().c_str());
    } else {
      std::fprintf(stderr, "seed %llu failed: %s\n",
                   static_cast<unsigned long long>(r.seed), r.error.c_str());
      failures += 1;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint_path, int episodes,
             std::uint64_t seed) {
  LoadedCheckpoint loaded = load_policy(checkpoint_path);
  Env env(loaded.paths, loaded.cfg.env);
  const EvalStats stats =
      evaluate_policy(loaded.net, loaded.params, env, episodes, seed);
  std::printf("episodes %d\n", stats.episodes);
  std::printf("mean_episode_reward %.6f\n", stats.mean_reward);
  std::printf("std_episode_reward %.6f\n", stats.std_reward);
  std::printf("mean_episode_length %.3f\n", stats.mean_length);
  std::printf("collision_rate %.6f\n", stats.collision_rate);
  return 0;
}

int cmd_replay(const std::string& checkpoint_path, const std::string& out,
               std::uint64_t seed) {
  LoadedCheckpoint loaded = load_policy(checkpoint_path);
  Env env(loaded.paths, loaded.cfg.env);
  const auto records =
      run_greedy_episode(loaded.net, loaded.params, env, seed);
  write_replay(out, records);
  std::printf("wrote %zu records to %s\n", records.size(), out.c_str());
  return 0;
}

int cmd_validate(const std::string& config_path) {
  load_run_config(config_path);
  std::printf("config ok: %s\n", config_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossway: intersection coordination trainer and simulator"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  auto* train = app.add_subcommand("train", "Train PPO or MA-PPO policies");
  std::string train_config, train_algo = "mappo", train_out, train_resume;
  std::optional<std::uint64_t> train_seed;
  auto* config_opt =
      train->add_option("--config", train_config, "Run configuration file");
  train->add_option("--algo", train_algo, "Algorithm: ppo or mappo");
  train->add_option("--out", train_out,
                    "Output root (default: $CROSSWAY_OUT or ./runs)");
  train->add_option("--seed", train_seed, "Train a single seed");
  train->add_option("--resume", train_resume, "Resume from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpointed policy");
  std::string eval_checkpoint;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 1000;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "Number of evaluation episodes");
  eval->add_option("--seed", eval_seed, "Base evaluation seed");

  auto* replay = app.add_subcommand("replay", "Export one greedy episode");
  std::string replay_checkpoint, replay_out;
  std::uint64_t replay_seed = 1000;
  replay->add_option("--checkpoint", replay_checkpoint, "Checkpoint file")
      ->required();
  replay->add_option("--out", replay_out, "Replay output file")->required();
  replay->add_option("--seed", replay_seed, "Episode seed");

  auto* validate = app.add_subcommand("validate-config", "Check a config file");
  std::string validate_config;
  validate->add_option("--config", validate_config, "Run configuration file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (train_resume.empty() && train_config.empty()) {
        std::fprintf(stderr, "error: train requires --config (or --resume)\n%s\n",
                     train->help().c_str());
        return 2;
      }
      (void)config_opt;
      return cmd_train(train_config, train_algo, train_out, train_seed,
                       train_resume);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_checkpoint, eval_episodes, eval_seed);
    }
    if (replay->parsed()) {
      return cmd_replay(replay_checkpoint, replay_out, replay_seed);
    }
    if (validate->parsed()) {
      return cmd_validate(validate_config);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
