// MA-PPO / PPO orchestration across K synchronized data-parallel workers.
// Each worker owns a private environment, model, parameter replica, Adam
// state and gradient buffer; every minibatch exchanges gradients for
// averaging, so replicas stay bitwise identical. A deterministic
// single-process mode executes the workers sequentially with the same
// numerics as the threaded mode.
#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "crossway/dynamics_model.hpp"
#include "crossway/env.hpp"
#include "crossway/net.hpp"
#include "crossway/ppo.hpp"
#include "crossway/rollout.hpp"
#include "crossway/rng.hpp"

namespace crossway {

enum class Algo { Ppo, Mappo };

inline const char* to_string(Algo a) {
  return a == Algo::Ppo ? "ppo" : "mappo";
}

inline std::optional<Algo> algo_from_string(const std::string& s) {
  if (s == "ppo") return Algo::Ppo;
  if (s == "mappo") return Algo::Mappo;
  return std::nullopt;
}

struct TrainConfig {
  Algo algo = Algo::Mappo;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_epsilon = 0.2;
  std::int64_t total_timesteps = 50'000'000;
  int inner_iterations = 1;   // M, model-phase repeats per iteration
  int batch_size = 2048;      // T
  int minibatch_size = 64;    // B
  int epochs = 10;            // U
  double lr_start = 3e-4;     // annealed linearly to 0
  int workers = 16;           // K
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double adam_epsilon = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double entropy_coef = 0.0;
  double value_clip_epsilon = 0.0;
  double max_grad_norm = 0.0;
  int checkpoint_interval = 10;  // iterations between periodic checkpoints
};

// Linear anneal from lr_start at progress 0 to 0 at progress 1.
inline double lr_schedule(double lr_start, double progress) {
  if (progress < 0.0 || progress > 1.0) {
    throw std::invalid_argument("lr_schedule: progress must be in [0,1]");
  }
  return lr_start * (1.0 - progress);
}

struct IterationReport {
  std::int64_t iteration = 0;
  std::int64_t env_steps = 0;    // cumulative real environment timesteps
  std::int64_t model_steps = 0;  // cumulative imagined timesteps
  double mean_ep_reward = 0.0;
  double mean_ep_len = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;
  double clip_frac = 0.0;
  double lr = 0.0;
  double wallclock_s = 0.0;
  // Not emitted to the metrics file; used by tests and summaries.
  int episodes_completed = 0;
  int ended_collision = 0;
  int ended_all_pass = 0;
  int ended_time_limit = 0;
};

class ThreadPool {
 public:
  explicit ThreadPool(int n_threads) {
    for (int i = 0; i < n_threads; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void parallel_for(int n, const std::function<void(int)>& fn) {
    if (threads_.empty() || n <= 1) {
      for (int i = 0; i < n; ++i) fn(i);
      return;
    }
    std::unique_lock lock(mu_);
    fn_ = &fn;
    next_ = 0;
    pending_ = n;
    total_ = n;
    first_error_ = nullptr;
    cv_.notify_all();
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (first_error_) std::rethrow_exception(first_error_);
  }

 private:
  void worker_loop() {
    std::unique_lock lock(mu_);
    while (true) {
      cv_.wait(lock, [this] { return stop_ || (fn_ != nullptr && next_ < total_); });
      if (stop_) return;
      while (fn_ != nullptr && next_ < total_) {
        const int i = next_++;
        lock.unlock();
        try {
          (*fn_)(i);
        } catch (...) {
          lock.lock();
          if (!first_error_) first_error_ = std::current_exception();
          if (--pending_ == 0) done_cv_.notify_all();
          continue;
        }
        lock.lock();
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int)>* fn_ = nullptr;
  int next_ = 0, total_ = 0, pending_ = 0;
  bool stop_ = false;
  std::exception_ptr first_error_;
};

// Full numeric state of a run between iterations; round-trips through the
// checkpoint file bitwise.
struct TrainerSnapshot {
  std::int64_t iteration = 0;
  std::int64_t env_steps = 0;
  std::int64_t model_steps = 0;
  std::uint64_t seed = 0;
  std::vector<double> params;  // single copy; worker replicas are identical
  std::vector<double> adam_m_actor, adam_v_actor, adam_m_critic, adam_v_critic;
  std::int64_t adam_t_actor = 0, adam_t_critic = 0;
  struct WorkerSnapshot {
    EnvState env_state;
    bool env_done = true;
    std::string env_rng;
    std::string sampler_rng;
    double episode_return = 0.0;
    int episode_length = 0;
  };
  std::vector<WorkerSnapshot> workers;
  double last_mean_ep_reward = 0.0;
  double last_mean_ep_len = 0.0;
};

struct TrainerOptions {
  bool deterministic = true;  // sequential workers, zeroed wallclock
  int threads = 0;            // 0: one thread per worker
  // Test hook: override per-worker seed derivation.
  std::function<std::uint64_t(std::uint64_t, int)> env_seed_fn;
  std::function<std::uint64_t(std::uint64_t, int)> sampler_seed_fn;
};

class Trainer {
 public:
  using Options = TrainerOptions;

  Trainer(std::shared_ptr<const PathSet> paths, EnvConfig env_cfg,
          NetConfig net_cfg, ModelRolloutConfig model_cfg, TrainConfig train_cfg,
          std::uint64_t seed, Options options = Options())
      : net_(fit_net_config(net_cfg, env_cfg)),
        model_(paths, env_cfg),
        model_cfg_(model_cfg),
        cfg_(std::move(train_cfg)),
        seed_(seed),
        options_(std::move(options)) {
    if (cfg_.workers < 1) {
      throw std::invalid_argument("train.workers: must be at least 1");
    }
    if (cfg_.batch_size % cfg_.minibatch_size != 0) {
      throw std::invalid_argument(
          "train.batch_size: must be divisible by train.minibatch_size");
    }
    model_cfg_.validate();

    if (!options_.env_seed_fn) {
      options_.env_seed_fn = [](std::uint64_t s, int k) {
        return mix_seed(s, 0x656e76, static_cast<std::uint64_t>(k));
      };
    }
    if (!options_.sampler_seed_fn) {
      options_.sampler_seed_fn = [](std::uint64_t s, int k) {
        return mix_seed(s, 0x616374, static_cast<std::uint64_t>(k));
      };
    }

    RandomStream init_rng(mix_seed(seed_, 0x696e6974));
    ParameterSet init_params = net_.make_parameter_set();
    net_.init_parameters(init_params, init_rng);

    workers_.reserve(static_cast<std::size_t>(cfg_.workers));
    for (int k = 0; k < cfg_.workers; ++k) {
      auto w = std::make_unique<Worker>(paths, env_cfg);
      w->params = init_params;
      w->adam_actor = AdamState(net_.actor_offset(), net_.actor_count(),
                                cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_epsilon);
      w->adam_critic = AdamState(net_.critic_offset(), net_.critic_count(),
                                 cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_epsilon);
      w->grad.setZero(static_cast<Eigen::Index>(net_.param_count()));
      w->env.reset(options_.env_seed_fn(seed_, k));
      w->sampler.seed(options_.sampler_seed_fn(seed_, k));
      workers_.push_back(std::move(w));
    }

    if (!options_.deterministic) {
      const int n = options_.threads > 0 ? options_.threads : cfg_.workers;
      pool_ = std::make_unique<ThreadPool>(n);
    }
  }

  const ActorCriticNet& net() const { return net_; }
  const TrainConfig& config() const { return cfg_; }
  const ParameterSet& params() const { return workers_.front()->params; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t model_steps() const { return model_steps_; }

  bool finished() const { return env_steps_ >= cfg_.total_timesteps; }

  // Test hook: all worker replicas (params and Adam moments) bitwise equal.
  bool workers_synchronized() const {
    for (std::size_t k = 1; k < workers_.size(); ++k) {
      if (!(workers_[k]->params == workers_[0]->params)) return false;
      if (workers_[k]->adam_actor.m != workers_[0]->adam_actor.m) return false;
      if (workers_[k]->adam_actor.v != workers_[0]->adam_actor.v) return false;
      if (workers_[k]->adam_critic.m != workers_[0]->adam_critic.m) return false;
      if (workers_[k]->adam_critic.v != workers_[0]->adam_critic.v) return false;
    }
    return true;
  }

  // One full algorithm cycle: real-data collection plus U update epochs,
  // then M model phases of imagined collection plus U update epochs each.
  // M is forced to zero under plain PPO.
  IterationReport run_iteration() {
    const auto t_start = std::chrono::steady_clock::now();
    const double progress =
        std::min(1.0, static_cast<double>(env_steps_) /
                          static_cast<double>(cfg_.total_timesteps));
    const double lr = lr_schedule(cfg_.lr_start, progress);
    const int n_workers = cfg_.workers;
    const int model_phases = cfg_.algo == Algo::Ppo ? 0 : cfg_.inner_iterations;

    IterationReport report;
    report.iteration = iteration_;
    report.lr = lr;

    // Real phase.
    const bool want_pool =
        model_cfg_.restart == ModelRolloutConfig::Restart::RealStatePool &&
        model_phases > 0;
    parallel([&](int k) {
      Worker& w = *workers_[static_cast<std::size_t>(k)];
      w.state_pool.clear();
      EnvSession session(w.env, true, want_pool ? &w.state_pool : nullptr);
      w.iter_stats = {};
      collect_rollout_into(w.batch, session, net_, w.params,
                           cfg_.batch_size, w.sampler, w.ws_single,
                           w.iter_stats, w.episode_acc);
      prepare_advantages(w);
    });
    env_steps_ += static_cast<std::int64_t>(n_workers) * cfg_.batch_size;

    UpdateDiagnostics diag = run_update(lr, mix_seed(seed_, 0x73686600,
                                                     static_cast<std::uint64_t>(iteration_)));
    int phases = 1;

    // Model phases.
    for (int m = 0; m < model_phases; ++m) {
      parallel([&](int k) {
        Worker& w = *workers_[static_cast<std::size_t>(k)];
        // Imagination seeds come from the worker's own sampler stream, so
        // all per-worker randomness lives in the two checkpointed streams.
        const std::uint64_t seed = w.sampler.next_u64();
        w.batch = model_.imagine_rollout(
            net_, w.params, model_cfg_, seed,
            std::span<const EnvState>(w.state_pool.data(), w.state_pool.size()));
        prepare_advantages(w);
      });
      model_steps_ += static_cast<std::int64_t>(n_workers) * model_cfg_.horizon;
      const UpdateDiagnostics mdiag = run_update(
          lr, mix_seed(seed_, 0x73686601, static_cast<std::uint64_t>(iteration_),
                       static_cast<std::uint64_t>(m)));
      diag.policy_loss += mdiag.policy_loss;
      diag.value_loss += mdiag.value_loss;
      diag.kl += mdiag.kl;
      diag.clip_fraction += mdiag.clip_fraction;
      phases += 1;
    }

    // Episode statistics from the real phase, merged in worker order.
    double sum_ret = 0.0;
    std::int64_t sum_len = 0;
    int n_episodes = 0;
    for (const auto& w : workers_) {
      for (double r : w->iter_stats.returns) sum_ret += r;
      for (int l : w->iter_stats.lengths) sum_len += l;
      n_episodes += static_cast<int>(w->iter_stats.returns.size());
      report.ended_collision += w->iter_stats.ended_collision;
      report.ended_all_pass += w->iter_stats.ended_all_pass;
      report.ended_time_limit += w->iter_stats.ended_time_limit;
    }
    report.episodes_completed = n_episodes;
    if (n_episodes > 0) {
      last_mean_ep_reward_ = sum_ret / n_episodes;
      last_mean_ep_len_ = static_cast<double>(sum_len) / n_episodes;
    }
    report.mean_ep_reward = last_mean_ep_reward_;
    report.mean_ep_len = last_mean_ep_len_;

    report.policy_loss = diag.policy_loss / phases;
    report.value_loss = diag.value_loss / phases;
    report.kl = diag.kl / phases;
    report.clip_frac = diag.clip_fraction / phases;

    iteration_ += 1;
    report.env_steps = env_steps_;
    report.model_steps = model_steps_;
    if (!options_.deterministic) {
      report.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
              .count();
    }
    return report;
  }

  TrainerSnapshot snapshot() const {
    TrainerSnapshot s;
    s.iteration = iteration_;
    s.env_steps = env_steps_;
    s.model_steps = model_steps_;
    s.seed = seed_;
    const Worker& w0 = *workers_.front();
    s.params.assign(w0.params.data(), w0.params.data() + w0.params.size());
    auto to_vec = [](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    s.adam_m_actor = to_vec(w0.adam_actor.m);
    s.adam_v_actor = to_vec(w0.adam_actor.v);
    s.adam_m_critic = to_vec(w0.adam_critic.m);
    s.adam_v_critic = to_vec(w0.adam_critic.v);
    s.adam_t_actor = w0.adam_actor.t;
    s.adam_t_critic = w0.adam_critic.t;
    s.last_mean_ep_reward = last_mean_ep_reward_;
    s.last_mean_ep_len = last_mean_ep_len_;
    for (const auto& w : workers_) {
      TrainerSnapshot::WorkerSnapshot ws;
      ws.env_state = w->env.state();
      ws.env_done = w->env.done();
      ws.env_rng = w->env.rng_state();
      ws.sampler_rng = w->sampler.save_state();
      ws.episode_return = w->episode_acc.episode_return;
      ws.episode_length = w->episode_acc.episode_length;
      s.workers.push_back(std::move(ws));
    }
    return s;
  }

  void restore(const TrainerSnapshot& s) {
    if (s.workers.size() != workers_.size()) {
      throw std::invalid_argument("Trainer::restore: worker count mismatch");
    }
    if (s.params.size() != net_.param_count()) {
      throw std::invalid_argument("Trainer::restore: parameter count mismatch");
    }
    iteration_ = s.iteration;
    env_steps_ = s.env_steps;
    model_steps_ = s.model_steps;
    seed_ = s.seed;
    last_mean_ep_reward_ = s.last_mean_ep_reward;
    last_mean_ep_len_ = s.last_mean_ep_len;
    for (std::size_t k = 0; k < workers_.size(); ++k) {
      Worker& w = *workers_[k];
      std::copy(s.params.begin(), s.params.end(), w.params.data());
      auto from_vec = [](const std::vector<double>& v, Eigen::VectorXd& out) {
        out = Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                static_cast<Eigen::Index>(v.size()));
      };
      from_vec(s.adam_m_actor, w.adam_actor.m);
      from_vec(s.adam_v_actor, w.adam_actor.v);
      from_vec(s.adam_m_critic, w.adam_critic.m);
      from_vec(s.adam_v_critic, w.adam_critic.v);
      w.adam_actor.t = s.adam_t_actor;
      w.adam_critic.t = s.adam_t_critic;
      const auto& ws = s.workers[k];
      w.env.restore(ws.env_state, ws.env_done);
      w.env.restore_rng(ws.env_rng);
      w.sampler.restore_state(ws.sampler_rng);
      w.episode_acc.episode_return = ws.episode_return;
      w.episode_acc.episode_length = ws.episode_length;
    }
  }

 private:
  struct Worker {
    Worker(std::shared_ptr<const PathSet> paths, const EnvConfig& cfg)
        : env(std::move(paths), cfg) {}

    Env env;
    RandomStream sampler;
    ParameterSet params;
    AdamState adam_actor, adam_critic;
    ActorCriticNet::Workspace ws_single, ws_batch;
    MinibatchScratch scratch;
    TrajectoryBatch batch;
    AdvantageSet advantages;
    Eigen::VectorXd norm_advantages;
    Eigen::VectorXd grad;
    EpisodeStats iter_stats;
    EpisodeAccumulator episode_acc;
    std::vector<EnvState> state_pool;
  };

  static NetConfig fit_net_config(NetConfig cfg, const EnvConfig& env_cfg) {
    cfg.obs_dim = 2 * static_cast<int>(env_cfg.modes.size());
    cfg.act_dim = static_cast<int>(env_cfg.modes.size());
    return cfg;
  }

  void parallel(const std::function<void(int)>& fn) {
    if (pool_) {
      pool_->parallel_for(cfg_.workers, fn);
    } else {
      for (int k = 0; k < cfg_.workers; ++k) fn(k);
    }
  }

  void prepare_advantages(Worker& w) {
    w.advantages = gae(w.batch, cfg_.gamma, cfg_.lambda);
    w.norm_advantages = normalize_advantages(w.advantages.advantages);
  }

  UpdateDiagnostics run_update(double lr, std::uint64_t shuffle_seed) {
    UpdateSettings settings;
    settings.epochs = cfg_.epochs;
    settings.minibatch_size = cfg_.minibatch_size;
    settings.clip_epsilon = cfg_.clip_epsilon;
    settings.lr = lr;
    settings.entropy_coef = cfg_.entropy_coef;
    settings.value_clip_epsilon = cfg_.value_clip_epsilon;
    settings.max_grad_norm = cfg_.max_grad_norm;
    settings.shuffle_seed = shuffle_seed;

    std::vector<WorkerUpdateContext> ctxs;
    ctxs.reserve(workers_.size());
    for (auto& w : workers_) {
      WorkerUpdateContext ctx;
      ctx.batch = &w->batch;
      ctx.norm_advantages = &w->norm_advantages;
      ctx.value_targets = &w->advantages.value_targets;
      ctx.params = &w->params;
      ctx.adam_actor = &w->adam_actor;
      ctx.adam_critic = &w->adam_critic;
      ctx.ws = &w->ws_batch;
      ctx.scratch = &w->scratch;
      ctx.grad = &w->grad;
      ctxs.push_back(ctx);
    }
    ParallelFor pfor = [this](int n, const std::function<void(int)>& fn) {
      if (pool_) {
        pool_->parallel_for(n, fn);
      } else {
        sequential_for(n, fn);
      }
    };
    return update_epochs(net_, ctxs, settings, pfor);
  }

  ActorCriticNet net_;
  KinematicsModel model_;
  ModelRolloutConfig model_cfg_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  Options options_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::unique_ptr<ThreadPool> pool_;
  std::int64_t iteration_ = 0;
  std::int64_t env_steps_ = 0;
  std::int64_t model_steps_ = 0;
  double last_mean_ep_reward_ = 0.0;
  double last_mean_ep_len_ = 0.0;
};

}  // namespace crossway
