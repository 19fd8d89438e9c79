// Shared trajectory collection loop, used for both real environment rollouts
// and model imagination rollouts. A session exposes the current observation,
// a step, and an episode restart; the collector fills exactly T transitions
// with inline restarts and marks the trailing partial episode truncated with
// the critic's bootstrap value.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "crossway/env.hpp"
#include "crossway/net.hpp"
#include "crossway/ppo.hpp"
#include "crossway/rng.hpp"

namespace crossway {

// Completed-episode bookkeeping; episodes that span a batch boundary are
// attributed to the iteration where they end.
struct EpisodeStats {
  std::vector<double> returns;
  std::vector<int> lengths;
  int ended_collision = 0;
  int ended_all_pass = 0;
  int ended_time_limit = 0;

  void add(double ret, int len, const StepEvents& events) {
    returns.push_back(ret);
    lengths.push_back(len);
    if (!events.collisions.empty()) {
      ended_collision += 1;
    } else if (events.all_passed) {
      ended_all_pass += 1;
    } else {
      ended_time_limit += 1;
    }
  }
};

// Running accumulator for the episode currently in progress.
struct EpisodeAccumulator {
  double episode_return = 0.0;
  int episode_length = 0;
};

template <typename Session>
void collect_rollout_into(TrajectoryBatch& batch, Session& session,
                          const ActorCriticNet& net, const ParameterSet& params,
                          Eigen::Index t_count, RandomStream& action_rng,
                          ActorCriticNet::Workspace& ws, EpisodeStats& stats,
                          EpisodeAccumulator& acc) {
  if (t_count <= 0) {
    throw std::invalid_argument("collect_rollout: batch size must be positive");
  }
  batch.resize(net.config().obs_dim, net.config().act_dim, t_count);

  for (Eigen::Index t = 0; t < t_count; ++t) {
    if (!session.active()) {
      session.restart();
      acc = {};
    }
    const Eigen::VectorXd obs = session.observation();
    const GaussianPolicyOutput policy = net.actor_forward_single(params, obs, ws);
    auto [action, logp] = sample_action(policy, action_rng);
    const double value = net.critic_value_single(params, obs, ws);

    const StepOutcome out = session.step(action);

    batch.obs.col(t) = obs;
    batch.actions.col(t) = action;
    batch.log_probs[t] = logp;
    batch.rewards[t] = out.reward;
    batch.values[t] = value;
    batch.behavior_mean.col(t) = policy.mean;
    batch.behavior_std.col(t) = policy.std;

    acc.episode_return += out.reward;
    acc.episode_length += 1;

    if (out.done) {
      if (out.truncated) {
        batch.truncated[static_cast<std::size_t>(t)] = 1;
        batch.bootstrap_values[t] =
            net.critic_value_single(params, out.observation, ws);
      } else {
        batch.done[static_cast<std::size_t>(t)] = 1;
      }
      stats.add(acc.episode_return, acc.episode_length, out.events);
      acc = {};
    } else if (t == t_count - 1) {
      // Batch boundary cuts a live episode: bootstrap, episode continues.
      batch.truncated[static_cast<std::size_t>(t)] = 1;
      batch.bootstrap_values[t] =
          net.critic_value_single(params, session.observation(), ws);
    }
  }
}

// Session over a persistent environment; episodes continue across batches.
// When a state pool is attached, every visited (pre-step) state is recorded
// as a restart candidate for model rollouts.
class EnvSession {
 public:
  explicit EnvSession(Env& env, bool noise_on = true,
                      std::vector<EnvState>* state_pool = nullptr)
      : env_(&env), noise_on_(noise_on), state_pool_(state_pool) {}

  bool active() const { return !env_->done(); }
  void restart() { env_->reset_from_stream(); }
  Eigen::VectorXd observation() const { return env_->observation(); }
  StepOutcome step(const Eigen::VectorXd& action) {
    if (state_pool_ != nullptr) state_pool_->push_back(env_->state());
    return env_->step(std::span<const double>(action.data(),
                                              static_cast<std::size_t>(action.size())),
                      noise_on_);
  }

 private:
  Env* env_;
  bool noise_on_;
  std::vector<EnvState>* state_pool_;
};

}  // namespace crossway
