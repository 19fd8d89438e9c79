// Prior dynamics model for imagination rollouts: the same kinematics and
// reward as the environment with actuation noise disabled. The model is
// given, not learned — it is the true mean dynamics, so model and
// environment agree exactly when environment noise is off.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crossway/env.hpp"
#include "crossway/net.hpp"
#include "crossway/ppo.hpp"
#include "crossway/rollout.hpp"

namespace crossway {

struct ModelRolloutConfig {
  int horizon = 2048;  // T_model
  enum class Restart { InitialDistribution, RealStatePool };
  Restart restart = Restart::InitialDistribution;

  void validate() const {
    if (horizon <= 0) {
      throw std::invalid_argument("model.horizon: must be positive");
    }
  }
};

class KinematicsModel {
 public:
  KinematicsModel(std::shared_ptr<const PathSet> paths, EnvConfig cfg)
      : paths_(std::move(paths)), cfg_(std::move(cfg)) {
    detail::validate_modes(cfg_.modes);
  }

  const EnvConfig& config() const { return cfg_; }
  const PathSet& paths() const { return *paths_; }

  // Deterministic one-step transition; identical contract to Env::step with
  // noise disabled.
  std::pair<EnvState, StepOutcome> imagine_step(
      const EnvState& state, std::span<const double> action) const {
    if (is_terminal(state)) {
      throw std::logic_error("imagine_step called on a finished episode state");
    }
    auto [next, out] = step_kinematics(state, action, cfg_, *paths_, nullptr);
    out.observation = observe(next, cfg_, *paths_);
    return {std::move(next), std::move(out)};
  }

  bool is_terminal(const EnvState& state) const {
    if (state.step_count >= cfg_.max_steps) return true;
    bool all_passed = true;
    for (const auto& veh : state.vehicles) {
      if (veh.collided) return true;
      all_passed &= veh.passed;
    }
    return all_passed;
  }

  // Runs the policy inside the model for exactly `horizon` timesteps,
  // restarting episodes from the reset distribution (or a pool of visited
  // real states). The batch is format-identical to a real rollout.
  TrajectoryBatch imagine_rollout(const ActorCriticNet& net,
                                  const ParameterSet& params,
                                  const ModelRolloutConfig& cfg,
                                  std::uint64_t seed,
                                  std::span<const EnvState> state_pool = {}) const {
    cfg.validate();
    if (cfg.restart == ModelRolloutConfig::Restart::RealStatePool &&
        state_pool.empty()) {
      throw std::invalid_argument(
          "imagine_rollout: real-state restart requested with an empty pool");
    }
    RandomStream rng(seed);
    Session session(*this, cfg, rng, state_pool);
    ActorCriticNet::Workspace ws;
    TrajectoryBatch batch;
    EpisodeStats stats;
    EpisodeAccumulator acc;
    collect_rollout_into(batch, session, net, params, cfg.horizon, rng, ws,
                         stats, acc);
    return batch;
  }

 private:
  class Session {
   public:
    Session(const KinematicsModel& model, const ModelRolloutConfig& cfg,
            RandomStream& rng, std::span<const EnvState> pool)
        : model_(&model), cfg_(&cfg), rng_(&rng), pool_(pool) {}

    bool active() const { return active_; }

    void restart() {
      if (cfg_->restart == ModelRolloutConfig::Restart::RealStatePool) {
        const auto i = static_cast<std::size_t>(rng_->next_u64() % pool_.size());
        state_ = pool_[i];
        state_.step_count = 0;
      } else {
        state_ = draw_initial_state(model_->config(), *rng_);
      }
      active_ = true;
    }

    Eigen::VectorXd observation() const {
      return observe(state_, model_->config(), model_->paths());
    }

    StepOutcome step(const Eigen::VectorXd& action) {
      auto [next, out] = model_->imagine_step(
          state_, std::span<const double>(action.data(),
                                          static_cast<std::size_t>(action.size())));
      state_ = std::move(next);
      if (out.done) active_ = false;
      return out;
    }

   private:
    const KinematicsModel* model_;
    const ModelRolloutConfig* cfg_;
    RandomStream* rng_;
    std::span<const EnvState> pool_;
    EnvState state_;
    bool active_ = false;
  };

  std::shared_ptr<const PathSet> paths_;
  EnvConfig cfg_;
};

}  // namespace crossway
