// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Slow criteria are scaled-down
// training runs; artifacts land under the system temp directory.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "crossway/checkpoint.hpp"
#include "crossway/config.hpp"
#include "crossway/dynamics_model.hpp"
#include "crossway/metrics.hpp"
#include "crossway/replay.hpp"
#include "crossway/session.hpp"

using namespace crossway;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& message) {
    if (!condition && ok) {
      ok = false;
      detail = message;
    }
  }
};

fs::path artifact_root() {
  static const fs::path root =
      fs::temp_directory_path() / "crossway_acceptance";
  return root;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// Criterion 1: math oracles.

TrajectoryBatch random_math_batch(Eigen::Index t_count, RandomStream& rng) {
  TrajectoryBatch batch;
  batch.resize(2, 1, t_count);
  batch.obs.setZero();
  batch.actions.setZero();
  batch.log_probs.setZero();
  batch.behavior_mean.setZero();
  batch.behavior_std.setOnes();
  for (Eigen::Index t = 0; t < t_count; ++t) {
    batch.rewards[t] = rng.uniform(-60.0, 60.0);
    batch.values[t] = rng.uniform(-20.0, 20.0);
    const bool last = t == t_count - 1;
    const bool end = last || rng.uniform01() < 0.15;
    const bool trunc = end && rng.uniform01() < 0.3;
    batch.done[static_cast<std::size_t>(t)] = end && !trunc;
    batch.truncated[static_cast<std::size_t>(t)] = trunc;
    batch.bootstrap_values[t] = trunc ? rng.uniform(-20.0, 20.0) : 0.0;
  }
  return batch;
}

Eigen::VectorXd brute_force_gae(const TrajectoryBatch& batch, double gamma,
                                double lambda) {
  const Eigen::VectorXd delta = td_errors(batch, gamma);
  Eigen::VectorXd adv(batch.size());
  for (Eigen::Index t = 0; t < batch.size(); ++t) {
    double sum = 0.0;
    double weight = 1.0;
    for (Eigen::Index l = t; l < batch.size(); ++l) {
      sum += weight * delta[l];
      weight *= gamma * lambda;
      if (batch.done[static_cast<std::size_t>(l)] ||
          batch.truncated[static_cast<std::size_t>(l)]) {
        break;
      }
    }
    adv[t] = sum;
  }
  return adv;
}

Eigen::VectorXd fd_gradient(ParameterSet& params,
                            const std::function<double()>& eval,
                            double h = 1e-6) {
  Eigen::VectorXd grad(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = eval();
    params[i] = saved - h;
    const double down = eval();
    params[i] = saved;
    grad[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst,
                     std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

Check criterion_math_oracles() {
  Check check;
  RandomStream rng(20240817);

  // GAE against the O(T^2) double sum on 1000 random batches.
  double worst_gae = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const TrajectoryBatch batch = random_math_batch(64, rng);
    const double gamma = rng.uniform(0.8, 0.999);
    const double lambda = rng.uniform(0.0, 1.0);
    const AdvantageSet out = gae(batch, gamma, lambda);
    const Eigen::VectorXd brute = brute_force_gae(batch, gamma, lambda);
    for (Eigen::Index t = 0; t < batch.size(); ++t) {
      worst_gae = std::max(worst_gae, std::abs(out.advantages[t] - brute[t]));
    }
  }
  check.require(worst_gae < 1e-12,
                "GAE vs brute force: worst error " + std::to_string(worst_gae));

  // lambda = 0 reduces exactly to the one-step TD error.
  {
    const TrajectoryBatch batch = random_math_batch(128, rng);
    const AdvantageSet out = gae(batch, 0.99, 0.0);
    const Eigen::VectorXd delta = td_errors(batch, 0.99);
    for (Eigen::Index t = 0; t < batch.size(); ++t) {
      check.require(out.advantages[t] == delta[t],
                    "lambda=0 reduction not exact at t=" + std::to_string(t));
    }
  }

  // lambda = 1 with V = 0 recovers the Monte-Carlo returns.
  {
    TrajectoryBatch batch = random_math_batch(64, rng);
    batch.values.setZero();
    batch.bootstrap_values.setZero();
    for (auto& f : batch.truncated) f = 0;
    for (Eigen::Index t = 0; t < batch.size(); ++t) {
      batch.done[static_cast<std::size_t>(t)] = (t % 16 == 15) ? 1 : 0;
    }
    const double gamma = 0.97;
    const AdvantageSet out = gae(batch, gamma, 1.0);
    for (Eigen::Index t = 0; t < batch.size(); ++t) {
      double mc = 0.0;
      double w = 1.0;
      for (Eigen::Index l = t; l < batch.size(); ++l) {
        mc += w * batch.rewards[l];
        w *= gamma;
        if (batch.done[static_cast<std::size_t>(l)]) break;
      }
      check.require(std::abs(out.advantages[t] - mc) < 1e-12,
                    "lambda=1 Monte-Carlo reduction error at t=" +
                        std::to_string(t));
    }
  }

  // Clipped-surrogate hand arithmetic and clip-zone dead gradients.
  NetConfig net_cfg;
  net_cfg.obs_dim = 3;
  net_cfg.act_dim = 2;
  net_cfg.hidden_layers = 2;
  net_cfg.hidden_units = 5;
  ActorCriticNet net(net_cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream init(71);
  net.init_parameters(params, init);
  ActorCriticNet::Workspace ws;
  MinibatchScratch scratch;
  const std::vector<Eigen::Index> idx = {0};

  auto ratio_case = [&](double ratio, double advantage, double expected_loss,
                        bool expect_dead) {
    TrajectoryBatch batch;
    batch.resize(net_cfg.obs_dim, net_cfg.act_dim, 1);
    batch.obs.col(0) << 0.2, -0.4, 0.7;
    batch.done[0] = 1;
    ActorCriticNet::Workspace tmp;
    const GaussianPolicyOutput out =
        net.actor_forward_single(params, batch.obs.col(0), tmp);
    const Eigen::VectorXd action = out.mean + 0.3 * out.std;
    batch.actions.col(0) = action;
    batch.log_probs[0] = gaussian_log_prob(out, action) - std::log(ratio);
    batch.behavior_mean.col(0) = out.mean;
    batch.behavior_std.col(0) = out.std;
    Eigen::VectorXd adv(1);
    adv[0] = advantage;
    Eigen::VectorXd grad =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
    const SurrogateStats stats = ppo_surrogate(net, params, ws, scratch, batch,
                                               idx, adv, 0.2, 0.0, grad);
    check.require(std::abs(stats.loss - expected_loss) < 1e-9,
                  "surrogate hand case: loss " + std::to_string(stats.loss) +
                      " expected " + std::to_string(expected_loss));
    if (expect_dead) {
      check.require(grad.norm() == 0.0,
                    "clip-zone sample leaked a nonzero gradient");
    }
  };
  ratio_case(1.0, 2.25, -2.25, false);   // rho = 1: loss = -mean(A)
  ratio_case(1.5, 2.0, -2.4, true);      // A>0, rho>1+eps: min picks 1.2*A
  ratio_case(0.5, -1.0, 0.8, true);      // A<0, rho<1-eps: min picks 0.8*A

  // Critic loss closed forms.
  {
    TrajectoryBatch batch;
    batch.resize(net_cfg.obs_dim, net_cfg.act_dim, 1);
    batch.obs.col(0) << 0.5, 0.1, -0.3;
    batch.done[0] = 1;
    ActorCriticNet::Workspace tmp;
    const double v = net.critic_value_single(params, batch.obs.col(0), tmp);
    batch.values[0] = v;
    Eigen::VectorXd targets(1);
    targets[0] = v;
    Eigen::VectorXd grad =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
    check.require(critic_loss(net, params, ws, scratch, batch, idx, targets,
                              0.0, grad) == 0.0,
                  "critic loss at V = target is not zero");
    check.require(grad.norm() == 0.0, "critic gradient at V = target not zero");
    targets[0] = v + 2.0;
    grad.setZero();
    const double loss =
        critic_loss(net, params, ws, scratch, batch, idx, targets, 0.0, grad);
    check.require(std::abs(loss - 4.0) < 1e-12, "critic loss |err|=2 is not 4");
  }

  // Full-loss backprop against central finite differences on random nets.
  for (int trial = 0; trial < 3; ++trial) {
    ParameterSet p = net.make_parameter_set();
    RandomStream r(100 + static_cast<std::uint64_t>(trial));
    net.init_parameters(p, r);

    TrajectoryBatch batch;
    const Eigen::Index m = 8;
    batch.resize(net_cfg.obs_dim, net_cfg.act_dim, m);
    Eigen::VectorXd adv(m), targets(m);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    ActorCriticNet::Workspace tmp;
    for (Eigen::Index t = 0; t < m; ++t) {
      Eigen::VectorXd obs(3);
      obs << r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1);
      batch.obs.col(t) = obs;
      const GaussianPolicyOutput out = net.actor_forward_single(p, obs, tmp);
      auto [action, logp] = sample_action(out, r);
      batch.actions.col(t) = action;
      batch.log_probs[t] = logp;
      batch.behavior_mean.col(t) = out.mean;
      batch.behavior_std.col(t) = out.std;
      batch.values[t] = net.critic_value_single(p, obs, tmp);
      batch.done[static_cast<std::size_t>(t)] = 1;
      adv[t] = r.normal();
      targets[t] = r.normal();
    }

    Eigen::VectorXd grad =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
    ppo_surrogate(net, p, ws, scratch, batch, all, adv, 0.2, 0.0, grad);
    ActorCriticNet::Workspace ws2;
    MinibatchScratch scratch2;
    Eigen::VectorXd fd = fd_gradient(p, [&] {
      Eigen::VectorXd g =
          Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
      return ppo_surrogate(net, p, ws2, scratch2, batch, all, adv, 0.2, 0.0, g)
          .loss;
    });
    check.require(max_rel_error(grad, fd) < 1e-4,
                  "surrogate gradient vs finite differences: rel err " +
                      std::to_string(max_rel_error(grad, fd)));

    grad.setZero();
    critic_loss(net, p, ws, scratch, batch, all, targets, 0.0, grad);
    fd = fd_gradient(p, [&] {
      Eigen::VectorXd g =
          Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
      return critic_loss(net, p, ws2, scratch2, batch, all, targets, 0.0, g);
    });
    check.require(max_rel_error(grad, fd) < 1e-4,
                  "critic gradient vs finite differences: rel err " +
                      std::to_string(max_rel_error(grad, fd)));
  }

  return check;
}

// ---------------------------------------------------------------------------
// Criterion 2: environment and model.

Check criterion_env_model() {
  Check check;
  auto paths = std::make_shared<const PathSet>(build_paths(IntersectionLayout{}));
  const EnvConfig cfg;

  // Bitwise agreement of env (noise off) and the prior model on 1e4 draws.
  {
    Env env(paths, cfg);
    KinematicsModel model(paths, cfg);
    RandomStream rng(90210);
    for (int trial = 0; trial < 10000 && check.ok; ++trial) {
      EnvState state;
      for (VehicleType t : cfg.modes) {
        VehicleKinematicState veh;
        veh.type = t;
        veh.passed = rng.uniform01() < 0.2;
        veh.d = veh.passed
                    ? -cfg.d_pass
                    : rng.uniform(-cfg.d_pass + 0.5, paths->of(t).center_offset);
        veh.v = rng.uniform(0.0, cfg.v_max);
        state.vehicles.push_back(veh);
      }
      state.vehicles.front().passed = false;
      state.vehicles.front().d = rng.uniform(5.0, 40.0);
      state.step_count = static_cast<int>(rng.next_u64() % 100);

      std::vector<double> action(cfg.modes.size());
      for (auto& a : action) a = rng.uniform(-5.0, 5.0);

      env.restore(state, false);
      const StepOutcome env_out = env.step(action, false);
      const auto [model_state, model_out] = model.imagine_step(state, action);
      check.require(env_out.reward == model_out.reward &&
                        env_out.done == model_out.done,
                    "env/model outcome mismatch at trial " +
                        std::to_string(trial));
      for (std::size_t i = 0; i < state.vehicles.size(); ++i) {
        check.require(env.state().vehicles[i].d == model_state.vehicles[i].d &&
                          env.state().vehicles[i].v == model_state.vehicles[i].v,
                      "env/model state mismatch at trial " +
                          std::to_string(trial));
      }
    }
  }

  // Collision oracle: dense dt/100 sweep vs discrete detection.
  {
    const ConflictRelation rel =
        classify_conflict(VehicleType::RL, VehicleType::UD, *paths);
    const auto [pa, pb] = *rel.conflict_arc_positions;
    const Path& path_a = paths->of(VehicleType::RL);
    const Path& path_b = paths->of(VehicleType::UD);
    EnvConfig two;
    two.modes = {VehicleType::RL, VehicleType::UD};
    for (int variant = 0; variant < 5; ++variant) {
      const double v_a = 6.0 + variant;
      const double v_b = 11.0 - variant;
      const double d_a0 = path_a.center_offset - pa + v_a * 3.0;
      const double d_b0 = path_b.center_offset - pb + v_b * 3.0;
      double t_contact = -1.0;
      for (double t = 0.0; t < 6.0; t += two.dt / 100.0) {
        const PathSample pose_a = path_position(path_a, d_a0 - v_a * t);
        const PathSample pose_b = path_position(path_b, d_b0 - v_b * t);
        if (std::hypot(pose_a.x - pose_b.x, pose_a.y - pose_b.y) <
            2.0 * two.r_veh) {
          t_contact = t;
          break;
        }
      }
      check.require(t_contact > 0.0, "collision oracle found no contact");

      Env env(paths, two);
      env.reset(1);
      EnvState state = env.state();
      state.vehicles[0].d = d_a0;
      state.vehicles[0].v = v_a;
      state.vehicles[1].d = d_b0;
      state.vehicles[1].v = v_b;
      env.restore(state, false);
      const std::vector<double> hold = {0.0, 0.0};
      int steps = 0;
      while (!env.done() && steps < 200) {
        env.step(hold, false);
        ++steps;
      }
      check.require(!env.state().vehicles.empty() &&
                        env.state().vehicles[0].collided,
                    "discrete collision never fired");
      check.require(std::abs(steps * two.dt - t_contact) <= two.dt + 1e-9,
                    "collision time differs from oracle by more than dt");
    }
  }

  // Scripted all-pass episode: total reward is 130 - n.
  {
    EnvConfig scripted = cfg;
    scripted.max_steps = 400;
    Env env(paths, scripted);

    bool found = false;
    for (std::uint64_t seed = 0; seed < 100 && !found; ++seed) {
      env.reset(seed);
      // Holding vehicles brake; same-entrance pairs must not close to
      // contact while stopping.
      bool safe_hold = true;
      const auto& vehicles = env.state().vehicles;
      for (std::size_t i = 0; i < vehicles.size(); ++i) {
        for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
          if (entrance_of(vehicles[i].type) != entrance_of(vehicles[j].type)) {
            continue;
          }
          const double stop_i =
              vehicles[i].v * vehicles[i].v / (2.0 * -scripted.a_min);
          const double stop_j =
              vehicles[j].v * vehicles[j].v / (2.0 * -scripted.a_min);
          const double final_gap = std::abs((vehicles[i].d - stop_i) -
                                            (vehicles[j].d - stop_j));
          safe_hold &= final_gap > 2.0 * scripted.r_veh + 0.5;
        }
      }
      if (!safe_hold) continue;

      // One vehicle released every 3 s, nearest first.
      std::vector<std::size_t> order(vehicles.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return vehicles[a].d < vehicles[b].d;
      });
      std::vector<int> release(vehicles.size());
      for (std::size_t rank = 0; rank < order.size(); ++rank) {
        release[order[rank]] = static_cast<int>(rank) * 30;
      }

      double total = 0.0;
      int steps = 0;
      bool collided = false;
      bool all_passed = false;
      while (!env.done()) {
        std::vector<double> action(vehicles.size());
        for (std::size_t i = 0; i < action.size(); ++i) {
          action[i] = steps < release[i] ? scripted.a_min : scripted.a_max;
        }
        const StepOutcome out = env.step(action, false);
        total += out.reward;
        ++steps;
        collided |= !out.events.collisions.empty();
        all_passed |= out.events.all_passed;
      }
      if (collided || !all_passed) continue;
      found = true;
      const double expected = 8.0 * scripted.rewards.vehicle_pass +
                              scripted.rewards.all_pass - steps;
      check.require(total == expected,
                    "scripted episode total " + std::to_string(total) +
                        " != 130 - n = " + std::to_string(expected));
    }
    check.require(found, "no collision-free scripted schedule found");
  }

  // Same-seed bitwise reproducibility under actuation noise.
  {
    Env a(paths, cfg), b(paths, cfg);
    a.reset(777);
    b.reset(777);
    RandomStream act_rng(13);
    for (int t = 0; t < 150 && !a.done(); ++t) {
      std::vector<double> action(cfg.modes.size());
      for (auto& x : action) x = act_rng.uniform(-3.0, 3.0);
      const StepOutcome oa = a.step(action, true);
      const StepOutcome ob = b.step(action, true);
      check.require(oa.reward == ob.reward, "same-seed rewards diverged");
      for (std::size_t i = 0; i < cfg.modes.size(); ++i) {
        check.require(a.state().vehicles[i].d == b.state().vehicles[i].d,
                      "same-seed states diverged");
      }
      if (oa.done) break;
    }
  }

  return check;
}

// ---------------------------------------------------------------------------
// Criterion 3: published hyperparameter defaults.

Check criterion_defaults() {
  Check check;
  const RunConfig cfg = parse_run_config("");
  check.require(cfg.train.gamma == 0.99, "gamma default");
  check.require(cfg.train.lambda == 0.95, "lambda default");
  check.require(cfg.train.clip_epsilon == 0.2, "clip epsilon default");
  check.require(cfg.train.total_timesteps == 50000000, "total timesteps default");
  check.require(cfg.train.inner_iterations == 1, "inner iteration default");
  check.require(cfg.train.batch_size == 2048, "batch size default");
  check.require(cfg.train.minibatch_size == 64, "minibatch size default");
  check.require(cfg.train.epochs == 10, "epoch default");
  check.require(cfg.train.lr_start == 3e-4, "learning rate default");
  check.require(cfg.train.workers == 16, "worker count default");
  check.require(cfg.train.seeds.size() == 5, "seed count default");
  check.require(cfg.net.hidden_layers == 2, "hidden layer default");
  check.require(cfg.net.hidden_units == 128, "hidden unit default");
  check.require(cfg.train.adam_epsilon == 1e-5, "adam epsilon default");
  check.require(cfg.train.adam_beta1 == 0.9, "adam beta1 default");
  check.require(cfg.train.adam_beta2 == 0.999, "adam beta2 default");
  check.require(cfg.train.algo == Algo::Mappo, "algorithm default");
  check.require(lr_schedule(cfg.train.lr_start, 0.0) == 3e-4,
                "lr schedule start");
  check.require(lr_schedule(cfg.train.lr_start, 1.0) == 0.0, "lr schedule end");
  return check;
}

// ---------------------------------------------------------------------------
// Criteria 4-5: scaled-down learning runs.

RunConfig desk_two_vehicle_config(Algo algo) {
  RunConfig cfg;
  cfg.env.modes = {VehicleType::RL, VehicleType::UD};  // crossing conflict
  cfg.net.hidden_units = 64;
  cfg.train.algo = algo;
  cfg.train.workers = 4;
  // Small batches buy more policy-improvement rounds inside the step
  // budget: 96 iterations of 4 x 512 real steps, 196608 <= the 2e5 cap.
  cfg.train.batch_size = 512;
  cfg.model.horizon = 512;
  cfg.train.total_timesteps = 96LL * 4 * 512;
  cfg.train.checkpoint_interval = 100;
  return cfg;
}

struct LearningRuns {
  std::vector<SeedRunResult> results;
  int seeds_reaching = 0;
  std::vector<double> steps_to_threshold;  // budget stands in when unreached
};

LearningRuns run_learning(const RunConfig& cfg, const fs::path& out_root) {
  SeedRunOptions opts;
  opts.stop_at_reward = 0.0;
  LearningRuns runs;
  runs.results = run_training(cfg, out_root, opts);
  for (const auto& r : runs.results) {
    if (r.ok && r.first_threshold_steps > 0) {
      runs.seeds_reaching += 1;
      runs.steps_to_threshold.push_back(
          static_cast<double>(r.first_threshold_steps));
    } else {
      runs.steps_to_threshold.push_back(
          static_cast<double>(cfg.train.total_timesteps + 1));
    }
  }
  return runs;
}

Check criterion_ppo_learns(const LearningRuns& ppo) {
  Check check;
  for (const auto& r : ppo.results) {
    check.require(r.ok, "seed " + std::to_string(r.seed) + " failed: " + r.error);
  }
  check.require(ppo.seeds_reaching >= 4,
                "PPO reached reward > 0 in only " +
                    std::to_string(ppo.seeds_reaching) + "/5 seeds");
  std::ostringstream detail;
  detail << ppo.seeds_reaching << "/5 seeds above threshold; steps:";
  for (double s : ppo.steps_to_threshold) detail << " " << s;
  if (check.ok) check.detail = detail.str();
  return check;
}

Check criterion_acceleration(const LearningRuns& ppo, const LearningRuns& mappo) {
  Check check;
  for (const auto& r : mappo.results) {
    check.require(r.ok, "seed " + std::to_string(r.seed) + " failed: " + r.error);
  }
  const double ppo_median = median(ppo.steps_to_threshold);
  const double mappo_median = median(mappo.steps_to_threshold);
  check.require(mappo_median < ppo_median,
                "median real-env steps to threshold: MA-PPO " +
                    std::to_string(mappo_median) + " vs PPO " +
                    std::to_string(ppo_median));
  if (check.ok) {
    check.detail = "median steps: MA-PPO " + std::to_string(mappo_median) +
                   " < PPO " + std::to_string(ppo_median);
  }
  return check;
}

// ---------------------------------------------------------------------------
// Criterion 6: eight-vehicle smoke run.

Check criterion_eight_vehicle_smoke() {
  Check check;
  RunConfig cfg;
  cfg.net.hidden_units = 64;
  cfg.train.algo = Algo::Mappo;
  cfg.train.workers = 4;
  cfg.train.total_timesteps = 50LL * 4 * 2048;  // exactly 50 iterations
  cfg.train.checkpoint_interval = 100;

  const auto results =
      run_training(cfg, artifact_root() / "smoke_8mode", {});
  int monotone_seeds = 0;
  for (const auto& r : results) {
    check.require(r.ok, "seed " + std::to_string(r.seed) + " failed: " + r.error);
    if (!r.ok) continue;
    check.require(r.reports.size() == 50,
                  "seed " + std::to_string(r.seed) + " ran " +
                      std::to_string(r.reports.size()) + " iterations");

    for (const auto& rep : r.reports) {
      check.require(std::isfinite(rep.mean_ep_reward) &&
                        std::isfinite(rep.policy_loss) &&
                        std::isfinite(rep.value_loss) && std::isfinite(rep.kl),
                    "non-finite training values at iteration " +
                        std::to_string(rep.iteration));
      check.require(rep.episodes_completed ==
                        rep.ended_collision + rep.ended_all_pass +
                            rep.ended_time_limit,
                    "episode termination accounting mismatch");
      check.require(rep.episodes_completed > 0,
                    "iteration completed no episodes");
    }

    // Disjoint 10-iteration window means must be non-decreasing.
    std::vector<double> windows;
    for (std::size_t w = 0; w + 10 <= r.reports.size(); w += 10) {
      double sum = 0.0;
      for (std::size_t i = w; i < w + 10; ++i) {
        sum += r.reports[i].mean_ep_reward;
      }
      windows.push_back(sum / 10.0);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < windows.size(); ++i) {
      monotone &= windows[i] >= windows[i - 1];
    }
    monotone_seeds += monotone ? 1 : 0;
  }
  check.require(monotone_seeds >= 3,
                "smoothed reward non-decreasing in only " +
                    std::to_string(monotone_seeds) + "/5 seeds");
  if (check.ok) {
    check.detail = std::to_string(monotone_seeds) +
                   "/5 seeds with non-decreasing smoothed reward";
  }
  return check;
}

// ---------------------------------------------------------------------------
// Criterion 7: infrastructure.

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Check criterion_infrastructure(const LearningRuns& ppo) {
  Check check;

  // Resume equivalence: split run equals uninterrupted run bitwise.
  {
    RunConfig cfg;
    cfg.env.modes = {VehicleType::RL, VehicleType::UD};
    cfg.env.max_steps = 50;
    cfg.net.hidden_units = 8;
    cfg.train.workers = 2;
    cfg.train.batch_size = 64;
    cfg.train.minibatch_size = 32;
    cfg.train.epochs = 2;
    cfg.train.total_timesteps = 10 * 2 * 64;
    cfg.train.checkpoint_interval = 1000;
    cfg.model.horizon = 64;

    const fs::path dir_full = artifact_root() / "resume_full";
    const fs::path dir_split = artifact_root() / "resume_split";
    fs::remove_all(dir_full);
    fs::remove_all(dir_split);

    const auto full =
        run_training(cfg, dir_full, {}, std::vector<std::uint64_t>{5});
    SeedRunOptions half_opts;
    half_opts.stop_after_iterations = 5;
    const auto half =
        run_training(cfg, dir_split, half_opts, std::vector<std::uint64_t>{5});
    check.require(full[0].ok && half[0].ok, "resume runs failed");
    if (full[0].ok && half[0].ok) {
      const auto resumed = resume_training(
          half[0].dir / "checkpoint_final.ckpt", half[0].dir);
      check.require(resumed.ok, "resume failed: " + resumed.error);
      check.require(read_file(full[0].dir / "metrics.csv") ==
                        read_file(half[0].dir / "metrics.csv"),
                    "split metrics stream differs from uninterrupted run");
      const Checkpoint a = load_checkpoint(full[0].dir / "checkpoint_final.ckpt");
      const Checkpoint b = load_checkpoint(half[0].dir / "checkpoint_final.ckpt");
      check.require(a.state.params == b.state.params,
                    "split-run parameters differ bitwise");
      check.require(a.state.adam_m_actor == b.state.adam_m_actor &&
                        a.state.adam_v_critic == b.state.adam_v_critic,
                    "split-run Adam moments differ bitwise");
    }
  }

  // K identical-seed workers reproduce the single-worker trajectory.
  {
    auto paths =
        std::make_shared<const PathSet>(build_paths(IntersectionLayout{}));
    EnvConfig env_cfg;
    env_cfg.modes = {VehicleType::RL, VehicleType::UD};
    env_cfg.max_steps = 60;
    NetConfig net_cfg;
    net_cfg.hidden_units = 8;
    ModelRolloutConfig model_cfg;
    model_cfg.horizon = 128;
    TrainConfig tc;
    tc.algo = Algo::Mappo;
    tc.batch_size = 128;
    tc.minibatch_size = 32;
    tc.epochs = 2;

    Trainer::Options clone;
    clone.env_seed_fn = [](std::uint64_t s, int) {
      return mix_seed(s, 0x656e76, 0);
    };
    clone.sampler_seed_fn = [](std::uint64_t s, int) {
      return mix_seed(s, 0x616374, 0);
    };
    TrainConfig tc4 = tc;
    tc4.workers = 4;
    tc4.total_timesteps = 3 * 4 * 128;
    TrainConfig tc1 = tc;
    tc1.workers = 1;
    tc1.total_timesteps = 3 * 1 * 128;

    Trainer many(paths, env_cfg, net_cfg, model_cfg, tc4, 19, clone);
    Trainer one(paths, env_cfg, net_cfg, model_cfg, tc1, 19);
    for (int i = 0; i < 3; ++i) {
      many.run_iteration();
      one.run_iteration();
    }
    check.require(many.params() == one.params(),
                  "K=4 identical-seed workers diverged from the single worker");
    check.require(many.workers_synchronized(),
                  "worker replicas desynchronized");
  }

  // Metrics and replay parse-back on a real training artifact.
  {
    const SeedRunResult* sample = nullptr;
    for (const auto& r : ppo.results) {
      if (r.ok) sample = &r;
    }
    check.require(sample != nullptr, "no training artifact available");
    if (sample != nullptr) {
      const auto rows = parse_metrics(sample->dir / "metrics.csv");
      check.require(rows.size() == sample->reports.size(),
                    "metrics row count mismatch");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        check.require(
            format_metrics_row(rows[i]) ==
                format_metrics_row(sample->reports[i]),
            "metrics row " + std::to_string(i) + " does not re-parse exactly");
      }

      const Checkpoint ckpt =
          load_checkpoint(sample->dir / "checkpoint_final.ckpt");
      RunConfig cfg = parse_run_config(ckpt.config_text);
      ActorCriticNet net(derive_net_config(cfg));
      ParameterSet params = net.make_parameter_set();
      check.require(ckpt.state.params.size() == params.size(),
                    "checkpoint parameter count mismatch");
      std::copy(ckpt.state.params.begin(), ckpt.state.params.end(),
                params.data());
      auto paths = std::make_shared<const PathSet>(build_paths(cfg.layout));
      Env env(paths, cfg.env);
      const auto records = run_greedy_episode(net, params, env, 4242);
      const fs::path replay_path = artifact_root() / "replay_check.jsonl";
      write_replay(replay_path, records);
      const auto parsed = parse_replay(replay_path);
      check.require(parsed.size() == records.size(),
                    "replay record count changed in round trip");
      bool equal = parsed.size() == records.size();
      for (std::size_t i = 0; i < parsed.size() && equal; ++i) {
        equal = parsed[i].t == records[i].t &&
                parsed[i].vehicle_type == records[i].vehicle_type &&
                parsed[i].d == records[i].d && parsed[i].v == records[i].v &&
                parsed[i].a == records[i].a && parsed[i].x == records[i].x &&
                parsed[i].y == records[i].y &&
                parsed[i].reward == records[i].reward &&
                parsed[i].events == records[i].events;
      }
      check.require(equal, "replay records do not round-trip losslessly");

      bool terminal_event = false;
      const int last_t = records.empty() ? -1 : records.back().t;
      for (const auto& rec : records) {
        if (rec.t != last_t) continue;
        for (const auto& ev : rec.events) {
          terminal_event |= ev == "all_passed" || ev == "time_limit" ||
                            ev.rfind("collision(", 0) == 0;
        }
      }
      check.require(terminal_event, "replay lacks a terminal event");
    }
  }

  return check;
}

}  // namespace

int main() {
  fs::create_directories(artifact_root());
  std::printf("crossway acceptance suite (artifacts: %s)\n",
              artifact_root().string().c_str());

  int failures = 0;
  LearningRuns ppo_runs, mappo_runs;

  struct Criterion {
    int id;
    const char* name;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "math oracles (GAE brute force, reductions, clip cases, gradients)",
       criterion_math_oracles},
      {2, "environment/model (bitwise model match, collision oracle, rewards)",
       criterion_env_model},
      {3, "published hyperparameter defaults and lr schedule endpoints",
       criterion_defaults},
      {4, "2-vehicle PPO reaches reward > 0 within 2e5 real steps (4/5 seeds)",
       [&] {
         ppo_runs = run_learning(desk_two_vehicle_config(Algo::Ppo),
                                 artifact_root() / "desk_ppo");
         return criterion_ppo_learns(ppo_runs);
       }},
      {5, "MA-PPO reaches the threshold in fewer median real steps than PPO",
       [&] {
         mappo_runs = run_learning(desk_two_vehicle_config(Algo::Mappo),
                                   artifact_root() / "desk_mappo");
         return criterion_acceleration(ppo_runs, mappo_runs);
       }},
      {6, "8-vehicle smoke run: finite, smoothed non-decreasing, clean endings",
       criterion_eight_vehicle_smoke},
      {7, "infrastructure: resume equivalence, worker clones, parse-backs",
       [&] { return criterion_infrastructure(ppo_runs); }},
  };

  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check check;
    try {
      check = criterion.run();
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n",
                check.ok ? "PASS" : "FAIL", criterion.id, criterion.name,
                seconds, check.detail.empty() ? "" : " -- ",
                check.detail.c_str());
    std::fflush(stdout);
    failures += check.ok ? 0 : 1;
  }

  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
