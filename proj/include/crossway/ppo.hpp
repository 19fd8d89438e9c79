// Optimization core: trajectory batches, TD errors, generalized advantage
// estimation (backward TD(lambda) recursion), the clipped surrogate
// objective, the critic regression loss, and the epoch/minibatch update
// schedule with a per-minibatch gradient-averaging barrier across workers.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "crossway/net.hpp"
#include "crossway/rng.hpp"

namespace crossway {

// T transitions in collection order. Episodes terminate inline (done) or are
// cut by a time limit / batch boundary (truncated, with the critic value of
// the cut state recorded for bootstrapping). Behavior mean/std are kept so
// update diagnostics can evaluate the exact Gaussian KL.
struct TrajectoryBatch {
  Eigen::MatrixXd obs;             // obs_dim x T
  Eigen::MatrixXd actions;         // act_dim x T, pre-clamp samples
  Eigen::VectorXd log_probs;       // behavior log densities
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;          // V(s_t) under the collecting critic
  Eigen::VectorXd bootstrap_values;  // V(s_{t+1}) where truncated, else 0
  std::vector<std::uint8_t> done;
  std::vector<std::uint8_t> truncated;
  Eigen::MatrixXd behavior_mean;   // act_dim x T
  Eigen::MatrixXd behavior_std;

  Eigen::Index size() const { return rewards.size(); }

  void resize(int obs_dim, int act_dim, Eigen::Index t) {
    obs.resize(obs_dim, t);
    actions.resize(act_dim, t);
    log_probs.resize(t);
    rewards.resize(t);
    values.resize(t);
    bootstrap_values.setZero(t);
    done.assign(static_cast<std::size_t>(t), 0);
    truncated.assign(static_cast<std::size_t>(t), 0);
    behavior_mean.resize(act_dim, t);
    behavior_std.resize(act_dim, t);
  }

  void validate() const {
    const auto t = size();
    if (t == 0) throw std::invalid_argument("TrajectoryBatch: empty");
    for (Eigen::Index i = 0; i < t; ++i) {
      if (done[static_cast<std::size_t>(i)] && truncated[static_cast<std::size_t>(i)]) {
        throw std::invalid_argument(
            "TrajectoryBatch: done and truncated both set at t=" + std::to_string(i));
      }
    }
    if (!done.back() && !truncated.back()) {
      throw std::invalid_argument(
          "TrajectoryBatch: trailing transition must be done or truncated");
    }
  }
};

struct AdvantageSet {
  Eigen::VectorXd advantages;     // pre-normalization
  Eigen::VectorXd value_targets;  // advantages + values
};

// delta_t = r_t + gamma * V(s_{t+1}) - V(s_t), with V(s_{t+1}) = 0 past a
// terminal and the recorded bootstrap value past a truncation.
inline Eigen::VectorXd td_errors(const TrajectoryBatch& batch, double gamma) {
  batch.validate();
  const Eigen::Index t_count = batch.size();
  Eigen::VectorXd delta(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    double next_value = 0.0;
    if (batch.truncated[static_cast<std::size_t>(t)]) {
      next_value = batch.bootstrap_values[t];
    } else if (!batch.done[static_cast<std::size_t>(t)]) {
      next_value = batch.values[t + 1];
    }
    delta[t] = batch.rewards[t] + gamma * next_value - batch.values[t];
  }
  return delta;
}

// Backward recursion A_t = delta_t + gamma*lambda*A_{t+1}, reset across
// episode boundaries; targets satisfy V_t = A_t + V(s_t).
inline AdvantageSet gae(const TrajectoryBatch& batch, double gamma, double lambda) {
  const Eigen::VectorXd delta = td_errors(batch, gamma);
  const Eigen::Index t_count = batch.size();
  AdvantageSet out;
  out.advantages.resize(t_count);
  double carry = 0.0;
  for (Eigen::Index t = t_count - 1; t >= 0; --t) {
    const bool boundary = batch.done[static_cast<std::size_t>(t)] ||
                          batch.truncated[static_cast<std::size_t>(t)];
    carry = delta[t] + gamma * lambda * (boundary ? 0.0 : carry);
    out.advantages[t] = carry;
  }
  out.value_targets = out.advantages + batch.values;
  return out;
}

// Batch mean/std normalization applied before the surrogate. Population
// std with no epsilon so the output is exactly unit scale.
inline Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& adv) {
  const double mean = adv.mean();
  const double sd = std::sqrt((adv.array() - mean).square().sum() /
                              static_cast<double>(adv.size()));
  if (sd <= 0.0) {
    return Eigen::VectorXd::Zero(adv.size());
  }
  return (adv.array() - mean).matrix() / sd;
}

// Gather scratch for one minibatch evaluation.
struct MinibatchScratch {
  Eigen::MatrixXd actions;
  Eigen::VectorXd old_logp, advantages, targets, old_values;
  Eigen::MatrixXd old_mean, old_std;
  Eigen::MatrixXd d_mean, d_std;
  Eigen::RowVectorXd d_value;
};

struct SurrogateStats {
  double loss = 0.0;
  double kl_sum = 0.0;
  double entropy_sum = 0.0;
  int clipped = 0;
};

// Clipped surrogate loss over one minibatch:
//   loss = -mean_t min(rho_t * A_t, clip(rho_t, 1-eps, 1+eps) * A_t)
// with rho the exp of the log-prob difference against the collecting policy.
// Gradients are accumulated into the actor segments of `grad` by exact
// backpropagation through the current log density only. Samples in the clip
// dead zone (A>0, rho>=1+eps or A<0, rho<=1-eps) contribute zero gradient.
inline SurrogateStats ppo_surrogate(const ActorCriticNet& net,
                                    const ParameterSet& params,
                                    ActorCriticNet::Workspace& ws,
                                    MinibatchScratch& mb,
                                    const TrajectoryBatch& batch,
                                    std::span<const Eigen::Index> idx,
                                    const Eigen::VectorXd& norm_advantages,
                                    double clip_eps, double entropy_coef,
                                    Eigen::VectorXd& grad) {
  if (clip_eps <= 0.0 || clip_eps >= 1.0) {
    throw std::invalid_argument("ppo_surrogate: clip epsilon must be in (0,1)");
  }
  const auto m = static_cast<Eigen::Index>(idx.size());
  const int act_dim = net.config().act_dim;
  ws.a_in.resize(net.config().obs_dim, m);
  mb.actions.resize(act_dim, m);
  mb.old_logp.resize(m);
  mb.advantages.resize(m);
  mb.old_mean.resize(act_dim, m);
  mb.old_std.resize(act_dim, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index t = idx[static_cast<std::size_t>(c)];
    ws.a_in.col(c) = batch.obs.col(t);
    mb.actions.col(c) = batch.actions.col(t);
    mb.old_logp[c] = batch.log_probs[t];
    mb.advantages[c] = norm_advantages[t];
    mb.old_mean.col(c) = batch.behavior_mean.col(t);
    mb.old_std.col(c) = batch.behavior_std.col(t);
  }

  net.actor_forward(params, ws);

  constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
  const double inv_m = 1.0 / static_cast<double>(m);
  mb.d_mean.setZero(act_dim, m);
  mb.d_std.setZero(act_dim, m);
  SurrogateStats stats;
  for (Eigen::Index c = 0; c < m; ++c) {
    double logp = -0.5 * kLogTwoPi * act_dim;
    for (int j = 0; j < act_dim; ++j) {
      const double sd = ws.std_dev(j, c);
      const double z = (mb.actions(j, c) - ws.mean(j, c)) / sd;
      logp += -0.5 * z * z - std::log(sd);
    }
    const double ratio = std::exp(logp - mb.old_logp[c]);
    if (!std::isfinite(ratio)) {
      throw NonFiniteError("ppo_surrogate: non-finite probability ratio at sample " +
                           std::to_string(c));
    }
    const double adv = mb.advantages[c];
    const double clipped_ratio =
        std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    stats.loss -= inv_m * std::min(ratio * adv, clipped_ratio * adv);
    if (std::abs(ratio - 1.0) > clip_eps) stats.clipped += 1;

    const bool dead = (adv > 0.0 && ratio >= 1.0 + clip_eps) ||
                      (adv < 0.0 && ratio <= 1.0 - clip_eps);
    const double d_logp = dead ? 0.0 : -inv_m * adv * ratio;
    for (int j = 0; j < act_dim; ++j) {
      const double sd = ws.std_dev(j, c);
      const double z = (mb.actions(j, c) - ws.mean(j, c)) / sd;
      mb.d_mean(j, c) = d_logp * z / sd;
      mb.d_std(j, c) = d_logp * (z * z - 1.0) / sd;
      stats.kl_sum += std::log(sd / mb.old_std(j, c)) +
                      (mb.old_std(j, c) * mb.old_std(j, c) +
                       (mb.old_mean(j, c) - ws.mean(j, c)) *
                           (mb.old_mean(j, c) - ws.mean(j, c))) /
                          (2.0 * sd * sd) -
                      0.5;
      stats.entropy_sum += std::log(sd) + 0.5 * (1.0 + kLogTwoPi);
      if (entropy_coef != 0.0) {
        mb.d_std(j, c) -= entropy_coef * inv_m / sd;
      }
    }
  }
  if (entropy_coef != 0.0) {
    stats.loss -= entropy_coef * stats.entropy_sum * inv_m;
  }

  net.actor_backward(params, ws, mb.d_mean, mb.d_std, grad);
  return stats;
}

// Mean squared error between V(s_t) and the TD(lambda) targets, with an
// optional clipped-value variant behind value_clip_eps > 0.
inline double critic_loss(const ActorCriticNet& net, const ParameterSet& params,
                          ActorCriticNet::Workspace& ws, MinibatchScratch& mb,
                          const TrajectoryBatch& batch,
                          std::span<const Eigen::Index> idx,
                          const Eigen::VectorXd& value_targets,
                          double value_clip_eps, Eigen::VectorXd& grad) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  ws.c_in.resize(net.config().obs_dim, m);
  mb.targets.resize(m);
  mb.old_values.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index t = idx[static_cast<std::size_t>(c)];
    ws.c_in.col(c) = batch.obs.col(t);
    mb.targets[c] = value_targets[t];
    mb.old_values[c] = batch.values[t];
  }

  net.critic_forward(params, ws);

  const double inv_m = 1.0 / static_cast<double>(m);
  mb.d_value.resize(m);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < m; ++c) {
    const double v = ws.value[c];
    const double err = v - mb.targets[c];
    if (value_clip_eps > 0.0) {
      const double v_clip =
          mb.old_values[c] +
          std::clamp(v - mb.old_values[c], -value_clip_eps, value_clip_eps);
      const double err_clip = v_clip - mb.targets[c];
      if (err * err >= err_clip * err_clip) {
        loss += inv_m * err * err;
        mb.d_value[c] = 2.0 * inv_m * err;
      } else {
        loss += inv_m * err_clip * err_clip;
        const bool inside = std::abs(v - mb.old_values[c]) < value_clip_eps;
        mb.d_value[c] = inside ? 2.0 * inv_m * err_clip : 0.0;
      }
    } else {
      loss += inv_m * err * err;
      mb.d_value[c] = 2.0 * inv_m * err;
    }
  }

  net.critic_backward(params, ws, mb.d_value, grad);
  return loss;
}

namespace detail {

// Fixed-shape pairwise reduction; for power-of-two worker counts the mean
// of identical gradients is bitwise the input, so K clones reproduce a
// single-worker run exactly.
inline Eigen::VectorXd pairwise_sum(
    const std::vector<const Eigen::VectorXd*>& grads, std::size_t lo,
    std::size_t hi) {
  if (hi - lo == 1) return *grads[lo];
  const std::size_t mid = lo + (hi - lo + 1) / 2;
  return pairwise_sum(grads, lo, mid) + pairwise_sum(grads, mid, hi);
}

}  // namespace detail

// Coordinate-wise arithmetic mean of the workers' local gradients; every
// worker then applies this same vector through its own Adam state.
inline Eigen::VectorXd average_gradients(
    const std::vector<const Eigen::VectorXd*>& local_grads) {
  if (local_grads.empty()) {
    throw std::invalid_argument("average_gradients: no gradients");
  }
  const Eigen::Index n = local_grads.front()->size();
  for (const Eigen::VectorXd* g : local_grads) {
    if (g->size() != n) {
      throw std::invalid_argument("average_gradients: mismatched gradient shapes");
    }
  }
  return detail::pairwise_sum(local_grads, 0, local_grads.size()) /
         static_cast<double>(local_grads.size());
}

inline Eigen::VectorXd average_gradients(const std::vector<Eigen::VectorXd>& grads) {
  std::vector<const Eigen::VectorXd*> ptrs;
  ptrs.reserve(grads.size());
  for (const auto& g : grads) ptrs.push_back(&g);
  return average_gradients(ptrs);
}

struct UpdateSettings {
  int epochs = 10;          // U
  int minibatch_size = 64;  // B
  double clip_epsilon = 0.2;
  double lr = 3e-4;
  double entropy_coef = 0.0;
  double value_clip_epsilon = 0.0;
  double max_grad_norm = 0.0;  // 0 disables clipping
  std::uint64_t shuffle_seed = 0;
};

struct UpdateDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl = 0.0;            // mean exact KL(pi_old || pi) per state
  double clip_fraction = 0.0;
  double entropy = 0.0;
  int minibatch_updates = 0;
};

// One worker's view of the shared update loop.
struct WorkerUpdateContext {
  const TrajectoryBatch* batch = nullptr;
  const Eigen::VectorXd* norm_advantages = nullptr;
  const Eigen::VectorXd* value_targets = nullptr;
  ParameterSet* params = nullptr;
  AdamState* adam_actor = nullptr;
  AdamState* adam_critic = nullptr;
  ActorCriticNet::Workspace* ws = nullptr;
  MinibatchScratch* scratch = nullptr;
  Eigen::VectorXd* grad = nullptr;
};

using ParallelFor = std::function<void(int, const std::function<void(int)>&)>;

inline void sequential_for(int n, const std::function<void(int)>& fn) {
  for (int i = 0; i < n; ++i) fn(i);
}

inline void clip_segment_norm(Eigen::VectorXd& grad, std::size_t offset,
                              std::size_t count, double max_norm) {
  auto seg = grad.segment(static_cast<Eigen::Index>(offset),
                          static_cast<Eigen::Index>(count));
  const double norm = seg.norm();
  if (norm > max_norm) {
    seg *= max_norm / norm;
  }
}

// U epochs over the batch; every epoch reshuffles with the shared seeded
// permutation so minibatch indices align across workers, then each B-sized
// minibatch runs: local actor+critic gradients per worker, mean across
// workers, one actor Adam step and one critic Adam step per worker with the
// averaged gradient. Workers that start synchronized stay bitwise identical.
inline UpdateDiagnostics update_epochs(const ActorCriticNet& net,
                                       std::span<WorkerUpdateContext> workers,
                                       const UpdateSettings& settings,
                                       const ParallelFor& pfor = sequential_for) {
  if (workers.empty()) {
    throw std::invalid_argument("update_epochs: no workers");
  }
  const Eigen::Index t_count = workers[0].batch->size();
  for (const auto& w : workers) {
    if (w.batch->size() != t_count) {
      throw std::invalid_argument("update_epochs: batch sizes differ across workers");
    }
  }
  if (settings.minibatch_size <= 0 || t_count % settings.minibatch_size != 0) {
    throw std::invalid_argument(
        "update_epochs: batch size must be divisible by minibatch size");
  }
  const int n_workers = static_cast<int>(workers.size());
  const Eigen::Index batch_b = settings.minibatch_size;
  const Eigen::Index n_minibatches = t_count / batch_b;

  RandomStream shuffle_rng(settings.shuffle_seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(t_count));
  std::iota(perm.begin(), perm.end(), 0);

  std::vector<SurrogateStats> actor_stats(static_cast<std::size_t>(n_workers));
  std::vector<double> critic_losses(static_cast<std::size_t>(n_workers));
  std::vector<const Eigen::VectorXd*> grad_ptrs(static_cast<std::size_t>(n_workers));
  for (int k = 0; k < n_workers; ++k) {
    grad_ptrs[static_cast<std::size_t>(k)] = workers[k].grad;
  }

  UpdateDiagnostics diag;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    for (Eigen::Index i = t_count - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(shuffle_rng.next_u64() %
                                               static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    for (Eigen::Index mb = 0; mb < n_minibatches; ++mb) {
      const std::span<const Eigen::Index> idx(perm.data() + mb * batch_b,
                                              static_cast<std::size_t>(batch_b));
      pfor(n_workers, [&](int k) {
        auto& w = workers[k];
        w.grad->setZero(static_cast<Eigen::Index>(net.param_count()));
        actor_stats[static_cast<std::size_t>(k)] = ppo_surrogate(
            net, *w.params, *w.ws, *w.scratch, *w.batch, idx, *w.norm_advantages,
            settings.clip_epsilon, settings.entropy_coef, *w.grad);
        critic_losses[static_cast<std::size_t>(k)] = critic_loss(
            net, *w.params, *w.ws, *w.scratch, *w.batch, idx, *w.value_targets,
            settings.value_clip_epsilon, *w.grad);
      });

      Eigen::VectorXd avg = average_gradients(grad_ptrs);
      if (settings.max_grad_norm > 0.0) {
        clip_segment_norm(avg, net.actor_offset(), net.actor_count(),
                          settings.max_grad_norm);
        clip_segment_norm(avg, net.critic_offset(), net.critic_count(),
                          settings.max_grad_norm);
      }

      pfor(n_workers, [&](int k) {
        auto& w = workers[k];
        adam_step(*w.params, avg, *w.adam_actor, settings.lr);
        adam_step(*w.params, avg, *w.adam_critic, settings.lr);
      });

      const double inv_b = 1.0 / static_cast<double>(batch_b);
      for (int k = 0; k < n_workers; ++k) {
        const auto& st = actor_stats[static_cast<std::size_t>(k)];
        diag.policy_loss += st.loss;
        diag.value_loss += critic_losses[static_cast<std::size_t>(k)];
        diag.kl += st.kl_sum * inv_b;
        diag.clip_fraction += static_cast<double>(st.clipped) * inv_b;
        diag.entropy += st.entropy_sum * inv_b;
      }
      diag.minibatch_updates += 1;
    }
  }

  const double denom =
      static_cast<double>(diag.minibatch_updates) * static_cast<double>(n_workers);
  diag.policy_loss /= denom;
  diag.value_loss /= denom;
  diag.kl /= denom;
  diag.clip_fraction /= denom;
  diag.entropy /= denom;
  return diag;
}

}  // namespace crossway
