// Actor and critic function approximators: multilayer perceptrons with tanh
// hidden layers over a flat parameter store, a diagonal-Gaussian action head
// (mean + softplus std), exact analytic backpropagation, and Adam. All
// arithmetic is double precision so gradient checks stay tight.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crossway/rng.hpp"

namespace crossway {

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NetConfig {
  int obs_dim = 16;
  int act_dim = 8;
  int hidden_layers = 2;
  int hidden_units = 128;
  double sigma_min = 0.01;
  double sigma_init = 1.0;  // policy std right after initialization
};

// Flat real-valued parameter store with a named segment map. Backed by an
// Eigen vector so the storage alignment class is identical for every
// instance; vectorized reductions then round identically across replicas,
// runs and checkpoint resumes.
class ParameterSet {
 public:
  struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
  };

  std::size_t add_segment(const std::string& name, std::size_t count) {
    const std::size_t offset = static_cast<std::size_t>(values_.size());
    segments_.push_back({name, offset, count});
    index_[name] = segments_.size() - 1;
    values_.conservativeResize(static_cast<Eigen::Index>(offset + count));
    values_.tail(static_cast<Eigen::Index>(count)).setZero();
    return offset;
  }

  const Segment& segment(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("ParameterSet: no segment named " + name);
    }
    return segments_[it->second];
  }

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }
  double operator[](std::size_t i) const {
    return values_[static_cast<Eigen::Index>(i)];
  }

  Eigen::VectorXd& vector() { return values_; }
  const Eigen::VectorXd& vector() const { return values_; }

  bool all_finite() const { return values_.allFinite(); }

  bool operator==(const ParameterSet& other) const {
    return values_.size() == other.values_.size() &&
           std::memcmp(values_.data(), other.values_.data(),
                       sizeof(double) * size()) == 0;
  }

 private:
  Eigen::VectorXd values_;
  std::vector<Segment> segments_;
  std::map<std::string, std::size_t> index_;
};

struct GaussianPolicyOutput {
  Eigen::VectorXd mean;  // m/s^2 per vehicle
  Eigen::VectorXd std;   // strictly positive, >= sigma_min
};

inline double softplus(double u) {
  if (u > 30.0) return u;
  if (u < -30.0) return std::exp(u);
  return std::log1p(std::exp(u));
}

inline double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// Exact diagonal-Gaussian log density (of the unclamped sample).
inline double gaussian_log_prob(const GaussianPolicyOutput& out,
                                const Eigen::VectorXd& action) {
  constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
  double logp = -0.5 * kLogTwoPi * static_cast<double>(out.mean.size());
  for (Eigen::Index j = 0; j < out.mean.size(); ++j) {
    const double z = (action[j] - out.mean[j]) / out.std[j];
    logp += -0.5 * z * z - std::log(out.std[j]);
  }
  return logp;
}

inline std::pair<Eigen::VectorXd, double> sample_action(
    const GaussianPolicyOutput& out, RandomStream& rng) {
  Eigen::VectorXd action(out.mean.size());
  for (Eigen::Index j = 0; j < action.size(); ++j) {
    action[j] = out.mean[j] + out.std[j] * rng.normal();
  }
  return {action, gaussian_log_prob(out, action)};
}

// KL(p || q) between diagonal Gaussians, summed over action dimensions.
inline double gaussian_kl(const Eigen::VectorXd& mean_p, const Eigen::VectorXd& std_p,
                          const Eigen::VectorXd& mean_q, const Eigen::VectorXd& std_q) {
  double kl = 0.0;
  for (Eigen::Index j = 0; j < mean_p.size(); ++j) {
    const double var_q = std_q[j] * std_q[j];
    const double dm = mean_p[j] - mean_q[j];
    kl += std::log(std_q[j] / std_p[j]) +
          (std_p[j] * std_p[j] + dm * dm) / (2.0 * var_q) - 0.5;
  }
  return kl;
}

class ActorCriticNet {
 public:
  struct Linear {
    std::size_t w_off = 0;  // (out x in), column-major
    std::size_t b_off = 0;
    int in = 0;
    int out = 0;
  };

  // Batched activations; columns are samples.
  struct Workspace {
    Eigen::MatrixXd a_in;               // obs_dim x m
    std::vector<Eigen::MatrixXd> a_h;   // hidden activations
    Eigen::MatrixXd mean, std_raw, std_dev;
    Eigen::MatrixXd c_in;
    std::vector<Eigen::MatrixXd> c_h;
    Eigen::RowVectorXd value;
    // backward scratch
    Eigen::MatrixXd d_hi, d_lo;

    void set_batch(const ActorCriticNet& net, Eigen::Index m) {
      const auto& cfg = net.config();
      a_in.resize(cfg.obs_dim, m);
      c_in.resize(cfg.obs_dim, m);
      a_h.resize(cfg.hidden_layers);
      c_h.resize(cfg.hidden_layers);
      for (int l = 0; l < cfg.hidden_layers; ++l) {
        a_h[l].resize(cfg.hidden_units, m);
        c_h[l].resize(cfg.hidden_units, m);
      }
      mean.resize(cfg.act_dim, m);
      std_raw.resize(cfg.act_dim, m);
      std_dev.resize(cfg.act_dim, m);
      value.resize(m);
      d_hi.resize(cfg.hidden_units, m);
      d_lo.resize(cfg.hidden_units, m);
    }
  };

  explicit ActorCriticNet(NetConfig cfg) : cfg_(cfg) {
    if (cfg.obs_dim < 1 || cfg.act_dim < 1 || cfg.hidden_layers < 1 ||
        cfg.hidden_units < 1) {
      throw std::invalid_argument("NetConfig: dimensions must be positive");
    }
    if (cfg.sigma_min <= 0.0) {
      throw std::invalid_argument("NetConfig: sigma_min must be positive");
    }
    if (cfg.sigma_init <= cfg.sigma_min) {
      throw std::invalid_argument("NetConfig: sigma_init must exceed sigma_min");
    }
    // Layout: all actor segments first, then all critic segments, so each
    // network's parameters form one contiguous range for its Adam state.
    std::size_t cursor = 0;
    auto alloc = [&](const std::string& name, int out, int in, Linear& lin) {
      lin.in = in;
      lin.out = out;
      lin.w_off = cursor;
      layout_.push_back({name + ".w", cursor,
                         static_cast<std::size_t>(out) * static_cast<std::size_t>(in)});
      cursor += static_cast<std::size_t>(out) * static_cast<std::size_t>(in);
      lin.b_off = cursor;
      layout_.push_back({name + ".b", cursor, static_cast<std::size_t>(out)});
      cursor += static_cast<std::size_t>(out);
    };

    actor_trunk_.resize(cfg.hidden_layers);
    int in = cfg.obs_dim;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      alloc("actor.h" + std::to_string(l), cfg.hidden_units, in, actor_trunk_[l]);
      in = cfg.hidden_units;
    }
    alloc("actor.mean", cfg.act_dim, in, mean_head_);
    alloc("actor.std", cfg.act_dim, in, std_head_);
    actor_count_ = cursor;

    critic_offset_ = cursor;
    critic_trunk_.resize(cfg.hidden_layers);
    in = cfg.obs_dim;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      alloc("critic.h" + std::to_string(l), cfg.hidden_units, in, critic_trunk_[l]);
      in = cfg.hidden_units;
    }
    alloc("critic.value", 1, in, value_head_);
    param_count_ = cursor;
  }

  const NetConfig& config() const { return cfg_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t actor_offset() const { return 0; }
  std::size_t actor_count() const { return actor_count_; }
  std::size_t critic_offset() const { return critic_offset_; }
  std::size_t critic_count() const { return param_count_ - critic_offset_; }

  ParameterSet make_parameter_set() const {
    ParameterSet params;
    for (const auto& seg : layout_) {
      params.add_segment(seg.name, seg.count);
    }
    return params;
  }

  // Orthogonal-style init: scaled orthogonal hidden layers, small final
  // policy layers so initial actions stay near zero, zero biases. The std
  // head bias is set so the initial policy std equals sigma_init.
  void init_parameters(ParameterSet& params, RandomStream& rng) const {
    if (params.size() != param_count_) {
      throw std::invalid_argument("init_parameters: parameter set size mismatch");
    }
    const double kHiddenGain = std::sqrt(2.0);
    for (const Linear& lin : actor_trunk_) init_linear(params, lin, kHiddenGain, rng);
    for (const Linear& lin : critic_trunk_) init_linear(params, lin, kHiddenGain, rng);
    init_linear(params, mean_head_, 0.01, rng);
    init_linear(params, std_head_, 0.01, rng);
    init_linear(params, value_head_, 1.0, rng);
    // inverse softplus of (sigma_init - sigma_min)
    const double raw = std::log(std::expm1(cfg_.sigma_init - cfg_.sigma_min));
    Eigen::Map<Eigen::VectorXd>(params.data() + std_head_.b_off, std_head_.out)
        .setConstant(raw);
  }

  void actor_forward(const ParameterSet& params, Workspace& ws) const {
    if (!ws.a_in.allFinite()) {
      throw NonFiniteError("actor_forward: non-finite observation");
    }
    if (ws.a_h.size() != static_cast<std::size_t>(cfg_.hidden_layers)) {
      ws.a_h.resize(static_cast<std::size_t>(cfg_.hidden_layers));
    }
    const Eigen::MatrixXd* x = &ws.a_in;
    for (int l = 0; l < cfg_.hidden_layers; ++l) {
      apply_tanh_layer(params, actor_trunk_[l], *x, ws.a_h[l]);
      x = &ws.a_h[l];
    }
    apply_linear(params, mean_head_, *x, ws.mean);
    apply_linear(params, std_head_, *x, ws.std_raw);
    ws.std_dev = ws.std_raw.unaryExpr(
        [this](double u) { return softplus(u) + cfg_.sigma_min; });
  }

  void critic_forward(const ParameterSet& params, Workspace& ws) const {
    if (!ws.c_in.allFinite()) {
      throw NonFiniteError("critic_forward: non-finite observation");
    }
    if (ws.c_h.size() != static_cast<std::size_t>(cfg_.hidden_layers)) {
      ws.c_h.resize(static_cast<std::size_t>(cfg_.hidden_layers));
    }
    const Eigen::MatrixXd* x = &ws.c_in;
    for (int l = 0; l < cfg_.hidden_layers; ++l) {
      apply_tanh_layer(params, critic_trunk_[l], *x, ws.c_h[l]);
      x = &ws.c_h[l];
    }
    ws.value.resize(x->cols());
    ws.value.noalias() = weight(params, value_head_).row(0) * (*x);
    ws.value.array() += params[value_head_.b_off];
  }

  // Accumulates actor gradients into `grad` (full parameter length) given
  // dL/dmean and dL/dstd (std after softplus). Requires a prior
  // actor_forward on the same workspace.
  void actor_backward(const ParameterSet& params, Workspace& ws,
                      const Eigen::MatrixXd& d_mean,
                      const Eigen::MatrixXd& d_std,
                      Eigen::VectorXd& grad) const {
    const Eigen::MatrixXd& top = cfg_.hidden_layers > 0
                                     ? ws.a_h[cfg_.hidden_layers - 1]
                                     : ws.a_in;
    // Through the softplus std head.
    Eigen::MatrixXd d_std_raw =
        d_std.cwiseProduct(ws.std_raw.unaryExpr([](double u) { return sigmoid(u); }));

    grad_matrix(grad, mean_head_).noalias() += d_mean * top.transpose();
    grad_vector(grad, mean_head_).noalias() += d_mean.rowwise().sum();
    grad_matrix(grad, std_head_).noalias() += d_std_raw * top.transpose();
    grad_vector(grad, std_head_).noalias() += d_std_raw.rowwise().sum();

    ws.d_hi.resize(mean_head_.in, d_mean.cols());
    ws.d_hi.noalias() = weight(params, mean_head_).transpose() * d_mean;
    ws.d_hi.noalias() += weight(params, std_head_).transpose() * d_std_raw;
    backprop_trunk(params, actor_trunk_, ws.a_in, ws.a_h, ws, grad);
  }

  void critic_backward(const ParameterSet& params, Workspace& ws,
                       const Eigen::RowVectorXd& d_value,
                       Eigen::VectorXd& grad) const {
    const Eigen::MatrixXd& top = cfg_.hidden_layers > 0
                                     ? ws.c_h[cfg_.hidden_layers - 1]
                                     : ws.c_in;
    grad_matrix(grad, value_head_).noalias() += d_value * top.transpose();
    grad[value_head_.b_off] += d_value.sum();
    ws.d_hi.resize(value_head_.in, d_value.cols());
    ws.d_hi.noalias() = weight(params, value_head_).transpose() * d_value;
    backprop_trunk(params, critic_trunk_, ws.c_in, ws.c_h, ws, grad);
  }

  // Single-observation conveniences (rollout path).
  GaussianPolicyOutput actor_forward_single(const ParameterSet& params,
                                            const Eigen::VectorXd& obs,
                                            Workspace& ws) const {
    ws.a_in = obs;
    actor_forward(params, ws);
    return {ws.mean.col(0), ws.std_dev.col(0)};
  }

  double critic_value_single(const ParameterSet& params,
                             const Eigen::VectorXd& obs, Workspace& ws) const {
    ws.c_in = obs;
    critic_forward(params, ws);
    return ws.value[0];
  }

  Eigen::Map<const Eigen::MatrixXd> weight(const ParameterSet& params,
                                           const Linear& lin) const {
    return {params.data() + lin.w_off, lin.out, lin.in};
  }
  Eigen::Map<const Eigen::VectorXd> bias(const ParameterSet& params,
                                         const Linear& lin) const {
    return {params.data() + lin.b_off, lin.out};
  }

 private:
  static Eigen::Map<Eigen::MatrixXd> grad_matrix(Eigen::VectorXd& grad,
                                                 const Linear& lin) {
    return {grad.data() + lin.w_off, lin.out, lin.in};
  }
  static Eigen::Map<Eigen::VectorXd> grad_vector(Eigen::VectorXd& grad,
                                                 const Linear& lin) {
    return {grad.data() + lin.b_off, lin.out};
  }

  void apply_tanh_layer(const ParameterSet& params, const Linear& lin,
                        const Eigen::MatrixXd& x, Eigen::MatrixXd& h) const {
    h.resize(lin.out, x.cols());
    h.noalias() = weight(params, lin) * x;
    h.colwise() += bias(params, lin);
    h.array() = h.array().tanh();
  }

  void apply_linear(const ParameterSet& params, const Linear& lin,
                    const Eigen::MatrixXd& x, Eigen::MatrixXd& z) const {
    z.resize(lin.out, x.cols());
    z.noalias() = weight(params, lin) * x;
    z.colwise() += bias(params, lin);
  }

  // ws.d_hi holds dL/d(top hidden activation) on entry; consumed.
  void backprop_trunk(const ParameterSet& params, const std::vector<Linear>& trunk,
                      const Eigen::MatrixXd& input,
                      const std::vector<Eigen::MatrixXd>& acts, Workspace& ws,
                      Eigen::VectorXd& grad) const {
    for (int l = cfg_.hidden_layers - 1; l >= 0; --l) {
      // dZ = dH .* (1 - H^2)
      ws.d_hi = ws.d_hi.cwiseProduct(
          (1.0 - acts[static_cast<std::size_t>(l)].array().square()).matrix());
      const Eigen::MatrixXd& x = l > 0 ? acts[static_cast<std::size_t>(l) - 1] : input;
      grad_matrix(grad, trunk[static_cast<std::size_t>(l)]).noalias() +=
          ws.d_hi * x.transpose();
      grad_vector(grad, trunk[static_cast<std::size_t>(l)]).noalias() +=
          ws.d_hi.rowwise().sum();
      if (l > 0) {
        ws.d_lo.resize(trunk[static_cast<std::size_t>(l)].in, ws.d_hi.cols());
        ws.d_lo.noalias() =
            weight(params, trunk[static_cast<std::size_t>(l)]).transpose() * ws.d_hi;
        std::swap(ws.d_hi, ws.d_lo);
      }
    }
  }

  void init_linear(ParameterSet& params, const Linear& lin, double gain,
                   RandomStream& rng) const {
    const int rows = lin.out, cols = lin.in;
    const int n = std::max(rows, cols), k = std::min(rows, cols);
    Eigen::MatrixXd a(n, k);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        a(i, j) = rng.normal();
      }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    Eigen::Map<Eigen::MatrixXd> w(params.data() + lin.w_off, rows, cols);
    w = gain * (rows >= cols ? q : Eigen::MatrixXd(q.transpose()));
    Eigen::Map<Eigen::VectorXd>(params.data() + lin.b_off, rows).setZero();
  }

  NetConfig cfg_;
  std::vector<Linear> actor_trunk_, critic_trunk_;
  Linear mean_head_, std_head_, value_head_;
  std::vector<ParameterSet::Segment> layout_;
  std::size_t actor_count_ = 0;
  std::size_t critic_offset_ = 0;
  std::size_t param_count_ = 0;
};

// Bias-corrected Adam over one contiguous parameter range.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
  std::size_t offset = 0;
  std::size_t count = 0;

  AdamState() = default;
  AdamState(std::size_t offset_, std::size_t count_, double beta1_ = 0.9,
            double beta2_ = 0.999, double epsilon_ = 1e-5)
      : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count_))),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count_))),
        beta1(beta1_),
        beta2(beta2_),
        epsilon(epsilon_),
        offset(offset_),
        count(count_) {}
};

inline void adam_step(ParameterSet& params, const Eigen::VectorXd& grad_full,
                      AdamState& st, double lr) {
  const auto n = static_cast<Eigen::Index>(st.count);
  const auto off = static_cast<Eigen::Index>(st.offset);
  const auto g = grad_full.segment(off, n);
  if (!g.allFinite()) {
    throw NonFiniteError("adam_step: non-finite gradient in segment at offset " +
                         std::to_string(st.offset));
  }
  st.t += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * g;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  Eigen::Map<Eigen::VectorXd> p(params.data() + st.offset, n);
  p.array() -=
      lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.epsilon);
}

}  // namespace crossway
