#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "crossway/net.hpp"
#include "gradcheck.hpp"

using namespace crossway;

namespace {

NetConfig small_config() {
  NetConfig cfg;
  cfg.obs_dim = 3;
  cfg.act_dim = 2;
  cfg.hidden_layers = 2;
  cfg.hidden_units = 6;
  cfg.sigma_min = 0.01;
  return cfg;
}

Eigen::VectorXd fixed_obs(int dim) {
  Eigen::VectorXd obs(dim);
  for (int i = 0; i < dim; ++i) {
    obs[i] = 0.3 + 0.17 * static_cast<double>(i) * (i % 2 == 0 ? 1.0 : -1.0);
  }
  return obs;
}

TEST(NetForwardTest, ZeroParametersGiveClosedFormOutputs) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();  // all zero
  ActorCriticNet::Workspace ws;
  const Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);

  const GaussianPolicyOutput out = net.actor_forward_single(params, obs, ws);
  const double expected_std = std::log(2.0) + cfg.sigma_min;  // softplus(0)+min
  for (Eigen::Index j = 0; j < out.mean.size(); ++j) {
    EXPECT_DOUBLE_EQ(out.mean[j], 0.0);
    EXPECT_NEAR(out.std[j], expected_std, 1e-15);
  }
  EXPECT_DOUBLE_EQ(net.critic_value_single(params, obs, ws), 0.0);
}

TEST(NetForwardTest, DeterministicInParamsAndObservation) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(3);
  net.init_parameters(params, rng);
  ActorCriticNet::Workspace ws1, ws2;
  const Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);
  const GaussianPolicyOutput a = net.actor_forward_single(params, obs, ws1);
  const GaussianPolicyOutput b = net.actor_forward_single(params, obs, ws2);
  for (Eigen::Index j = 0; j < a.mean.size(); ++j) {
    EXPECT_EQ(a.mean[j], b.mean[j]);
    EXPECT_EQ(a.std[j], b.std[j]);
  }
}

TEST(NetForwardTest, NonFiniteObservationRejected) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  ActorCriticNet::Workspace ws;
  Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);
  obs[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(net.actor_forward_single(params, obs, ws), NonFiniteError);
  EXPECT_THROW(net.critic_value_single(params, obs, ws), NonFiniteError);
}

TEST(NetForwardTest, SegmentsAreDisjointAndNamed) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  EXPECT_EQ(params.size(), net.param_count());
  // Actor and critic ranges partition the store.
  EXPECT_EQ(net.actor_offset(), 0u);
  EXPECT_EQ(net.actor_count() + net.critic_count(), net.param_count());
  EXPECT_EQ(net.critic_offset(), net.actor_count());
  std::size_t covered = 0;
  for (const auto& seg : params.segments()) {
    EXPECT_EQ(seg.offset, covered);
    covered += seg.count;
  }
  EXPECT_EQ(covered, params.size());
  EXPECT_NO_THROW(params.segment("actor.mean.w"));
  EXPECT_NO_THROW(params.segment("critic.value.b"));
  EXPECT_THROW(params.segment("nope"), std::out_of_range);
}

TEST(NetGradientTest, MeanJacobianMatchesFiniteDifferences) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(11);
  net.init_parameters(params, rng);
  ActorCriticNet::Workspace ws;
  const Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);

  for (int j = 0; j < cfg.act_dim; ++j) {
    Eigen::VectorXd analytic =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
    ws.a_in = obs;
    net.actor_forward(params, ws);
    Eigen::MatrixXd d_mean = Eigen::MatrixXd::Zero(cfg.act_dim, 1);
    d_mean(j, 0) = 1.0;
    const Eigen::MatrixXd d_std = Eigen::MatrixXd::Zero(cfg.act_dim, 1);
    net.actor_backward(params, ws, d_mean, d_std, analytic);

    const Eigen::VectorXd fd = gradcheck::finite_difference_gradient(
        params, [&] { return net.actor_forward_single(params, obs, ws).mean[j]; });
    EXPECT_LT(gradcheck::max_relative_error(analytic, fd), 1e-5) << "output " << j;
  }
}

TEST(NetGradientTest, CriticGradientMatchesFiniteDifferences) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(13);
  net.init_parameters(params, rng);
  ActorCriticNet::Workspace ws;
  const Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);

  Eigen::VectorXd analytic =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
  ws.c_in = obs;
  net.critic_forward(params, ws);
  Eigen::RowVectorXd d_value(1);
  d_value[0] = 1.0;
  net.critic_backward(params, ws, d_value, analytic);

  const Eigen::VectorXd fd = gradcheck::finite_difference_gradient(
      params, [&] { return net.critic_value_single(params, obs, ws); });
  EXPECT_LT(gradcheck::max_relative_error(analytic, fd), 1e-5);
}

TEST(NetGradientTest, LogProbGradientMatchesFiniteDifferences) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(17);
  net.init_parameters(params, rng);
  ActorCriticNet::Workspace ws;
  const Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);
  Eigen::VectorXd action(cfg.act_dim);
  action << 0.7, -0.4;

  // Analytic: chain rule through mean and std of the Gaussian density.
  ws.a_in = obs;
  net.actor_forward(params, ws);
  Eigen::MatrixXd d_mean(cfg.act_dim, 1), d_std(cfg.act_dim, 1);
  for (int j = 0; j < cfg.act_dim; ++j) {
    const double sd = ws.std_dev(j, 0);
    const double z = (action[j] - ws.mean(j, 0)) / sd;
    d_mean(j, 0) = z / sd;
    d_std(j, 0) = (z * z - 1.0) / sd;
  }
  Eigen::VectorXd analytic =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.param_count()));
  net.actor_backward(params, ws, d_mean, d_std, analytic);

  const Eigen::VectorXd fd = gradcheck::finite_difference_gradient(params, [&] {
    const GaussianPolicyOutput out = net.actor_forward_single(params, obs, ws);
    return gaussian_log_prob(out, action);
  });
  EXPECT_LT(gradcheck::max_relative_error(analytic, fd), 1e-5);
}

TEST(NetGradientTest, CriticRespondsToEveryParameter) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(19);
  net.init_parameters(params, rng);
  ActorCriticNet::Workspace ws;
  const Eigen::VectorXd obs = fixed_obs(cfg.obs_dim);
  const double base = net.critic_value_single(params, obs, ws);
  for (std::size_t i = net.critic_offset(); i < net.param_count(); ++i) {
    const double saved = params[i];
    params[i] = saved + 0.5;
    const double perturbed = net.critic_value_single(params, obs, ws);
    params[i] = saved;
    EXPECT_NE(perturbed, base) << "parameter " << i;
  }
}

TEST(NetSamplingTest, LogProbAtMeanWithUnitStd) {
  GaussianPolicyOutput out;
  out.mean = Eigen::VectorXd::Zero(8);
  out.std = Eigen::VectorXd::Ones(8);
  const double logp = gaussian_log_prob(out, out.mean);
  EXPECT_NEAR(logp, -4.0 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(logp, -7.3515, 1e-4);
}

TEST(NetSamplingTest, SampleMeanConvergesAtMinimumStd) {
  const double sigma_min = 0.01;
  GaussianPolicyOutput out;
  out.mean = Eigen::VectorXd::Constant(3, 1.5);
  out.std = Eigen::VectorXd::Constant(3, sigma_min);
  RandomStream rng(23);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) {
    sum += sample_action(out, rng).first;
  }
  const Eigen::VectorXd sample_mean = sum / n;
  const double bound = 3.0 * sigma_min / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_NEAR(sample_mean[j], 1.5, bound);
  }
}

TEST(NetSamplingTest, FixedStreamIsReproducible) {
  GaussianPolicyOutput out;
  out.mean = Eigen::VectorXd::Zero(4);
  out.std = Eigen::VectorXd::Ones(4);
  RandomStream a(31), b(31);
  for (int i = 0; i < 100; ++i) {
    const auto [action_a, logp_a] = sample_action(out, a);
    const auto [action_b, logp_b] = sample_action(out, b);
    ASSERT_EQ(logp_a, logp_b);
    for (Eigen::Index j = 0; j < 4; ++j) {
      ASSERT_EQ(action_a[j], action_b[j]);
    }
  }
}

TEST(NetSamplingTest, StdNeverFallsBelowMinimum) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(37);
  net.init_parameters(params, rng);
  // Push the std head strongly negative.
  const auto seg = params.segment("actor.std.b");
  for (std::size_t i = 0; i < seg.count; ++i) {
    params[seg.offset + i] = -40.0;
  }
  ActorCriticNet::Workspace ws;
  const GaussianPolicyOutput out =
      net.actor_forward_single(params, fixed_obs(cfg.obs_dim), ws);
  for (Eigen::Index j = 0; j < out.std.size(); ++j) {
    EXPECT_GE(out.std[j], cfg.sigma_min);
  }
}

TEST(AdamTest, FirstStepApproximatesSignedLearningRate) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  AdamState adam(0, params.size());
  Eigen::VectorXd grad(static_cast<Eigen::Index>(params.size()));
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    grad[i] = (i % 2 == 0) ? 2.0 : -0.5;
  }
  const double lr = 1e-3;
  adam_step(params, grad, adam, lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double expected = -lr * (grad[static_cast<Eigen::Index>(i)] > 0 ? 1.0 : -1.0);
    EXPECT_NEAR(params[i], expected, lr * 1e-4);
  }
}

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  const NetConfig cfg = small_config();
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(41);
  net.init_parameters(params, rng);
  const ParameterSet before = params;
  AdamState adam(0, params.size());
  const Eigen::VectorXd grad =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  adam_step(params, grad, adam, 3e-4);
  EXPECT_TRUE(params == before);
}

TEST(AdamTest, NonFiniteGradientAborts) {
  ParameterSet params;
  params.add_segment("p", 4);
  AdamState adam(0, 4);
  Eigen::VectorXd grad = Eigen::VectorXd::Ones(4);
  grad[2] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_step(params, grad, adam, 1e-3), NonFiniteError);
}

TEST(AdamTest, DescendsConvexQuadratic) {
  // Scalar oracle: f(x) = (x - 3)^2 from x = 0.
  ParameterSet params;
  params.add_segment("x", 1);
  AdamState adam(0, 1);
  auto loss = [&] { return (params[0] - 3.0) * (params[0] - 3.0); };
  int improvements = 0;
  double prev = loss();
  for (int step = 0; step < 100; ++step) {
    Eigen::VectorXd grad(1);
    grad[0] = 2.0 * (params[0] - 3.0);
    adam_step(params, grad, adam, 0.05);
    const double cur = loss();
    if (cur < prev) improvements += 1;
    prev = cur;
  }
  EXPECT_GE(improvements, 95);
}

TEST(NetInitTest, InitialStdMatchesConfiguredValue) {
  NetConfig cfg = small_config();
  cfg.sigma_init = 0.37;
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(47);
  net.init_parameters(params, rng);
  ActorCriticNet::Workspace ws;
  const GaussianPolicyOutput out =
      net.actor_forward_single(params, fixed_obs(cfg.obs_dim), ws);
  for (Eigen::Index j = 0; j < out.std.size(); ++j) {
    EXPECT_NEAR(out.std[j], 0.37, 0.02);  // head weights are 0.01-scale
  }
}

TEST(NetInitTest, RejectsInitialStdBelowMinimum) {
  NetConfig cfg = small_config();
  cfg.sigma_init = cfg.sigma_min;
  EXPECT_THROW(ActorCriticNet net(cfg), std::invalid_argument);
}

TEST(NetInitTest, HiddenLayersAreOrthogonalWithGain) {
  NetConfig cfg = small_config();
  cfg.hidden_units = 5;
  ActorCriticNet net(cfg);
  ParameterSet params = net.make_parameter_set();
  RandomStream rng(43);
  net.init_parameters(params, rng);
  // Second hidden layer is square: W W^T should be 2 * I (gain sqrt(2)).
  const auto seg = params.segment("actor.h1.w");
  const Eigen::Map<const Eigen::MatrixXd> w(params.data() + seg.offset, 5, 5);
  const Eigen::MatrixXd gram = w * w.transpose();
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      EXPECT_NEAR(gram(i, j), i == j ? 2.0 : 0.0, 1e-9);
    }
  }
}

}  // namespace
