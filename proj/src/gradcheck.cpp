#include "dspi/gradcheck.hpp"

#include <cmath>

#include "dspi/actor.hpp"
#include "dspi/critic.hpp"

namespace dspi::gradcheck {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kKinkMargin = 1e-3;
constexpr int kMaxRedraws = 50;

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

bool near_relu_kink(const nn::ForwardCache& cache) {
  for (const auto& pre : cache.pre_act) {
    if ((pre.array().abs() < kKinkMargin).any()) return true;
  }
  return false;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

// Max relative error between analytic grads and central differences of
// `loss` over every scalar parameter in `params`.
template <typename LossFn>
double fd_compare(nn::ParamStore& params, const nn::Gradients& analytic, const LossFn& loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    auto& e = params.entries()[i];
    for (Eigen::Index j = 0; j < e.value.size(); ++j) {
      const double orig = e.value(j);
      e.value(j) = orig + kFdStep;
      const double lp = loss();
      e.value(j) = orig - kFdStep;
      const double lm = loss();
      e.value(j) = orig;
      const double num = (lp - lm) / (2.0 * kFdStep);
      worst = std::max(worst, rel_error(analytic.by_index[i](j), num));
    }
  }
  return worst;
}

}  // namespace

CheckSummary check_mlp_backprop(std::uint64_t seed, int instances, double tol,
                                const Tamper& tamper) {
  CheckSummary sum;
  sum.component = "mlp_backprop";
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng = make_rng(seed, 10000 + static_cast<std::uint64_t>(inst));
    std::uniform_int_distribution<int> dim(2, 6);
    std::uniform_int_distribution<int> width(3, 10);
    std::uniform_int_distribution<int> layers(1, 2);
    std::uniform_int_distribution<int> coin(0, 1);

    nn::NetworkSpec spec;
    spec.input_dim = dim(rng);
    spec.output_dim = dim(rng);
    const int n_layers = layers(rng);
    for (int k = 0; k < n_layers; ++k) spec.hidden_widths.push_back(width(rng));
    spec.use_layer_norm = coin(rng) == 1;

    nn::ParamStore params;
    Eigen::MatrixXd x;
    bool ok = false;
    for (int tries = 0; tries < kMaxRedraws && !ok; ++tries) {
      params = nn::init_mlp_params(spec, rng);
      x = random_matrix(1 + coin(rng), spec.input_dim, rng);
      ok = !near_relu_kink(nn::mlp_forward_cached(spec, params, x));
    }
    if (!ok) continue;

    Eigen::MatrixXd upstream = random_matrix(x.rows(), spec.output_dim, rng);
    auto cache = nn::mlp_forward_cached(spec, params, x);
    auto analytic = nn::mlp_backward(spec, params, cache, upstream);
    if (tamper) tamper(analytic.grads);

    auto loss = [&]() {
      return (nn::mlp_forward(spec, params, x).array() * upstream.array()).sum();
    };
    sum.max_rel_error = std::max(sum.max_rel_error, fd_compare(params, analytic.grads, loss));
    ++sum.instances;
  }
  sum.pass = sum.instances > 0 && sum.max_rel_error <= tol;
  return sum;
}

CheckSummary check_actor_logprob(std::uint64_t seed, int instances, double tol) {
  CheckSummary sum;
  sum.component = "actor_logprob";
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng = make_rng(seed, 20000 + static_cast<std::uint64_t>(inst));
    std::uniform_int_distribution<int> obs_dim_d(2, 4);
    std::uniform_int_distribution<int> act_dim_d(1, 4);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_real_distribution<double> tau_d(0.5, 2.0);
    std::uniform_real_distribution<double> alpha_d(0.0, 2.0);

    actor::DemConfig dem;
    dem.tau = tau_d(rng);
    dem.dem_enabled = inst % 4 != 3;  // cover the standard-Gaussian ablation too
    const int obs_dim = obs_dim_d(rng);
    const int act_dim = act_dim_d(rng);
    actor::Policy policy(obs_dim, act_dim, {8, 8}, coin(rng) == 1, dem);

    Eigen::MatrixXd obs;
    bool ok = false;
    for (int tries = 0; tries < kMaxRedraws && !ok; ++tries) {
      policy.init_params(rng);
      obs = random_matrix(2, obs_dim, rng);
      auto heads = policy.head_batch(obs);
      const bool kink = near_relu_kink(heads.cache);
      const bool clamped = ((heads.sigma_hat_raw.array() - dem.log_std_min).abs() < kKinkMargin ||
                            (heads.sigma_hat_raw.array() - dem.log_std_max).abs() < kKinkMargin)
                               .any();
      ok = !kink && !clamped;
    }
    if (!ok) continue;

    const double alpha = alpha_d(rng);
    const Eigen::MatrixXd xi = random_matrix(obs.rows(), act_dim, rng);
    // Synthetic smooth critic with a known gradient, so the squash path is
    // exercised alongside the log-density path.
    const Eigen::VectorXd lin = random_matrix(act_dim, 1, rng);
    const Eigen::VectorXd quad = random_matrix(act_dim, 1, rng);
    actor::QFunction q_fn = [&](const Eigen::MatrixXd&, const Eigen::MatrixXd& a) {
      actor::QEval qe;
      qe.q = a * lin + a.array().square().matrix() * quad;
      qe.dq_da = (lin.transpose().replicate(a.rows(), 1)).array() +
                 2.0 * a.array() * (quad.transpose().replicate(a.rows(), 1)).array();
      return qe;
    };

    auto analytic = actor::actor_loss_backward_with_noise(policy, obs, alpha, q_fn, xi);
    auto loss = [&]() {
      auto heads = policy.head_batch(obs);
      auto smp = policy.sample_batch_with_noise(heads, 1.0, xi);
      auto qe = q_fn(obs, smp.a);
      return (alpha * smp.log_prob.array() - qe.q.array()).mean();
    };
    sum.max_rel_error =
        std::max(sum.max_rel_error, fd_compare(policy.params(), analytic.grads, loss));
    ++sum.instances;
  }
  sum.pass = sum.instances > 0 && sum.max_rel_error <= tol;
  return sum;
}

CheckSummary check_critic_surrogate(std::uint64_t seed, int instances, double tol) {
  CheckSummary sum;
  sum.component = "critic_surrogate";
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng = make_rng(seed, 30000 + static_cast<std::uint64_t>(inst));
    std::uniform_int_distribution<int> obs_dim_d(2, 4);
    std::uniform_int_distribution<int> act_dim_d(1, 3);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_real_distribution<double> omega_d(0.5, 2.0);

    critic::CriticConfig cfg;
    const int obs_dim = obs_dim_d(rng);
    const int act_dim = act_dim_d(rng);
    const int twin = inst % 2;  // both twins must backpropagate correctly
    critic::GaussianCritic crit(obs_dim, act_dim, {8, 8}, coin(rng) == 1, cfg);

    Eigen::MatrixXd s, a;
    bool ok = false;
    for (int tries = 0; tries < kMaxRedraws && !ok; ++tries) {
      crit.init_params(rng);
      s = random_matrix(2, obs_dim, rng);
      a = random_matrix(2, act_dim, rng, 0.5);
      auto fwd = crit.forward_batch(crit.online(twin), s, a);
      const bool kink = near_relu_kink(fwd.cache);
      const bool clamped = ((fwd.raw_log_sigma.array() - cfg.log_sigma_min).abs() < kKinkMargin ||
                            (fwd.raw_log_sigma.array() - cfg.log_sigma_max).abs() < kKinkMargin)
                               .any();
      ok = !kink && !clamped;
    }
    if (!ok) continue;

    auto base = crit.forward_batch(crit.online(twin), s, a);
    critic::CriticBatchTargets targets;
    targets.y_q_min = base.q + random_matrix(base.q.size(), 1, rng);
    targets.y_z_sample = base.q + random_matrix(base.q.size(), 1, rng, 1.5);
    targets.omega = omega_d(rng);
    auto analytic = crit.critic_gradient(crit.online(twin), base, targets);

    // Coefficients frozen at the base point; the surrogate only re-evaluates
    // Q and sigma.
    const Eigen::ArrayXd c_q =
        -(targets.y_q_min.array() - base.q.array()) / (base.sigma.array().square() + cfg.epsilon);
    const Eigen::ArrayXd c_sigma =
        -((targets.y_z_sample.array() - base.q.array()).square() - base.sigma.array().square()) /
        (base.sigma.array().cube() + cfg.epsilon);
    auto loss = [&]() {
      auto fwd = crit.forward_batch(crit.online(twin), s, a);
      return targets.omega * (c_q * fwd.q.array() + c_sigma * fwd.sigma.array()).mean();
    };
    sum.max_rel_error =
        std::max(sum.max_rel_error, fd_compare(crit.online(twin), analytic, loss));
    ++sum.instances;
  }
  sum.pass = sum.instances > 0 && sum.max_rel_error <= tol;
  return sum;
}

}  // namespace dspi::gradcheck
