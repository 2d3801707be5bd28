#include "dspi/actor.hpp"

#include <cmath>

namespace dspi::actor {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kActionBound = 1.0 - 1e-12;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Eigen::ArrayXd softmax_row(const Eigen::ArrayXd& z) {
  Eigen::ArrayXd e = (z - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

void DemConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("dem temperature must be positive");
  if (!(log_std_min < log_std_max)) throw ConfigError("log_std_min must lie below log_std_max");
  if (!(beta_min > 0.0 && beta_min <= beta_max)) {
    throw ConfigError("beta range requires 0 < beta_min <= beta_max");
  }
}

Eigen::VectorXd dem_weights(const Eigen::VectorXd& logits, double tau, double beta) {
  if (!(tau > 0.0)) throw ConfigError("dem temperature must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (logits.size() < 1) throw InputError("dem_weights needs at least one logit");
  if (!logits.allFinite()) throw InputError("non-finite modulation logits");
  const double n = static_cast<double>(logits.size());
  Eigen::ArrayXd p = softmax_row(logits.array() * (beta / tau));
  return (n * p).matrix();
}

Eigen::VectorXd modulated_std(const Eigen::VectorXd& sigma_hat, const Eigen::VectorXd& w) {
  // scalar exp keeps the disabled-modulation path bit-identical to a plain
  // diagonal-Gaussian policy
  Eigen::VectorXd sigma(sigma_hat.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma[i] = w[i] * std::exp(sigma_hat[i]);
  return sigma;
}

Eigen::VectorXd assign_env_betas(int env_count, double beta_min, double beta_max, Rng& rng) {
  if (env_count < 1) throw ConfigError("need at least one environment");
  if (!(beta_min > 0.0 && beta_min <= beta_max)) {
    throw ConfigError("beta range requires 0 < beta_min <= beta_max");
  }
  std::uniform_real_distribution<double> dist(beta_min, beta_max);
  Eigen::VectorXd betas(env_count);
  for (int e = 0; e < env_count; ++e) {
    betas[e] = beta_min == beta_max ? beta_min : dist(rng);
  }
  return betas;
}

double tanh_log_jacobian(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

Policy::Policy(int obs_dim, int act_dim, std::vector<int> hidden_widths, bool use_layer_norm,
               DemConfig dem)
    : obs_dim_(obs_dim), act_dim_(act_dim), dem_(dem) {
  if (act_dim < 1) throw ConfigError("action dimension must be positive");
  dem_.validate();
  spec_.input_dim = obs_dim;
  spec_.hidden_widths = std::move(hidden_widths);
  spec_.output_dim = 3 * act_dim;
  spec_.use_layer_norm = use_layer_norm;
  spec_.validate();
}

void Policy::init_params(Rng& rng) { params_ = nn::init_mlp_params(spec_, rng); }

PolicyHead Policy::head(const Eigen::VectorXd& obs) const {
  HeadBatch hb = head_batch(obs.transpose());
  PolicyHead h;
  h.mu = hb.mu.row(0);
  h.sigma_hat = hb.sigma_hat.row(0);
  h.logits = hb.logits.row(0);
  return h;
}

HeadBatch Policy::head_batch(const Eigen::MatrixXd& obs) const {
  HeadBatch hb;
  hb.cache = nn::mlp_forward_cached(spec_, params_, obs);
  const int n = act_dim_;
  hb.mu = hb.cache.output.leftCols(n);
  hb.sigma_hat_raw = hb.cache.output.middleCols(n, n);
  hb.sigma_hat = hb.sigma_hat_raw.cwiseMax(dem_.log_std_min).cwiseMin(dem_.log_std_max);
  hb.logits = hb.cache.output.rightCols(n);
  return hb;
}

Eigen::VectorXd Policy::weights_for(const PolicyHead& head, double beta) const {
  if (!dem_.dem_enabled) return Eigen::VectorXd::Ones(act_dim_);
  return dem_weights(head.logits, dem_.tau, beta);
}

ActionSample Policy::sample_action(const PolicyHead& head, double beta, Rng& rng) const {
  const Eigen::VectorXd w = weights_for(head, beta);
  const Eigen::VectorXd sigma = modulated_std(head.sigma_hat, w);
  std::normal_distribution<double> normal(0.0, 1.0);
  ActionSample s;
  s.u.resize(act_dim_);
  for (int i = 0; i < act_dim_; ++i) {
    s.u[i] = head.mu[i] + sigma[i] * normal(rng);
  }
  s.a = s.u.array().tanh().min(kActionBound).max(-kActionBound);
  s.log_prob = log_prob(head, beta, s.u);
  return s;
}

double Policy::log_prob(const PolicyHead& head, double beta, const Eigen::VectorXd& u) const {
  if (!u.allFinite()) throw InputError("non-finite pre-squash action");
  const Eigen::VectorXd w = weights_for(head, beta);
  const Eigen::VectorXd sigma = modulated_std(head.sigma_hat, w);
  double lp = 0.0;
  for (int i = 0; i < act_dim_; ++i) {
    const double z = (u[i] - head.mu[i]) / sigma[i];
    lp += -kHalfLog2Pi - std::log(sigma[i]) - 0.5 * z * z;
    lp -= tanh_log_jacobian(u[i]);
  }
  return lp;
}

Eigen::VectorXd Policy::deterministic_action(const PolicyHead& head) const {
  return head.mu.array().tanh();
}

SampleBatch Policy::sample_batch(const HeadBatch& heads, double beta, Rng& rng) const {
  Eigen::MatrixXd xi(heads.mu.rows(), act_dim_);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < xi.rows(); ++r) {
    for (int i = 0; i < act_dim_; ++i) xi(r, i) = normal(rng);
  }
  return sample_batch_with_noise(heads, beta, xi);
}

SampleBatch Policy::sample_batch_with_noise(const HeadBatch& heads, double beta,
                                            const Eigen::MatrixXd& xi) const {
  const Eigen::Index b = heads.mu.rows();
  const int n = act_dim_;
  SampleBatch out;
  out.xi = xi;
  if (dem_.dem_enabled) {
    out.w.resize(b, n);
    const double scale = beta / dem_.tau;
    for (Eigen::Index r = 0; r < b; ++r) {
      Eigen::ArrayXd p = softmax_row(heads.logits.row(r).array().transpose() * scale);
      out.w.row(r) = (static_cast<double>(n) * p).transpose();
    }
  } else {
    out.w = Eigen::MatrixXd::Ones(b, n);
  }
  out.sigma.resize(b, n);
  for (Eigen::Index r = 0; r < b; ++r) {
    for (int i = 0; i < n; ++i) out.sigma(r, i) = out.w(r, i) * std::exp(heads.sigma_hat(r, i));
  }
  out.u = heads.mu.array() + out.sigma.array() * out.xi.array();
  out.a = out.u.array().tanh().min(kActionBound).max(-kActionBound);
  out.log_prob.resize(b);
  for (Eigen::Index r = 0; r < b; ++r) {
    double lp = 0.0;
    for (int i = 0; i < n; ++i) {
      const double xi = out.xi(r, i);
      lp += -kHalfLog2Pi - std::log(out.sigma(r, i)) - 0.5 * xi * xi;
      lp -= tanh_log_jacobian(out.u(r, i));
    }
    out.log_prob[r] = lp;
  }
  return out;
}

ActorBatchGrad actor_loss_backward(const Policy& policy, const Eigen::MatrixXd& obs,
                                   double alpha, const QFunction& q_fn, Rng& rng) {
  Eigen::MatrixXd xi(obs.rows(), policy.act_dim());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < xi.rows(); ++r) {
    for (int i = 0; i < policy.act_dim(); ++i) xi(r, i) = normal(rng);
  }
  return actor_loss_backward_with_noise(policy, obs, alpha, q_fn, xi);
}

ActorBatchGrad actor_loss_backward_with_noise(const Policy& policy, const Eigen::MatrixXd& obs,
                                              double alpha, const QFunction& q_fn,
                                              const Eigen::MatrixXd& xi) {
  const int n = policy.act_dim();
  const double inv_b = 1.0 / static_cast<double>(obs.rows());
  HeadBatch heads = policy.head_batch(obs);
  SampleBatch smp = policy.sample_batch_with_noise(heads, 1.0, xi);
  QEval qe = q_fn(obs, smp.a);

  ActorBatchGrad out;
  out.log_probs = smp.log_prob;
  out.actions = smp.a;
  out.loss = inv_b * (alpha * smp.log_prob.sum() - qe.q.sum());

  // dL/du routes: tanh correction (2a per dim) for the entropy term and the
  // squash Jacobian for the critic term; density-parameter routes handled
  // below in closed form.
  Eigen::ArrayXXd one_m_a2 = 1.0 - smp.a.array().square();
  Eigen::ArrayXXd d_mu = inv_b * (alpha * 2.0 * smp.a.array() - qe.dq_da.array() * one_m_a2);
  Eigen::ArrayXXd d_sigma =
      inv_b * (alpha * (-smp.sigma.array().inverse() + 2.0 * smp.a.array() * smp.xi.array()) -
               qe.dq_da.array() * one_m_a2 * smp.xi.array());

  // sigma = w * exp(sigma_hat): split between the clamped log-std head and
  // the modulation logits (softmax Jacobian keeps conservation intact).
  Eigen::ArrayXXd d_sigma_hat = d_sigma * smp.sigma.array();
  Eigen::ArrayXXd clamp_mask =
      (heads.sigma_hat_raw.array() >= policy.dem().log_std_min &&
       heads.sigma_hat_raw.array() <= policy.dem().log_std_max)
          .cast<double>();
  Eigen::ArrayXXd d_sigma_hat_raw = d_sigma_hat * clamp_mask;

  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(obs.rows(), n);
  if (policy.dem().dem_enabled) {
    Eigen::ArrayXXd d_w = d_sigma * (smp.sigma.array() / smp.w.array());
    const double beta_over_tau = 1.0 / policy.dem().tau;  // update path runs beta = 1
    for (Eigen::Index r = 0; r < obs.rows(); ++r) {
      const Eigen::ArrayXd wr = smp.w.row(r).array().transpose();
      const Eigen::ArrayXd dwr = d_w.row(r).array().transpose();
      const double inner = (dwr * wr).sum() / static_cast<double>(n);
      d_logits.row(r) = (beta_over_tau * wr * (dwr - inner)).transpose();
    }
  }

  Eigen::MatrixXd upstream(obs.rows(), 3 * n);
  upstream.leftCols(n) = d_mu.matrix();
  upstream.middleCols(n, n) = d_sigma_hat_raw.matrix();
  upstream.rightCols(n) = d_logits;
  out.grads = nn::mlp_backward(policy.spec(), policy.params(), heads.cache, upstream).grads;
  return out;
}

}  // namespace dspi::actor
