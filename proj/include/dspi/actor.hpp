#pragma once

#include <Eigen/Dense>
#include <functional>

#include "dspi/common.hpp"
#include "dspi/nn.hpp"

namespace dspi::actor {

struct DemConfig {
  double tau = 1.0;            // softmax temperature over modulation logits
  double log_std_min = -10.0;  // clamp bounds on the base log-std head
  double log_std_max = 1.0;
  double beta_min = 0.01;      // per-env logit scaling range
  double beta_max = 2.0;
  bool dem_enabled = true;

  void validate() const;
};

// Per-state actor outputs. sigma_hat is already clamped.
struct PolicyHead {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma_hat;
  Eigen::VectorXd logits;
};

struct ActionSample {
  Eigen::VectorXd u;  // pre-squash Gaussian draw
  Eigen::VectorXd a;  // tanh(u), strictly inside (-1, 1)
  double log_prob = 0.0;
};

// w_i = N * softmax(logits * beta / tau)_i. Mean weight is exactly 1, so the
// total exploration budget is conserved; beta reshapes the distribution
// without breaking conservation.
Eigen::VectorXd dem_weights(const Eigen::VectorXd& logits, double tau, double beta);

// sigma_i = w_i * exp(sigma_hat_i)
Eigen::VectorXd modulated_std(const Eigen::VectorXd& sigma_hat, const Eigen::VectorXd& w);

// One scaling factor per environment, beta_e ~ U[beta_min, beta_max], fixed
// for the lifetime of that environment. Evaluation always runs with beta=1.
Eigen::VectorXd assign_env_betas(int env_count, double beta_min, double beta_max, Rng& rng);

// log(1 - tanh(u)^2) in the overflow-safe form 2*(log 2 - u - softplus(-2u)).
double tanh_log_jacobian(double u);

struct HeadBatch {
  Eigen::MatrixXd mu;             // B x N
  Eigen::MatrixXd sigma_hat_raw;  // pre-clamp log-std head output
  Eigen::MatrixXd sigma_hat;      // clamped
  Eigen::MatrixXd logits;
  nn::ForwardCache cache;
};

struct SampleBatch {
  Eigen::MatrixXd xi;      // standard normal draws
  Eigen::MatrixXd u;       // mu + sigma .* xi
  Eigen::MatrixXd a;       // tanh(u)
  Eigen::MatrixXd w;       // modulation weights used
  Eigen::MatrixXd sigma;   // modulated stds
  Eigen::VectorXd log_prob;
};

// Evaluation of the critic mean at (s, a) together with d q / d a, supplied
// by whichever critic the trainer runs.
struct QEval {
  Eigen::VectorXd q;       // B
  Eigen::MatrixXd dq_da;   // B x N
};
using QFunction = std::function<QEval(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act)>;

// Squashed-Gaussian policy with a shared MLP trunk and three parallel linear
// output blocks (mean, base log-std, modulation logits).
class Policy {
 public:
  Policy(int obs_dim, int act_dim, std::vector<int> hidden_widths, bool use_layer_norm,
         DemConfig dem);

  void init_params(Rng& rng);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  const nn::NetworkSpec& spec() const { return spec_; }
  const DemConfig& dem() const { return dem_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  PolicyHead head(const Eigen::VectorXd& obs) const;
  HeadBatch head_batch(const Eigen::MatrixXd& obs) const;

  // All-ones when modulation is disabled (standard diagonal-Gaussian ablation).
  Eigen::VectorXd weights_for(const PolicyHead& head, double beta) const;

  ActionSample sample_action(const PolicyHead& head, double beta, Rng& rng) const;
  SampleBatch sample_batch(const HeadBatch& heads, double beta, Rng& rng) const;
  SampleBatch sample_batch_with_noise(const HeadBatch& heads, double beta,
                                      const Eigen::MatrixXd& xi) const;

  double log_prob(const PolicyHead& head, double beta, const Eigen::VectorXd& u) const;

  Eigen::VectorXd deterministic_action(const PolicyHead& head) const;

 private:
  int obs_dim_;
  int act_dim_;
  nn::NetworkSpec spec_;
  DemConfig dem_;
  nn::ParamStore params_;
};

struct ActorBatchGrad {
  nn::Gradients grads;
  Eigen::VectorXd log_probs;
  Eigen::MatrixXd actions;
  double loss = 0.0;
};

// Gradient of mean(alpha * log pi(a|s) - q(s, a)) over freshly resampled
// actions (reparameterized, beta = 1). Critic parameters are untouched; only
// dq/da flows back.
ActorBatchGrad actor_loss_backward(const Policy& policy, const Eigen::MatrixXd& obs,
                                   double alpha, const QFunction& q_fn, Rng& rng);
// Same with caller-supplied noise, for finite-difference verification.
ActorBatchGrad actor_loss_backward_with_noise(const Policy& policy, const Eigen::MatrixXd& obs,
                                              double alpha, const QFunction& q_fn,
                                              const Eigen::MatrixXd& xi);

}  // namespace dspi::actor
