#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dspi/actor.hpp"
#include "dspi/common.hpp"
#include "dspi/nn.hpp"

namespace dspi::critic {

struct CriticConfig {
  double epsilon = 1e-6;  // denominator stabilizer in the gradient estimator
  double tau_soft = 0.005;
  double log_sigma_min = -5.0;
  double log_sigma_max = 5.0;

  double sigma_floor() const;

  void validate() const;
};

// Continuous return model: Z(.|s,a) ~ Normal(q, sigma^2).
struct ReturnDist {
  double q = 0.0;
  double sigma = 1.0;
};

struct CriticBatchTargets {
  Eigen::VectorXd y_q_min;     // conservative target mean, constant wrt the online net
  Eigen::VectorXd y_z_sample;  // stochastic target draw, no clipping applied
  double omega = 1.0;          // gradient scaling factor, constant wrt the online net
};

// omega ~= batch mean of sigma^2, treated as a constant.
double omega_estimate(const Eigen::VectorXd& sigmas);

struct UpdateDiag {
  double q_mean = 0.0;
  double sigma_mean = 0.0;
  double omega = 0.0;
  double mean_abs_c_q = 0.0;
  double mean_abs_c_sigma = 0.0;
};

// Twin value-distribution critics with target copies and soft updates. Both
// twins train against the same (y_q, y_z) per sample.
class GaussianCritic {
 public:
  GaussianCritic(int obs_dim, int act_dim, std::vector<int> hidden_widths, bool use_layer_norm,
                 CriticConfig cfg);

  void init_params(Rng& rng);  // targets start as exact copies

  const CriticConfig& config() const { return cfg_; }
  const nn::NetworkSpec& spec() const { return spec_; }
  nn::ParamStore& online(int which);
  nn::ParamStore& target(int which);
  const nn::ParamStore& online(int which) const;
  const nn::ParamStore& target(int which) const;

  ReturnDist forward(const nn::ParamStore& params, const Eigen::VectorXd& s,
                     const Eigen::VectorXd& a) const;

  struct Batch {
    Eigen::VectorXd q;
    Eigen::VectorXd sigma;
    Eigen::VectorXd raw_log_sigma;
    nn::ForwardCache cache;
  };
  Batch forward_batch(const nn::ParamStore& params, const Eigen::MatrixXd& s,
                      const Eigen::MatrixXd& a) const;

  // y = r + bootstrap * gamma * (min_j Q'_j(s',a') - alpha * logpi')
  Eigen::VectorXd target_mean_batch(const Eigen::VectorXd& r, const Eigen::VectorXd& bootstrap,
                                    double gamma, const Eigen::MatrixXd& s_next,
                                    const Eigen::MatrixXd& a_next,
                                    const Eigen::VectorXd& logpi_next, double alpha) const;

  // Draws z' from the target critic with the smaller mean per sample, then
  // y = r + bootstrap * gamma * (z' - alpha * logpi'). No clipping.
  Eigen::VectorXd target_sample_batch(const Eigen::VectorXd& r, const Eigen::VectorXd& bootstrap,
                                      double gamma, const Eigen::MatrixXd& s_next,
                                      const Eigen::MatrixXd& a_next,
                                      const Eigen::VectorXd& logpi_next, double alpha,
                                      Rng& rng) const;

  // omega * mean_B[c_Q * dQ + c_sigma * dsigma] with frozen coefficients
  //   c_Q     = -(y_q - Q) / (sigma^2 + eps)
  //   c_sigma = -(((y_z - Q)^2 - sigma^2)) / (sigma^3 + eps)
  // params must be the store that produced fwd.
  nn::Gradients critic_gradient(const nn::ParamStore& params, const Batch& fwd,
                                const CriticBatchTargets& targets,
                                UpdateDiag* diag = nullptr) const;

  void soft_update();

  // Per-sample min of the two online means with d q_min / d a, for the actor.
  actor::QEval min_q_with_grad(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) const;

 private:
  int obs_dim_;
  int act_dim_;
  nn::NetworkSpec spec_;
  CriticConfig cfg_;
  nn::ParamStore online_[2];
  nn::ParamStore target_[2];
};

// ---- Categorical (C51) ablation critic ----

struct C51Config {
  int n_atoms = 101;
  double v_min = 0.0;
  double v_max = 1.0;

  void validate() const;
};

Eigen::VectorXd c51_atoms(const C51Config& cfg);

// Projected Bellman update: shift every atom to clamp(r + (1-done)*gamma*z_i)
// and split its mass linearly between the bracketing atoms.
Eigen::VectorXd c51_project(double r, double gamma, bool done,
                            const Eigen::VectorXd& target_probs, const Eigen::VectorXd& atoms);

// Cross entropy -sum m_i log(pred_i + 1e-12).
double c51_loss(const Eigen::VectorXd& pred_probs, const Eigen::VectorXd& m);

// Twin categorical heads sharing the continuous critic's twin/target scheme;
// bootstrapped selection takes the head with the smaller expected value.
class CategoricalCritic {
 public:
  CategoricalCritic(int obs_dim, int act_dim, std::vector<int> hidden_widths,
                    bool use_layer_norm, C51Config cfg, double tau_soft);

  void init_params(Rng& rng);

  const C51Config& config() const { return cfg_; }
  const Eigen::VectorXd& atoms() const { return atoms_; }
  nn::ParamStore& online(int which);
  nn::ParamStore& target(int which);

  struct Batch {
    Eigen::MatrixXd probs;  // B x n_atoms
    Eigen::VectorXd expected;
    nn::ForwardCache cache;
  };
  Batch forward_batch(const nn::ParamStore& params, const Eigen::MatrixXd& s,
                      const Eigen::MatrixXd& a) const;

  // Projected targets from the min-mean target head; the entropy bonus is
  // folded into the per-sample reward before shifting.
  Eigen::MatrixXd projected_targets(const Eigen::VectorXd& r, const Eigen::VectorXd& bootstrap,
                                    double gamma, const Eigen::MatrixXd& s_next,
                                    const Eigen::MatrixXd& a_next,
                                    const Eigen::VectorXd& logpi_next, double alpha) const;

  // Cross-entropy gradient (softmax form: p - m); params must be the store
  // that produced fwd.
  nn::Gradients ce_gradient(const nn::ParamStore& params, const Batch& fwd,
                            const Eigen::MatrixXd& m, double* loss) const;

  void soft_update();

  actor::QEval min_q_with_grad(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) const;

 private:
  int obs_dim_;
  int act_dim_;
  nn::NetworkSpec spec_;
  C51Config cfg_;
  double tau_soft_;
  Eigen::VectorXd atoms_;
  nn::ParamStore online_[2];
  nn::ParamStore target_[2];
};

}  // namespace dspi::critic
