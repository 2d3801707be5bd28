#pragma once

#include <Eigen/Dense>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dspi/actor.hpp"
#include "dspi/common.hpp"
#include "dspi/critic.hpp"
#include "dspi/envs.hpp"

namespace dspi::trainer {

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;  // in [-1, 1]^N
  double r = 0.0;
  Eigen::VectorXd s_next;
  bool done = false;       // environment-true termination: no bootstrap
  bool truncated = false;  // time-limit cutoff: still bootstraps
};

// Fixed-capacity circular store, strict FIFO overwrite, uniform sampling
// with replacement.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, int obs_dim, int act_dim);

  void push(const Transition& t);
  void push_batch(const std::vector<Transition>& batch);

  struct Batch {
    Eigen::MatrixXd s, a, s_next;
    Eigen::VectorXd r;
    Eigen::VectorXd bootstrap;  // 1 unless the transition truly terminated
  };
  Batch sample(int batch_size, Rng& rng) const;

  int size() const { return size_; }
  int capacity() const { return capacity_; }
  bool done_at(int i) const { return done_[i] != 0; }
  bool truncated_at(int i) const { return truncated_[i] != 0; }
  double reward_at(int i) const { return r_[i]; }

 private:
  int capacity_;
  int obs_dim_;
  int act_dim_;
  int cursor_ = 0;
  int size_ = 0;
  Eigen::MatrixXd s_, a_, s_next_;
  Eigen::VectorXd r_;
  std::vector<std::uint8_t> done_, truncated_;
};

struct AlphaState {
  double log_alpha = 0.0;
  double lr = 1e-2;
  double target_entropy = 0.0;

  double alpha() const { return std::exp(log_alpha); }
};

// One descent step on log alpha: alpha shrinks when entropy (mean -log pi)
// exceeds the target, grows when it falls short.
void alpha_update(AlphaState& state, const Eigen::VectorXd& log_pis);

struct TrainConfig {
  envs::EnvConfig env;
  std::uint64_t seed = 1;

  double gamma = 0.99;
  int num_envs = 16;
  int batch_size = 256;
  long total_steps = 10000;  // train_step invocations; transitions = total_steps * num_envs
  int updates_per_env_step = 1;
  long learning_starts = 1000;  // collected transitions before the first update
  int buffer_capacity = 200000;
  long eval_interval = 1000;  // in train steps
  int eval_episodes = 5;

  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double weight_decay = 1e-4;
  double adam_eps = 1e-8;

  double alpha_init = 0.1;
  double lr_alpha = 1e-2;
  double target_entropy = 0.0;

  std::vector<int> actor_hidden{256, 256};
  std::vector<int> critic_hidden{256, 256};
  bool use_layer_norm = true;

  actor::DemConfig dem;
  critic::CriticConfig critic;
  std::string critic_kind = "continuous";  // or "c51"
  critic::C51Config c51;

  bool measure_throughput = true;

  void validate() const;
};

struct StepMetrics {
  long step = 0;
  double episodic_return_mean = 0.0;
  double alpha = 0.0;
  double entropy_mean = 0.0;  // mean of -log pi over the last actor batch
  double q_mean = 0.0;
  double q_sigma_mean = 0.0;
  double omega = 0.0;
  double w_min = 0.0;
  double w_max = 0.0;
  double sps = 0.0;  // env transitions per wall second; 0 when not measured
};

// The policy-iteration loop: collect with per-env heterogeneity, then
// evaluate the return distribution and improve the policy, strictly
// alternating phases.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  StepMetrics train_step();

  struct EvalResult {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> returns;
  };
  // Deterministic actions, beta = 1, fresh envs, no buffer writes.
  EvalResult evaluate(int episodes, std::uint64_t seed) const;

  long step() const { return step_; }
  long env_steps() const { return env_steps_; }

  const TrainConfig& config() const { return cfg_; }
  actor::Policy& policy() { return policy_; }
  const actor::Policy& policy() const { return policy_; }
  critic::GaussianCritic* gaussian_critic() { return gaussian_ ? &*gaussian_ : nullptr; }
  critic::CategoricalCritic* categorical_critic() {
    return categorical_ ? &*categorical_ : nullptr;
  }
  AlphaState& alpha_state() { return alpha_; }
  const Eigen::VectorXd& env_betas() const { return betas_; }
  ReplayBuffer& buffer() { return buffer_; }

 private:
  enum class Phase { kCollect, kUpdate };

  void do_update();
  void require_phase(Phase p, const char* what) const;

  TrainConfig cfg_;
  actor::Policy policy_;
  std::optional<critic::GaussianCritic> gaussian_;
  std::optional<critic::CategoricalCritic> categorical_;
  AlphaState alpha_;
  envs::VecEnv vec_env_;
  ReplayBuffer buffer_;
  Eigen::VectorXd betas_;
  std::vector<Rng> env_rngs_;  // one action-sampling stream per environment
  Rng update_rng_;
  Phase phase_ = Phase::kCollect;
  long step_ = 0;
  long env_steps_ = 0;
  std::deque<double> recent_returns_;
  StepMetrics last_update_metrics_;
};

}  // namespace dspi::trainer
