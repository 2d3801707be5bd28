#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dspi/common.hpp"

namespace dspi::envs {

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  int action_dim = 0;  // action space is [-1, 1]^action_dim for every env
  int max_episode_steps = 0;
  double reward_min = 0.0;
  double reward_max = 0.0;
};

struct StepResult {
  Eigen::VectorXd obs;
  double reward = 0.0;
  bool done = false;       // environment-true termination
  bool truncated = false;  // time-limit cutoff
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Eigen::VectorXd reset() = 0;
  virtual StepResult step(const Eigen::VectorXd& action) = 0;
};

// Reward depends only on the first n_relevant action dims matching a
// per-episode target; the remaining dims have zero dynamical effect.
struct RedundantReacherConfig {
  int n_total = 16;
  int n_relevant = 4;
  double noise_std = 0.0;
  int max_episode_steps = 32;

  void validate() const;
};

// Deterministic chain: the state index advances regardless of the action,
// paying a constant reward until the absorbing end state.
struct ChainMdpConfig {
  int length = 5;
  double reward = 1.0;
  double gamma_ref = 0.9;

  void validate() const;
};

struct PendulumConfig {
  double mass = 1.0;
  double length = 1.0;
  double dt = 0.05;
  double torque_scale = 2.0;
  double gravity = 10.0;
  int max_episode_steps = 200;
};

struct EnvConfig {
  std::string name = "pendulum";
  RedundantReacherConfig reacher;
  ChainMdpConfig chain;
  PendulumConfig pendulum;
};

// Known names: redundant_reacher, chain_mdp, pendulum.
std::unique_ptr<Env> make_env(const EnvConfig& cfg, std::uint64_t seed);

// Exact state values under gamma_ref; identical for every action and policy
// because the dynamics ignore actions.
std::vector<double> chain_mdp_analytic_q(const ChainMdpConfig& cfg);

struct DimUsageReport {
  double mean_relevant = 0.0;
  double mean_irrelevant = 0.0;
  double ratio = 0.0;  // irrelevant / relevant
};

// Mean modulation weight on the declared relevant/irrelevant index sets over
// an S x n_total trace of per-step weights.
DimUsageReport relevant_dim_report(const Eigen::MatrixXd& weights_trace,
                                   const RedundantReacherConfig& cfg);

// Batch of independent environments with auto-reset. step() reports the
// terminal observation; the stored current observation is the reset one.
class VecEnv {
 public:
  VecEnv(const EnvConfig& cfg, int num_envs, std::uint64_t seed);

  const EnvSpec& spec() const { return envs_.front()->spec(); }
  int size() const { return static_cast<int>(envs_.size()); }
  const Eigen::MatrixXd& obs() const { return obs_; }

  struct BatchStep {
    Eigen::MatrixXd next_obs;  // terminal obs where an episode ended
    Eigen::VectorXd reward;
    std::vector<std::uint8_t> done;
    std::vector<std::uint8_t> truncated;
    std::vector<double> finished_returns;  // undiscounted, episodes ended this step
  };
  BatchStep step(const Eigen::MatrixXd& actions);

 private:
  std::vector<std::unique_ptr<Env>> envs_;
  Eigen::MatrixXd obs_;
  std::vector<double> episode_return_;
};

// Deterministic rollouts of an arbitrary controller; used by evaluation and
// by oracle tests. Returns per-episode undiscounted sums.
std::vector<double> run_episodes(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& act_fn, const EnvConfig& cfg,
    int episodes, std::uint64_t seed);

}  // namespace dspi::envs
