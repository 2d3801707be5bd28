#include "dspi/envs.hpp"

#include <cmath>
#include <functional>

namespace dspi::envs {

namespace {

constexpr double kPi = 3.14159265358979323846;

double angle_normalize(double th) {
  double a = std::fmod(th + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

class RedundantReacher final : public Env {
 public:
  RedundantReacher(const RedundantReacherConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(make_rng(seed, 0)) {
    cfg_.validate();
    spec_.name = "redundant_reacher";
    spec_.obs_dim = cfg_.n_relevant + 1;  // target coords + episode phase
    spec_.action_dim = cfg_.n_total;
    spec_.max_episode_steps = cfg_.max_episode_steps;
    spec_.reward_min = -4.0 * 0.64 * cfg_.n_relevant;  // worst |a - t| is 1.6 per dim
    spec_.reward_max = 0.0;
    target_ = Eigen::VectorXd::Zero(cfg_.n_relevant);
  }

  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset() override {
    // Per-episode target from a seeded uniform grid over [-0.6, 0.6].
    std::uniform_int_distribution<int> pick(0, kGridPoints - 1);
    for (int i = 0; i < cfg_.n_relevant; ++i) {
      target_[i] = -0.6 + 1.2 * static_cast<double>(pick(rng_)) / (kGridPoints - 1);
    }
    t_ = 0;
    return observe();
  }

  StepResult step(const Eigen::VectorXd& action) override {
    StepResult res;
    res.reward = -(action.head(cfg_.n_relevant) - target_).squaredNorm();
    ++t_;
    res.truncated = t_ >= cfg_.max_episode_steps;
    res.done = false;
    res.obs = observe();
    return res;
  }

 private:
  static constexpr int kGridPoints = 7;

  Eigen::VectorXd observe() {
    Eigen::VectorXd obs(spec_.obs_dim);
    obs.head(cfg_.n_relevant) = target_;
    obs[cfg_.n_relevant] = static_cast<double>(t_) / cfg_.max_episode_steps;
    if (cfg_.noise_std > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg_.noise_std);
      for (int i = 0; i < obs.size(); ++i) obs[i] += noise(rng_);
    }
    return obs;
  }

  RedundantReacherConfig cfg_;
  EnvSpec spec_;
  Rng rng_;
  Eigen::VectorXd target_;
  int t_ = 0;
};

class ChainMdp final : public Env {
 public:
  ChainMdp(const ChainMdpConfig& cfg, std::uint64_t) : cfg_(cfg) {
    cfg_.validate();
    spec_.name = "chain_mdp";
    spec_.obs_dim = cfg_.length + 1;  // one-hot over states incl. terminal
    spec_.action_dim = 1;
    spec_.max_episode_steps = cfg_.length + 1;
    spec_.reward_min = std::min(cfg_.reward, 0.0);
    spec_.reward_max = std::max(cfg_.reward, 0.0);
  }

  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset() override {
    idx_ = 0;
    t_ = 0;
    return observe();
  }

  StepResult step(const Eigen::VectorXd&) override {
    StepResult res;
    ++idx_;
    ++t_;
    res.reward = cfg_.reward;
    res.done = idx_ >= cfg_.length;
    res.truncated = !res.done && t_ >= spec_.max_episode_steps;
    res.obs = observe();
    return res;
  }

 private:
  Eigen::VectorXd observe() const {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(spec_.obs_dim);
    obs[std::min(idx_, cfg_.length)] = 1.0;
    return obs;
  }

  ChainMdpConfig cfg_;
  EnvSpec spec_;
  int idx_ = 0;
  int t_ = 0;
};

class Pendulum final : public Env {
 public:
  Pendulum(const PendulumConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(make_rng(seed, 0)) {
    spec_.name = "pendulum";
    spec_.obs_dim = 3;  // (cos th, sin th, thdot)
    spec_.action_dim = 1;
    spec_.max_episode_steps = cfg_.max_episode_steps;
    const double worst = kPi * kPi + 0.1 * kMaxSpeed * kMaxSpeed +
                         0.001 * cfg_.torque_scale * cfg_.torque_scale;
    spec_.reward_min = -worst;
    spec_.reward_max = 0.0;
  }

  const EnvSpec& spec() const override { return spec_; }

  Eigen::VectorXd reset() override {
    std::uniform_real_distribution<double> th_dist(-kPi, kPi);
    std::uniform_real_distribution<double> thdot_dist(-1.0, 1.0);
    th_ = th_dist(rng_);
    thdot_ = thdot_dist(rng_);
    t_ = 0;
    return observe();
  }

  StepResult step(const Eigen::VectorXd& action) override {
    const double u = cfg_.torque_scale * std::clamp(action[0], -1.0, 1.0);
    const double th_n = angle_normalize(th_);
    StepResult res;
    res.reward = -(th_n * th_n + 0.1 * thdot_ * thdot_ + 0.001 * u * u);

    const double g = cfg_.gravity, m = cfg_.mass, l = cfg_.length;
    thdot_ += (3.0 * g / (2.0 * l) * std::sin(th_) + 3.0 / (m * l * l) * u) * cfg_.dt;
    thdot_ = std::clamp(thdot_, -kMaxSpeed, kMaxSpeed);
    th_ += thdot_ * cfg_.dt;

    ++t_;
    res.done = false;
    res.truncated = t_ >= cfg_.max_episode_steps;
    res.obs = observe();
    return res;
  }

 private:
  static constexpr double kMaxSpeed = 8.0;

  Eigen::VectorXd observe() const {
    Eigen::VectorXd obs(3);
    obs << std::cos(th_), std::sin(th_), thdot_;
    return obs;
  }

  PendulumConfig cfg_;
  EnvSpec spec_;
  Rng rng_;
  double th_ = 0.0, thdot_ = 0.0;
  int t_ = 0;
};

}  // namespace

void RedundantReacherConfig::validate() const {
  if (n_total < 1 || n_relevant < 1) throw ConfigError("reacher dims must be positive");
  if (n_relevant > n_total) throw ConfigError("n_relevant must not exceed n_total");
  if (max_episode_steps < 1) throw ConfigError("max_episode_steps must be positive");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
}

void ChainMdpConfig::validate() const {
  if (length < 1) throw ConfigError("chain length must be positive");
  if (!(gamma_ref >= 0.0 && gamma_ref < 1.0)) throw ConfigError("gamma_ref must lie in [0, 1)");
}

std::unique_ptr<Env> make_env(const EnvConfig& cfg, std::uint64_t seed) {
  if (cfg.name == "redundant_reacher") return std::make_unique<RedundantReacher>(cfg.reacher, seed);
  if (cfg.name == "chain_mdp") return std::make_unique<ChainMdp>(cfg.chain, seed);
  if (cfg.name == "pendulum") return std::make_unique<Pendulum>(cfg.pendulum, seed);
  throw ConfigError("unknown environment '" + cfg.name + "'");
}

std::vector<double> chain_mdp_analytic_q(const ChainMdpConfig& cfg) {
  cfg.validate();
  std::vector<double> q(cfg.length);
  for (int k = 0; k < cfg.length; ++k) {
    double v = 0.0;
    double discount = 1.0;
    for (int j = 0; j < cfg.length - k; ++j) {
      v += discount * cfg.reward;
      discount *= cfg.gamma_ref;
    }
    q[k] = v;
  }
  return q;
}

DimUsageReport relevant_dim_report(const Eigen::MatrixXd& weights_trace,
                                   const RedundantReacherConfig& cfg) {
  if (weights_trace.rows() < 1) throw InputError("empty weights trace");
  if (weights_trace.cols() != cfg.n_total) throw ConfigError("trace width != n_total");
  DimUsageReport rep;
  rep.mean_relevant = weights_trace.leftCols(cfg.n_relevant).mean();
  const int n_irr = cfg.n_total - cfg.n_relevant;
  rep.mean_irrelevant = n_irr > 0 ? weights_trace.rightCols(n_irr).mean() : 0.0;
  rep.ratio = rep.mean_relevant != 0.0 ? rep.mean_irrelevant / rep.mean_relevant : 0.0;
  return rep;
}

VecEnv::VecEnv(const EnvConfig& cfg, int num_envs, std::uint64_t seed) {
  if (num_envs < 1) throw ConfigError("need at least one environment");
  envs_.reserve(num_envs);
  for (int e = 0; e < num_envs; ++e) {
    envs_.push_back(make_env(cfg, mix_seed(seed, static_cast<std::uint64_t>(e))));
  }
  obs_.resize(num_envs, envs_.front()->spec().obs_dim);
  for (int e = 0; e < num_envs; ++e) obs_.row(e) = envs_[e]->reset();
  episode_return_.assign(num_envs, 0.0);
}

VecEnv::BatchStep VecEnv::step(const Eigen::MatrixXd& actions) {
  const int e_count = size();
  const auto& sp = spec();
  if (actions.rows() != e_count || actions.cols() != sp.action_dim) {
    throw ConfigError("action batch shape mismatch");
  }
  BatchStep out;
  out.next_obs.resize(e_count, sp.obs_dim);
  out.reward.resize(e_count);
  out.done.resize(e_count);
  out.truncated.resize(e_count);
  for (int e = 0; e < e_count; ++e) {
    Eigen::VectorXd a = actions.row(e).cwiseMax(-1.0).cwiseMin(1.0);
    StepResult res = envs_[e]->step(a);
    out.next_obs.row(e) = res.obs;
    out.reward[e] = res.reward;
    out.done[e] = res.done ? 1 : 0;
    out.truncated[e] = res.truncated ? 1 : 0;
    episode_return_[e] += res.reward;
    if (res.done || res.truncated) {
      out.finished_returns.push_back(episode_return_[e]);
      episode_return_[e] = 0.0;
      obs_.row(e) = envs_[e]->reset();
    } else {
      obs_.row(e) = res.obs;
    }
  }
  return out;
}

std::vector<double> run_episodes(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& act_fn, const EnvConfig& cfg,
    int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("need at least one episode");
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int ep = 0; ep < episodes; ++ep) {
    auto env = make_env(cfg, mix_seed(seed, static_cast<std::uint64_t>(ep)));
    Eigen::VectorXd obs = env->reset();
    double total = 0.0;
    while (true) {
      Eigen::VectorXd a = act_fn(obs).cwiseMax(-1.0).cwiseMin(1.0);
      StepResult res = env->step(a);
      total += res.reward;
      if (res.done || res.truncated) break;
      obs = res.obs;
    }
    returns.push_back(total);
  }
  return returns;
}

}  // namespace dspi::envs
