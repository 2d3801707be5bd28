#include "dspi/trainer.hpp"

#include <chrono>
#include <cmath>

namespace dspi::trainer {

ReplayBuffer::ReplayBuffer(int capacity, int obs_dim, int act_dim)
    : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (capacity < 1) throw ConfigError("buffer capacity must be positive");
  s_.resize(capacity, obs_dim);
  a_.resize(capacity, act_dim);
  s_next_.resize(capacity, obs_dim);
  r_.resize(capacity);
  done_.assign(capacity, 0);
  truncated_.assign(capacity, 0);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.s.size() != obs_dim_ || t.s_next.size() != obs_dim_ || t.a.size() != act_dim_) {
    throw ConfigError("transition shape mismatch");
  }
  if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r)) {
    throw InputError("non-finite transition");
  }
  s_.row(cursor_) = t.s;
  a_.row(cursor_) = t.a;
  s_next_.row(cursor_) = t.s_next;
  r_[cursor_] = t.r;
  done_[cursor_] = t.done ? 1 : 0;
  truncated_[cursor_] = t.truncated ? 1 : 0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayBuffer::push_batch(const std::vector<Transition>& batch) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r)) {
      throw InputError("non-finite transition at index " + std::to_string(i));
    }
  }
  for (const auto& t : batch) push(t);
}

ReplayBuffer::Batch ReplayBuffer::sample(int batch_size, Rng& rng) const {
  if (batch_size > size_) {
    throw NotReadyError("buffer holds " + std::to_string(size_) + " transitions, need " +
                        std::to_string(batch_size));
  }
  std::uniform_int_distribution<int> pick(0, size_ - 1);
  Batch b;
  b.s.resize(batch_size, obs_dim_);
  b.a.resize(batch_size, act_dim_);
  b.s_next.resize(batch_size, obs_dim_);
  b.r.resize(batch_size);
  b.bootstrap.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const int j = pick(rng);
    b.s.row(i) = s_.row(j);
    b.a.row(i) = a_.row(j);
    b.s_next.row(i) = s_next_.row(j);
    b.r[i] = r_[j];
    // truncated episodes still bootstrap; only true termination cuts the tail
    b.bootstrap[i] = done_[j] ? 0.0 : 1.0;
  }
  return b;
}

void alpha_update(AlphaState& state, const Eigen::VectorXd& log_pis) {
  if (log_pis.size() == 0) throw InputError("alpha_update needs a non-empty batch");
  const double err = (-log_pis.array() - state.target_entropy).mean();
  state.log_alpha -= state.lr * state.alpha() * err;
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (num_envs < 1) throw ConfigError("num_envs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (batch_size > buffer_capacity) throw ConfigError("batch_size exceeds buffer capacity");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (updates_per_env_step < 0) throw ConfigError("updates_per_env_step must be non-negative");
  if (!(lr_actor > 0.0 && lr_critic > 0.0 && lr_alpha > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");
  if (critic_kind != "continuous" && critic_kind != "c51") {
    throw ConfigError("critic_kind must be 'continuous' or 'c51'");
  }
  dem.validate();
  critic.validate();
  if (critic_kind == "c51") c51.validate();
}

namespace {

envs::EnvSpec spec_of(const envs::EnvConfig& cfg) {
  return envs::make_env(cfg, 0)->spec();
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      policy_(spec_of(cfg.env).obs_dim, spec_of(cfg.env).action_dim, cfg.actor_hidden,
              cfg.use_layer_norm, cfg.dem),
      vec_env_(cfg.env, cfg.num_envs, cfg.seed),
      buffer_(cfg.buffer_capacity, spec_of(cfg.env).obs_dim, spec_of(cfg.env).action_dim),
      update_rng_(make_rng(cfg.seed, 2)) {
  cfg_.validate();
  const auto& sp = vec_env_.spec();

  Rng init_rng = make_rng(cfg.seed, 1);
  policy_.init_params(init_rng);
  if (cfg.critic_kind == "continuous") {
    gaussian_.emplace(sp.obs_dim, sp.action_dim, cfg.critic_hidden, cfg.use_layer_norm,
                      cfg.critic);
    gaussian_->init_params(init_rng);
  } else {
    categorical_.emplace(sp.obs_dim, sp.action_dim, cfg.critic_hidden, cfg.use_layer_norm,
                         cfg.c51, cfg.critic.tau_soft);
    categorical_->init_params(init_rng);
  }

  alpha_.log_alpha = std::log(cfg.alpha_init);
  alpha_.lr = cfg.lr_alpha;
  alpha_.target_entropy = cfg.target_entropy;

  Rng beta_rng = make_rng(cfg.seed, 3);
  betas_ = actor::assign_env_betas(cfg.num_envs, cfg.dem.beta_min, cfg.dem.beta_max, beta_rng);
  env_rngs_.reserve(cfg.num_envs);
  for (int e = 0; e < cfg.num_envs; ++e) {
    env_rngs_.push_back(make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(e)));
  }
}

void Trainer::require_phase(Phase p, const char* what) const {
  if (phase_ != p) throw std::logic_error(std::string("phase violation in ") + what);
}

StepMetrics Trainer::train_step() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  phase_ = Phase::kCollect;
  require_phase(Phase::kCollect, "collection");
  const int e_count = cfg_.num_envs;
  const int act_dim = policy_.act_dim();
  const Eigen::MatrixXd obs_before = vec_env_.obs();

  actor::HeadBatch heads = policy_.head_batch(obs_before);
  Eigen::MatrixXd actions(e_count, act_dim);
  double w_min = std::numeric_limits<double>::infinity();
  double w_max = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < e_count; ++e) {
    actor::PolicyHead h;
    h.mu = heads.mu.row(e);
    h.sigma_hat = heads.sigma_hat.row(e);
    h.logits = heads.logits.row(e);
    const Eigen::VectorXd w = policy_.weights_for(h, betas_[e]);
    w_min = std::min(w_min, w.minCoeff());
    w_max = std::max(w_max, w.maxCoeff());
    actions.row(e) = policy_.sample_action(h, betas_[e], env_rngs_[e]).a;
  }

  auto batch = vec_env_.step(actions);
  std::vector<Transition> transitions(e_count);
  for (int e = 0; e < e_count; ++e) {
    transitions[e] = {obs_before.row(e), actions.row(e),          batch.reward[e],
                      batch.next_obs.row(e), batch.done[e] != 0, batch.truncated[e] != 0};
  }
  buffer_.push_batch(transitions);
  env_steps_ += e_count;
  for (double ret : batch.finished_returns) {
    recent_returns_.push_back(ret);
    while (recent_returns_.size() > 32) recent_returns_.pop_front();
  }

  if (env_steps_ >= cfg_.learning_starts) {
    phase_ = Phase::kUpdate;
    for (int u = 0; u < cfg_.updates_per_env_step; ++u) do_update();
    phase_ = Phase::kCollect;
  }

  ++step_;
  StepMetrics m = last_update_metrics_;
  m.step = step_;
  m.alpha = alpha_.alpha();
  m.w_min = w_min;
  m.w_max = w_max;
  m.episodic_return_mean = 0.0;
  if (!recent_returns_.empty()) {
    double sum = 0.0;
    for (double v : recent_returns_) sum += v;
    m.episodic_return_mean = sum / static_cast<double>(recent_returns_.size());
  }
  if (cfg_.measure_throughput) {
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    m.sps = secs > 0.0 ? static_cast<double>(e_count) / secs : 0.0;
  } else {
    m.sps = 0.0;
  }
  return m;
}

void Trainer::do_update() {
  require_phase(Phase::kUpdate, "update");
  auto batch = buffer_.sample(cfg_.batch_size, update_rng_);

  // Fresh next actions from the current policy; the canonical policy
  // (beta = 1) drives every update-side density.
  actor::HeadBatch next_heads = policy_.head_batch(batch.s_next);
  actor::SampleBatch next_smp = policy_.sample_batch(next_heads, 1.0, update_rng_);
  const double alpha = alpha_.alpha();

  nn::AdamwConfig critic_opt{cfg_.lr_critic, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.weight_decay,
                             cfg_.adam_eps};
  nn::AdamwConfig actor_opt{cfg_.lr_actor, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.weight_decay,
                            cfg_.adam_eps};

  actor::QFunction q_fn;
  if (gaussian_) {
    const Eigen::VectorXd y_q = gaussian_->target_mean_batch(
        batch.r, batch.bootstrap, cfg_.gamma, batch.s_next, next_smp.a, next_smp.log_prob, alpha);
    const Eigen::VectorXd y_z =
        gaussian_->target_sample_batch(batch.r, batch.bootstrap, cfg_.gamma, batch.s_next,
                                       next_smp.a, next_smp.log_prob, alpha, update_rng_);
    critic::UpdateDiag diag[2];
    for (int j = 0; j < 2; ++j) {
      auto fwd = gaussian_->forward_batch(gaussian_->online(j), batch.s, batch.a);
      critic::CriticBatchTargets targets{y_q, y_z, critic::omega_estimate(fwd.sigma)};
      auto grads = gaussian_->critic_gradient(gaussian_->online(j), fwd, targets, &diag[j]);
      nn::adamw_step(gaussian_->online(j), grads, critic_opt);
    }
    last_update_metrics_.q_mean = 0.5 * (diag[0].q_mean + diag[1].q_mean);
    last_update_metrics_.q_sigma_mean = 0.5 * (diag[0].sigma_mean + diag[1].sigma_mean);
    last_update_metrics_.omega = 0.5 * (diag[0].omega + diag[1].omega);
    q_fn = [this](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
      return gaussian_->min_q_with_grad(s, a);
    };
  } else {
    const Eigen::MatrixXd m = categorical_->projected_targets(
        batch.r, batch.bootstrap, cfg_.gamma, batch.s_next, next_smp.a, next_smp.log_prob, alpha);
    double q_sum = 0.0, std_sum = 0.0;
    for (int j = 0; j < 2; ++j) {
      auto fwd = categorical_->forward_batch(categorical_->online(j), batch.s, batch.a);
      auto grads = categorical_->ce_gradient(categorical_->online(j), fwd, m, nullptr);
      nn::adamw_step(categorical_->online(j), grads, critic_opt);
      q_sum += fwd.expected.mean();
      Eigen::ArrayXd var =
          (fwd.probs.array().rowwise() * categorical_->atoms().array().square().transpose())
              .rowwise()
              .sum() -
          fwd.expected.array().square();
      std_sum += var.max(0.0).sqrt().mean();
    }
    last_update_metrics_.q_mean = 0.5 * q_sum;
    last_update_metrics_.q_sigma_mean = 0.5 * std_sum;
    last_update_metrics_.omega = 0.0;  // not defined for the categorical ablation
    q_fn = [this](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
      return categorical_->min_q_with_grad(s, a);
    };
  }

  auto actor_res = actor::actor_loss_backward(policy_, batch.s, alpha, q_fn, update_rng_);
  nn::adamw_step(policy_.params(), actor_res.grads, actor_opt);
  last_update_metrics_.entropy_mean = (-actor_res.log_probs.array()).mean();

  alpha_update(alpha_, actor_res.log_probs);

  if (gaussian_) {
    gaussian_->soft_update();
  } else {
    categorical_->soft_update();
  }
}

Trainer::EvalResult Trainer::evaluate(int episodes, std::uint64_t seed) const {
  auto act = [this](const Eigen::VectorXd& obs) {
    return policy_.deterministic_action(policy_.head(obs));
  };
  EvalResult res;
  res.returns = envs::run_episodes(act, cfg_.env, episodes, seed);
  res.min = res.returns.front();
  res.max = res.returns.front();
  double sum = 0.0;
  for (double v : res.returns) {
    sum += v;
    res.min = std::min(res.min, v);
    res.max = std::max(res.max, v);
  }
  res.mean = sum / static_cast<double>(res.returns.size());
  return res;
}

}  // namespace dspi::trainer
