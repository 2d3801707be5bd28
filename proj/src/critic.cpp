#include "dspi/critic.hpp"

#include <cmath>

namespace dspi::critic {

namespace {

Eigen::MatrixXd concat_cols(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  if (s.rows() != a.rows()) throw ConfigError("state/action batch row mismatch");
  Eigen::MatrixXd x(s.rows(), s.cols() + a.cols());
  x << s, a;
  return x;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::ArrayXd z = logits.row(r).array().transpose();
    Eigen::ArrayXd e = (z - z.maxCoeff()).exp();
    p.row(r) = (e / e.sum()).transpose();
  }
  return p;
}

}  // namespace

double CriticConfig::sigma_floor() const { return std::exp(log_sigma_min); }

void CriticConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("critic epsilon must be non-negative");
  if (!(tau_soft >= 0.0 && tau_soft <= 1.0)) throw ConfigError("tau_soft must lie in [0, 1]");
  if (!(log_sigma_min < log_sigma_max)) throw ConfigError("log sigma bounds out of order");
}

double omega_estimate(const Eigen::VectorXd& sigmas) {
  if (sigmas.size() == 0) throw InputError("omega_estimate needs a non-empty batch");
  return sigmas.array().square().mean();
}

GaussianCritic::GaussianCritic(int obs_dim, int act_dim, std::vector<int> hidden_widths,
                               bool use_layer_norm, CriticConfig cfg)
    : obs_dim_(obs_dim), act_dim_(act_dim), cfg_(cfg) {
  cfg_.validate();
  spec_.input_dim = obs_dim + act_dim;
  spec_.hidden_widths = std::move(hidden_widths);
  spec_.output_dim = 2;  // mean and raw log-sigma
  spec_.use_layer_norm = use_layer_norm;
  spec_.validate();
}

void GaussianCritic::init_params(Rng& rng) {
  for (int j = 0; j < 2; ++j) {
    online_[j] = nn::init_mlp_params(spec_, rng);
    target_[j] = online_[j];
  }
}

nn::ParamStore& GaussianCritic::online(int which) { return online_[which]; }
nn::ParamStore& GaussianCritic::target(int which) { return target_[which]; }
const nn::ParamStore& GaussianCritic::online(int which) const { return online_[which]; }
const nn::ParamStore& GaussianCritic::target(int which) const { return target_[which]; }

ReturnDist GaussianCritic::forward(const nn::ParamStore& params, const Eigen::VectorXd& s,
                                   const Eigen::VectorXd& a) const {
  Batch b = forward_batch(params, s.transpose(), a.transpose());
  return {b.q[0], b.sigma[0]};
}

GaussianCritic::Batch GaussianCritic::forward_batch(const nn::ParamStore& params,
                                                    const Eigen::MatrixXd& s,
                                                    const Eigen::MatrixXd& a) const {
  Batch b;
  b.cache = nn::mlp_forward_cached(spec_, params, concat_cols(s, a));
  b.q = b.cache.output.col(0);
  b.raw_log_sigma = b.cache.output.col(1);
  b.sigma = b.raw_log_sigma.array().max(cfg_.log_sigma_min).min(cfg_.log_sigma_max).exp();
  return b;
}

Eigen::VectorXd GaussianCritic::target_mean_batch(const Eigen::VectorXd& r,
                                                  const Eigen::VectorXd& bootstrap, double gamma,
                                                  const Eigen::MatrixXd& s_next,
                                                  const Eigen::MatrixXd& a_next,
                                                  const Eigen::VectorXd& logpi_next,
                                                  double alpha) const {
  Batch t0 = forward_batch(target_[0], s_next, a_next);
  Batch t1 = forward_batch(target_[1], s_next, a_next);
  Eigen::ArrayXd qmin = t0.q.array().min(t1.q.array());
  return (r.array() + bootstrap.array() * gamma * (qmin - alpha * logpi_next.array())).matrix();
}

Eigen::VectorXd GaussianCritic::target_sample_batch(const Eigen::VectorXd& r,
                                                    const Eigen::VectorXd& bootstrap, double gamma,
                                                    const Eigen::MatrixXd& s_next,
                                                    const Eigen::MatrixXd& a_next,
                                                    const Eigen::VectorXd& logpi_next, double alpha,
                                                    Rng& rng) const {
  Batch t0 = forward_batch(target_[0], s_next, a_next);
  Batch t1 = forward_batch(target_[1], s_next, a_next);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd y(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const bool first = t0.q[i] <= t1.q[i];
    const double mean = first ? t0.q[i] : t1.q[i];
    const double sd = first ? t0.sigma[i] : t1.sigma[i];
    const double z = mean + sd * normal(rng);
    y[i] = r[i] + bootstrap[i] * gamma * (z - alpha * logpi_next[i]);
  }
  return y;
}

nn::Gradients GaussianCritic::critic_gradient(const nn::ParamStore& params, const Batch& fwd,
                                              const CriticBatchTargets& targets,
                                              UpdateDiag* diag) const {
  const Eigen::Index b = fwd.q.size();
  if (targets.y_q_min.size() != b || targets.y_z_sample.size() != b) {
    throw ConfigError("target batch size mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::ArrayXd q = fwd.q.array();
  Eigen::ArrayXd sig = fwd.sigma.array();
  Eigen::ArrayXd var = sig.square();

  Eigen::ArrayXd c_q = -(targets.y_q_min.array() - q) / (var + cfg_.epsilon);
  Eigen::ArrayXd resid = targets.y_z_sample.array() - q;
  Eigen::ArrayXd c_sigma = -(resid.square() - var) / (sig.cube() + cfg_.epsilon);

  for (Eigen::Index i = 0; i < b; ++i) {
    if (!std::isfinite(c_q[i]) || !std::isfinite(c_sigma[i])) {
      throw NumericalError("non-finite critic coefficient at sample " + std::to_string(i));
    }
  }

  // Upstream seeds: coefficients are constants; the sigma column routes
  // through exp(clamp(raw)), so dsigma/draw = sigma inside the clamp.
  Eigen::ArrayXd clamp_mask = (fwd.raw_log_sigma.array() >= cfg_.log_sigma_min &&
                               fwd.raw_log_sigma.array() <= cfg_.log_sigma_max)
                                  .cast<double>();
  Eigen::MatrixXd upstream(b, 2);
  upstream.col(0) = (targets.omega * inv_b * c_q).matrix();
  upstream.col(1) = (targets.omega * inv_b * c_sigma * sig * clamp_mask).matrix();

  if (diag != nullptr) {
    diag->q_mean = q.mean();
    diag->sigma_mean = sig.mean();
    diag->omega = targets.omega;
    diag->mean_abs_c_q = c_q.abs().mean();
    diag->mean_abs_c_sigma = c_sigma.abs().mean();
  }
  return nn::mlp_backward(spec_, params, fwd.cache, upstream).grads;
}

void GaussianCritic::soft_update() {
  for (int j = 0; j < 2; ++j) {
    auto& tgt = target_[j].entries();
    const auto& on = online_[j].entries();
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      tgt[i].value = cfg_.tau_soft * on[i].value + (1.0 - cfg_.tau_soft) * tgt[i].value;
    }
  }
}

actor::QEval GaussianCritic::min_q_with_grad(const Eigen::MatrixXd& s,
                                             const Eigen::MatrixXd& a) const {
  Batch b0 = forward_batch(online_[0], s, a);
  Batch b1 = forward_batch(online_[1], s, a);
  const Eigen::Index b = s.rows();
  Eigen::MatrixXd up0 = Eigen::MatrixXd::Zero(b, 2);
  Eigen::MatrixXd up1 = Eigen::MatrixXd::Zero(b, 2);
  actor::QEval out;
  out.q.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    if (b0.q[i] <= b1.q[i]) {
      out.q[i] = b0.q[i];
      up0(i, 0) = 1.0;
    } else {
      out.q[i] = b1.q[i];
      up1(i, 0) = 1.0;
    }
  }
  Eigen::MatrixXd dx0 = nn::mlp_backward(spec_, online_[0], b0.cache, up0).dinput;
  Eigen::MatrixXd dx1 = nn::mlp_backward(spec_, online_[1], b1.cache, up1).dinput;
  out.dq_da = dx0.rightCols(act_dim_) + dx1.rightCols(act_dim_);
  return out;
}

// ---- C51 ----

void C51Config::validate() const {
  if (n_atoms < 2) throw ConfigError("categorical critic needs at least 2 atoms");
  if (!(v_min < v_max)) throw ConfigError("atom support requires v_min < v_max");
}

Eigen::VectorXd c51_atoms(const C51Config& cfg) {
  cfg.validate();
  return Eigen::VectorXd::LinSpaced(cfg.n_atoms, cfg.v_min, cfg.v_max);
}

Eigen::VectorXd c51_project(double r, double gamma, bool done,
                            const Eigen::VectorXd& target_probs, const Eigen::VectorXd& atoms) {
  const Eigen::Index n = atoms.size();
  if (n < 2) throw ConfigError("categorical critic needs at least 2 atoms");
  if (target_probs.size() != n) throw ConfigError("probability vector length mismatch");
  if (std::abs(target_probs.sum() - 1.0) > 1e-6 || (target_probs.array() < -1e-12).any()) {
    throw InputError("target_probs is not a probability vector");
  }
  const double v_min = atoms[0];
  const double v_max = atoms[n - 1];
  const double dz = (v_max - v_min) / static_cast<double>(n - 1);
  const double keep = done ? 0.0 : gamma;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tz = std::clamp(r + keep * atoms[i], v_min, v_max);
    // rounding in the division can push b a hair past the last atom
    const double b = std::clamp((tz - v_min) / dz, 0.0, static_cast<double>(n - 1));
    const auto lo = static_cast<Eigen::Index>(std::floor(b));
    const auto hi = static_cast<Eigen::Index>(std::ceil(b));
    if (lo == hi) {
      m[lo] += target_probs[i];
    } else {
      m[lo] += target_probs[i] * (static_cast<double>(hi) - b);
      m[hi] += target_probs[i] * (b - static_cast<double>(lo));
    }
  }
  return m;
}

double c51_loss(const Eigen::VectorXd& pred_probs, const Eigen::VectorXd& m) {
  if (pred_probs.size() != m.size()) throw ConfigError("distribution length mismatch");
  return -(m.array() * (pred_probs.array() + 1e-12).log()).sum();
}

CategoricalCritic::CategoricalCritic(int obs_dim, int act_dim, std::vector<int> hidden_widths,
                                     bool use_layer_norm, C51Config cfg, double tau_soft)
    : obs_dim_(obs_dim), act_dim_(act_dim), cfg_(cfg), tau_soft_(tau_soft) {
  cfg_.validate();
  atoms_ = c51_atoms(cfg_);
  spec_.input_dim = obs_dim + act_dim;
  spec_.hidden_widths = std::move(hidden_widths);
  spec_.output_dim = cfg_.n_atoms;
  spec_.use_layer_norm = use_layer_norm;
  spec_.validate();
}

void CategoricalCritic::init_params(Rng& rng) {
  for (int j = 0; j < 2; ++j) {
    online_[j] = nn::init_mlp_params(spec_, rng);
    target_[j] = online_[j];
  }
}

nn::ParamStore& CategoricalCritic::online(int which) { return online_[which]; }
nn::ParamStore& CategoricalCritic::target(int which) { return target_[which]; }

CategoricalCritic::Batch CategoricalCritic::forward_batch(const nn::ParamStore& params,
                                                          const Eigen::MatrixXd& s,
                                                          const Eigen::MatrixXd& a) const {
  Batch b;
  b.cache = nn::mlp_forward_cached(spec_, params, concat_cols(s, a));
  b.probs = softmax_rows(b.cache.output);
  b.expected = b.probs * atoms_;
  return b;
}

Eigen::MatrixXd CategoricalCritic::projected_targets(const Eigen::VectorXd& r,
                                                     const Eigen::VectorXd& bootstrap, double gamma,
                                                     const Eigen::MatrixXd& s_next,
                                                     const Eigen::MatrixXd& a_next,
                                                     const Eigen::VectorXd& logpi_next,
                                                     double alpha) const {
  Batch t0 = forward_batch(target_[0], s_next, a_next);
  Batch t1 = forward_batch(target_[1], s_next, a_next);
  Eigen::MatrixXd m(r.size(), cfg_.n_atoms);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const bool first = t0.expected[i] <= t1.expected[i];
    const Eigen::VectorXd& probs = first ? Eigen::VectorXd(t0.probs.row(i))
                                         : Eigen::VectorXd(t1.probs.row(i));
    const bool done = bootstrap[i] == 0.0;
    const double r_eff = r[i] - bootstrap[i] * gamma * alpha * logpi_next[i];
    m.row(i) = c51_project(r_eff, gamma, done, probs, atoms_).transpose();
  }
  return m;
}

nn::Gradients CategoricalCritic::ce_gradient(const nn::ParamStore& params, const Batch& fwd,
                                             const Eigen::MatrixXd& m, double* loss) const {
  const double inv_b = 1.0 / static_cast<double>(fwd.probs.rows());
  if (loss != nullptr) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < fwd.probs.rows(); ++i) {
      total += c51_loss(fwd.probs.row(i), m.row(i));
    }
    *loss = total * inv_b;
  }
  Eigen::MatrixXd upstream = inv_b * (fwd.probs - m);
  return nn::mlp_backward(spec_, params, fwd.cache, upstream).grads;
}

void CategoricalCritic::soft_update() {
  for (int j = 0; j < 2; ++j) {
    auto& tgt = target_[j].entries();
    const auto& on = online_[j].entries();
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      tgt[i].value = tau_soft_ * on[i].value + (1.0 - tau_soft_) * tgt[i].value;
    }
  }
}

actor::QEval CategoricalCritic::min_q_with_grad(const Eigen::MatrixXd& s,
                                                const Eigen::MatrixXd& a) const {
  Batch b0 = forward_batch(online_[0], s, a);
  Batch b1 = forward_batch(online_[1], s, a);
  const Eigen::Index b = s.rows();
  Eigen::MatrixXd up0 = Eigen::MatrixXd::Zero(b, cfg_.n_atoms);
  Eigen::MatrixXd up1 = Eigen::MatrixXd::Zero(b, cfg_.n_atoms);
  actor::QEval out;
  out.q.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const bool first = b0.expected[i] <= b1.expected[i];
    const Batch& src = first ? b0 : b1;
    out.q[i] = src.expected[i];
    // dE/dlogit_j = p_j * (z_j - E)
    Eigen::ArrayXd dlog =
        src.probs.row(i).array().transpose() * (atoms_.array() - src.expected[i]);
    (first ? up0 : up1).row(i) = dlog.transpose();
  }
  Eigen::MatrixXd dx0 = nn::mlp_backward(spec_, online_[0], b0.cache, up0).dinput;
  Eigen::MatrixXd dx1 = nn::mlp_backward(spec_, online_[1], b1.cache, up1).dinput;
  out.dq_da = dx0.rightCols(act_dim_) + dx1.rightCols(act_dim_);
  return out;
}

}  // namespace dspi::critic
