#include "dspi/nn.hpp"

#include <cmath>

namespace dspi::nn {

namespace {

std::string layer_name(std::size_t k, const char* part) {
  return "layer" + std::to_string(k) + "." + part;
}

void check_input(const NetworkSpec& spec, const Eigen::MatrixXd& x) {
  if (x.cols() != spec.input_dim) {
    throw ConfigError("input has " + std::to_string(x.cols()) + " columns, spec expects " +
                      std::to_string(spec.input_dim));
  }
  if (!x.allFinite()) {
    throw InputError("non-finite network input");
  }
}

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw ConfigError("network dims must be positive");
  }
  for (int w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden width must be positive");
    if (use_layer_norm && w < 2) {
      throw ConfigError("LayerNorm needs width >= 2, got " + std::to_string(w));
    }
  }
}

Eigen::MatrixXd& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (has(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, Eigen::MatrixXd::Zero(rows, cols),
                      Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)});
  return entries_.back().value;
}

Eigen::MatrixXd& ParamStore::value(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

const Eigen::MatrixXd& ParamStore::value(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

Gradients zero_gradients(const ParamStore& params) {
  Gradients g;
  g.by_index.reserve(params.entries().size());
  for (const auto& e : params.entries()) {
    g.by_index.push_back(Eigen::MatrixXd::Zero(e.value.rows(), e.value.cols()));
  }
  return g;
}

ParamStore init_mlp_params(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  ParamStore store;
  int fan_in = spec.input_dim;
  auto fill_uniform = [&rng](Eigen::MatrixXd& m, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
    }
  };
  for (std::size_t k = 0; k < spec.hidden_widths.size(); ++k) {
    const int width = spec.hidden_widths[k];
    auto& w = store.add(layer_name(k, "weight"), fan_in, width);
    fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    store.add(layer_name(k, "bias"), 1, width);
    if (spec.use_layer_norm) {
      store.add(layer_name(k, "ln_scale"), 1, width).setOnes();
      store.add(layer_name(k, "ln_shift"), 1, width);
    }
    fan_in = width;
  }
  auto& w = store.add("out.weight", fan_in, spec.output_dim);
  fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  store.add("out.bias", 1, spec.output_dim);
  return store;
}

Eigen::MatrixXd mlp_forward(const NetworkSpec& spec, const ParamStore& params,
                            const Eigen::MatrixXd& x) {
  return mlp_forward_cached(spec, params, x).output;
}

ForwardCache mlp_forward_cached(const NetworkSpec& spec, const ParamStore& params,
                                const Eigen::MatrixXd& x) {
  check_input(spec, x);
  ForwardCache cache;
  cache.input = x;
  Eigen::MatrixXd h = x;
  for (std::size_t k = 0; k < spec.hidden_widths.size(); ++k) {
    Eigen::MatrixXd pre = h * params.value(layer_name(k, "weight"));
    pre.rowwise() += params.value(layer_name(k, "bias")).row(0);
    Eigen::MatrixXd y;
    if (spec.use_layer_norm) {
      const Eigen::Index n = pre.cols();
      Eigen::VectorXd mu = pre.rowwise().mean();
      Eigen::MatrixXd centered = pre.colwise() - mu;
      Eigen::VectorXd var = centered.array().square().rowwise().mean();
      Eigen::VectorXd inv_std = (var.array() + kLayerNormEps).sqrt().inverse();
      Eigen::MatrixXd normed = centered.array().colwise() * inv_std.array();
      y = normed.array().rowwise() * params.value(layer_name(k, "ln_scale")).row(0).array();
      y.rowwise() += params.value(layer_name(k, "ln_shift")).row(0);
      cache.normed.push_back(std::move(normed));
      cache.inv_std.push_back(std::move(inv_std));
      (void)n;
    } else {
      y = std::move(pre);
    }
    cache.act.push_back(y.cwiseMax(0.0));
    cache.pre_act.push_back(std::move(y));
    h = cache.act.back();
  }
  cache.output = h * params.value("out.weight");
  cache.output.rowwise() += params.value("out.bias").row(0);
  return cache;
}

BackwardResult mlp_backward(const NetworkSpec& spec, const ParamStore& params,
                            const ForwardCache& cache, const Eigen::MatrixXd& upstream) {
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw ConfigError("upstream shape mismatch: got " + std::to_string(upstream.rows()) + "x" +
                      std::to_string(upstream.cols()));
  }
  BackwardResult res;
  res.grads = zero_gradients(params);
  const std::size_t layers = spec.hidden_widths.size();

  auto grad_of = [&](const std::string& name) -> Eigen::MatrixXd& {
    // Store layout is fixed (layers in order, then output), so a name scan
    // stays cheap; index lookup keeps it O(1) anyway.
    const auto& entries = params.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name == name) return res.grads.by_index[i];
    }
    throw ConfigError("unknown parameter '" + name + "'");
  };

  const Eigen::MatrixXd& last_act = layers == 0 ? cache.input : cache.act.back();
  grad_of("out.weight") = last_act.transpose() * upstream;
  grad_of("out.bias") = upstream.colwise().sum();
  Eigen::MatrixXd dh = upstream * params.value("out.weight").transpose();

  for (std::size_t k = layers; k-- > 0;) {
    Eigen::MatrixXd dy = (cache.act[k].array() > 0.0).cast<double>() * dh.array();
    Eigen::MatrixXd dpre;
    if (spec.use_layer_norm) {
      const auto& normed = cache.normed[k];
      const auto& inv_std = cache.inv_std[k];
      grad_of(layer_name(k, "ln_scale")) = (dy.array() * normed.array()).colwise().sum();
      grad_of(layer_name(k, "ln_shift")) = dy.colwise().sum();
      Eigen::MatrixXd dnormed =
          dy.array().rowwise() * params.value(layer_name(k, "ln_scale")).row(0).array();
      Eigen::VectorXd mean_dn = dnormed.rowwise().mean();
      Eigen::VectorXd mean_dn_norm = (dnormed.array() * normed.array()).rowwise().mean();
      dpre = ((dnormed.colwise() - mean_dn).array() -
              (normed.array().colwise() * mean_dn_norm.array()))
                 .colwise() *
             inv_std.array();
    } else {
      dpre = std::move(dy);
    }
    const Eigen::MatrixXd& layer_in = k == 0 ? cache.input : cache.act[k - 1];
    grad_of(layer_name(k, "weight")) = layer_in.transpose() * dpre;
    grad_of(layer_name(k, "bias")) = dpre.colwise().sum();
    dh = dpre * params.value(layer_name(k, "weight")).transpose();
  }
  res.dinput = std::move(dh);
  return res;
}

Eigen::VectorXd layer_norm(const Eigen::VectorXd& v, double eps) {
  if (v.size() < 2) {
    throw ConfigError("layer_norm needs length >= 2 (degenerate normalization)");
  }
  const double mu = v.mean();
  const double var = (v.array() - mu).square().mean();
  return (v.array() - mu) / std::sqrt(var + eps);
}

void adamw_step(ParamStore& params, const Gradients& grads, const AdamwConfig& cfg) {
  auto& entries = params.entries();
  if (grads.by_index.size() != entries.size()) {
    throw ConfigError("gradient count does not match parameter store");
  }
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Eigen::MatrixXd& g = grads.by_index[i];
    if (g.rows() != entries[i].value.rows() || g.cols() != entries[i].value.cols()) {
      throw ConfigError("gradient shape mismatch for '" + entries[i].name + "'");
    }
    if (!g.allFinite()) {
      throw NumericalError("non-finite gradient for parameter '" + entries[i].name + "'");
    }
  }
  params.set_step_count(params.step_count() + 1);
  const double t = static_cast<double>(params.step_count());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    const auto& g = grads.by_index[i];
    e.m1 = cfg.beta1 * e.m1 + (1.0 - cfg.beta1) * g;
    e.m2 = cfg.beta2 * e.m2.array() + (1.0 - cfg.beta2) * g.array().square();
    Eigen::ArrayXXd mhat = e.m1.array() / bc1;
    Eigen::ArrayXXd vhat = e.m2.array() / bc2;
    e.value = e.value.array() * decay - cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
  }
}

FdReport finite_diff_check(const NetworkSpec& spec, ParamStore& params,
                           const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream,
                           double h, double tol) {
  if (!(h > 0.0 && h <= 1e-2)) throw ConfigError("fd step h must lie in (0, 1e-2]");
  const auto cache = mlp_forward_cached(spec, params, x);
  const auto analytic = mlp_backward(spec, params, cache, upstream);
  auto loss = [&]() {
    return (mlp_forward(spec, params, x).array() * upstream.array()).sum();
  };

  FdReport rep;
  double sum_rel = 0.0;
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    auto& e = params.entries()[i];
    for (Eigen::Index j = 0; j < e.value.size(); ++j) {
      const double orig = e.value(j);
      e.value(j) = orig + h;
      const double lp = loss();
      e.value(j) = orig - h;
      const double lm = loss();
      e.value(j) = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = analytic.grads.by_index[i](j);
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
      sum_rel += rel;
      ++rep.checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = e.name;
      }
    }
  }
  rep.mean_rel_error = rep.checked > 0 ? sum_rel / static_cast<double>(rep.checked) : 0.0;
  rep.pass = rep.max_rel_error <= tol;
  return rep;
}

}  // namespace dspi::nn
