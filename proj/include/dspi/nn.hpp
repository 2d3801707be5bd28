#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "dspi/common.hpp"

namespace dspi::nn {

inline constexpr double kLayerNormEps = 1e-5;

// Fully-connected net: ReLU after every hidden layer, optional LayerNorm on
// each hidden pre-activation, linear output layer.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int output_dim = 0;
  bool use_layer_norm = false;

  void validate() const;
};

struct ParamEntry {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd m1;  // first moment, shape-congruent with value
  Eigen::MatrixXd m2;  // second moment
};

// Named, ordered parameter arrays for one network plus optimizer state.
// Single-writer: never mutate one store from two threads.
class ParamStore {
 public:
  Eigen::MatrixXd& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Eigen::MatrixXd& value(const std::string& name);
  const Eigen::MatrixXd& value(const std::string& name) const;

  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  long step_count() const { return step_count_; }
  void set_step_count(long n) { step_count_ = n; }

  std::size_t scalar_count() const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  long step_count_ = 0;
};

// Per-parameter gradients, aligned index-for-index with the owning store.
struct Gradients {
  std::vector<Eigen::MatrixXd> by_index;
};

Gradients zero_gradients(const ParamStore& params);

struct AdamwConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 1e-4;
  double eps = 1e-8;
};

// Uniform fan-in init for weights (bound 1/sqrt(fan_in)), zero biases,
// LayerNorm scale 1 / shift 0.
ParamStore init_mlp_params(const NetworkSpec& spec, Rng& rng);

struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> normed;   // LN-normalized pre-activations
  std::vector<Eigen::VectorXd> inv_std;  // per-row 1/sqrt(var+eps)
  std::vector<Eigen::MatrixXd> pre_act;  // ReLU inputs (post-LN when enabled)
  std::vector<Eigen::MatrixXd> act;      // post-ReLU activations
  Eigen::MatrixXd output;
};

// x holds one input vector per row.
Eigen::MatrixXd mlp_forward(const NetworkSpec& spec, const ParamStore& params,
                            const Eigen::MatrixXd& x);
ForwardCache mlp_forward_cached(const NetworkSpec& spec, const ParamStore& params,
                                const Eigen::MatrixXd& x);

struct BackwardResult {
  Gradients grads;
  Eigen::MatrixXd dinput;  // gradient of the loss wrt the input batch
};

// Exact reverse-mode gradients of sum(upstream .* output) wrt every
// parameter and the input.
BackwardResult mlp_backward(const NetworkSpec& spec, const ParamStore& params,
                            const ForwardCache& cache, const Eigen::MatrixXd& upstream);

// Normalizes to zero mean / unit population variance (pre scale/shift).
Eigen::VectorXd layer_norm(const Eigen::VectorXd& v, double eps = kLayerNormEps);

// Decoupled weight decay: parameters shrink multiplicatively, the adaptive
// step sees only the raw gradient. Rejects non-finite gradients, naming the
// offending parameter.
void adamw_step(ParamStore& params, const Gradients& grads, const AdamwConfig& cfg);

struct FdReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  bool pass = false;
  std::string worst_param;
  long checked = 0;
};

// Central finite differences of sum(upstream .* output) over every scalar
// parameter, compared against mlp_backward.
FdReport finite_diff_check(const NetworkSpec& spec, ParamStore& params,
                           const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream,
                           double h, double tol);

}  // namespace dspi::nn
