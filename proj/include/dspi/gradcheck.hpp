#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dspi/nn.hpp"

namespace dspi::gradcheck {

struct CheckSummary {
  std::string component;
  double max_rel_error = 0.0;
  int instances = 0;
  bool pass = false;
};

// Test-only hook that corrupts analytic gradients before comparison, so the
// harness itself can be shown to catch wrong gradients.
using Tamper = std::function<void(nn::Gradients&)>;

// Each check draws `instances` random problems, rejects draws adjacent to
// ReLU/clamp kinks, and compares analytic gradients against central finite
// differences over every parameter.
CheckSummary check_mlp_backprop(std::uint64_t seed, int instances, double tol,
                                const Tamper& tamper = {});
CheckSummary check_actor_logprob(std::uint64_t seed, int instances, double tol);
CheckSummary check_critic_surrogate(std::uint64_t seed, int instances, double tol);

}  // namespace dspi::gradcheck
