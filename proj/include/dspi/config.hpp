#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "dspi/trainer.hpp"

namespace dspi::config {

using json = nlohmann::json;

struct RunConfig {
  trainer::TrainConfig train;
  std::string out_dir = "runs/default";
  long checkpoint_interval = 0;  // 0 means "use eval_interval"

  long effective_checkpoint_interval() const {
    return checkpoint_interval > 0 ? checkpoint_interval : train.eval_interval;
  }
  void validate() const;
};

// Flat key/value document, JSON-compatible. Unknown keys are rejected.
RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& cfg);

// Precedence, lowest to highest: built-in defaults, config file,
// MAXENT_DSPI_SEED (seed only), --set overrides.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

// Stable FNV-1a hash of the canonical serialization.
std::string config_hash(const json& j);

}  // namespace dspi::config
