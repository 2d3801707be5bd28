#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "dspi/nn.hpp"

namespace dspi::ckpt {

// Container layout: magic line, little-endian u64 header length, JSON header
// (format version, config, step, per-store manifest with byte offsets), then
// the payload of flat little-endian 64-bit floats. Each parameter stores its
// value followed by both optimizer moments.
inline constexpr const char* kMagic = "MAXENT-DSPI-CKPT1\n";
inline constexpr int kFormatVersion = 1;

struct StoreRef {
  std::string name;
  const nn::ParamStore* store;
};

void save_checkpoint(const std::string& path, const nlohmann::json& config, long step,
                     double log_alpha, const std::vector<StoreRef>& stores);

struct LoadedCheckpoint {
  nlohmann::json config;
  long step = 0;
  double log_alpha = 0.0;
  // manifest order preserved, so a re-save is byte-identical
  std::vector<std::pair<std::string, nn::ParamStore>> stores;

  const nn::ParamStore* find(const std::string& name) const {
    for (const auto& [n, s] : stores) {
      if (n == name) return &s;
    }
    return nullptr;
  }
};

// Throws CheckpointError on any structural or I/O problem.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace dspi::ckpt
