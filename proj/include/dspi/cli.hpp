#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dspi::cli {

// Exit codes: 0 success, 2 config error, 3 numerical fault, 4 corrupt
// checkpoint, 5 gradient check failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitCheckpoint = 4;
inline constexpr int kExitGradcheck = 5;

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir_override = "");

int cmd_eval(const std::string& checkpoint_path, const std::string& env_name, int episodes,
             std::uint64_t seed);

int cmd_heatmap(const std::string& checkpoint_path, const std::string& env_name, int episode_len,
                const std::string& out_path, std::optional<double> tau_override);

int cmd_gradcheck(std::uint64_t seed, int instances, double tol);

}  // namespace dspi::cli
