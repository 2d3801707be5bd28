#include <CLI11.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dspi/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"maximum-entropy distributional soft policy iteration"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, env_name, heatmap_out;
  std::vector<std::string> overrides;
  int episodes = 5;
  int heatmap_steps = 32;
  std::uint64_t seed = 1;
  int instances = 120;
  double tol = 1e-4;
  double tau_override = -1.0;

  auto* train = app.add_subcommand("train", "run a training job");
  train->add_option("--config", config_path, "config file (flat JSON)");
  train->add_option("--set", overrides, "key=value override, repeatable");
  train->add_option("--out", out_dir, "output directory override");

  auto* eval = app.add_subcommand("eval", "deterministic evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--env", env_name, "environment name override");
  eval->add_option("--episodes", episodes, "episode count");
  eval->add_option("--seed", seed, "evaluation seed");

  auto* heatmap = app.add_subcommand("heatmap", "per-step exploration-weight matrix");
  heatmap->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  heatmap->add_option("--env", env_name, "environment name override");
  heatmap->add_option("--steps", heatmap_steps, "rows to emit");
  heatmap->add_option("--out", heatmap_out, "output CSV path")->required();
  heatmap->add_option("--tau", tau_override, "temperature override");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seed", seed, "rng seed");
  gradcheck->add_option("--instances", instances, "random instances per component");
  gradcheck->add_option("--tol", tol, "max relative error tolerance");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return dspi::cli::cmd_train(config_path, overrides, out_dir);
  if (eval->parsed()) return dspi::cli::cmd_eval(checkpoint_path, env_name, episodes, seed);
  if (heatmap->parsed()) {
    std::optional<double> tau;
    if (tau_override > 0.0) tau = tau_override;
    return dspi::cli::cmd_heatmap(checkpoint_path, env_name, heatmap_steps, heatmap_out, tau);
  }
  if (gradcheck->parsed()) return dspi::cli::cmd_gradcheck(seed, instances, tol);
  return 1;
}
