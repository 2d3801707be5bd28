#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "dspi/checkpoint.hpp"
#include "dspi/cli.hpp"
#include "dspi/config.hpp"
#include "dspi/gradcheck.hpp"

using namespace dspi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path test_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "dspi_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string write_config(const std::string& name, const json& j) {
  const fs::path p = test_root() / name;
  std::ofstream out(p);
  out << j.dump(2) << "\n";
  return p.string();
}

json tiny_chain_config() {
  json j;
  j["env"] = "chain_mdp";
  j["seed"] = 5;
  j["gamma"] = 0.9;
  j["num_envs"] = 2;
  j["batch_size"] = 8;
  j["learning_starts"] = 8;
  j["buffer_capacity"] = 512;
  j["total_steps"] = 10;
  j["eval_interval"] = 5;
  j["eval_episodes"] = 2;
  j["actor_hidden"] = {8};
  j["critic_hidden"] = {8};
  j["use_layer_norm"] = false;
  j["measure_throughput"] = false;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("config defaults round-trip and unknown keys are rejected") {
  config::RunConfig cfg;
  cfg.train.env.name = "pendulum";
  json j = config::config_to_json(cfg);
  config::RunConfig back = config::config_from_json(j);
  CHECK(config::config_to_json(back).dump() == j.dump());

  json bad = j;
  bad["momentum"] = 0.9;
  CHECK_THROWS_AS(config::config_from_json(bad), ConfigError);

  json disagree = j;
  disagree["actor_kind"] = "standard";
  disagree["dem_enabled"] = true;
  CHECK_THROWS_AS(config::config_from_json(disagree), ConfigError);

  json standard = j;
  standard["actor_kind"] = "standard";
  standard.erase("dem_enabled");
  CHECK_FALSE(config::config_from_json(standard).train.dem.dem_enabled);
}

TEST_CASE("config file loading with overrides and the seed env var") {
  const std::string path = write_config("precedence.json", tiny_chain_config());

  setenv("MAXENT_DSPI_SEED", "77", 1);
  auto cfg = config::load_config(path, {});
  CHECK(cfg.train.seed == 77);  // env var beats the file

  cfg = config::load_config(path, {"seed=123", "dem_tau=2.5", "actor_hidden=[4,4]"});
  CHECK(cfg.train.seed == 123);  // --set beats the env var
  CHECK(cfg.train.dem.tau == 2.5);
  CHECK(cfg.train.actor_hidden == std::vector<int>{4, 4});
  unsetenv("MAXENT_DSPI_SEED");

  CHECK_THROWS_AS(config::load_config(path, {"no_such_key=1"}), ConfigError);
  CHECK_THROWS_AS(config::load_config(path, {"broken"}), ConfigError);
  CHECK_THROWS_AS(config::load_config("/nonexistent/cfg.json", {}), ConfigError);
}

TEST_CASE("checkpoint round-trip is byte-identical") {
  nn::NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_widths = {4};
  spec.output_dim = 2;
  Rng rng = make_rng(55, 0);
  nn::ParamStore store = nn::init_mlp_params(spec, rng);
  store.set_step_count(17);

  const json cfg = tiny_chain_config();
  const fs::path p1 = test_root() / "a.bin";
  const fs::path p2 = test_root() / "b.bin";
  ckpt::save_checkpoint(p1.string(), cfg, 42, -1.25, {{"actor", &store}});

  auto loaded = ckpt::load_checkpoint(p1.string());
  CHECK(loaded.step == 42);
  CHECK(loaded.log_alpha == -1.25);
  const nn::ParamStore* actor_store = loaded.find("actor");
  REQUIRE(actor_store != nullptr);
  CHECK(actor_store->step_count() == 17);
  const auto& got = actor_store->entries();
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].name == store.entries()[i].name);
    CHECK((got[i].value - store.entries()[i].value).cwiseAbs().maxCoeff() == 0.0);
    CHECK((got[i].m1 - store.entries()[i].m1).cwiseAbs().maxCoeff() == 0.0);
  }

  ckpt::save_checkpoint(p2.string(), loaded.config, loaded.step, loaded.log_alpha,
                        {{"actor", actor_store}});
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const fs::path p = test_root() / "corrupt.bin";
  std::ofstream(p) << "definitely not a checkpoint";
  CHECK_THROWS_AS(ckpt::load_checkpoint(p.string()), CheckpointError);
  CHECK_THROWS_AS(ckpt::load_checkpoint((test_root() / "missing.bin").string()), CheckpointError);
}

TEST_CASE("cmd_train smoke run writes the contracted artifacts") {
  const std::string cfg_path = write_config("train.json", tiny_chain_config());
  const fs::path out = test_root() / "run1";
  CHECK(cli::cmd_train(cfg_path, {}, out.string()) == cli::kExitOk);

  const std::string metrics = slurp(out / "metrics.csv");
  CHECK(count_lines(metrics) == 11);  // header + 10 data rows
  CHECK(metrics.rfind("step,episodic_return_mean,alpha,entropy_mean,q_mean,q_sigma_mean,omega,"
                      "w_min,w_max,sps\n",
                      0) == 0);
  CHECK(fs::exists(out / "config.resolved"));
  CHECK(fs::exists(out / "checkpoint_step5.bin"));
  CHECK(fs::exists(out / "checkpoint_step10.bin"));
  CHECK(fs::exists(out / "checkpoint_final.bin"));

  // rerunning from the resolved config reproduces metrics byte for byte
  const fs::path out2 = test_root() / "run2";
  CHECK(cli::cmd_train((out / "config.resolved").string(), {}, out2.string()) == cli::kExitOk);
  CHECK(slurp(out2 / "metrics.csv") == metrics);
}

TEST_CASE("cmd_train rejects bad overrides without touching the output dir") {
  const std::string cfg_path = write_config("train_bad.json", tiny_chain_config());
  const fs::path out = test_root() / "never_created";
  CHECK(cli::cmd_train(cfg_path, {"bogus_key=1"}, out.string()) == cli::kExitConfig);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("cmd_eval prints a machine-readable line") {
  const std::string cfg_path = write_config("eval.json", tiny_chain_config());
  const fs::path out = test_root() / "eval_run";
  REQUIRE(cli::cmd_train(cfg_path, {}, out.string()) == cli::kExitOk);
  const std::string ckpt_path = (out / "checkpoint_final.bin").string();

  std::stringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  const int rc = cli::cmd_eval(ckpt_path, "", 3, 9);
  std::cout.rdbuf(old);
  CHECK(rc == cli::kExitOk);
  const std::string line = captured.str();
  CHECK(line.find("mean=") != std::string::npos);
  CHECK(line.find("min=") != std::string::npos);
  CHECK(line.find("max=") != std::string::npos);
  CHECK(line.find("episodes=3") != std::string::npos);
  // on the chain every policy earns exactly length * reward per episode
  CHECK(line.find("mean=5.00000000") != std::string::npos);

  std::stringstream cap1;
  old = std::cout.rdbuf(cap1.rdbuf());
  CHECK(cli::cmd_eval(ckpt_path, "", 1, 9) == cli::kExitOk);
  std::cout.rdbuf(old);
  const std::string one = cap1.str();
  const auto mean_pos = one.find("mean=");
  const auto min_pos = one.find("min=");
  const auto max_pos = one.find("max=");
  CHECK(one.substr(mean_pos + 5, 10) == one.substr(min_pos + 4, 10));
  CHECK(one.substr(min_pos + 4, 10) == one.substr(max_pos + 4, 10));

  CHECK(cli::cmd_eval(ckpt_path, "no_such_env", 2, 9) == cli::kExitConfig);
  const fs::path corrupt = test_root() / "junk.bin";
  std::ofstream(corrupt) << "junk";
  CHECK(cli::cmd_eval(corrupt.string(), "", 2, 9) == cli::kExitCheckpoint);
}

TEST_CASE("cmd_heatmap emits a conserving weight matrix") {
  json cfg_json = tiny_chain_config();
  cfg_json["env"] = "redundant_reacher";
  cfg_json["gamma"] = 0.97;
  const std::string cfg_path = write_config("heat.json", cfg_json);
  const fs::path out = test_root() / "heat_run";
  REQUIRE(cli::cmd_train(cfg_path, {}, out.string()) == cli::kExitOk);
  const std::string ckpt_path = (out / "checkpoint_final.bin").string();

  const fs::path hm = test_root() / "weights.csv";
  CHECK(cli::cmd_heatmap(ckpt_path, "", 12, hm.string(), std::nullopt) == cli::kExitOk);
  std::ifstream in(hm);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("a0,a1,", 0) == 0);
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    double sum = 0.0;
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      sum += std::stod(cell);
      ++n;
    }
    CHECK(n == 16);
    CHECK(std::abs(sum / n - 1.0) <= 1e-9);  // conservation row by row
  }
  CHECK(rows == 12);

  // extreme temperature flattens every cell to 1
  const fs::path hm_flat = test_root() / "weights_flat.csv";
  CHECK(cli::cmd_heatmap(ckpt_path, "", 6, hm_flat.string(), 1e6) == cli::kExitOk);
  std::ifstream in_flat(hm_flat);
  std::getline(in_flat, header);
  while (std::getline(in_flat, line)) {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) CHECK(std::abs(std::stod(cell) - 1.0) <= 1e-3);
  }

  // a standard-actor checkpoint is refused
  json std_cfg = cfg_json;
  std_cfg["actor_kind"] = "standard";
  const std::string std_path = write_config("heat_std.json", std_cfg);
  const fs::path out_std = test_root() / "heat_std_run";
  REQUIRE(cli::cmd_train(std_path, {}, out_std.string()) == cli::kExitOk);
  CHECK(cli::cmd_heatmap((out_std / "checkpoint_final.bin").string(), "", 4,
                         (test_root() / "never.csv").string(),
                         std::nullopt) == cli::kExitConfig);
}

TEST_CASE("gradcheck detects an injected sign flip") {
  auto clean = gradcheck::check_mlp_backprop(7, 20, 1e-4);
  CHECK(clean.pass);
  auto flipped = gradcheck::check_mlp_backprop(7, 20, 1e-4, [](nn::Gradients& g) {
    g.by_index[0](0, 0) = -g.by_index[0](0, 0) - 1.0;
  });
  CHECK_FALSE(flipped.pass);

  // verdict is seed-independent
  auto other_seed = gradcheck::check_mlp_backprop(1234, 20, 1e-4);
  CHECK(other_seed.pass);
}

TEST_CASE("cmd_gradcheck exit codes") {
  std::stringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  const int ok = cli::cmd_gradcheck(9, 25, 1e-4);
  const int ok2 = cli::cmd_gradcheck(10, 25, 1e-4);  // different seed, same verdict
  const int too_tight = cli::cmd_gradcheck(9, 25, 1e-12);
  std::cout.rdbuf(old);
  CHECK(ok == cli::kExitOk);
  CHECK(ok2 == cli::kExitOk);
  CHECK(too_tight == cli::kExitGradcheck);
}

TEST_CASE("a diverging run exits with the numerical-fault code") {
  json j = tiny_chain_config();
  j["total_steps"] = 40;
  j["lr_critic"] = 1e30;  // drives activations to overflow within a few updates
  const std::string cfg_path = write_config("diverge.json", j);
  const fs::path out = test_root() / "diverge_run";
  std::stringstream sink;
  auto* old = std::cerr.rdbuf(sink.rdbuf());
  const int rc = cli::cmd_train(cfg_path, {}, out.string());
  std::cerr.rdbuf(old);
  CHECK(rc == cli::kExitNumerical);
  CHECK(sink.str().find("numerical fault at step") != std::string::npos);
}
