#include "dspi/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "dspi/checkpoint.hpp"
#include "dspi/config.hpp"
#include "dspi/gradcheck.hpp"
#include "dspi/trainer.hpp"

namespace dspi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.8f", v);
  return buf;
}

void write_metrics_row(std::ofstream& out, const trainer::StepMetrics& m) {
  out << m.step << ',' << fmt(m.episodic_return_mean) << ',' << fmt(m.alpha) << ','
      << fmt(m.entropy_mean) << ',' << fmt(m.q_mean) << ',' << fmt(m.q_sigma_mean) << ','
      << fmt(m.omega) << ',' << fmt(m.w_min) << ',' << fmt(m.w_max) << ',' << fmt(m.sps) << '\n';
}

std::vector<ckpt::StoreRef> store_refs(trainer::Trainer& t) {
  std::vector<ckpt::StoreRef> refs;
  refs.push_back({"actor", &t.policy().params()});
  if (auto* g = t.gaussian_critic()) {
    refs.push_back({"critic1", &g->online(0)});
    refs.push_back({"critic2", &g->online(1)});
    refs.push_back({"critic1_target", &g->target(0)});
    refs.push_back({"critic2_target", &g->target(1)});
  } else if (auto* c = t.categorical_critic()) {
    refs.push_back({"critic1", &c->online(0)});
    refs.push_back({"critic2", &c->online(1)});
    refs.push_back({"critic1_target", &c->target(0)});
    refs.push_back({"critic2_target", &c->target(1)});
  }
  return refs;
}

// Rebuilds the policy recorded in a checkpoint and loads its parameters.
struct RestoredPolicy {
  config::RunConfig cfg;
  actor::Policy policy;
};

RestoredPolicy restore_policy(const ckpt::LoadedCheckpoint& loaded) {
  config::RunConfig cfg = config::config_from_json(loaded.config);
  const envs::EnvSpec sp = envs::make_env(cfg.train.env, 0)->spec();
  actor::Policy policy(sp.obs_dim, sp.action_dim, cfg.train.actor_hidden,
                       cfg.train.use_layer_norm, cfg.train.dem);
  const nn::ParamStore* actor_store = loaded.find("actor");
  if (actor_store == nullptr) throw CheckpointError("checkpoint has no actor store");
  Rng dummy = make_rng(0, 0);
  policy.init_params(dummy);
  const auto& have = actor_store->entries();
  auto& want = policy.params().entries();
  if (have.size() != want.size()) throw CheckpointError("actor store does not match config");
  for (std::size_t i = 0; i < have.size(); ++i) {
    if (have[i].name != want[i].name || have[i].value.rows() != want[i].value.rows() ||
        have[i].value.cols() != want[i].value.cols()) {
      throw CheckpointError("actor parameter '" + have[i].name + "' does not match config");
    }
  }
  policy.params() = *actor_store;
  return {std::move(cfg), std::move(policy)};
}

}  // namespace

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_dir_override) {
  config::RunConfig cfg;
  try {
    cfg = config::load_config(config_path, overrides);
    if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    fs::create_directories(cfg.out_dir);
    const json resolved = config_to_json(cfg);
    {
      std::ofstream out(fs::path(cfg.out_dir) / "config.resolved");
      out << resolved.dump(2) << "\n";
    }

    trainer::Trainer train(cfg.train);
    std::ofstream metrics(fs::path(cfg.out_dir) / "metrics.csv", std::ios::trunc);
    metrics << "step,episodic_return_mean,alpha,entropy_mean,q_mean,q_sigma_mean,omega,"
               "w_min,w_max,sps\n";

    const long ckpt_every = cfg.effective_checkpoint_interval();
    auto save = [&](const std::string& tag) {
      auto refs = store_refs(train);
      ckpt::save_checkpoint((fs::path(cfg.out_dir) / ("checkpoint_" + tag + ".bin")).string(),
                            resolved, train.step(), train.alpha_state().log_alpha, refs);
    };

    for (long s = 0; s < cfg.train.total_steps; ++s) {
      trainer::StepMetrics m;
      try {
        m = train.train_step();
      } catch (const NumericalError& e) {
        std::cerr << "numerical fault at step " << (s + 1) << ": " << e.what() << "\n";
        return kExitNumerical;
      }
      write_metrics_row(metrics, m);
      const bool at_interval = cfg.train.eval_interval > 0 && m.step % cfg.train.eval_interval == 0;
      if (at_interval) {
        auto ev = train.evaluate(cfg.train.eval_episodes, mix_seed(cfg.train.seed, 0xe7a1));
        std::cout << "eval step=" << m.step << " mean=" << fmt(ev.mean) << " min=" << fmt(ev.min)
                  << " max=" << fmt(ev.max) << "\n";
      }
      if (ckpt_every > 0 && m.step % ckpt_every == 0) save("step" + std::to_string(m.step));
    }
    save("final");
    metrics.flush();
    return kExitOk;
  } catch (const NumericalError& e) {
    std::cerr << "numerical fault: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& env_name, int episodes,
             std::uint64_t seed) {
  ckpt::LoadedCheckpoint loaded;
  try {
    loaded = ckpt::load_checkpoint(checkpoint_path);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  }
  try {
    if (!env_name.empty()) loaded.config["env"] = env_name;
    auto restored = restore_policy(loaded);
    const auto& policy = restored.policy;
    auto act = [&policy](const Eigen::VectorXd& obs) {
      return policy.deterministic_action(policy.head(obs));
    };
    auto returns = envs::run_episodes(act, restored.cfg.train.env, episodes, seed);
    double mean = 0.0, lo = returns.front(), hi = returns.front();
    for (double v : returns) {
      mean += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    mean /= static_cast<double>(returns.size());
    std::cout << "mean=" << fmt(mean) << " min=" << fmt(lo) << " max=" << fmt(hi)
              << " episodes=" << returns.size() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  }
}

int cmd_heatmap(const std::string& checkpoint_path, const std::string& env_name, int episode_len,
                const std::string& out_path, std::optional<double> tau_override) {
  ckpt::LoadedCheckpoint loaded;
  try {
    loaded = ckpt::load_checkpoint(checkpoint_path);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  }
  try {
    if (!env_name.empty()) loaded.config["env"] = env_name;
    auto restored = restore_policy(loaded);
    const auto& policy = restored.policy;
    if (!policy.dem().dem_enabled) {
      std::cerr << "this checkpoint holds a standard (non-modulated) actor; "
                   "exploration-weight heatmaps need the modulated policy\n";
      return kExitConfig;
    }
    const double tau = tau_override.value_or(policy.dem().tau);
    if (!(tau > 0.0)) throw ConfigError("tau override must be positive");
    if (episode_len < 1) throw ConfigError("episode length must be positive");

    auto env = envs::make_env(restored.cfg.train.env, mix_seed(restored.cfg.train.seed, 0x8ea7));
    Eigen::VectorXd obs = env->reset();
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open heatmap output '" + out_path + "'");
    for (int i = 0; i < policy.act_dim(); ++i) out << (i > 0 ? "," : "") << "a" << i;
    out << "\n";
    for (int s = 0; s < episode_len; ++s) {
      auto head = policy.head(obs);
      // deterministic rollout with the canonical beta = 1 policy
      const Eigen::VectorXd w = actor::dem_weights(head.logits, tau, 1.0);
      char buf[64];
      for (int i = 0; i < w.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12f", w[i]);
        out << (i > 0 ? "," : "") << buf;
      }
      out << "\n";
      auto res = env->step(policy.deterministic_action(head));
      obs = (res.done || res.truncated) ? env->reset() : res.obs;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  }
}

int cmd_gradcheck(std::uint64_t seed, int instances, double tol) {
  const auto mlp = gradcheck::check_mlp_backprop(seed, instances, tol);
  const auto act = gradcheck::check_actor_logprob(seed, instances, tol);
  const auto crit = gradcheck::check_critic_surrogate(seed, instances, tol);
  bool all_pass = true;
  for (const auto& c : {mlp, act, crit}) {
    std::cout << c.component << ": max_rel_error=" << c.max_rel_error
              << " instances=" << c.instances << " tol=" << tol
              << (c.pass ? " PASS" : " FAIL") << "\n";
    all_pass = all_pass && c.pass;
  }
  if (!all_pass) {
    for (const auto& c : {mlp, act, crit}) {
      if (!c.pass) std::cerr << "gradient check failed: " << c.component << "\n";
    }
    return kExitGradcheck;
  }
  return kExitOk;
}

}  // namespace dspi::cli
