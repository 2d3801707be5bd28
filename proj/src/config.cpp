#include "dspi/config.hpp"

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>

namespace dspi::config {

namespace {

std::vector<int> widths_from(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("'" + key + "' must be an array of widths");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ConfigError("'" + key + "' must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

double num(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

long integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
  return v.get<long>();
}

bool boolean(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("'" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string text(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  // instantiating the env surfaces unknown names and bad per-env params
  envs::make_env(train.env, 0);
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  auto& t = cfg.train;
  bool saw_actor_kind = false, saw_dem_enabled = false;
  std::string actor_kind = "dem";
  bool dem_enabled = true;

  for (const auto& [key, v] : j.items()) {
    if (key == "env") t.env.name = text(v, key);
    else if (key == "seed") t.seed = static_cast<std::uint64_t>(integer(v, key));
    else if (key == "out_dir") cfg.out_dir = text(v, key);
    else if (key == "checkpoint_interval") cfg.checkpoint_interval = integer(v, key);
    else if (key == "gamma") t.gamma = num(v, key);
    else if (key == "num_envs") t.num_envs = static_cast<int>(integer(v, key));
    else if (key == "batch_size") t.batch_size = static_cast<int>(integer(v, key));
    else if (key == "total_steps") t.total_steps = integer(v, key);
    else if (key == "updates_per_env_step") t.updates_per_env_step = static_cast<int>(integer(v, key));
    else if (key == "learning_starts") t.learning_starts = integer(v, key);
    else if (key == "buffer_capacity") t.buffer_capacity = static_cast<int>(integer(v, key));
    else if (key == "eval_interval") t.eval_interval = integer(v, key);
    else if (key == "eval_episodes") t.eval_episodes = static_cast<int>(integer(v, key));
    else if (key == "lr_actor") t.lr_actor = num(v, key);
    else if (key == "lr_critic") t.lr_critic = num(v, key);
    else if (key == "lr_alpha") t.lr_alpha = num(v, key);
    else if (key == "adam_beta1") t.adam_beta1 = num(v, key);
    else if (key == "adam_beta2") t.adam_beta2 = num(v, key);
    else if (key == "weight_decay") t.weight_decay = num(v, key);
    else if (key == "adam_eps") t.adam_eps = num(v, key);
    else if (key == "alpha_init") t.alpha_init = num(v, key);
    else if (key == "target_entropy") t.target_entropy = num(v, key);
    else if (key == "actor_hidden") t.actor_hidden = widths_from(v, key);
    else if (key == "critic_hidden") t.critic_hidden = widths_from(v, key);
    else if (key == "use_layer_norm") t.use_layer_norm = boolean(v, key);
    else if (key == "actor_kind") { actor_kind = text(v, key); saw_actor_kind = true; }
    else if (key == "dem_enabled") { dem_enabled = boolean(v, key); saw_dem_enabled = true; }
    else if (key == "dem_tau") t.dem.tau = num(v, key);
    else if (key == "log_std_min") t.dem.log_std_min = num(v, key);
    else if (key == "log_std_max") t.dem.log_std_max = num(v, key);
    else if (key == "beta_min") t.dem.beta_min = num(v, key);
    else if (key == "beta_max") t.dem.beta_max = num(v, key);
    else if (key == "critic_kind") t.critic_kind = text(v, key);
    else if (key == "critic_epsilon") t.critic.epsilon = num(v, key);
    else if (key == "tau_soft") t.critic.tau_soft = num(v, key);
    else if (key == "log_sigma_min") t.critic.log_sigma_min = num(v, key);
    else if (key == "log_sigma_max") t.critic.log_sigma_max = num(v, key);
    else if (key == "c51_atoms") t.c51.n_atoms = static_cast<int>(integer(v, key));
    else if (key == "c51_v_min") t.c51.v_min = num(v, key);
    else if (key == "c51_v_max") t.c51.v_max = num(v, key);
    else if (key == "measure_throughput") t.measure_throughput = boolean(v, key);
    else if (key == "reacher_n_total") t.env.reacher.n_total = static_cast<int>(integer(v, key));
    else if (key == "reacher_n_relevant") t.env.reacher.n_relevant = static_cast<int>(integer(v, key));
    else if (key == "reacher_noise_std") t.env.reacher.noise_std = num(v, key);
    else if (key == "reacher_max_steps") t.env.reacher.max_episode_steps = static_cast<int>(integer(v, key));
    else if (key == "chain_length") t.env.chain.length = static_cast<int>(integer(v, key));
    else if (key == "chain_reward") t.env.chain.reward = num(v, key);
    else if (key == "chain_gamma_ref") t.env.chain.gamma_ref = num(v, key);
    else if (key == "pendulum_max_steps") t.env.pendulum.max_episode_steps = static_cast<int>(integer(v, key));
    else throw ConfigError("unknown config key '" + key + "'");
  }

  if (saw_actor_kind && actor_kind != "dem" && actor_kind != "standard") {
    throw ConfigError("actor_kind must be 'dem' or 'standard'");
  }
  if (saw_actor_kind && saw_dem_enabled && (actor_kind == "dem") != dem_enabled) {
    throw ConfigError("actor_kind and dem_enabled disagree");
  }
  if (saw_actor_kind) dem_enabled = actor_kind == "dem";
  t.dem.dem_enabled = dem_enabled;

  cfg.validate();
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  json j;
  j["env"] = t.env.name;
  j["seed"] = t.seed;
  j["out_dir"] = cfg.out_dir;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["gamma"] = t.gamma;
  j["num_envs"] = t.num_envs;
  j["batch_size"] = t.batch_size;
  j["total_steps"] = t.total_steps;
  j["updates_per_env_step"] = t.updates_per_env_step;
  j["learning_starts"] = t.learning_starts;
  j["buffer_capacity"] = t.buffer_capacity;
  j["eval_interval"] = t.eval_interval;
  j["eval_episodes"] = t.eval_episodes;
  j["lr_actor"] = t.lr_actor;
  j["lr_critic"] = t.lr_critic;
  j["lr_alpha"] = t.lr_alpha;
  j["adam_beta1"] = t.adam_beta1;
  j["adam_beta2"] = t.adam_beta2;
  j["weight_decay"] = t.weight_decay;
  j["adam_eps"] = t.adam_eps;
  j["alpha_init"] = t.alpha_init;
  j["target_entropy"] = t.target_entropy;
  j["actor_hidden"] = t.actor_hidden;
  j["critic_hidden"] = t.critic_hidden;
  j["use_layer_norm"] = t.use_layer_norm;
  j["actor_kind"] = t.dem.dem_enabled ? "dem" : "standard";
  j["dem_enabled"] = t.dem.dem_enabled;
  j["dem_tau"] = t.dem.tau;
  j["log_std_min"] = t.dem.log_std_min;
  j["log_std_max"] = t.dem.log_std_max;
  j["beta_min"] = t.dem.beta_min;
  j["beta_max"] = t.dem.beta_max;
  j["critic_kind"] = t.critic_kind;
  j["critic_epsilon"] = t.critic.epsilon;
  j["tau_soft"] = t.critic.tau_soft;
  j["log_sigma_min"] = t.critic.log_sigma_min;
  j["log_sigma_max"] = t.critic.log_sigma_max;
  j["c51_atoms"] = t.c51.n_atoms;
  j["c51_v_min"] = t.c51.v_min;
  j["c51_v_max"] = t.c51.v_max;
  j["measure_throughput"] = t.measure_throughput;
  j["reacher_n_total"] = t.env.reacher.n_total;
  j["reacher_n_relevant"] = t.env.reacher.n_relevant;
  j["reacher_noise_std"] = t.env.reacher.noise_std;
  j["reacher_max_steps"] = t.env.reacher.max_episode_steps;
  j["chain_length"] = t.env.chain.length;
  j["chain_reward"] = t.env.chain.reward;
  j["chain_gamma_ref"] = t.env.chain.gamma_ref;
  j["pendulum_max_steps"] = t.env.pendulum.max_episode_steps;
  return j;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json merged = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
      merged = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config parse error: " + std::string(e.what()));
    }
    if (!merged.is_object()) throw ConfigError("config root must be an object");
  }

  if (const char* env_seed = std::getenv("MAXENT_DSPI_SEED")) {
    try {
      merged["seed"] = std::stoll(env_seed);
    } catch (const std::exception&) {
      throw ConfigError("MAXENT_DSPI_SEED is not an integer");
    }
  }

  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + kv + "' is not of the form key=value");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;  // bare strings stay strings
    }
    merged[key] = value;
  }

  return config_from_json(merged);
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dspi::config
