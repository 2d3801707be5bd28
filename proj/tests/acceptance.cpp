// Acceptance suite: one self-contained check per criterion, each printing a
// single [PASS]/[FAIL] line. Run with a list of criterion numbers, or no
// arguments for all seven.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "dspi/checkpoint.hpp"
#include "dspi/cli.hpp"
#include "dspi/config.hpp"
#include "dspi/gradcheck.hpp"
#include "dspi/trainer.hpp"

using namespace dspi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------- criterion 1
Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const double tol = 1e-4;
  const auto mlp = gradcheck::check_mlp_backprop(2024, 120, tol);
  const auto act = gradcheck::check_actor_logprob(2024, 120, tol);
  const auto crit = gradcheck::check_critic_surrogate(2024, 120, tol);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome out;
  out.pass = mlp.pass && act.pass && crit.pass && mlp.instances >= 100 &&
             act.instances >= 100 && crit.instances >= 100 && secs <= 60.0;
  out.detail = "mlp=" + num(mlp.max_rel_error) + " actor=" + num(act.max_rel_error) +
               " critic=" + num(crit.max_rel_error) + " instances>=100 each, " +
               num(secs) + "s";
  return out;
}

// ---------------------------------------------------------------- criterion 2
Outcome dem_algebra() {
  Rng rng = make_rng(777, 0);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> logit(-10.0, 10.0);
  std::uniform_real_distribution<double> log_tau(std::log(0.1), std::log(10.0));
  std::uniform_real_distribution<double> beta_d(0.01, 2.0);

  double worst_cons = 0.0;
  bool argmax_ok = true, positive_ok = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = dim(rng);
    Eigen::VectorXd logits(n);
    for (int i = 0; i < n; ++i) logits[i] = logit(rng);
    const Eigen::VectorXd w = actor::dem_weights(logits, std::exp(log_tau(rng)), beta_d(rng));
    worst_cons = std::max(worst_cons, std::abs(w.mean() - 1.0));
    positive_ok = positive_ok && w.minCoeff() > 0.0;
    Eigen::Index il, iw;
    logits.maxCoeff(&il);
    w.maxCoeff(&iw);
    argmax_ok = argmax_ok && il == iw;
  }

  double worst_uniform = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd logits(12);
    for (int i = 0; i < 12; ++i) logits[i] = logit(rng);
    worst_uniform =
        std::max(worst_uniform, (actor::dem_weights(logits, 1e6, 1.0).array() - 1.0).abs().maxCoeff());
  }

  bool sharpen_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::max(2, dim(rng));
    Eigen::VectorXd logits(n);
    for (int i = 0; i < n; ++i) logits[i] = logit(rng);
    const double tau = std::exp(log_tau(rng));
    const double hi = actor::dem_weights(logits, tau, 2.0).maxCoeff();
    const double lo = actor::dem_weights(logits, tau, 0.01).maxCoeff();
    sharpen_ok = sharpen_ok && hi >= lo - 1e-12;
  }

  Outcome out;
  out.pass = worst_cons <= 1e-12 && positive_ok && argmax_ok && worst_uniform <= 1e-3 && sharpen_ok;
  out.detail = "conservation=" + num(worst_cons) + " uniform_limit=" + num(worst_uniform) +
               " argmax=" + (argmax_ok ? std::string("ok") : std::string("violated")) +
               " sharpening=" + (sharpen_ok ? std::string("ok") : std::string("violated"));
  return out;
}

// ---------------------------------------------------------------- criterion 3
Outcome c51_projection() {
  Rng rng = make_rng(888, 0);
  std::uniform_real_distribution<double> rdist(-2.0, 2.0);
  std::uniform_real_distribution<double> gdist(0.0, 0.999);
  std::uniform_int_distribution<int> ndist(2, 101);
  std::uniform_real_distribution<double> edist(0.0, 1.0);

  double worst_mass = 0.0, worst_expect = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = ndist(rng);
    Eigen::VectorXd atoms = Eigen::VectorXd::LinSpaced(n, -3.0, 3.0);
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p[i] = edist(rng) + 1e-9;
    p /= p.sum();
    const double r = rdist(rng);
    const double gamma = gdist(rng);
    const bool done = edist(rng) < 0.1;
    const Eigen::VectorXd m = critic::c51_project(r, gamma, done, p, atoms);
    worst_mass = std::max(worst_mass, std::abs(m.sum() - 1.0));
    const double keep = done ? 0.0 : gamma;
    double expect = 0.0;
    for (int i = 0; i < n; ++i) {
      expect += p[i] * std::clamp(r + keep * atoms[i], atoms[0], atoms[n - 1]);
    }
    const double dz = atoms[1] - atoms[0];
    worst_expect = std::max(worst_expect, std::abs(m.dot(atoms) - expect) / dz);
  }

  Eigen::VectorXd atoms(3), onehot(3);
  atoms << 0.0, 1.0, 2.0;
  onehot << 1.0, 0.0, 0.0;
  const Eigen::VectorXd m = critic::c51_project(1.0, 0.5, false, onehot, atoms);
  const bool hand_ok = m[0] == 0.0 && m[1] == 1.0 && m[2] == 0.0;

  Outcome out;
  out.pass = worst_mass <= 1e-9 && worst_expect <= 1.0 && hand_ok;
  out.detail = "mass_err=" + num(worst_mass) + " expect_err(in_atom_units)=" + num(worst_expect) +
               " hand_case=" + (hand_ok ? std::string("exact") : std::string("wrong"));
  return out;
}

// ---------------------------------------------------------------- criterion 4
struct ChainData {
  Eigen::MatrixXd s, a, s_next;
  Eigen::VectorXd r, bootstrap;
};

ChainData chain_transitions(const envs::ChainMdpConfig& cfg) {
  const int L = cfg.length;
  ChainData d;
  d.s = Eigen::MatrixXd::Zero(L, L + 1);
  d.a = Eigen::MatrixXd::Zero(L, 1);
  d.s_next = Eigen::MatrixXd::Zero(L, L + 1);
  d.r = Eigen::VectorXd::Constant(L, cfg.reward);
  d.bootstrap = Eigen::VectorXd::Ones(L);
  for (int k = 0; k < L; ++k) {
    d.s(k, k) = 1.0;
    d.s_next(k, k + 1) = 1.0;
    if (k == L - 1) d.bootstrap[k] = 0.0;  // absorbing end state
  }
  return d;
}

template <typename Sampler>
void sample_rows(const ChainData& d, int batch, Rng& rng, const Sampler& use_row) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(d.s.rows()) - 1);
  for (int i = 0; i < batch; ++i) use_row(pick(rng));
}

Outcome value_oracle() {
  const envs::ChainMdpConfig chain_cfg{5, 1.0, 0.9};
  const auto qa = envs::chain_mdp_analytic_q(chain_cfg);
  const double q_true = qa[0];
  const ChainData data = chain_transitions(chain_cfg);
  const int obs_dim = chain_cfg.length + 1;
  const int batch = 128;
  const int updates = 10000;
  const auto t0 = std::chrono::steady_clock::now();

  auto make_batch = [&](Rng& rng, Eigen::MatrixXd& s, Eigen::MatrixXd& a, Eigen::MatrixXd& sn,
                        Eigen::VectorXd& r, Eigen::VectorXd& boot) {
    s.resize(batch, obs_dim);
    a.setZero(batch, 1);
    sn.resize(batch, obs_dim);
    r.resize(batch);
    boot.resize(batch);
    int i = 0;
    sample_rows(data, batch, rng, [&](int row) {
      s.row(i) = data.s.row(row);
      sn.row(i) = data.s_next.row(row);
      r[i] = data.r[row];
      boot[i] = data.bootstrap[row];
      ++i;
    });
  };

  // continuous critic under the frozen all-zeros policy, alpha = 0
  critic::CriticConfig ccfg;
  critic::GaussianCritic crit(obs_dim, 1, {32, 32}, false, ccfg);
  Rng init_rng = make_rng(42, 1);
  crit.init_params(init_rng);
  nn::AdamwConfig opt;
  opt.lr = 1e-3;
  Rng rng = make_rng(42, 2);
  const Eigen::VectorXd logpi = Eigen::VectorXd::Zero(batch);
  Eigen::MatrixXd s, a, sn;
  Eigen::VectorXd r, boot;
  for (int u = 0; u < updates; ++u) {
    make_batch(rng, s, a, sn, r, boot);
    const Eigen::MatrixXd a_next = Eigen::MatrixXd::Zero(batch, 1);
    const Eigen::VectorXd y_q =
        crit.target_mean_batch(r, boot, chain_cfg.gamma_ref, sn, a_next, logpi, 0.0);
    const Eigen::VectorXd y_z =
        crit.target_sample_batch(r, boot, chain_cfg.gamma_ref, sn, a_next, logpi, 0.0, rng);
    for (int j = 0; j < 2; ++j) {
      auto fwd = crit.forward_batch(crit.online(j), s, a);
      critic::CriticBatchTargets tg{y_q, y_z, critic::omega_estimate(fwd.sigma)};
      auto grads = crit.critic_gradient(crit.online(j), fwd, tg, nullptr);
      nn::adamw_step(crit.online(j), grads, opt);
    }
    crit.soft_update();
  }

  Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(1, obs_dim);
  s0(0, 0) = 1.0;
  const Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(1, 1);
  const double q_est = crit.min_q_with_grad(s0, a0).q[0];
  const double rel_err = std::abs(q_est - q_true) / q_true;
  const double sig1 = crit.forward_batch(crit.online(0), s0, a0).sigma[0];
  const double sig2 = crit.forward_batch(crit.online(1), s0, a0).sigma[0];
  const double sigma_cap = 5.0 * ccfg.sigma_floor();

  // coarse categorical critic, 5 atoms spanning the analytic return range
  critic::C51Config c51_cfg{5, 0.0, q_true};
  critic::CategoricalCritic coarse(obs_dim, 1, {32, 32}, false, c51_cfg, 0.005);
  Rng c_init = make_rng(43, 1);
  coarse.init_params(c_init);
  Rng c_rng = make_rng(43, 2);
  for (int u = 0; u < updates; ++u) {
    make_batch(c_rng, s, a, sn, r, boot);
    const Eigen::MatrixXd a_next = Eigen::MatrixXd::Zero(batch, 1);
    const Eigen::MatrixXd m =
        coarse.projected_targets(r, boot, chain_cfg.gamma_ref, sn, a_next, logpi, 0.0);
    for (int j = 0; j < 2; ++j) {
      auto fwd = coarse.forward_batch(coarse.online(j), s, a);
      auto grads = coarse.ce_gradient(coarse.online(j), fwd, m, nullptr);
      nn::adamw_step(coarse.online(j), grads, opt);
    }
    coarse.soft_update();
  }
  const double q_coarse = coarse.min_q_with_grad(s0, a0).q[0];
  const double atom_spacing = (c51_cfg.v_max - c51_cfg.v_min) / (c51_cfg.n_atoms - 1);
  const double coarse_err = std::abs(q_coarse - q_true);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Outcome out;
  out.pass = rel_err <= 0.02 && sig1 <= sigma_cap && sig2 <= sigma_cap &&
             coarse_err >= 0.25 * atom_spacing && secs <= 300.0;
  out.detail = "continuous: |Q-Q*|/Q*=" + num(rel_err) + " sigma=(" + num(sig1) + "," + num(sig2) +
               ")<=" + num(sigma_cap) + "; coarse c51: |Q-Q*|=" + num(coarse_err) +
               " vs quarter-spacing=" + num(0.25 * atom_spacing) + "; " + num(secs) + "s";
  return out;
}

// ---------------------------------------------------------------- criterion 5
trainer::TrainConfig reacher_config(std::uint64_t seed, bool dem_enabled) {
  trainer::TrainConfig cfg;
  cfg.env.name = "redundant_reacher";
  cfg.env.reacher.n_total = 16;
  cfg.env.reacher.n_relevant = 4;
  cfg.seed = seed;
  cfg.gamma = 0.9;
  cfg.num_envs = 8;
  cfg.batch_size = 256;
  cfg.learning_starts = 1000;
  cfg.buffer_capacity = 50000;
  cfg.actor_hidden = {64, 64};
  cfg.critic_hidden = {64, 64};
  cfg.use_layer_norm = true;
  cfg.lr_actor = 3e-4;
  cfg.lr_critic = 3e-4;
  cfg.lr_alpha = 1e-2;
  cfg.alpha_init = 0.1;
  cfg.target_entropy = 0.0;
  cfg.dem.tau = 1.0;
  cfg.dem.log_std_max = 1.0;
  cfg.dem.dem_enabled = dem_enabled;
  cfg.measure_throughput = false;
  return cfg;
}

// Per-step modulation weights along one deterministic evaluation episode.
Eigen::MatrixXd eval_weight_trace(const trainer::Trainer& t, std::uint64_t seed) {
  const auto& cfg = t.config();
  auto env = envs::make_env(cfg.env, mix_seed(seed, 0));
  Eigen::VectorXd obs = env->reset();
  std::vector<Eigen::VectorXd> rows;
  while (true) {
    auto head = t.policy().head(obs);
    rows.push_back(t.policy().weights_for(head, 1.0));
    auto res = env->step(t.policy().deterministic_action(head));
    if (res.done || res.truncated) break;
    obs = res.obs;
  }
  Eigen::MatrixXd trace(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) trace.row(i) = rows[i];
  return trace;
}

Outcome entropy_sink() {
  const long total_steps = 6250;  // 8 envs -> 5e4 collected transitions
  int seeds_ok = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    double returns[2];
    double ratio = 0.0;
    for (int variant = 0; variant < 2; ++variant) {
      const bool dem = variant == 0;
      trainer::Trainer t(reacher_config(seed, dem));
      for (long i = 0; i < total_steps; ++i) t.train_step();
      returns[variant] = t.evaluate(5, mix_seed(seed, 0xe7a1)).mean;
      if (dem) {
        const Eigen::MatrixXd trace = eval_weight_trace(t, mix_seed(seed, 0xe7a1));
        ratio = envs::relevant_dim_report(trace, t.config().env.reacher).ratio;
      }
    }
    const bool ok = ratio >= 1.5 && returns[0] >= returns[1];
    seeds_ok += ok;
    per_seed += " seed" + std::to_string(seed) + "(ratio=" + num(ratio) +
                ", dem=" + num(returns[0]) + ", std=" + num(returns[1]) +
                (ok ? ", ok)" : ", miss)");
  }
  Outcome out;
  out.pass = seeds_ok >= 2;
  out.detail = std::to_string(seeds_ok) + "/3 seeds:" + per_seed;
  return out;
}

// ---------------------------------------------------------------- criterion 6
trainer::TrainConfig pendulum_config(std::uint64_t seed, bool dem_enabled) {
  trainer::TrainConfig cfg;
  cfg.env.name = "pendulum";
  cfg.seed = seed;
  cfg.gamma = 0.99;
  cfg.num_envs = 8;
  cfg.batch_size = 256;
  cfg.learning_starts = 1000;
  cfg.buffer_capacity = 100000;
  cfg.actor_hidden = {64, 64};
  cfg.critic_hidden = {64, 64};
  cfg.use_layer_norm = true;
  cfg.lr_actor = 3e-4;
  cfg.lr_critic = 3e-4;
  cfg.lr_alpha = 1e-2;
  cfg.alpha_init = 0.1;
  cfg.target_entropy = 0.0;
  cfg.dem.tau = 1.0;
  cfg.dem.log_std_max = 1.0;
  cfg.dem.dem_enabled = dem_enabled;
  cfg.measure_throughput = false;
  return cfg;
}

Outcome control_sanity() {
  const long total_steps = 12500;  // 8 envs -> 1e5 collected transitions
  const long eval_every = 500;
  bool all_variants = true;
  std::string detail;
  for (int variant = 0; variant < 2; ++variant) {
    const bool dem = variant == 0;
    int seeds_ok = 0;
    std::string per_seed;
    for (std::uint64_t seed : {1, 2, 3}) {
      trainer::Trainer t(pendulum_config(seed, dem));
      double best = -std::numeric_limits<double>::infinity();
      double entropy_sum = 0.0;
      long entropy_count = 0;
      for (long i = 0; i < total_steps; ++i) {
        auto m = t.train_step();
        if (m.step % eval_every == 0) {
          best = std::max(best, t.evaluate(5, mix_seed(seed, 0xe7a1)).mean);
        }
        if (i >= total_steps - total_steps / 10) {
          entropy_sum += m.entropy_mean;
          ++entropy_count;
        }
      }
      const double entropy_tail = entropy_sum / static_cast<double>(entropy_count);
      const bool ok = best >= -250.0 && std::abs(entropy_tail) <= 0.5;
      seeds_ok += ok;
      per_seed += " seed" + std::to_string(seed) + "(best=" + num(best) +
                  ", H=" + num(entropy_tail) + (ok ? ", ok)" : ", miss)");
    }
    all_variants = all_variants && seeds_ok >= 2;
    detail += std::string(dem ? "modulated:" : " standard:") + std::to_string(seeds_ok) + "/3" +
              per_seed + ";";
  }
  Outcome out;
  out.pass = all_variants;
  out.detail = detail;
  return out;
}

// ---------------------------------------------------------------- criterion 7
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "dspi_acceptance7";
  fs::remove_all(root);
  fs::create_directories(root);

  nlohmann::json j;
  j["env"] = "redundant_reacher";
  j["seed"] = 33;
  j["gamma"] = 0.9;
  j["num_envs"] = 4;
  j["batch_size"] = 64;
  j["learning_starts"] = 100;
  j["buffer_capacity"] = 4096;
  j["total_steps"] = 60;
  j["eval_interval"] = 30;
  j["eval_episodes"] = 2;
  j["actor_hidden"] = {16, 16};
  j["critic_hidden"] = {16, 16};
  j["measure_throughput"] = false;
  const fs::path cfg_path = root / "run.json";
  std::ofstream(cfg_path) << j.dump(2) << "\n";

  const fs::path out1 = root / "r1";
  const fs::path out2 = root / "r2";
  if (cli::cmd_train(cfg_path.string(), {}, out1.string()) != cli::kExitOk ||
      cli::cmd_train(cfg_path.string(), {}, out2.string()) != cli::kExitOk) {
    return {false, "training run failed"};
  }
  const bool metrics_same = slurp(out1 / "metrics.csv") == slurp(out2 / "metrics.csv");

  const fs::path ck = out1 / "checkpoint_final.bin";
  auto loaded = ckpt::load_checkpoint(ck.string());
  std::vector<ckpt::StoreRef> refs;
  for (auto& [name, store] : loaded.stores) refs.push_back({name, &store});
  const fs::path resaved = root / "resaved.bin";
  ckpt::save_checkpoint(resaved.string(), loaded.config, loaded.step, loaded.log_alpha, refs);
  const bool ckpt_same = slurp(ck) == slurp(resaved);

  const fs::path hm = root / "w.csv";
  const int rc = cli::cmd_heatmap(ck.string(), "", 32, hm.string(), std::nullopt);
  bool heatmap_ok = rc == cli::kExitOk;
  double worst_row = 0.0;
  if (heatmap_ok) {
    std::ifstream in(hm);
    std::string line;
    std::getline(in, line);  // header
    int rows = 0;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      double sum = 0.0;
      int n = 0;
      while (std::getline(ss, cell, ',')) {
        sum += std::stod(cell);
        ++n;
      }
      worst_row = std::max(worst_row, std::abs(sum / n - 1.0));
      ++rows;
    }
    heatmap_ok = rows == 32 && worst_row <= 1e-9;
  }

  Outcome out;
  out.pass = metrics_same && ckpt_same && heatmap_ok;
  out.detail = std::string("metrics ") + (metrics_same ? "identical" : "DIFFER") +
               ", checkpoint roundtrip " + (ckpt_same ? "identical" : "DIFFER") +
               ", heatmap row-mean err=" + num(worst_row);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int id;
    const char* label;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "gradient fidelity", gradient_fidelity},
      {2, "exploration-weight algebra", dem_algebra},
      {3, "categorical projection", c51_projection},
      {4, "chain value oracle", value_oracle},
      {5, "entropy sink on redundant reacher", entropy_sink},
      {6, "pendulum control sanity", control_sanity},
      {7, "reproducibility and I/O", reproducibility},
  };

  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7};

  bool all = true;
  for (int id : wanted) {
    for (const auto& e : entries) {
      if (e.id != id) continue;
      const Outcome o = e.fn();
      std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << e.id << ": " << e.label
                << " — " << o.detail << "\n";
      std::cout.flush();
      all = all && o.pass;
    }
  }
  return all ? 0 : 1;
}
