#pragma once

#include <cstdint>
#include <vector>

#include "cops/common.hpp"
#include "cops/theory/offline.hpp"
#include "cops/theory/online.hpp"
#include "cops/theory/pretrain.hpp"

namespace cops::theory {

struct BoundSeedRow {
  std::uint64_t seed = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double c_dec = 1.0;
  double eps_hat = 0.0;
  bool pass = false;
};

struct BoundReport {
  std::vector<BoundSeedRow> rows;
  bool pass = true;  // every seed passed

  void add(BoundSeedRow row) {
    pass = pass && row.pass;
    rows.push_back(std::move(row));
  }
};

struct OfflineSuiteConfig {
  OfflineInstanceConfig instance;
  std::uint64_t base_seed = 20240901;
  std::size_t n_seeds = 100;
};

inline BoundReport run_offline_suite(const OfflineSuiteConfig& cfg) {
  BoundReport report;
  for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
    std::uint64_t seed = derive_seed(cfg.base_seed, i);
    Rng rng(seed);
    OfflineInstance inst = make_offline_instance(cfg.instance, rng);
    PretrainDataset dataset = generate_pretraining_data(inst.world, cfg.instance.n_pre, rng);
    TabularLLM llm = mle_pretrain(inst.world, dataset, cfg.instance.alpha);
    SuboptimalityReport sub = verify_suboptimality(inst, llm);
    report.add(BoundSeedRow{seed, sub.lhs, sub.rhs, sub.rhs - sub.lhs, sub.c_dec, sub.eps_hat,
                            sub.pass});
  }
  return report;
}

struct OnlineSuiteConfig {
  RandomWorldConfig world{.n_tasks = 2,
                          .n_states = 2,
                          .n_actions = 2,
                          .horizon = 3,
                          .memoryless = true,
                          .feature_mode = FeatureMode::kCounts,
                          .min_weight = 0.25};
  int rounds = 50;
  double gamma = 1.0;
  std::size_t n_pre = 1000;
  double alpha = 0.1;
  std::uint64_t base_seed = 20240902;
  std::size_t n_seeds = 50;
  bool oracle_llm = false;     // use the posterior-average expert as the model
  std::size_t max_candidates = 0;  // 0 = all defaults; 1 gives the degenerate single-candidate run
};

struct OnlineSuiteResult {
  BoundReport report;
  std::vector<OnlineRunResult> runs;
};

inline OnlineSuiteResult run_online_suite(const OnlineSuiteConfig& cfg) {
  OnlineSuiteResult out;
  for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
    std::uint64_t seed = derive_seed(cfg.base_seed, i);
    Rng rng(seed);
    TabularWorld world = random_world(cfg.world, rng);
    OnlineDecoder dec = make_online_decoder(world, cfg.gamma, cfg.rounds - 1, rng);
    std::vector<OnlineCandidate> candidates = default_online_candidates(world, dec, rng);
    if (cfg.max_candidates > 0 && candidates.size() > cfg.max_candidates) {
      candidates.resize(cfg.max_candidates);
    }

    OracleLlm oracle;
    TabularLLM trained;
    const Llm* llm = &oracle;
    if (!cfg.oracle_llm) {
      PretrainDataset dataset = generate_pretraining_data(world, cfg.n_pre, rng);
      trained = mle_pretrain(world, dataset, cfg.alpha);
      llm = &trained;
    }

    OnlineRunConfig run_cfg;
    run_cfg.rounds = cfg.rounds;
    run_cfg.use_certified_eps = !cfg.oracle_llm;
    run_cfg.eps_selection = 0.0;
    OnlineRunResult run = online_cops_run(world, candidates, *llm, dec, run_cfg, rng);

    bool pass = run.argmax_ok && run.regret <= run.rhs_star_total + 1e-9;
    out.report.add(BoundSeedRow{seed, run.regret, run.rhs_star_total,
                                run.rhs_star_total - run.regret, run.c_dec, run.eps_hat, pass});
    out.runs.push_back(std::move(run));
  }
  return out;
}

}  // namespace cops::theory
