#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cops/theory/pretrain.hpp"

using namespace cops::theory;

namespace {

TabularWorld deterministic_world() {
  TabularWorld w;
  w.n_tasks = 1;
  w.n_states = 2;
  w.n_actions = 2;
  w.horizon = 3;
  w.task_prior = {1.0};
  w.initial_state = {{1.0, 0.0}};
  w.reward = {{1.0, 0.0}, {0.0, 1.0}};
  w.context_alg.memoryless = true;
  w.context_alg.rows[{0, 0}] = {1.0, 0.0};
  w.context_alg.rows[{0, 1}] = {1.0, 0.0};
  PolicyTable expert;
  expert.memoryless = true;
  expert.rows[{0, 0}] = {1.0, 0.0};
  expert.rows[{0, 1}] = {0.0, 1.0};
  w.expert_alg.push_back(std::move(expert));
  w.validate();
  return w;
}

}  // namespace

TEST_CASE("pretraining data generation") {
  SECTION("n_pre = 0 gives an empty dataset") {
    TabularWorld w = deterministic_world();
    cops::Rng rng(1);
    CHECK(generate_pretraining_data(w, 0, rng).empty());
  }

  SECTION("a deterministic world produces identical samples") {
    TabularWorld w = deterministic_world();
    cops::Rng rng(1);
    PretrainDataset data = generate_pretraining_data(w, 20, rng);
    REQUIRE(data.size() == 20);
    for (const PretrainSample& sample : data) {
      CHECK(sample.trajectory == data[0].trajectory);
      CHECK(sample.expert_actions == data[0].expert_actions);
      CHECK(sample.trajectory.size() == 2);  // T - 1
    }
  }

  SECTION("empirical action frequencies match the context rows within 4 sigma") {
    cops::Rng rng(17);
    RandomWorldConfig cfg;
    cfg.memoryless = true;
    TabularWorld w = random_world(cfg, rng);
    const std::size_t n = 10000;
    PretrainDataset data = generate_pretraining_data(w, n, rng);
    std::vector<std::vector<int>> counts(w.n_states, std::vector<int>(w.n_actions, 0));
    std::vector<int> state_totals(w.n_states, 0);
    for (const PretrainSample& sample : data) {
      for (const StepRecord& step : sample.trajectory) {
        ++counts[step.state][step.action];
        ++state_totals[step.state];
      }
    }
    for (int s = 0; s < w.n_states; ++s) {
      const Dist& row = w.context_alg.row(0, s);
      for (int a = 0; a < w.n_actions; ++a) {
        double p = row[a];
        double expect = state_totals[s] * p;
        double sigma = std::sqrt(state_totals[s] * p * (1.0 - p));
        CHECK(std::abs(counts[s][a] - expect) <= 4.0 * sigma + 1.0);
      }
    }
  }
}

TEST_CASE("mle_pretrain computes smoothed conditional frequencies") {
  TabularWorld w = deterministic_world();

  SECTION("identical expert labels with alpha 0 give a point mass") {
    cops::Rng rng(3);
    PretrainDataset data = generate_pretraining_data(w, 50, rng);
    TabularLLM llm = mle_pretrain(w, data, 0.0);
    Dist row = llm.row(w, 0, 0);  // empty-history feature, state 0
    CHECK(row[0] == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("counts (3,1) with alpha 0 give (0.75, 0.25)") {
    PretrainDataset data;
    for (int i = 0; i < 4; ++i) {
      PretrainSample s;
      s.task = 0;
      s.trajectory = {StepRecord{0, 0, 1.0}};
      s.expert_actions = {i < 3 ? 0 : 1};
      data.push_back(std::move(s));
    }
    TabularWorld w1 = deterministic_world();
    w1.horizon = 2;  // one step per sample
    TabularLLM llm = mle_pretrain(w1, data, 0.0);
    Dist row = llm.row(w1, 0, 0);
    CHECK(row[0] == Catch::Approx(0.75).margin(1e-12));
    CHECK(row[1] == Catch::Approx(0.25).margin(1e-12));
  }

  SECTION("unseen contexts fall back to uniform") {
    TabularLLM llm = mle_pretrain(w, {}, 0.1);
    Dist row = llm.row(w, 42, 1);
    CHECK(row == Dist{0.5, 0.5});
  }
}

TEST_CASE("estimate_pretrain_error") {
  SECTION("the posterior-average expert scores zero") {
    cops::Rng rng(5);
    RandomWorldConfig cfg;
    TabularWorld w = random_world(cfg, rng);
    OracleLlm oracle;
    PretrainErrorEstimate est = estimate_pretrain_error(w, oracle, 200, rng);
    CHECK(est.mean == Catch::Approx(0.0).margin(1e-12));
    CHECK(est.std_error == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("uniform model against a deterministic expert has the closed form") {
    TabularWorld w = deterministic_world();
    TabularLLM uniform = mle_pretrain(w, {}, 0.1);  // empty table -> uniform rows
    cops::Rng rng(7);
    PretrainErrorEstimate est = estimate_pretrain_error(w, uniform, 100, rng);
    // Single task, deterministic expert: overline is a point mass, so each of
    // the T prefix terms contributes D_H^2(point, uniform) = 1 - 1/sqrt(|A|).
    double per_term = 1.0 - 1.0 / std::sqrt(2.0);
    CHECK(est.mean == Catch::Approx(3.0 * per_term).margin(1e-9));
  }

  SECTION("exact profile agrees with the Monte-Carlo estimate") {
    cops::Rng rng(9);
    RandomWorldConfig cfg;
    TabularWorld w = random_world(cfg, rng);
    PretrainDataset data = generate_pretraining_data(w, 300, rng);
    TabularLLM llm = mle_pretrain(w, data, 0.1);
    PretrainErrorProfile profile = pretrain_error_profile(w, llm);
    PretrainErrorEstimate est = estimate_pretrain_error(w, llm, 4000, rng);
    CHECK(std::abs(est.mean - profile.mean_sum) <= 4.0 * est.std_error + 1e-9);
    CHECK(profile.max_sum >= profile.mean_sum - 1e-12);
  }
}

TEST_CASE("pretraining error shrinks as n_pre grows") {
  const std::vector<std::size_t> levels{100, 1000, 10000};
  std::vector<std::vector<double>> errors(levels.size());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cops::Rng rng(cops::derive_seed(4242, seed));
    RandomWorldConfig cfg;
    TabularWorld w = random_world(cfg, rng);
    for (std::size_t li = 0; li < levels.size(); ++li) {
      PretrainDataset data = generate_pretraining_data(w, levels[li], rng);
      TabularLLM llm = mle_pretrain(w, data, 0.1);
      errors[li].push_back(mean_hellinger_error(w, llm));
    }
  }
  auto mean_se = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - m) * (x - m);
    var /= xs.size();
    return std::pair<double, double>(m, std::sqrt(var / xs.size()));
  };
  auto [m0, se0] = mean_se(errors[0]);
  auto [m1, se1] = mean_se(errors[1]);
  auto [m2, se2] = mean_se(errors[2]);
  CHECK(m1 <= m0 + 2.0 * std::sqrt(se0 * se0 + se1 * se1));
  CHECK(m2 <= m1 + 2.0 * std::sqrt(se1 * se1 + se2 * se2));
  CHECK(m2 < m0);  // end-to-end decrease
}

TEST_CASE("compute_epsilon_pretrain evaluates the stated formula") {
  CHECK(compute_epsilon_pretrain(2.0, 2.0, 10.0, 0.0, 0.0, Setting::kOffline) == 0.0);
  CHECK(compute_epsilon_pretrain(2.0, 2.0, 10.0, 1.0, 0.0, Setting::kOffline) ==
        Catch::Approx(4.0).margin(1e-12));
  // The online constant differs by exactly a factor of T.
  double off = compute_epsilon_pretrain(1.5, 3.0, 50.0, 0.7, 0.01, Setting::kOffline);
  double on = compute_epsilon_pretrain(1.5, 3.0, 50.0, 0.7, 0.01, Setting::kOnline);
  CHECK(on == Catch::Approx(3.0 * off).margin(1e-12));
  CHECK_THROWS_AS(compute_epsilon_pretrain(1.0, 2.0, 10.0, 1.0, 0.0, Setting::kOffline),
                  cops::Error);
}

TEST_CASE("posterior_from_feature matches the explicit-prefix posterior") {
  for (FeatureMode mode : {FeatureMode::kCounts, FeatureMode::kFullSequence}) {
    cops::Rng rng(21);
    RandomWorldConfig cfg;
    cfg.n_tasks = 3;
    cfg.feature_mode = mode;
    TabularWorld w = random_world(cfg, rng);
    for (int len = 0; len < w.horizon; ++len) {
      std::size_t space = trajectory_space_size(w, len);
      for (std::size_t idx = 0; idx < space; ++idx) {
        Trajectory traj = decode_trajectory(w, len, idx);
        for (int s = 0; s < w.n_states; ++s) {
          Dist direct = posterior_over_tasks(w, traj, s);
          Dist via_feature = posterior_from_feature(w, w.feature_of(traj), s);
          for (int m = 0; m < w.n_tasks; ++m) {
            REQUIRE(std::abs(direct[m] - via_feature[m]) < 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("full-sequence feature mode supports the oracle and selection") {
  cops::Rng rng(23);
  RandomWorldConfig cfg;
  cfg.feature_mode = FeatureMode::kFullSequence;
  TabularWorld w = random_world(cfg, rng);
  OracleLlm oracle;
  PretrainErrorEstimate est = estimate_pretrain_error(w, oracle, 100, rng);
  CHECK(est.mean == Catch::Approx(0.0).margin(1e-12));

  // Exact tables are order-sensitive: history permutations may differ.
  PretrainDataset data = generate_pretraining_data(w, 400, rng);
  TabularLLM llm = mle_pretrain(w, data, 0.1);
  PretrainErrorProfile profile = pretrain_error_profile(w, llm);
  CHECK(profile.max_sum >= 0.0);
  CHECK(profile.mean_sum <= profile.max_sum + 1e-12);
}
