#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cops/theory/world.hpp"

using namespace cops::theory;

namespace {

// Two-state, two-action, two-task world with explicit memoryless tables.
TabularWorld hand_world(Dist prior, Dist p0_task0, Dist p0_task1, Dist ctx_s0, Dist ctx_s1) {
  TabularWorld w;
  w.n_tasks = 2;
  w.n_states = 2;
  w.n_actions = 2;
  w.horizon = 3;
  w.task_prior = std::move(prior);
  w.initial_state = {std::move(p0_task0), std::move(p0_task1)};
  w.reward = {{1.0, 0.0}, {0.25, 0.75}};
  w.context_alg.memoryless = true;
  w.context_alg.rows[{0, 0}] = ctx_s0;
  w.context_alg.rows[{0, 1}] = ctx_s1;
  for (int m = 0; m < 2; ++m) {
    PolicyTable expert;
    expert.memoryless = true;
    expert.rows[{0, 0}] = m == 0 ? Dist{1.0, 0.0} : Dist{0.0, 1.0};
    expert.rows[{0, 1}] = m == 0 ? Dist{1.0, 0.0} : Dist{0.0, 1.0};
    w.expert_alg.push_back(std::move(expert));
  }
  w.validate();
  return w;
}

std::size_t index_of(const TabularWorld& w, const Trajectory& traj) {
  std::size_t index = 0, stride = 1;
  for (const StepRecord& step : traj) {
    index += stride * static_cast<std::size_t>(w.cell_of(step.state, step.action));
    stride *= static_cast<std::size_t>(w.n_cells());
  }
  return index;
}

}  // namespace

TEST_CASE("trajectory_dist at length zero is a point mass") {
  TabularWorld w = hand_world({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
  ContextPolicy ctx;
  TrajectoryDist d = trajectory_dist(w, ctx, 0, 0);
  REQUIRE(d.probs.size() == 1);
  CHECK(d.probs[0] == 1.0);
}

TEST_CASE("deterministic dynamics give a point mass") {
  TabularWorld w = hand_world({1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0});
  ContextPolicy ctx;
  TrajectoryDist d = trajectory_dist(w, ctx, 2, 0);
  int support = 0;
  for (double p : d.probs) {
    if (p > 0.0) {
      ++support;
      CHECK(p == Catch::Approx(1.0).margin(1e-15));
    }
  }
  CHECK(support == 1);
}

TEST_CASE("length-one table matches hand products") {
  Dist p0{0.3, 0.7};
  Dist ctx_s0{0.6, 0.4};
  Dist ctx_s1{0.1, 0.9};
  TabularWorld w = hand_world({0.5, 0.5}, p0, p0, ctx_s0, ctx_s1);
  ContextPolicy ctx;
  TrajectoryDist d = trajectory_dist(w, ctx, 1, 0);
  REQUIRE(d.probs.size() == 4);
  CHECK(d.probs[w.cell_of(0, 0)] == Catch::Approx(0.3 * 0.6).margin(1e-15));
  CHECK(d.probs[w.cell_of(0, 1)] == Catch::Approx(0.3 * 0.4).margin(1e-15));
  CHECK(d.probs[w.cell_of(1, 0)] == Catch::Approx(0.7 * 0.1).margin(1e-15));
  CHECK(d.probs[w.cell_of(1, 1)] == Catch::Approx(0.7 * 0.9).margin(1e-15));
}

TEST_CASE("trajectory distributions are normalized on random worlds") {
  cops::Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    RandomWorldConfig cfg;
    cfg.n_states = 2 + static_cast<int>(rng() % 2);
    TabularWorld w = random_world(cfg, rng);
    ContextPolicy ctx;
    for (int len = 0; len < w.horizon; ++len) {
      TrajectoryDist d = trajectory_dist(w, ctx, len, 0);
      double sum = 0.0;
      for (double p : d.probs) sum += p;
      CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("trajectory probabilities match Monte-Carlo frequencies") {
  cops::Rng rng(77);
  RandomWorldConfig cfg;
  TabularWorld w = random_world(cfg, rng);
  ContextPolicy ctx;
  TrajectoryDist d = trajectory_dist(w, ctx, 2, 0);

  const int n = 20000;
  std::vector<int> hits(d.probs.size(), 0);
  for (int i = 0; i < n; ++i) {
    Trajectory prefix;
    for (int step = 0; step < 2; ++step) {
      int s = static_cast<int>(cops::sample_index(rng, w.initial_state[0]));
      int a = static_cast<int>(cops::sample_index(rng, w.context_alg.row(w.feature_of(prefix), s)));
      prefix.push_back(StepRecord{s, a, w.reward[s][a]});
    }
    ++hits[index_of(w, prefix)];
  }
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    double expect = d.probs[i] * n;
    double sigma = std::sqrt(n * d.probs[i] * (1.0 - d.probs[i]) + 1e-9);
    CHECK(std::abs(hits[i] - expect) <= 4.0 * sigma + 1.0);
  }
}

TEST_CASE("oversized trajectory spaces raise a capacity error") {
  TabularWorld w = hand_world({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
  ContextPolicy ctx;
  CHECK_THROWS_AS(trajectory_space_size(w, 12), cops::Error);
  CHECK_THROWS_AS(trajectory_dist(w, ctx, 12, 0), cops::Error);
}

TEST_CASE("posterior over tasks") {
  SECTION("single task is a point mass") {
    TabularWorld w = hand_world({1.0, 0.0}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    Dist post = posterior_over_tasks(w, {}, 0);
    CHECK(post[0] == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("symmetric tasks split evenly") {
    TabularWorld w = hand_world({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    Dist post = posterior_over_tasks(w, {}, 0);
    CHECK(post[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(post[1] == Catch::Approx(0.5).margin(1e-12));
  }

  SECTION("a 3x more likely trajectory tilts the posterior to 3/4") {
    // Task 0 makes state 0 three times as likely as task 1 does; the observed
    // trajectory visits state 0 once and the current state is neutral-ish via
    // the same factor cancelling in both.
    TabularWorld w = hand_world({0.5, 0.5}, {0.75, 0.25}, {0.25, 0.75}, {0.5, 0.5}, {0.5, 0.5});
    Trajectory traj{StepRecord{0, 0, 1.0}};
    // current state contributions: use state 0 again -> ratio (0.75*0.75)/(0.25*0.25) = 9
    // so instead query with no current-state tilt by brute-force comparison below.
    Dist post = posterior_over_tasks(w, traj, 0);
    // prior x P0(s=0) x P0(current=0): task0: .5*.75*.75, task1: .5*.25*.25
    double w0 = 0.5 * 0.75 * 0.75, w1 = 0.5 * 0.25 * 0.25;
    CHECK(post[0] == Catch::Approx(w0 / (w0 + w1)).margin(1e-12));

    // The quoted 3/4 case: single factor of 3 between tasks.
    TabularWorld w2 = hand_world({0.5, 0.5}, {0.75, 0.25}, {0.25, 0.75}, {0.5, 0.5}, {0.5, 0.5});
    Dist post2 = posterior_over_tasks(w2, {}, 0);  // only the current state factors
    CHECK(post2[0] == Catch::Approx(0.75).margin(1e-12));
    CHECK(post2[1] == Catch::Approx(0.25).margin(1e-12));
  }

  SECTION("zero-probability trajectories are rejected") {
    TabularWorld w = hand_world({0.5, 0.5}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0});
    Trajectory impossible{StepRecord{1, 1, 0.0}};
    CHECK_THROWS_AS(posterior_over_tasks(w, impossible, 0), cops::Error);
  }
}

TEST_CASE("posterior agrees with brute-force joint enumeration") {
  cops::Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    RandomWorldConfig cfg;
    cfg.n_tasks = 2 + static_cast<int>(rng() % 2);
    TabularWorld w = random_world(cfg, rng);
    ContextPolicy ctx;
    const int len = w.horizon - 1;
    std::vector<TrajectoryDist> per_task;
    for (int m = 0; m < w.n_tasks; ++m) per_task.push_back(trajectory_dist(w, ctx, len, m));

    for (std::size_t idx = 0; idx < per_task[0].probs.size(); ++idx) {
      Trajectory traj = decode_trajectory(w, len, idx);
      for (int s = 0; s < w.n_states; ++s) {
        // Oracle: joint P(m, trajectory, s) through the enumerated tables.
        Dist joint(w.n_tasks, 0.0);
        double total = 0.0;
        for (int m = 0; m < w.n_tasks; ++m) {
          joint[m] = w.task_prior[m] * per_task[m].probs[idx] * w.initial_state[m][s];
          total += joint[m];
        }
        if (total < 1e-300) continue;
        Dist post = posterior_over_tasks(w, traj, s);
        for (int m = 0; m < w.n_tasks; ++m) {
          REQUIRE(std::abs(post[m] - joint[m] / total) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("posterior average mixes expert rows") {
  TabularWorld w = hand_world({0.5, 0.5}, {0.75, 0.25}, {0.25, 0.75}, {0.5, 0.5}, {0.5, 0.5});
  // Experts are deterministic on opposite actions (see hand_world).
  SECTION("point-mass posterior returns that task's row") {
    TabularWorld single = hand_world({1.0, 0.0}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    Dist row = posterior_average_expert(single, {}, 0);
    CHECK(row[0] == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("symmetric two-task world mixes to one half") {
    TabularWorld sym = hand_world({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
    Dist row = posterior_average_expert(sym, {}, 0);
    CHECK(row[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(row[1] == Catch::Approx(0.5).margin(1e-12));
  }

  SECTION("(0.75, 0.25) posterior with opposite deterministic experts") {
    Dist row = posterior_average_expert(w, {}, 0);  // posterior is (0.75, 0.25) at state 0
    CHECK(row[0] == Catch::Approx(0.75).margin(1e-12));
    CHECK(row[1] == Catch::Approx(0.25).margin(1e-12));
  }
}

TEST_CASE("feature encoding separates counts and sequences") {
  TabularWorld w = hand_world({0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5});
  Trajectory ab{StepRecord{0, 0, 1.0}, StepRecord{1, 1, 0.75}};
  Trajectory ba{StepRecord{1, 1, 0.75}, StepRecord{0, 0, 1.0}};
  w.feature_mode = FeatureMode::kCounts;
  CHECK(w.feature_of(ab) == w.feature_of(ba));  // multiset
  w.feature_mode = FeatureMode::kFullSequence;
  CHECK(w.feature_of(ab) != w.feature_of(ba));  // order-sensitive
}
