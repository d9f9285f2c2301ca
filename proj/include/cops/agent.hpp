#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cops/common.hpp"
#include "cops/core.hpp"
#include "cops/memory.hpp"

namespace cops {

enum class Role { kUser, kAssistant };

inline const char* role_name(Role role) { return role == Role::kUser ? "user" : "assistant"; }

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// One environment transition. success implies done.
struct EnvStep {
  std::string observation;
  bool done = false;
  bool success = false;
};

// Episode-scoped environment: reset once, then step until done or the
// interaction budget runs out. One instance per concurrent episode.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string reset() = 0;
  virtual EnvStep step(const std::string& action) = 0;
  virtual std::string task_id() const = 0;
  virtual std::string header() const = 0;
};

// Action source: the remote chat client or a scripted stub.
class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

struct AgentConfig {
  std::size_t k = 5;    // in-context experience count
  double c = 5.0;       // distance scaling factor
  std::size_t max_steps = 10;  // H, max interactions per episode
  bool with_replacement = false;
  std::uint64_t seed = 0;
  DistanceParams::Scope embed_scope = DistanceParams::Scope::kFullExperience;

  DistanceParams distance_params() const {
    DistanceParams p;
    p.c = c;
    p.scope = embed_scope;
    return p;
  }
};

enum class Mode { kOffline, kOnline };

struct EpisodeRecord {
  std::string task_id;
  std::vector<std::int64_t> sampled_demo_seqs;
  std::vector<ChatMessage> transcript;
  std::size_t steps_taken = 0;
  double reward = 0.0;
  bool success = false;
  double wall_time_s = 0.0;
  std::size_t tokens_estimate = 0;
  std::string error_note;  // non-empty when the episode ended on a fault
  Experience experience;   // the finished trial as stored (or storable)
};

inline constexpr const char* kExamplesDelimiter = "Examples finished. Here is the task:";

// Builds the demo-prefixed message list. Layout follows the transcript
// convention: the header and the first demo's opening state share one user
// message, demo turns alternate assistant/user, and the task state arrives
// in a final user message behind the delimiter. With no demos the header and
// task state form a single user message.
inline std::vector<ChatMessage> assemble_prompt(const ExperienceCollection& demos,
                                                const std::string& s1,
                                                const std::string& env_header) {
  auto with_header = [&](const std::string& text) {
    return env_header.empty() ? text : env_header + "\n" + text;
  };
  std::vector<ChatMessage> messages;
  if (demos.empty()) {
    messages.push_back({Role::kUser, with_header(s1)});
    return messages;
  }
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const Experience& demo = demos[i];
    messages.push_back(
        {Role::kUser, i == 0 ? with_header(demo.initial_state) : demo.initial_state});
    for (const Step& step : demo.steps) {
      messages.push_back({Role::kAssistant, step.action});
      messages.push_back({Role::kUser, step.observation});
    }
  }
  messages.push_back({Role::kUser, std::string(kExamplesDelimiter) + "\n" + s1});
  return messages;
}

// Renders a message list in the bracketed-transcript layout used by the
// golden-file tests and the CLI inspector.
inline std::string format_transcript(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += messages[i].role == Role::kUser ? "[User] " : "[Assistant] ";
    out += messages[i].content;
  }
  if (!messages.empty()) out += "\n";
  return out;
}

// One full pass of the selection-retrieve-act loop. The bank is the episode's
// snapshot; in online mode the finished experience is appended before
// returning. Episodes never throw for environment or model faults; those are
// recorded as reward-0 episodes with an error note.
inline EpisodeRecord run_episode(Environment& env, MemoryBank& bank, ChatModel& llm,
                                 const AgentConfig& cfg, Rng& rng, Mode mode = Mode::kOffline) {
  const auto t0 = std::chrono::steady_clock::now();
  EpisodeRecord rec;
  rec.task_id = env.task_id();

  const std::string s1 = env.reset();
  ExperienceCollection demos;
  try {
    DecodedReference ref = decode_reference(bank, s1);
    SelectionDistribution dist = selection_distribution(bank, ref, cfg.distance_params());
    demos = sample_experiences(bank, dist, cfg.k, rng, cfg.with_replacement);
  } catch (const NoPositiveRewardError&) {
    // empty demo collection
  }
  for (const Experience& demo : demos) rec.sampled_demo_seqs.push_back(demo.created_seq);

  rec.transcript = assemble_prompt(demos, s1, env.header());
  std::string state = s1;
  std::vector<Step> steps;
  for (std::size_t h = 1; h <= cfg.max_steps; ++h) {
    std::string action;
    EnvStep env_step;
    try {
      action = llm.complete(rec.transcript);
      rec.transcript.push_back({Role::kAssistant, action});
      env_step = env.step(action);
    } catch (const std::exception& ex) {
      rec.error_note = ex.what();
      break;
    }
    rec.transcript.push_back({Role::kUser, env_step.observation});
    steps.push_back(Step{action, env_step.observation});
    state += kTurnSeparator + action + kTurnSeparator + env_step.observation;
    if (state != fold_state(s1, steps)) {
      throw Error("run_episode: state recursion violated");  // harness bug, not env fault
    }
    rec.steps_taken = h;
    if (env_step.success) {
      rec.success = true;
      rec.reward = 1.0;
      break;
    }
    if (env_step.done) break;
  }

  rec.experience = make_experience(rec.task_id, s1, std::move(steps), rec.reward);
  if (mode == Mode::kOnline) bank.append(rec.experience);

  for (const ChatMessage& m : rec.transcript) rec.tokens_estimate += estimate_tokens(m.content);
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct EpisodeRow {
  std::string task_id;
  std::size_t trial = 0;  // 1-based
  bool success = false;
  std::size_t steps = 0;
  std::vector<std::int64_t> demo_seqs;
};

struct BenchmarkReport {
  std::size_t trials = 0;
  std::size_t tasks = 0;
  std::vector<EpisodeRow> rows;
  std::vector<double> per_trial_success;     // fraction of tasks solved in trial t
  std::vector<double> per_trial_cumulative;  // fraction solved in any trial <= t
};

using EnvFactory = std::function<std::unique_ptr<Environment>(std::size_t task_index)>;

// Runs every task once per trial. Online mode threads one growing bank across
// all tasks and trials; offline mode keeps the provided bank frozen. Episode
// seeds derive from cfg.seed and the (trial, task) indices.
inline BenchmarkReport run_benchmark(const EnvFactory& make_env, std::size_t n_tasks,
                                     std::size_t trials, ChatModel& llm, MemoryBank& bank,
                                     const AgentConfig& cfg, Mode mode) {
  if (trials == 0) throw Error("run_benchmark: trials must be >= 1");
  BenchmarkReport report;
  report.trials = trials;
  report.tasks = n_tasks;
  std::vector<std::vector<bool>> solved(trials, std::vector<bool>(n_tasks, false));
  for (std::size_t trial = 1; trial <= trials; ++trial) {
    for (std::size_t task = 0; task < n_tasks; ++task) {
      Rng rng(derive_seed(cfg.seed, trial, task));
      std::unique_ptr<Environment> env = make_env(task);
      EpisodeRecord rec = run_episode(*env, bank, llm, cfg, rng, mode);
      solved[trial - 1][task] = rec.success;
      report.rows.push_back(
          {rec.task_id, trial, rec.success, rec.steps_taken, rec.sampled_demo_seqs});
    }
  }
  std::vector<bool> ever(n_tasks, false);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::size_t hits = 0, cumulative = 0;
    for (std::size_t task = 0; task < n_tasks; ++task) {
      if (solved[trial][task]) ++hits;
      if (solved[trial][task]) ever[task] = true;
      if (ever[task]) ++cumulative;
    }
    report.per_trial_success.push_back(n_tasks ? double(hits) / double(n_tasks) : 0.0);
    report.per_trial_cumulative.push_back(n_tasks ? double(cumulative) / double(n_tasks) : 0.0);
  }
  return report;
}

inline std::string benchmark_rows_csv(const BenchmarkReport& report) {
  std::string out = "task_id,trial,success,steps,demo_seqs\n";
  for (const EpisodeRow& row : report.rows) {
    out += row.task_id + "," + std::to_string(row.trial) + "," + (row.success ? "1" : "0") + "," +
           std::to_string(row.steps) + ",";
    for (std::size_t i = 0; i < row.demo_seqs.size(); ++i) {
      if (i > 0) out += ';';
      out += std::to_string(row.demo_seqs[i]);
    }
    out += "\n";
  }
  return out;
}

inline std::string benchmark_curve_csv(const BenchmarkReport& report) {
  char buf[64];
  std::string out = "trial,success_rate,cumulative_success_rate\n";
  for (std::size_t t = 0; t < report.per_trial_success.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", t + 1, report.per_trial_success[t],
                  report.per_trial_cumulative[t]);
    out += buf;
  }
  return out;
}

}  // namespace cops
