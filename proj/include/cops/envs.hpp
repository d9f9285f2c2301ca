#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cops/agent.hpp"
#include "cops/common.hpp"
#include "cops/core.hpp"

namespace cops {

// One synthetic task: a per-family passcode sequence behind an
// instance-specific surface description. Families use disjoint token sets so
// a demo from one family can never unlock another.
struct SyntheticTaskSpec {
  int family_id = 0;
  std::uint64_t instance_seed = 0;

  std::string family_tag() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", family_id);
    return buf;
  }

  std::vector<std::string> solution_pattern() const {
    std::vector<std::string> pattern;
    for (int step = 1; step <= 3; ++step) {
      pattern.push_back("code-" + family_tag() + "-" + std::to_string(step));
    }
    return pattern;
  }

  std::string task_id() const {
    return "fam" + family_tag() + "-" + to_hex(instance_seed).substr(8);
  }

  std::string initial_state() const {
    std::uint64_t s = instance_seed;
    std::string marks;
    for (int i = 0; i < 2; ++i) {
      if (i > 0) marks += ' ';
      marks += "mk" + to_hex(splitmix64(s)).substr(10);
    }
    const std::string zone = "zone-" + family_tag();
    return "Terminal " + zone + " is locked. Panel marks: " + marks + ". Enter the " + zone +
           " passcode to open " + zone + ".";
  }
};

inline std::vector<SyntheticTaskSpec> make_task_set(std::size_t n_families,
                                                    std::size_t n_instances, std::uint64_t seed) {
  if (n_families == 0 || n_instances == 0) {
    throw Error("make_task_set: counts must be positive");
  }
  std::vector<SyntheticTaskSpec> specs;
  specs.reserve(n_families * n_instances);
  for (std::size_t f = 0; f < n_families; ++f) {
    for (std::size_t i = 0; i < n_instances; ++i) {
      specs.push_back(SyntheticTaskSpec{static_cast<int>(f), derive_seed(seed, f, i)});
    }
  }
  return specs;
}

class SyntheticEnv final : public Environment {
 public:
  explicit SyntheticEnv(SyntheticTaskSpec spec)
      : spec_(std::move(spec)), pattern_(spec_.solution_pattern()) {}

  std::string reset() override {
    progress_ = 0;
    done_ = false;
    started_ = true;
    return spec_.initial_state();
  }

  EnvStep step(const std::string& action) override {
    if (!started_) throw Error("SyntheticEnv: step before reset");
    if (done_) throw Error("SyntheticEnv: step after done");
    EnvStep out;
    const std::string zone = "zone-" + spec_.family_tag();
    if (normalize_whitespace(action) == pattern_[progress_]) {
      ++progress_;
      if (progress_ == pattern_.size()) {
        done_ = true;
        out.done = true;
        out.success = true;
        out.observation = "Lock open at " + zone + ".";
      } else {
        out.observation = "Stage " + std::to_string(progress_) + " ok at " + zone + ".";
      }
    } else {
      out.observation = "Nothing happens.";
    }
    return out;
  }

  std::string task_id() const override { return spec_.task_id(); }

  std::string header() const override {
    return "Interact with a sequence lock to solve a task. Here are a few examples.";
  }

  const SyntheticTaskSpec& spec() const { return spec_; }

 private:
  SyntheticTaskSpec spec_;
  std::vector<std::string> pattern_;
  std::size_t progress_ = 0;
  bool done_ = false;
  bool started_ = false;
};

// Emits one fixed action forever.
class AlwaysModel final : public ChatModel {
 public:
  explicit AlwaysModel(std::string action) : action_(std::move(action)) {}
  std::string complete(const std::vector<ChatMessage>&) override { return action_; }

 private:
  std::string action_;
};

// Never emits a passcode token.
class NeverSucceedModel final : public ChatModel {
 public:
  std::string complete(const std::vector<ChatMessage>&) override { return "wait"; }
};

// Scripted stand-in for the model in the retrieval experiments. A pure
// function of the message list:
//   - it reads the current task's family from the zone marker after the demo
//     delimiter (or from the opening message when there are no demos);
//   - it knows the passcode iff every pattern token of that family appears in
//     the demo section, or the episode-level exploration draw fires;
//   - when it knows, it emits the next pattern token (progress counted from
//     the stage observations); otherwise a fixed wrong token.
// Exploration is a deterministic hash of (prompt prefix, seed): the prefix is
// fixed within an episode, so the draw is stable per episode and re-rolls
// across trials as the sampled demos change.
class RetrievalSensitiveModel final : public ChatModel {
 public:
  explicit RetrievalSensitiveModel(double explore_prob = 0.0, std::uint64_t seed = 0)
      : explore_prob_(explore_prob), seed_(seed) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    std::size_t delim_index = messages.size();  // index of the delimiter message, if any
    for (std::size_t i = 0; i < messages.size(); ++i) {
      if (messages[i].role == Role::kUser &&
          messages[i].content.rfind(kExamplesDelimiter, 0) == 0) {
        delim_index = i;
      }
    }
    const bool has_demos = delim_index < messages.size();
    const std::string& task_message =
        has_demos ? messages[delim_index].content : (messages.empty() ? kWrongAction_ : messages[0].content);

    std::string family_tag = find_family_tag(task_message);
    if (family_tag.empty()) return kWrongAction_;

    bool knows = false;
    if (has_demos) {
      std::string demo_text;
      for (std::size_t i = 0; i < delim_index; ++i) demo_text += messages[i].content + "\n";
      knows = true;
      for (int step = 1; step <= 3; ++step) {
        std::string token = "code-" + family_tag + "-" + std::to_string(step);
        if (demo_text.find(token) == std::string::npos) {
          knows = false;
          break;
        }
      }
    }
    if (!knows && explore_prob_ > 0.0) {
      std::string prefix;
      for (std::size_t i = 0; i <= (has_demos ? delim_index : std::size_t{0}) && i < messages.size();
           ++i) {
        prefix += messages[i].content + "\n";
      }
      prefix += "#" + std::to_string(seed_);
      double u = static_cast<double>(fnv1a64(prefix) >> 11) * 0x1.0p-53;
      knows = u < explore_prob_;
    }
    if (!knows) return kWrongAction_;

    std::size_t progress = 0;
    for (std::size_t i = has_demos ? delim_index + 1 : 1; i < messages.size(); ++i) {
      if (messages[i].role == Role::kUser &&
          messages[i].content.rfind("Stage ", 0) == 0) {
        ++progress;
      }
    }
    if (progress >= 3) return kWrongAction_;  // already solved; should not be reached
    return "code-" + family_tag + "-" + std::to_string(progress + 1);
  }

 private:
  static std::string find_family_tag(const std::string& text) {
    std::size_t pos = text.find("zone-");
    if (pos == std::string::npos || pos + 9 > text.size()) return {};
    std::string tag = text.substr(pos + 5, 4);
    for (char ch : tag) {
      if (!std::isdigit(static_cast<unsigned char>(ch))) return {};
    }
    return tag;
  }

  static constexpr const char* kWrongAction_ = "wait";
  double explore_prob_;
  std::uint64_t seed_;
};

// Task sets persist with the same JSON-Lines conventions as the bank.
inline void save_task_set(const std::vector<SyntheticTaskSpec>& specs,
                          const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("task set save: cannot open " + tmp.string());
    for (const SyntheticTaskSpec& spec : specs) {
      out << nlohmann::json{{"v", 1},
                            {"family_id", spec.family_id},
                            {"instance_seed", spec.instance_seed}}
                 .dump()
          << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<SyntheticTaskSpec> load_task_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("task set load: cannot open " + path.string());
  std::vector<SyntheticTaskSpec> specs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("v") || rec["v"].get<int>() != 1) {
      throw Error("task set load: line " + std::to_string(line_no) + ": malformed record");
    }
    specs.push_back(SyntheticTaskSpec{rec.at("family_id").get<int>(),
                                      rec.at("instance_seed").get<std::uint64_t>()});
  }
  return specs;
}

// A ready-made successful experience for a task, as the agent itself would
// have recorded it. Used to pre-seed banks in tests and benchmarks.
inline Experience solved_experience(const SyntheticTaskSpec& spec) {
  SyntheticEnv env(spec);
  std::string s1 = env.reset();
  std::vector<Step> steps;
  for (const std::string& token : spec.solution_pattern()) {
    EnvStep st = env.step(token);
    steps.push_back(Step{token, st.observation});
  }
  return make_experience(spec.task_id(), s1, std::move(steps), 1.0);
}

}  // namespace cops
