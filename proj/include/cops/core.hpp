#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cops/common.hpp"

namespace cops {

// One action/observation turn inside an experience.
struct Step {
  std::string action;
  std::string observation;

  friend bool operator==(const Step&, const Step&) = default;
};

// A complete trial: where it started, what happened, how it scored.
// Value object until it is appended to a bank; the bank assigns created_seq.
struct Experience {
  std::string task_id;
  std::string initial_state;
  std::vector<Step> steps;
  std::string final_state;  // initial_state folded with every step, '\n'-separated
  double reward = 0.0;      // in [0, 1]
  std::int64_t created_seq = -1;  // -1 until stored

  friend bool operator==(const Experience&, const Experience&) = default;
};

// Ordered demo prefix for a prompt. Order is significant and preserved.
using ExperienceCollection = std::vector<Experience>;

// Turn separator for the s_{h+1} = s_h|a_h concatenation. Newline keeps the
// cumulative state readable as a transcript.
inline constexpr char kTurnSeparator = '\n';

inline std::string fold_state(const std::string& initial_state, const std::vector<Step>& steps) {
  std::string state = initial_state;
  for (const Step& step : steps) {
    state += kTurnSeparator;
    state += step.action;
    state += kTurnSeparator;
    state += step.observation;
  }
  return state;
}

inline Experience make_experience(std::string task_id, std::string initial_state,
                                  std::vector<Step> steps, double reward) {
  if (!(reward >= 0.0 && reward <= 1.0)) {
    throw Error("make_experience: reward must lie in [0,1]");
  }
  if (initial_state.empty()) {
    throw Error("make_experience: initial_state must be non-empty");
  }
  Experience e;
  e.task_id = std::move(task_id);
  e.initial_state = std::move(initial_state);
  e.steps = std::move(steps);
  e.final_state = fold_state(e.initial_state, e.steps);
  e.reward = reward;
  return e;
}

namespace detail {

// Newlines and backslashes are escaped so every serialized field fits on one
// line of the canonical text form.
inline std::string escape_line(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

inline std::string unescape_line(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      ++i;
      switch (text[i]) {
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        default: out.push_back(text[i]);
      }
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

// Fixed 17-significant-digit form: byte-identical for equal doubles and
// exact on round trip.
inline std::string format_reward(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace detail

// Canonical one-experience text form. Deterministic, injective and
// round-trip parseable; this is the string the embedder sees.
inline std::string render_experience_text(const Experience& e) {
  std::string out = "experience/1\n";
  out += "task: " + detail::escape_line(e.task_id) + "\n";
  out += "state: " + detail::escape_line(e.initial_state) + "\n";
  for (const Step& step : e.steps) {
    out += "act: " + detail::escape_line(step.action) + "\n";
    out += "obs: " + detail::escape_line(step.observation) + "\n";
  }
  out += "reward: " + detail::format_reward(e.reward) + "\n";
  return out;
}

// Inverse of render_experience_text up to created_seq.
inline Experience parse_experience_text(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    lines.push_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  if (lines.empty() || lines.front() != "experience/1") {
    throw Error("parse_experience_text: missing experience/1 header");
  }
  auto field = [](std::string_view line, std::string_view key) -> std::string_view {
    if (line.substr(0, key.size()) != key) {
      throw Error("parse_experience_text: expected field '" + std::string(key) + "'");
    }
    return line.substr(key.size());
  };
  std::size_t i = 1;
  if (i >= lines.size()) throw Error("parse_experience_text: truncated record");
  std::string task_id = detail::unescape_line(field(lines[i++], "task: "));
  if (i >= lines.size()) throw Error("parse_experience_text: truncated record");
  std::string initial_state = detail::unescape_line(field(lines[i++], "state: "));
  std::vector<Step> steps;
  while (i < lines.size() && lines[i].substr(0, 5) == "act: ") {
    Step step;
    step.action = detail::unescape_line(lines[i].substr(5));
    ++i;
    if (i >= lines.size()) throw Error("parse_experience_text: action without observation");
    step.observation = detail::unescape_line(field(lines[i++], "obs: "));
    steps.push_back(std::move(step));
  }
  if (i >= lines.size()) throw Error("parse_experience_text: missing reward");
  std::string reward_text(field(lines[i], "reward: "));
  double reward = std::strtod(reward_text.c_str(), nullptr);
  return make_experience(std::move(task_id), std::move(initial_state), std::move(steps), reward);
}

// Whitespace-token count; the cheap stand-in for token accounting.
inline std::size_t estimate_tokens(std::string_view text) {
  return split_whitespace(text).size();
}

}  // namespace cops
