#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cops/agent.hpp"
#include "cops/common.hpp"
#include "cops/embedding.hpp"

namespace cops {

class RemoteError : public Error {
 public:
  RemoteError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

struct RemoteConfig {
  std::string base_url;  // scheme://host[:port][/prefix], plain HTTP
  std::string api_key;
  std::string embed_model = "local-embed";
  std::string chat_model = "local-chat";
  double temperature = 0.0;  // decoding default pinned for reproducibility
  int max_retries = 3;
  int timeout_s = 30;

  static RemoteConfig from_env() {
    RemoteConfig cfg;
    if (const char* v = std::getenv("COPS_API_BASE")) cfg.base_url = v;
    if (const char* v = std::getenv("COPS_API_KEY")) cfg.api_key = v;
    if (const char* v = std::getenv("COPS_EMBED_MODEL")) cfg.embed_model = v;
    if (const char* v = std::getenv("COPS_CHAT_MODEL")) cfg.chat_model = v;
    return cfg;
  }
};

namespace detail {

struct ParsedBase {
  std::string host_port;  // scheme://host:port for httplib
  std::string prefix;     // path prefix, no trailing slash
};

inline ParsedBase parse_base_url(const std::string& base_url) {
  if (base_url.empty()) throw RemoteError("remote: COPS_API_BASE is not set", false);
  std::size_t scheme_end = base_url.find("://");
  std::size_t path_start =
      base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  ParsedBase parsed;
  if (path_start == std::string::npos) {
    parsed.host_port = base_url;
  } else {
    parsed.host_port = base_url.substr(0, path_start);
    parsed.prefix = base_url.substr(path_start);
    while (!parsed.prefix.empty() && parsed.prefix.back() == '/') parsed.prefix.pop_back();
  }
  return parsed;
}

// POST with retry on transport faults and 5xx. 4xx and malformed payloads do
// not retry.
inline nlohmann::json post_json(const RemoteConfig& cfg, const std::string& path,
                                const nlohmann::json& body) {
  ParsedBase parsed = parse_base_url(cfg.base_url);
  httplib::Client client(parsed.host_port);
  client.set_connection_timeout(cfg.timeout_s);
  client.set_read_timeout(cfg.timeout_s);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));
    }
    httplib::Result res =
        client.Post(parsed.prefix + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error: HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw RemoteError("remote: HTTP " + std::to_string(res->status) + " from " + path, false);
    }
    nlohmann::json parsed_body = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed_body.is_discarded()) {
      throw RemoteError("remote: malformed JSON response from " + path, false);
    }
    return parsed_body;
  }
  throw RemoteError("remote: retries exhausted for " + path + " (" + last_error + ")", true);
}

}  // namespace detail

// True when anything answers at the base URL (any HTTP status counts).
inline bool probe_backend(const RemoteConfig& cfg) {
  try {
    detail::ParsedBase parsed = detail::parse_base_url(cfg.base_url);
    httplib::Client client(parsed.host_port);
    client.set_connection_timeout(3);
    client.set_read_timeout(3);
    httplib::Result res = client.Get(parsed.prefix.empty() ? "/" : parsed.prefix);
    return static_cast<bool>(res);
  } catch (const RemoteError&) {
    return false;
  }
}

// Client for an embeddings endpoint speaking
//   POST {prefix}/embeddings {"model": m, "input": [text]}
//   -> {"data": [{"embedding": [..]}]}
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

  Embedding embed(const std::string& text) const override {
    if (text.empty()) throw Error("embed: empty text");
    nlohmann::json body{{"model", cfg_.embed_model}, {"input", {text}}};
    nlohmann::json res = detail::post_json(cfg_, "/embeddings", body);
    Embedding out;
    try {
      for (const auto& v : res.at("data").at(0).at("embedding")) {
        out.values.push_back(v.get<double>());
      }
    } catch (const nlohmann::json::exception& ex) {
      throw RemoteError(std::string("remote: unexpected embeddings payload: ") + ex.what(), false);
    }
    if (out.values.empty()) throw RemoteError("remote: empty embedding", false);
    dim_.store(out.values.size());
    return out;
  }

  std::size_t dim() const override { return dim_.load(); }

 private:
  RemoteConfig cfg_;
  mutable std::atomic<std::size_t> dim_{0};
};

// Client for a chat-completions endpoint speaking
//   POST {prefix}/chat/completions
//     {"model": m, "messages": [{"role","content"}..], "temperature": t}
//   -> {"choices": [{"message": {"content": text}}]}
class RemoteChatModel final : public ChatModel {
 public:
  explicit RemoteChatModel(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    if (messages.empty()) throw Error("llm_complete: empty message list");
    nlohmann::json wire_messages = nlohmann::json::array();
    for (const ChatMessage& m : messages) {
      wire_messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    nlohmann::json body{{"model", cfg_.chat_model},
                        {"messages", std::move(wire_messages)},
                        {"temperature", cfg_.temperature}};
    nlohmann::json res = detail::post_json(cfg_, "/chat/completions", body);
    try {
      return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw RemoteError(std::string("remote: unexpected chat payload: ") + ex.what(), false);
    }
  }

 private:
  RemoteConfig cfg_;
};

}  // namespace cops
