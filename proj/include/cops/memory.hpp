#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cops/common.hpp"
#include "cops/core.hpp"
#include "cops/embedding.hpp"

namespace cops {

// Raised when a bank holds no experience with positive reward; callers fall
// back to an empty demo collection.
class NoPositiveRewardError : public Error {
 public:
  NoPositiveRewardError() : Error("selection_distribution: no experience with reward > 0") {}
};

class BankLoadError : public Error {
 public:
  BankLoadError(std::size_t line, const std::string& what)
      : Error("bank load: line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Discrete distribution over bank indices realizing the selection rule
// p(tau) proportional to r(tau) * exp(-d(tau, ref)).
struct SelectionDistribution {
  std::vector<double> weights;        // one per bank index, sums to 1
  std::vector<std::size_t> support;   // indices with weight > 0
};

// The decoded reference experience; empty when the bank has nothing to offer.
using DecodedReference = std::optional<Experience>;

inline constexpr int kBankSchemaVersion = 1;

// Append-ordered store of experiences with a lazy embedding cache.
// Concurrency: single writer (append), any number of concurrent readers of a
// snapshot; the embedding caches serialize their own writes.
class MemoryBank {
 public:
  explicit MemoryBank(std::shared_ptr<const Embedder> embedder = nullptr,
                      std::filesystem::path store_path = {})
      : embedder_(embedder ? std::move(embedder)
                           : std::make_shared<CachingEmbedder>(std::make_shared<LocalHashEmbedder>())),
        store_path_(std::move(store_path)) {}

  MemoryBank(const MemoryBank& other) { copy_from(other); }
  MemoryBank& operator=(const MemoryBank& other) {
    if (this != &other) copy_from(other);
    return *this;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Experience& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<Experience>& entries() const { return entries_; }
  const Embedder& embedder() const { return *embedder_; }
  const std::filesystem::path& store_path() const { return store_path_; }

  // Appends a copy of e with the next created_seq. When a store path is set
  // the record is written (one line, flushed) before the in-memory state
  // changes, so an I/O failure leaves the bank as it was.
  std::size_t append(const Experience& e) {
    Experience stored = e;
    stored.created_seq = next_seq_;
    if (!store_path_.empty()) append_record(stored);
    entries_.push_back(std::move(stored));
    ++next_seq_;
    return entries_.size() - 1;
  }

  // Embedding of the canonical text of entry i, cached.
  const Embedding& text_embedding(std::size_t i) const {
    return cached(text_cache_, i, render_experience_text(entries_.at(i)));
  }

  // Embedding of entry i's initial state, cached (decoder fallback path).
  const Embedding& initial_state_embedding(std::size_t i) const {
    return cached(state_cache_, i, entries_.at(i).initial_state);
  }

  // Writes the full bank as JSON-Lines via a temp file + rename.
  void save(const std::filesystem::path& path) const {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("bank save: cannot open " + tmp.string());
      for (const Experience& e : entries_) out << record_json(e).dump() << '\n';
      out.flush();
      if (!out) throw Error("bank save: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static MemoryBank load(const std::filesystem::path& path,
                         std::shared_ptr<const Embedder> embedder = nullptr) {
    MemoryBank bank(std::move(embedder));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("bank load: cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::int64_t prev_seq = -1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
      if (rec.is_discarded()) throw BankLoadError(line_no, "malformed JSON");
      try {
        if (rec.at("v").get<int>() != kBankSchemaVersion) {
          throw BankLoadError(line_no, "unknown schema version");
        }
        std::vector<Step> steps;
        for (const auto& pair : rec.at("steps")) {
          steps.push_back(Step{pair.at(0).get<std::string>(), pair.at(1).get<std::string>()});
        }
        Experience e = make_experience(rec.at("task_id").get<std::string>(),
                                       rec.at("initial_state").get<std::string>(),
                                       std::move(steps), rec.at("reward").get<double>());
        e.created_seq = rec.at("created_seq").get<std::int64_t>();
        if (e.created_seq <= prev_seq) {
          throw BankLoadError(line_no, "created_seq not strictly increasing");
        }
        prev_seq = e.created_seq;
        bank.entries_.push_back(std::move(e));
      } catch (const BankLoadError&) {
        throw;
      } catch (const std::exception& ex) {
        throw BankLoadError(line_no, ex.what());
      }
    }
    bank.next_seq_ = prev_seq + 1;
    return bank;
  }

 private:
  static nlohmann::json record_json(const Experience& e) {
    nlohmann::json steps = nlohmann::json::array();
    for (const Step& s : e.steps) steps.push_back({s.action, s.observation});
    return nlohmann::json{{"v", kBankSchemaVersion},
                          {"task_id", e.task_id},
                          {"initial_state", e.initial_state},
                          {"steps", std::move(steps)},
                          {"reward", e.reward},
                          {"created_seq", e.created_seq}};
  }

  void append_record(const Experience& e) const {
    std::ofstream out(store_path_, std::ios::binary | std::ios::app);
    if (!out) throw Error("bank append: cannot open " + store_path_.string());
    out << record_json(e).dump() << '\n';
    out.flush();
    if (!out) throw Error("bank append: write failed for " + store_path_.string());
  }

  const Embedding& cached(std::unordered_map<std::size_t, Embedding>& cache, std::size_t i,
                          const std::string& text) const {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache.find(i);
    if (it == cache.end()) it = cache.emplace(i, embedder_->embed(text)).first;
    return it->second;
  }

  void copy_from(const MemoryBank& other) {
    std::lock_guard<std::mutex> lock(other.cache_mutex_);
    entries_ = other.entries_;
    next_seq_ = other.next_seq_;
    embedder_ = other.embedder_;
    store_path_ = other.store_path_;
    text_cache_ = other.text_cache_;
    state_cache_ = other.state_cache_;
  }

  std::vector<Experience> entries_;
  std::int64_t next_seq_ = 0;
  std::shared_ptr<const Embedder> embedder_;
  std::filesystem::path store_path_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::size_t, Embedding> text_cache_;
  mutable std::unordered_map<std::size_t, Embedding> state_cache_;
};

// Picks the reference experience for an initial state: the most recent entry
// whose initial state matches s1 exactly (after whitespace normalization),
// else the entry with the most similar initial-state embedding, else EMPTY.
inline DecodedReference decode_reference(const MemoryBank& bank, const std::string& s1) {
  if (bank.empty()) return std::nullopt;
  const std::string wanted = normalize_whitespace(s1);
  std::optional<std::size_t> exact;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (normalize_whitespace(bank.entry(i).initial_state) == wanted) exact = i;
  }
  if (exact) return bank.entry(*exact);

  Embedding query = bank.embedder().embed(s1);
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    double sim = cosine_similarity(bank.initial_state_embedding(i), query);
    if (sim >= best_sim) {  // >= so ties resolve to the highest created_seq
      best_sim = sim;
      best = i;
    }
  }
  return bank.entry(best);
}

inline SelectionDistribution selection_distribution(const MemoryBank& bank,
                                                    const DecodedReference& ref,
                                                    const DistanceParams& params) {
  if (params.c < 0.0) throw Error("selection_distribution: c must be >= 0");
  SelectionDistribution dist;
  dist.weights.assign(bank.size(), 0.0);
  std::optional<Embedding> ref_embedding;
  if (ref) ref_embedding = bank.embedder().embed(embed_view_of(*ref, params.scope));

  // Log-space weights so huge c (distances in the millions) cannot underflow
  // the whole support to zero before normalization.
  constexpr double kExcluded = -std::numeric_limits<double>::infinity();
  std::vector<double> log_weights(bank.size(), kExcluded);
  double max_lw = kExcluded;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const Experience& e = bank.entry(i);
    if (e.reward <= 0.0) continue;
    double lw = std::log(e.reward);
    if (ref_embedding) {
      const Embedding& ei = params.scope == DistanceParams::Scope::kInitialStateOnly
                               ? bank.initial_state_embedding(i)
                               : bank.text_embedding(i);
      lw -= distance_from_cosine(cosine_similarity(ei, *ref_embedding), params);
    }
    log_weights[i] = lw;
    if (lw > max_lw) max_lw = lw;
  }
  if (max_lw == kExcluded) throw NoPositiveRewardError();

  double total = 0.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (log_weights[i] == kExcluded) continue;
    dist.weights[i] = std::exp(log_weights[i] - max_lw);
    total += dist.weights[i];
  }
  for (std::size_t i = 0; i < bank.size(); ++i) {
    dist.weights[i] /= total;
    if (dist.weights[i] > 0.0) dist.support.push_back(i);
  }
  return dist;
}

// Draws up to k experiences. Default is without replacement with implicit
// renormalization after each draw; if the support is smaller than k the full
// support is returned. Output is ordered by ascending created_seq so equal
// demo sets always produce the identical prompt prefix.
inline ExperienceCollection sample_experiences(const MemoryBank& bank,
                                               const SelectionDistribution& dist, std::size_t k,
                                               Rng& rng, bool with_replacement = false) {
  if (k == 0) throw Error("sample_experiences: k must be >= 1");
  if (dist.weights.size() != bank.size()) {
    throw Error("sample_experiences: distribution does not match bank");
  }
  std::vector<std::size_t> chosen;
  if (with_replacement) {
    if (!dist.support.empty()) {
      for (std::size_t draw = 0; draw < k; ++draw) {
        chosen.push_back(sample_index(rng, dist.weights));
      }
    }
  } else {
    std::vector<double> weights = dist.weights;
    std::size_t available = dist.support.size();
    while (chosen.size() < k && available > 0) {
      std::size_t idx = sample_index(rng, weights);
      chosen.push_back(idx);
      weights[idx] = 0.0;
      --available;
    }
  }
  std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
    return bank.entry(a).created_seq < bank.entry(b).created_seq;
  });
  ExperienceCollection out;
  out.reserve(chosen.size());
  for (std::size_t idx : chosen) out.push_back(bank.entry(idx));
  return out;
}

}  // namespace cops
