#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "cops/common.hpp"
#include "cops/core.hpp"

namespace cops {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

// Parameters of the experience distance d. A literal d = c * cos(e(a), e(b))
// down-weights similar experiences and breaks the intended limits (c = 0
// uniform over successes, c -> inf nearest-only), so the default is
// d = c * (1 - cos); literal_cosine restores the raw-cosine form.
struct DistanceParams {
  double c = 5.0;
  bool literal_cosine = false;
  // What the embedder sees: the full canonical text or just the initial state.
  enum class Scope { kFullExperience, kInitialStateOnly };
  Scope scope = Scope::kFullExperience;
};

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw Error("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero vector");
  double cosv = dot / (std::sqrt(na) * std::sqrt(nb));
  if (cosv > 1.0) cosv = 1.0;
  if (cosv < -1.0) cosv = -1.0;
  return cosv;
}

// Text-to-vector contract. Implementations: LocalHashEmbedder below and
// RemoteEmbedder in remote.hpp. embed() must be safe for concurrent callers.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(const std::string& text) const = 0;
  virtual std::size_t dim() const = 0;
};

// Deterministic local embedder: whitespace tokens hashed with FNV-1a 64 into
// a fixed-size bag, L2-normalized. Reproducible across runs and platforms;
// makes no claim to semantic quality beyond token overlap.
class LocalHashEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDim = 256;

  explicit LocalHashEmbedder(std::size_t dim = kDim) : dim_(dim) {
    if (dim_ == 0) throw Error("LocalHashEmbedder: dim must be positive");
  }

  static std::size_t bucket_of(std::string_view token, std::size_t dim = kDim) {
    return static_cast<std::size_t>(fnv1a64(token) % dim);
  }

  Embedding embed(const std::string& text) const override {
    if (text.empty()) throw Error("embed: empty text");
    Embedding e;
    e.values.assign(dim_, 0.0);
    for (const std::string& token : split_whitespace(text)) {
      e.values[bucket_of(token, dim_)] += 1.0;
    }
    double norm2 = 0.0;
    for (double v : e.values) norm2 += v * v;
    if (norm2 > 0.0) {
      double inv = 1.0 / std::sqrt(norm2);
      for (double& v : e.values) v *= inv;
    }
    return e;
  }

  std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

// Wraps any embedder with an in-memory cache keyed by the FNV-1a digest of
// the text. Cache writes are serialized; reads take the same lock (embedding
// a string is far more expensive than the lock).
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(std::shared_ptr<const Embedder> inner) : inner_(std::move(inner)) {
    if (!inner_) throw Error("CachingEmbedder: null inner embedder");
  }

  Embedding embed(const std::string& text) const override {
    const std::uint64_t key = fnv1a64(text);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    Embedding e = inner_->embed(text);
    std::lock_guard<std::mutex> lock(mutex_);
    cache_.emplace(key, e);
    return e;
  }

  std::size_t dim() const override { return inner_->dim(); }

  std::size_t cache_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.size();
  }

 private:
  std::shared_ptr<const Embedder> inner_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, Embedding> cache_;
};

inline std::string embed_view_of(const Experience& e, DistanceParams::Scope scope) {
  return scope == DistanceParams::Scope::kInitialStateOnly ? e.initial_state
                                                           : render_experience_text(e);
}

inline double distance_from_cosine(double cos_sim, const DistanceParams& p) {
  if (p.c < 0.0) throw Error("experience_distance: c must be >= 0");
  return p.literal_cosine ? p.c * cos_sim : p.c * (1.0 - cos_sim);
}

inline double experience_distance(const Experience& a, const Experience& b,
                                  const DistanceParams& p, const Embedder& embedder) {
  Embedding ea = embedder.embed(embed_view_of(a, p.scope));
  Embedding eb = embedder.embed(embed_view_of(b, p.scope));
  return distance_from_cosine(cosine_similarity(ea, eb), p);
}

}  // namespace cops
