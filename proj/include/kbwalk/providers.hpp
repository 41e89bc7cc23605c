#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kbwalk/errors.hpp"
#include "kbwalk/text.hpp"

namespace kbwalk {

enum class Provenance { stub, file, remote };

inline std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::stub: return "stub";
    case Provenance::file: return "file";
    case Provenance::remote: return "remote";
  }
  return "unknown";
}

/// Unit-length embedding. Construction always normalizes, so every instance
/// satisfies | ||v|| - 1 | <= 1e-6.
class ProviderVector {
 public:
  ProviderVector() = default;

  static ProviderVector normalized(std::vector<double> values, Provenance provenance) {
    double sq = 0.0;
    for (double v : values) {
      if (!std::isfinite(v)) throw ProviderError("non-finite embedding component");
      sq += v * v;
    }
    if (values.empty() || sq <= 0.0) {
      throw ProviderError("cannot normalize an empty or zero embedding");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : values) v *= inv;
    ProviderVector out;
    out.values_ = std::move(values);
    out.provenance_ = provenance;
    return out;
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  Provenance provenance() const noexcept { return provenance_; }

  friend bool operator==(const ProviderVector& a, const ProviderVector& b) {
    return a.values_ == b.values_ && a.provenance_ == b.provenance_;
  }

 private:
  std::vector<double> values_;
  Provenance provenance_ = Provenance::stub;
};

// Commonsense relations and their natural-language statements.
enum class Relation {
  Causes,
  xReason,
  HinderedBy,
  IsBefore,
  IsAfter,
  xNeed,
  xAttr,
  xEffect,
  xReact,
  xWant,
  xIntent,
};

inline constexpr Relation kAllRelations[] = {
    Relation::Causes,  Relation::xReason, Relation::HinderedBy, Relation::IsBefore,
    Relation::IsAfter, Relation::xNeed,   Relation::xAttr,      Relation::xEffect,
    Relation::xReact,  Relation::xWant,   Relation::xIntent,
};

inline std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::Causes: return "Causes";
    case Relation::xReason: return "xReason";
    case Relation::HinderedBy: return "HinderedBy";
    case Relation::IsBefore: return "IsBefore";
    case Relation::IsAfter: return "IsAfter";
    case Relation::xNeed: return "xNeed";
    case Relation::xAttr: return "xAttr";
    case Relation::xEffect: return "xEffect";
    case Relation::xReact: return "xReact";
    case Relation::xWant: return "xWant";
    case Relation::xIntent: return "xIntent";
  }
  return "";
}

inline std::string_view relation_statement(Relation r) {
  switch (r) {
    case Relation::Causes: return "causes";
    case Relation::xReason: return "because";
    case Relation::HinderedBy: return "can be hindered by";
    case Relation::IsBefore: return "happens before";
    case Relation::IsAfter: return "happens after";
    case Relation::xNeed: return "but before, x needed";
    case Relation::xAttr: return "X is seen as";
    case Relation::xEffect: return "as a result, x will";
    case Relation::xReact: return "as a result, x feels";
    case Relation::xWant: return "as a result, x wants";
    case Relation::xIntent: return "because x wanted";
  }
  return "";
}

inline Relation parse_relation(std::string_view name) {
  for (Relation r : kAllRelations) {
    if (relation_name(r) == name) return r;
  }
  throw PreconditionError("unknown relation '" + std::string(name) + "'");
}

struct InferenceCandidate {
  Relation relation = Relation::Causes;
  std::string text;
  std::vector<double> token_probs;

  bool operator==(const InferenceCandidate&) const = default;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  /// Identifier used as the cache namespace; two providers with the same id
  /// must produce the same vectors.
  virtual std::string id() const = 0;

  /// Dimension of returned vectors, or 0 when not yet known (remote).
  virtual std::size_t dim() const = 0;

  virtual std::vector<ProviderVector> embed(std::span<const std::string> texts) const = 0;

  ProviderVector embed_one(const std::string& text) const {
    auto out = embed(std::span<const std::string>(&text, 1));
    return std::move(out.front());
  }
};

class InferenceProvider {
 public:
  virtual ~InferenceProvider() = default;
  virtual std::vector<InferenceCandidate> infer(const std::string& context, Relation relation,
                                                std::size_t n) const = 0;
};

class EntailmentProvider {
 public:
  virtual ~EntailmentProvider() = default;
  virtual double entail(const std::string& premise, const std::string& hypothesis) const = 0;
};

namespace detail {

inline void require_texts(std::span<const std::string> texts) {
  if (texts.empty()) throw PreconditionError("embed: empty text list");
  for (const auto& t : texts) {
    if (t.empty()) throw PreconditionError("embed: empty text");
  }
}

// splitmix64 finalizer, used to derive independent streams from one seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Hashed bag-of-words embedder. Each content token (falling back to every
/// token, then to the raw text) is hashed with FNV-1a into one of `dim`
/// buckets; counts are accumulated and the vector normalized.
class StubEmbedder final : public EmbeddingProvider {
 public:
  explicit StubEmbedder(std::size_t dim = 256) : dim_(dim) {
    if (dim_ == 0) throw PreconditionError("stub embedder dimension must be positive");
  }

  std::string id() const override { return "stub-fnv1a-" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }

  std::size_t bucket(std::string_view token) const { return fnv1a64(token) % dim_; }

  std::vector<ProviderVector> embed(std::span<const std::string> texts) const override {
    detail::require_texts(texts);
    std::vector<ProviderVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
      std::vector<double> values(dim_, 0.0);
      auto tokens = content_tokens(text);
      if (tokens.empty()) tokens = tokenize(text);
      if (tokens.empty()) tokens.push_back(text);
      for (const auto& t : tokens) values[bucket(t)] += 1.0;
      out.push_back(ProviderVector::normalized(std::move(values), Provenance::stub));
    }
    return out;
  }

 private:
  std::size_t dim_;
};

/// Template-instantiating inference stub for pipeline testing. Candidate i is
/// "<statement> <i-th most frequent context concept>", with per-token
/// probabilities from a generator seeded by (seed, context, relation, i).
class StubInferencer final : public InferenceProvider {
 public:
  explicit StubInferencer(std::uint64_t seed = 0) : seed_(seed) {}

  std::vector<InferenceCandidate> infer(const std::string& context, Relation relation,
                                        std::size_t n) const override {
    if (n == 0) throw PreconditionError("infer: n must be at least 1");
    const auto concepts = ranked_concepts(context);
    const std::size_t count = std::min(n, std::max<std::size_t>(1, concepts.size()));
    std::vector<InferenceCandidate> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      InferenceCandidate c;
      c.relation = relation;
      c.text = std::string(relation_statement(relation)) + " " +
               (concepts.empty() ? std::string("it") : concepts[i]);
      std::uint64_t state = detail::mix64(seed_);
      state = detail::mix64(state ^ fnv1a64(context));
      state = detail::mix64(state ^ fnv1a64(relation_name(relation)));
      state = detail::mix64(state ^ i);
      const std::size_t length = std::max<std::size_t>(1, tokenize(c.text).size());
      c.token_probs.reserve(length);
      for (std::size_t t = 0; t < length; ++t) {
        state = detail::mix64(state);
        const double u = static_cast<double>(state >> 11) * 0x1.0p-53;
        c.token_probs.push_back(0.05 + 0.95 * u);
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  /// Context concepts by descending frequency, ties by first appearance.
  static std::vector<std::string> ranked_concepts(std::string_view context) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::size_t> counts;
    for (auto& t : content_tokens(context)) {
      if (counts[t]++ == 0) order.push_back(t);
    }
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      return counts.at(a) > counts.at(b);
    });
    return order;
  }

 private:
  std::uint64_t seed_;
};

/// Token-overlap entailment: |T(premise) ∩ T(hypothesis)| / |T(hypothesis)|
/// over distinct tokens.
class StubEntailer final : public EntailmentProvider {
 public:
  double entail(const std::string& premise, const std::string& hypothesis) const override {
    if (premise.empty() || hypothesis.empty()) {
      throw PreconditionError("entail: empty premise or hypothesis");
    }
    const auto p = tokenize(premise);
    const auto h = tokenize(hypothesis);
    const std::unordered_set<std::string> premise_set(p.begin(), p.end());
    const std::unordered_set<std::string> hyp_set(h.begin(), h.end());
    if (hyp_set.empty()) return 0.0;
    std::size_t shared = 0;
    for (const auto& t : hyp_set) shared += premise_set.contains(t) ? 1 : 0;
    return static_cast<double>(shared) / static_cast<double>(hyp_set.size());
  }
};

/// Read-through cache keyed by (provider id, text). Lookups take a shared
/// lock; insertions are serialized.
class CachedEmbedder final : public EmbeddingProvider {
 public:
  explicit CachedEmbedder(std::shared_ptr<const EmbeddingProvider> inner)
      : inner_(std::move(inner)) {
    if (!inner_) throw PreconditionError("CachedEmbedder: null provider");
  }

  std::string id() const override { return inner_->id(); }
  std::size_t dim() const override { return inner_->dim(); }

  std::vector<ProviderVector> embed(std::span<const std::string> texts) const override {
    detail::require_texts(texts);
    const std::string prefix = inner_->id() + '\x1f';
    std::vector<std::optional<ProviderVector>> found(texts.size());
    std::vector<std::string> missing;
    {
      std::shared_lock lock(mutex_);
      for (std::size_t i = 0; i < texts.size(); ++i) {
        auto it = cache_.find(prefix + texts[i]);
        if (it != cache_.end()) {
          found[i] = it->second;
        } else {
          missing.push_back(texts[i]);
        }
      }
    }
    if (!missing.empty()) {
      std::sort(missing.begin(), missing.end());
      missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
      auto fresh = inner_->embed(missing);
      if (fresh.size() != missing.size()) {
        throw ProviderError("embedding provider returned wrong vector count");
      }
      std::unique_lock lock(mutex_);
      for (std::size_t i = 0; i < missing.size(); ++i) {
        cache_.try_emplace(prefix + missing[i], std::move(fresh[i]));
      }
      for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!found[i]) found[i] = cache_.at(prefix + texts[i]);
      }
    }
    std::vector<ProviderVector> out;
    out.reserve(texts.size());
    for (auto& v : found) out.push_back(std::move(*v));
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, ProviderVector> cache_;
};

}  // namespace kbwalk
