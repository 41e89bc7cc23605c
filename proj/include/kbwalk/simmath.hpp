#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "kbwalk/errors.hpp"
#include "kbwalk/providers.hpp"
#include "kbwalk/text.hpp"

namespace kbwalk {

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw PreconditionError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

/// Cosine of two unit vectors (their dot product), clamped to [-1, 1].
inline double cosine(const ProviderVector& a, const ProviderVector& b) {
  return std::clamp(dot(a.values(), b.values()), -1.0, 1.0);
}

/// Uniformly weighted bag of token embeddings.
struct TokenCloud {
  std::vector<ProviderVector> vectors;

  std::size_t size() const noexcept { return vectors.size(); }
  double weight() const noexcept { return 1.0 / static_cast<double>(vectors.size()); }

  /// One vector per content token (all tokens if none survive, the raw text
  /// if the tokenizer finds nothing).
  static TokenCloud from_text(const std::string& text, const EmbeddingProvider& embedder) {
    auto tokens = content_tokens(text);
    if (tokens.empty()) tokens = tokenize(text);
    if (tokens.empty()) tokens.push_back(text);
    return TokenCloud{embedder.embed(tokens)};
  }
};

namespace detail {

// Mean over `from` of the cosine distance to the nearest vector of `to`.
inline double nearest_cost(const TokenCloud& from, const TokenCloud& to) {
  double total = 0.0;
  for (const auto& x : from.vectors) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& y : to.vectors) best = std::min(best, 1.0 - cosine(x, y));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace detail

/// Relaxed word mover's distance under cosine cost 1 - cos: the larger of the
/// two one-sided relaxations, each dropping one marginal constraint of the
/// transport problem. Always a lower bound of the exact transport cost.
inline double wasserstein(const TokenCloud& a, const TokenCloud& b) {
  if (a.vectors.empty() || b.vectors.empty()) {
    throw PreconditionError("wasserstein: empty token cloud");
  }
  if (a.vectors.front().dim() != b.vectors.front().dim()) {
    throw PreconditionError("wasserstein: dimension mismatch");
  }
  return std::max(0.0, std::max(detail::nearest_cost(a, b), detail::nearest_cost(b, a)));
}

/// Softmax of scores / temperature, shifted by the max for stability.
inline std::vector<double> policy_weights(std::span<const double> scores, double temperature = 1.0) {
  if (scores.empty()) throw PreconditionError("policy_weights: empty score list");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw PreconditionError("policy_weights: temperature must be positive and finite");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (!std::isfinite(s)) throw PreconditionError("policy_weights: non-finite score");
    top = std::max(top, s);
  }
  std::vector<double> weights(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    weights[i] = std::exp((scores[i] - top) / temperature);
    total += weights[i];
  }
  for (double& w : weights) w /= total;
  return weights;
}

}  // namespace kbwalk
