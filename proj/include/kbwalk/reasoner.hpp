#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kbwalk/errors.hpp"
#include "kbwalk/providers.hpp"
#include "kbwalk/simmath.hpp"

namespace kbwalk {

/// Relation-tagged inference with its confidence and embedding.
struct Inference {
  InferenceCandidate candidate;
  double confidence = 0.0;
  ProviderVector embedding;
};

/// Mean per-token probability of the generated inference.
inline double score_confidence(const InferenceCandidate& candidate) {
  if (candidate.token_probs.empty()) {
    throw PreconditionError("score_confidence: empty token_probs");
  }
  const double sum =
      std::accumulate(candidate.token_probs.begin(), candidate.token_probs.end(), 0.0);
  return sum / static_cast<double>(candidate.token_probs.size());
}

/// L-ensemble kernel: diagonal = quality, off-diagonal = quality-modulated
/// similarity.
struct DppKernel {
  Eigen::MatrixXd matrix;

  std::size_t size() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
  double quality(std::size_t i) const { return matrix(i, i); }
  double similarity(std::size_t i, std::size_t j) const { return matrix(i, j); }

  double min_eigenvalue() const {
    if (matrix.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }
};

inline constexpr double kKernelRepairEpsilon = 1e-6;

/// L[i][i] = q_i, L[i][j] = q_i * max(cos(e_i, e_j), 0) * q_j. Clamping can
/// break positive semidefiniteness; in that case the diagonal is shifted
/// by just enough (plus epsilon) to restore it.
inline DppKernel build_kernel(std::span<const Inference> inferences) {
  if (inferences.empty()) throw PreconditionError("build_kernel: no inferences");
  const auto n = static_cast<Eigen::Index>(inferences.size());
  DppKernel kernel{Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    kernel.matrix(i, i) = inferences[i].confidence;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double sim = std::max(0.0, cosine(inferences[i].embedding, inferences[j].embedding));
      const double v = inferences[i].confidence * sim * inferences[j].confidence;
      kernel.matrix(i, j) = v;
      kernel.matrix(j, i) = v;
    }
  }
  const double lowest = kernel.min_eigenvalue();
  if (lowest < 0.0) {
    kernel.matrix.diagonal().array() += -lowest + kKernelRepairEpsilon;
  }
  return kernel;
}

/// Greedy MAP for the DPP: repeatedly adds the item with the largest
/// determinant gain det(L_{S+i}) / det(L_S), maintained through an
/// incremental Cholesky factor. Stops at k items or when no item has a
/// positive gain. Ties go to the lowest index. Returns items in pick order.
inline std::vector<std::size_t> select_diverse(const DppKernel& kernel, std::size_t k) {
  if (k == 0) throw PreconditionError("select_diverse: k must be at least 1");
  const std::size_t n = kernel.size();
  const std::size_t budget = std::min(k, n);
  constexpr double kMinGain = 1e-12;

  std::vector<double> residual(n);  // d_i^2 = det gain of adding i
  for (std::size_t i = 0; i < n; ++i) residual[i] = kernel.matrix(i, i);
  std::vector<std::vector<double>> factor(n);  // rows of the partial Cholesky factor
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> picked;

  while (picked.size() < budget) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && (best == n || residual[i] > residual[best])) best = i;
    }
    if (best == n || !(residual[best] > kMinGain)) break;
    taken[best] = true;
    picked.push_back(best);
    const double pivot = std::sqrt(residual[best]);
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double proj = kernel.matrix(best, i);
      for (std::size_t t = 0; t < factor[best].size(); ++t) proj -= factor[best][t] * factor[i][t];
      const double e = proj / pivot;
      factor[i].push_back(e);
      residual[i] -= e * e;
    }
  }
  return picked;
}

struct ReasonerConfig {
  std::size_t k_select = 5;
  std::size_t n_per_relation = 3;
  std::vector<Relation> relations{std::begin(kAllRelations), std::end(kAllRelations)};

  bool operator==(const ReasonerConfig&) const = default;
};

/// Generates candidates for every configured relation, scores confidence,
/// and keeps a diverse subset of at most k_select inferences. The result is
/// ordered by descending confidence (pick order breaks ties).
inline std::vector<Inference> reason(const std::string& context, const InferenceProvider& inferencer,
                                     const EmbeddingProvider& embedder,
                                     const ReasonerConfig& config) {
  if (config.k_select == 0) throw PreconditionError("reasoner: k_select must be at least 1");
  std::vector<Inference> candidates;
  for (Relation r : config.relations) {
    for (auto& c : inferencer.infer(context, r, config.n_per_relation)) {
      Inference inf;
      inf.confidence = score_confidence(c);
      inf.candidate = std::move(c);
      candidates.push_back(std::move(inf));
    }
  }
  if (candidates.empty()) return {};
  std::vector<std::string> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(c.candidate.text);
  auto vectors = embedder.embed(texts);
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].embedding = std::move(vectors[i]);

  const auto picked = select_diverse(build_kernel(candidates), config.k_select);
  std::vector<Inference> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(candidates[i]);
  std::stable_sort(out.begin(), out.end(), [](const Inference& a, const Inference& b) {
    return a.confidence > b.confidence;
  });
  return out;
}

}  // namespace kbwalk
