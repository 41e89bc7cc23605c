#pragma once

// Reasoning-aware retrieval: a search confined to the bridged sub-region
// whose policy targets "inference + context" and whose critic rewards
// relevance to both and sentence length while penalizing repetition of
// knowledge already retrieved.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "kbwalk/bridging.hpp"
#include "kbwalk/kb_core.hpp"
#include "kbwalk/mcts.hpp"
#include "kbwalk/reasoner.hpp"
#include "kbwalk/simmath.hpp"
#include "kbwalk/task_support.hpp"

namespace kbwalk {

inline constexpr double kDefaultLengthWeight = 0.1;
inline constexpr std::size_t kDefaultMaxTokens = 32;

struct RetrievalQuery {
  std::string context;
  Inference inference;
  std::vector<ProviderVector> history;  // embeddings of knowledge retrieved so far
  double length_weight = kDefaultLengthWeight;
  std::size_t max_tokens = kDefaultMaxTokens;

  std::string policy_text() const { return inference.candidate.text + " " + context; }
};

struct KnowledgeItem {
  SentenceId id;
  double score = 0.0;

  bool operator==(const KnowledgeItem&) const = default;
};

struct RetrievalResult {
  Inference inference;
  std::vector<KnowledgeChain> chains;
  std::vector<KnowledgeItem> flat_knowledge;  // descending score, then id
};

/// length_weight * min(tokens / max_tokens, 1).
inline double length_bonus(std::size_t token_count, double length_weight, std::size_t max_tokens) {
  if (max_tokens == 0) throw PreconditionError("max_tokens must be positive");
  const double ratio = static_cast<double>(token_count) / static_cast<double>(max_tokens);
  return length_weight * std::min(ratio, 1.0);
}

/// Strongest similarity to anything already retrieved; exactly 0 for an
/// empty history.
inline double repetition_penalty(const ProviderVector& knowledge,
                                 std::span<const ProviderVector> history) {
  if (history.empty()) return 0.0;
  double best = -1.0;
  for (const auto& h : history) best = std::max(best, cosine(knowledge, h));
  return best;
}

/// sim(r, k) + sim(C, k) + length term - max_h sim(k, h).
inline double retrieve_critic(const ProviderVector& knowledge, std::size_t token_count,
                              const ProviderVector& inference, const ProviderVector& context,
                              std::span<const ProviderVector> history, double length_weight,
                              std::size_t max_tokens) {
  return cosine(inference, knowledge) + cosine(context, knowledge) +
         length_bonus(token_count, length_weight, max_tokens) -
         repetition_penalty(knowledge, history);
}

inline double retrieve_critic(const SearchState& state, const RetrievalQuery& query,
                              const KnowledgeIndex& index, const EmbeddingProvider& embedder) {
  if (!state.sentence) throw PreconditionError("retrieve_critic: state has no sentence");
  const auto& k = index.sentence(*state.sentence);
  return retrieve_critic(embedder.embed_one(k.text), k.token_count, query.inference.embedding,
                         embedder.embed_one(query.context), query.history, query.length_weight,
                         query.max_tokens);
}

inline double retrieve_policy_score(const KnowledgeSentence& candidate, const RetrievalQuery& query,
                                    const EmbeddingProvider& embedder) {
  return cosine(embedder.embed_one(candidate.text), embedder.embed_one(query.policy_text()));
}

/// Memoizing retrieval scorers for one search, admitting only sub-region
/// sentences.
class RetrieveTask {
 public:
  RetrieveTask(const KnowledgeIndex& index, const RetrievalQuery& query, const SubRegion& region,
               const EmbeddingProvider& embedder)
      : index_(&index),
        query_(&query),
        region_(&region),
        sentences_(index, embedder),
        concepts_(index, embedder),
        context_(embedder.embed_one(query.context)),
        policy_query_(embedder.embed_one(query.policy_text())),
        marker_(index, concepts_, context_) {}

  bool admits(SentenceId s) const { return region_->contains(s); }
  void prefetch(std::span<const SentenceId> ids) const { sentences_.prefetch(ids); }
  double prune_score(SentenceId s) const { return cosine(sentences_.get(s), policy_query_); }
  double policy_score(SentenceId s) const { return prune_score(s); }
  ConceptId mark(SentenceId s) const { return marker_.mark(s); }

  double critic(const SearchState& state) const {
    if (!state.sentence) throw PreconditionError("retrieve_critic: state has no sentence");
    return score(*state.sentence, query_->history);
  }

  double score(SentenceId s, std::span<const ProviderVector> history) const {
    return retrieve_critic(sentences_.get(s), index_->sentence(s).token_count,
                           query_->inference.embedding, context_, history, query_->length_weight,
                           query_->max_tokens);
  }

  const ProviderVector& embedding(SentenceId s) const { return sentences_.get(s); }

 private:
  const KnowledgeIndex* index_;
  const RetrievalQuery* query_;
  const SubRegion* region_;
  SentenceEmbeddings sentences_;
  ConceptEmbeddings concepts_;
  ProviderVector context_;
  ProviderVector policy_query_;
  ContextMarker marker_;
};

/// Knowledge whose embedding matches retrieved knowledge at least this
/// closely is treated as a repeat and left out of the flat list.
inline constexpr double kDuplicateSimilarity = 1.0 - 1e-9;

/// Searches the sub-region for one inference. Chains are then accepted in
/// order (principal first): each step is rescored against the history as it
/// stands, exact repeats are dropped, and the chain's sentences join
/// `query.history` once the chain is accepted.
inline RetrievalResult retrieve_for_inference(RetrievalQuery& query, const SubRegion& region,
                                              const KnowledgeIndex& index,
                                              const EmbeddingProvider& embedder,
                                              const SearchConfig& config,
                                              const TraceSink& trace = {}) {
  if (region.empty()) throw PreconditionError("retrieve_for_inference: empty sub-region");
  const RetrieveTask task(index, query, region, embedder);
  auto result = search(index, query.context, region.sentence_ids, task, config, trace);

  RetrievalResult out;
  out.inference = query.inference;
  out.chains = std::move(result.chains);
  std::vector<SentenceId> taken;
  for (const auto& chain : out.chains) {
    std::vector<ProviderVector> accepted;
    for (const auto& step : chain.steps) {
      if (std::find(taken.begin(), taken.end(), step.sentence) != taken.end()) continue;
      const auto& k = task.embedding(step.sentence);
      if (repetition_penalty(k, query.history) >= kDuplicateSimilarity ||
          repetition_penalty(k, accepted) >= kDuplicateSimilarity) {
        continue;
      }
      out.flat_knowledge.push_back({step.sentence, task.score(step.sentence, query.history)});
      taken.push_back(step.sentence);
      accepted.push_back(k);
    }
    query.history.insert(query.history.end(), accepted.begin(), accepted.end());
  }
  std::sort(out.flat_knowledge.begin(), out.flat_knowledge.end(),
            [](const KnowledgeItem& a, const KnowledgeItem& b) {
              return a.score != b.score ? a.score > b.score : a.id < b.id;
            });
  return out;
}

}  // namespace kbwalk
