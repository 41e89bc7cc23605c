#pragma once

// Concept bridging: a search whose policy favours sentences close to the
// conversation and its explicit concepts, and whose critic rewards reaching
// the node groups of those concepts while penalizing semantic drift. The
// visited part of the tree defines the context-relevant sub-region that
// retrieval is later confined to.

#include <algorithm>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "kbwalk/kb_core.hpp"
#include "kbwalk/mcts.hpp"
#include "kbwalk/simmath.hpp"
#include "kbwalk/task_support.hpp"

namespace kbwalk {

inline constexpr double kDefaultBridgeLambda = -1000.0;

struct BridgeQuery {
  std::string context;
  std::vector<ConceptId> context_concepts;  // explicit concepts, resolved
  double lambda = kDefaultBridgeLambda;
  // The context-coherence bound is enforced structurally: retrieval may only
  // use sentences of the bridged sub-region.
  std::string epsilon_note = "retrieval restricted to the bridged sub-region";
};

/// Resolves `surfaces` (unknown ones are dropped) into a query. Throws
/// LookupError when nothing resolves.
inline BridgeQuery make_bridge_query(const KnowledgeIndex& index, std::string context,
                                     std::span<const std::string> surfaces,
                                     double lambda = kDefaultBridgeLambda) {
  BridgeQuery q;
  q.context = std::move(context);
  q.context_concepts = resolve_seeds(index, surfaces);
  q.lambda = lambda;
  return q;
}

/// cos(k, C) + mean over context concepts n of cos(k, n).
inline double bridge_policy_score(const ProviderVector& candidate, const ProviderVector& context,
                                  std::span<const ProviderVector> concepts) {
  double concept_term = 0.0;
  for (const auto& c : concepts) concept_term += cosine(candidate, c);
  if (!concepts.empty()) concept_term /= static_cast<double>(concepts.size());
  return cosine(candidate, context) + concept_term;
}

inline double bridge_policy_score(const KnowledgeSentence& candidate, const BridgeQuery& query,
                                  const KnowledgeIndex& index, const EmbeddingProvider& embedder) {
  std::vector<ProviderVector> concepts;
  for (ConceptId c : query.context_concepts) {
    concepts.push_back(embedder.embed_one(index.concept_node(c).surface));
  }
  return bridge_policy_score(embedder.embed_one(candidate.text), embedder.embed_one(query.context),
                             concepts);
}

/// Fraction of the context concepts that sit in the marked concept's group.
inline double bridging_rate(const KnowledgeIndex& index, std::span<const ConceptId> context_concepts,
                            ConceptId marked) {
  if (context_concepts.empty()) throw PreconditionError("bridging rate: no context concepts");
  const GroupId group = index.concept_node(marked).group_id;
  std::size_t inside = 0;
  for (ConceptId c : context_concepts) inside += index.concept_node(c).group_id == group ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(context_concepts.size());
}

/// Bridging rate + lambda * WD(sentence, context).
inline double bridge_critic(double bridging_rate, double distance, double lambda) {
  return bridging_rate + lambda * distance;
}

inline double bridge_critic(const SearchState& state, const BridgeQuery& query,
                            const KnowledgeIndex& index, const EmbeddingProvider& embedder) {
  if (!state.sentence || !state.marked_concept) {
    throw PreconditionError("bridge_critic: state has no sentence");
  }
  const double rate = bridging_rate(index, query.context_concepts, *state.marked_concept);
  const auto sentence_cloud = TokenCloud::from_text(index.sentence(*state.sentence).text, embedder);
  const auto context_cloud = TokenCloud::from_text(query.context, embedder);
  return bridge_critic(rate, wasserstein(sentence_cloud, context_cloud), query.lambda);
}

/// Memoizing bridge scorers for one search.
class BridgeTask {
 public:
  BridgeTask(const KnowledgeIndex& index, const BridgeQuery& query, const EmbeddingProvider& embedder)
      : index_(&index),
        query_(&query),
        embedder_(&embedder),
        sentences_(index, embedder),
        concepts_(index, embedder),
        context_(embedder.embed_one(query.context)),
        context_cloud_(TokenCloud::from_text(query.context, embedder)),
        marker_(index, concepts_, context_) {
    if (query.context_concepts.empty()) throw PreconditionError("bridge query has no concepts");
    for (ConceptId c : query.context_concepts) concept_vectors_.push_back(concepts_.get(c));
  }

  bool admits(SentenceId) const { return true; }
  void prefetch(std::span<const SentenceId> ids) const { sentences_.prefetch(ids); }
  double prune_score(SentenceId s) const { return cosine(sentences_.get(s), context_); }
  double policy_score(SentenceId s) const {
    return bridge_policy_score(sentences_.get(s), context_, concept_vectors_);
  }
  ConceptId mark(SentenceId s) const { return marker_.mark(s); }

  double critic(const SearchState& state) const {
    if (!state.sentence || !state.marked_concept) {
      throw PreconditionError("bridge_critic: state has no sentence");
    }
    const double rate = bridging_rate(*index_, query_->context_concepts, *state.marked_concept);
    return bridge_critic(rate, distance(*state.sentence), query_->lambda);
  }

  double distance(SentenceId s) const {
    if (auto it = distances_.find(s); it != distances_.end()) return it->second;
    const auto cloud = TokenCloud::from_text(index_->sentence(s).text, *embedder_);
    const double d = wasserstein(cloud, context_cloud_);
    distances_.emplace(s, d);
    return d;
  }

 private:
  const KnowledgeIndex* index_;
  const BridgeQuery* query_;
  const EmbeddingProvider* embedder_;
  SentenceEmbeddings sentences_;
  ConceptEmbeddings concepts_;
  ProviderVector context_;
  TokenCloud context_cloud_;
  ContextMarker marker_;
  std::vector<ProviderVector> concept_vectors_;
  mutable std::unordered_map<SentenceId, double> distances_;
};

struct SubRegion {
  std::vector<SentenceId> sentence_ids;  // ascending
  std::vector<ConceptId> via_concepts;   // parallel to sentence_ids
  std::vector<ConceptId> concept_ids;    // ascending: explicit and bridging concepts
  std::vector<KnowledgeChain> chains;

  bool contains(SentenceId id) const {
    return std::binary_search(sentence_ids.begin(), sentence_ids.end(), id);
  }
  bool empty() const noexcept { return sentence_ids.empty(); }
  std::size_t size() const noexcept { return sentence_ids.size(); }
};

/// Sub-region covered by a finished bridging tree: every visited sentence,
/// plus the group sentences of every visited node's marked concept. Since a
/// longer run only adds visited nodes, the region never shrinks with more
/// simulations.
inline SubRegion subregion_from_tree(const SearchTree& tree, const KnowledgeIndex& index,
                                     std::span<const ConceptId> seeds) {
  std::unordered_map<SentenceId, ConceptId> via;
  std::vector<ConceptId> concepts(seeds.begin(), seeds.end());
  auto add = [&](SentenceId s, ConceptId c) { via.try_emplace(s, c); };
  for (std::size_t i = 1; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    if (n.visits == 0) continue;
    const SentenceId s = *n.state.sentence;
    if (*n.parent == SearchTree::root()) {
      for (ConceptId seed : seeds) {
        const auto& ids = index.group_sentences(seed);
        if (std::binary_search(ids.begin(), ids.end(), s)) {
          add(s, seed);
          break;
        }
      }
    } else {
      add(s, *tree.node(*n.parent).state.marked_concept);
    }
  }
  for (std::size_t i = 1; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    if (n.visits == 0) continue;
    const ConceptId marked = *n.state.marked_concept;
    concepts.push_back(marked);
    for (SentenceId s : index.group_sentences(marked)) add(s, marked);
  }
  SubRegion region;
  region.sentence_ids.reserve(via.size());
  for (const auto& [s, c] : via) region.sentence_ids.push_back(s);
  std::sort(region.sentence_ids.begin(), region.sentence_ids.end());
  for (SentenceId s : region.sentence_ids) region.via_concepts.push_back(via.at(s));
  std::sort(concepts.begin(), concepts.end());
  concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());
  region.concept_ids = std::move(concepts);
  return region;
}

/// Runs the bridging search from the query's explicit concepts.
inline SubRegion build_subregion(const BridgeQuery& query, const KnowledgeIndex& index,
                                 const EmbeddingProvider& embedder, const SearchConfig& config,
                                 const TraceSink& trace = {}) {
  if (query.context_concepts.empty()) {
    throw PreconditionError("build_subregion: no resolvable context concepts");
  }
  const BridgeTask task(index, query, embedder);
  auto result = search_from_seeds(index, query.context, query.context_concepts, task, config, trace);
  auto region = subregion_from_tree(result.tree, index, query.context_concepts);
  region.chains = std::move(result.chains);
  return region;
}

/// One {"sentence_id","text","via_concept"} object per line.
inline void write_subregion_jsonl(const SubRegion& region, const KnowledgeIndex& index,
                                  std::ostream& out) {
  for (std::size_t i = 0; i < region.sentence_ids.size(); ++i) {
    nlohmann::ordered_json j;
    j["sentence_id"] = to_string(region.sentence_ids[i]);
    j["text"] = index.sentence(region.sentence_ids[i]).text;
    j["via_concept"] = index.concept_node(region.via_concepts[i]).surface;
    out << j.dump() << '\n';
  }
}

}  // namespace kbwalk
