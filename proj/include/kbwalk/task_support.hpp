#pragma once

// Per-search memo tables shared by the search instantiations. A task object
// lives for one search and is owned by one thread, so none of these lock.

#include <unordered_map>
#include <span>
#include <string>
#include <vector>

#include "kbwalk/kb_core.hpp"
#include "kbwalk/providers.hpp"
#include "kbwalk/simmath.hpp"

namespace kbwalk {

/// Lazily embedded sentence texts.
class SentenceEmbeddings {
 public:
  SentenceEmbeddings(const KnowledgeIndex& index, const EmbeddingProvider& embedder)
      : index_(&index), embedder_(&embedder) {}

  const ProviderVector& get(SentenceId id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) {
      it = vectors_.emplace(id, embedder_->embed_one(index_->sentence(id).text)).first;
    }
    return it->second;
  }

  void prefetch(std::span<const SentenceId> ids) const {
    std::vector<std::string> texts;
    std::vector<SentenceId> wanted;
    for (SentenceId id : ids) {
      if (vectors_.contains(id)) continue;
      texts.push_back(index_->sentence(id).text);
      wanted.push_back(id);
    }
    if (texts.empty()) return;
    auto fresh = embedder_->embed(texts);
    for (std::size_t i = 0; i < wanted.size(); ++i) vectors_.emplace(wanted[i], std::move(fresh[i]));
  }

 private:
  const KnowledgeIndex* index_;
  const EmbeddingProvider* embedder_;
  mutable std::unordered_map<SentenceId, ProviderVector> vectors_;
};

/// Lazily embedded concept surfaces.
class ConceptEmbeddings {
 public:
  ConceptEmbeddings(const KnowledgeIndex& index, const EmbeddingProvider& embedder)
      : index_(&index), embedder_(&embedder) {}

  const ProviderVector& get(ConceptId id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) {
      it = vectors_.emplace(id, embedder_->embed_one(index_->concept_node(id).surface)).first;
    }
    return it->second;
  }

 private:
  const KnowledgeIndex* index_;
  const EmbeddingProvider* embedder_;
  mutable std::unordered_map<ConceptId, ProviderVector> vectors_;
};

/// Marks, for a sentence, the concept whose embedding is most similar to the
/// context; ties go to the lexicographically smaller surface.
class ContextMarker {
 public:
  ContextMarker(const KnowledgeIndex& index, const ConceptEmbeddings& concepts,
                ProviderVector context)
      : index_(&index), concepts_(&concepts), context_(std::move(context)) {}

  ConceptId mark(SentenceId id) const {
    if (auto it = marks_.find(id); it != marks_.end()) return it->second;
    const auto& sentence = index_->sentence(id);
    ConceptId best = sentence.concepts.front();
    double best_sim = similarity(best);
    for (std::size_t i = 1; i < sentence.concepts.size(); ++i) {
      const ConceptId c = sentence.concepts[i];
      const double sim = similarity(c);
      if (sim > best_sim ||
          (sim == best_sim &&
           index_->concept_node(c).surface < index_->concept_node(best).surface)) {
        best = c;
        best_sim = sim;
      }
    }
    marks_.emplace(id, best);
    return best;
  }

  double similarity(ConceptId c) const { return cosine(concepts_->get(c), context_); }

 private:
  const KnowledgeIndex* index_;
  const ConceptEmbeddings* concepts_;
  ProviderVector context_;
  mutable std::unordered_map<SentenceId, ConceptId> marks_;
};

}  // namespace kbwalk
