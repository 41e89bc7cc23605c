#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kbwalk/errors.hpp"
#include "kbwalk/kb_core.hpp"
#include "kbwalk/providers.hpp"
#include "kbwalk/simmath.hpp"
#include "kbwalk/text.hpp"

namespace kbwalk {

struct Overlap {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

enum class RougeVariant { one, two, lcs };

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// ROUGE with `a` as candidate and `b` as reference, over kbwalk tokens.
/// N-gram matches are clipped counts; L uses the longest common subsequence.
inline Overlap rouge(const std::string& a, const std::string& b, RougeVariant variant) {
  const auto ta = tokenize(a);
  const auto tb = tokenize(b);
  if (ta.empty() || tb.empty()) throw PreconditionError("rouge: empty input");
  double matched = 0.0, total_a = 0.0, total_b = 0.0;
  if (variant == RougeVariant::lcs) {
    matched = static_cast<double>(detail::lcs_length(ta, tb));
    total_a = static_cast<double>(ta.size());
    total_b = static_cast<double>(tb.size());
  } else {
    const std::size_t n = variant == RougeVariant::one ? 1 : 2;
    const auto ca = detail::ngram_counts(ta, n);
    const auto cb = detail::ngram_counts(tb, n);
    for (const auto& [gram, count] : ca) {
      total_a += static_cast<double>(count);
      if (auto it = cb.find(gram); it != cb.end()) {
        matched += static_cast<double>(std::min(count, it->second));
      }
    }
    for (const auto& [gram, count] : cb) total_b += static_cast<double>(count);
  }
  Overlap o;
  o.precision = total_a > 0.0 ? matched / total_a : 0.0;
  o.recall = total_b > 0.0 ? matched / total_b : 0.0;
  o.f1 = harmonic_mean(o.precision, o.recall);
  return o;
}

/// Greedy token matching: precision averages, over a's tokens, the best
/// cosine to any of b's tokens (floored at 0); recall is the mirror image.
inline Overlap semantic_overlap(const TokenCloud& a, const TokenCloud& b) {
  if (a.vectors.empty() || b.vectors.empty()) throw PreconditionError("semantic_overlap: empty cloud");
  auto directed = [](const TokenCloud& from, const TokenCloud& to) {
    double sum = 0.0;
    for (const auto& x : from.vectors) {
      double best = 0.0;
      for (const auto& y : to.vectors) best = std::max(best, cosine(x, y));
      sum += best;
    }
    return sum / static_cast<double>(from.vectors.size());
  };
  Overlap o;
  o.precision = directed(a, b);
  o.recall = directed(b, a);
  o.f1 = harmonic_mean(o.precision, o.recall);
  return o;
}

inline Overlap semantic_overlap(const std::string& a, const std::string& b,
                                const EmbeddingProvider& embedder) {
  if (trim(a).empty() || trim(b).empty()) throw PreconditionError("semantic_overlap: empty input");
  return semantic_overlap(TokenCloud::from_text(a, embedder), TokenCloud::from_text(b, embedder));
}

struct DiversityReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double semantic_precision = 0.0;
  double semantic_recall = 0.0;
  double semantic_f1 = 0.0;
  std::size_t n_pairs = 0;
};

/// Mean pairwise overlap over all unordered pairs. Lower means more diverse.
/// Fewer than two sentences give zero pairs and zero means.
inline DiversityReport diversity(std::span<const std::string> sentences,
                                 const EmbeddingProvider& embedder) {
  DiversityReport r;
  std::vector<TokenCloud> clouds;
  clouds.reserve(sentences.size());
  for (const auto& s : sentences) clouds.push_back(TokenCloud::from_text(s, embedder));
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (std::size_t j = i + 1; j < sentences.size(); ++j) {
      r.rouge1 += rouge(sentences[i], sentences[j], RougeVariant::one).f1;
      r.rouge2 += rouge(sentences[i], sentences[j], RougeVariant::two).f1;
      r.rougeL += rouge(sentences[i], sentences[j], RougeVariant::lcs).f1;
      const auto sem = semantic_overlap(clouds[i], clouds[j]);
      r.semantic_precision += sem.precision;
      r.semantic_recall += sem.recall;
      r.semantic_f1 += sem.f1;
      ++r.n_pairs;
    }
  }
  if (r.n_pairs > 0) {
    const double n = static_cast<double>(r.n_pairs);
    for (double* v : {&r.rouge1, &r.rouge2, &r.rougeL, &r.semantic_precision, &r.semantic_recall,
                      &r.semantic_f1}) {
      *v /= n;
    }
  }
  return r;
}

/// Mean pairwise ROUGE-1 F1 only; cheap enough for large sweeps.
inline double mean_pairwise_rouge1(std::span<const std::string> sentences) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (std::size_t j = i + 1; j < sentences.size(); ++j) {
      sum += rouge(sentences[i], sentences[j], RougeVariant::one).f1;
      ++pairs;
    }
  }
  return pairs > 0 ? sum / static_cast<double>(pairs) : 0.0;
}

struct AlignmentInput {
  std::vector<std::string> retrieved;
  std::vector<std::string> transitions;
  std::vector<std::string> events;
  double theta = 0.5;
};

struct AlignmentReport {
  double score = 0.0;
  double theta = 0.0;
  std::vector<std::size_t> knowledge_in_play;   // K_theta, indexes into retrieved
  std::vector<std::size_t> transitions_in_play; // T_theta, indexes into transitions
  std::size_t covered = 0;
  bool no_transitions_in_play = false;
};

/// Entailment of every premise against every event: m[p][e].
inline std::vector<std::vector<double>> entailment_matrix(std::span<const std::string> premises,
                                                          std::span<const std::string> events,
                                                          const EntailmentProvider& entailer) {
  std::vector<std::vector<double>> m(premises.size(), std::vector<double>(events.size()));
  for (std::size_t p = 0; p < premises.size(); ++p) {
    for (std::size_t e = 0; e < events.size(); ++e) m[p][e] = entailer.entail(premises[p], events[e]);
  }
  return m;
}

/// Alignment from precomputed entailment matrices, so a theta sweep queries
/// the entailer once.
inline AlignmentReport alignment_from_scores(const std::vector<std::vector<double>>& knowledge,
                                             const std::vector<std::vector<double>>& transitions,
                                             double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw PreconditionError("alignment: theta outside [0,1]");
  if (transitions.empty()) throw PreconditionError("alignment: no transitions");
  AlignmentReport r;
  r.theta = theta;
  auto in_play = [theta](const std::vector<double>& row) {
    return std::any_of(row.begin(), row.end(), [theta](double v) { return v > theta; });
  };
  for (std::size_t k = 0; k < knowledge.size(); ++k) {
    if (in_play(knowledge[k])) r.knowledge_in_play.push_back(k);
  }
  for (std::size_t t = 0; t < transitions.size(); ++t) {
    if (in_play(transitions[t])) r.transitions_in_play.push_back(t);
  }
  if (r.transitions_in_play.empty()) {
    r.no_transitions_in_play = true;
    return r;
  }
  for (std::size_t t : r.transitions_in_play) {
    const auto& row = transitions[t];
    bool hit = false;
    for (std::size_t e = 0; e < row.size() && !hit; ++e) {
      if (!(row[e] > theta)) continue;
      for (std::size_t k : r.knowledge_in_play) {
        if (knowledge[k][e] > theta) {
          hit = true;
          break;
        }
      }
    }
    r.covered += hit ? 1 : 0;
  }
  r.score = static_cast<double>(r.covered) / static_cast<double>(r.transitions_in_play.size());
  return r;
}

/// S_align = covered / |T_theta|, where a transition is covered when some
/// in-play knowledge item entails one of the same events above theta.
inline AlignmentReport alignment_report(const AlignmentInput& input,
                                        const EntailmentProvider& entailer) {
  if (input.transitions.empty()) throw PreconditionError("alignment: no transitions");
  return alignment_from_scores(entailment_matrix(input.retrieved, input.events, entailer),
                               entailment_matrix(input.transitions, input.events, entailer),
                               input.theta);
}

inline double alignment_score(const AlignmentInput& input, const EntailmentProvider& entailer) {
  return alignment_report(input, entailer).score;
}

struct RankedSentence {
  SentenceId id;
  double similarity = 0.0;
};

/// Dense-retrieval baseline: top-k sentences by cosine to the query, ties
/// by ascending id.
inline std::vector<RankedSentence> baseline_retrieve(const std::string& query,
                                                     const KnowledgeIndex& index,
                                                     const EmbeddingProvider& embedder,
                                                     std::size_t k) {
  if (k == 0) throw PreconditionError("baseline_retrieve: k must be at least 1");
  const auto q = embedder.embed_one(query);
  std::vector<RankedSentence> all;
  all.reserve(index.sentences().size());
  constexpr std::size_t kBatch = 1024;
  const auto& sentences = index.sentences();
  for (std::size_t begin = 0; begin < sentences.size(); begin += kBatch) {
    const std::size_t end = std::min(begin + kBatch, sentences.size());
    std::vector<std::string> texts;
    for (std::size_t i = begin; i < end; ++i) texts.push_back(sentences[i].text);
    const auto vectors = embedder.embed(texts);
    for (std::size_t i = begin; i < end; ++i) {
      all.push_back({sentences[i].id, cosine(q, vectors[i - begin])});
    }
  }
  const auto better = [](const RankedSentence& a, const RankedSentence& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

inline nlohmann::ordered_json to_json(const DiversityReport& r) {
  nlohmann::ordered_json j;
  j["rouge1"] = r.rouge1;
  j["rouge2"] = r.rouge2;
  j["rougeL"] = r.rougeL;
  j["semantic_precision"] = r.semantic_precision;
  j["semantic_recall"] = r.semantic_recall;
  j["semantic_f1"] = r.semantic_f1;
  j["n_pairs"] = r.n_pairs;
  return j;
}

inline nlohmann::ordered_json to_json(const AlignmentReport& r) {
  nlohmann::ordered_json j;
  j["theta"] = r.theta;
  j["score"] = r.score;
  j["knowledge_in_play"] = r.knowledge_in_play.size();
  j["transitions_in_play"] = r.transitions_in_play.size();
  j["covered"] = r.covered;
  j["no_transitions_in_play"] = r.no_transitions_in_play;
  return j;
}

/// Plain-text table: one diversity block and one row per alignment report.
inline void write_summary(std::ostream& out, const DiversityReport& d,
                          std::span<const AlignmentReport> alignments) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(4);
  out << "diversity (" << d.n_pairs << " pairs)\n";
  out << "  rouge1 " << d.rouge1 << "  rouge2 " << d.rouge2 << "  rougeL " << d.rougeL << '\n';
  out << "  semantic P " << d.semantic_precision << "  R " << d.semantic_recall << "  F1 "
      << d.semantic_f1 << '\n';
  if (!alignments.empty()) {
    out << "alignment\n  theta   score   |K|   |T|  covered\n";
    for (const auto& a : alignments) {
      out << "  " << std::setw(5) << std::setprecision(2) << a.theta << "  " << std::setw(6)
          << std::setprecision(4) << a.score << "  " << std::setw(4) << a.knowledge_in_play.size()
          << "  " << std::setw(4) << a.transitions_in_play.size() << "  " << std::setw(7)
          << a.covered << (a.no_transitions_in_play ? "  (no transitions in play)" : "") << '\n';
    }
  }
  out.flags(flags);
}

}  // namespace kbwalk
