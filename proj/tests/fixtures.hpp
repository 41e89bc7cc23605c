#pragma once

// Shared fixtures: a table-driven embedder, tabulated search tasks over
// generated indexes, and a synthetic commonsense corpus with conversations.

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kbwalk/kb_core.hpp"
#include "kbwalk/mcts.hpp"
#include "kbwalk/pipeline.hpp"
#include "kbwalk/providers.hpp"
#include "oracles.hpp"

namespace kbwalk {

template <typename Tag>
void PrintTo(Id<Tag> id, std::ostream* os) {
  *os << id.value;
}

}  // namespace kbwalk

namespace fixture {

using namespace kbwalk;

/// Returns a fixed vector for every listed text; anything else falls back to
/// the stub embedder of the same dimension.
class TableEmbedder final : public EmbeddingProvider {
 public:
  explicit TableEmbedder(std::size_t dim) : fallback_(dim) {}

  void set(const std::string& text, std::vector<double> v) { table_[text] = std::move(v); }

  std::string id() const override { return "table"; }
  std::size_t dim() const override { return fallback_.dim(); }
  std::vector<ProviderVector> embed(std::span<const std::string> texts) const override {
    std::vector<ProviderVector> out;
    for (const auto& t : texts) {
      if (auto it = table_.find(t); it != table_.end()) {
        out.push_back(ProviderVector::normalized(it->second, Provenance::file));
      } else {
        out.push_back(fallback_.embed_one(t));
      }
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
  StubEmbedder fallback_;
};

inline std::vector<double> axis(std::size_t dim, std::size_t i, double scale = 1.0) {
  std::vector<double> v(dim, 0.0);
  v[i] = scale;
  return v;
}

/// A generated index plus the tabulated scores of a search task over it.
struct TabulatedFixture {
  KnowledgeIndex index;
  oracle::TabulatedTask table;
  std::vector<ConceptId> concept_ids;  // c<k> -> id
};

/// SearchTask reading everything from the fixture's tables.
class TabulatedSearch {
 public:
  explicit TabulatedSearch(const TabulatedFixture& f) : f_(&f) {}
  bool admits(SentenceId) const { return true; }
  double prune_score(SentenceId s) const { return f_->table.prune[s.value]; }
  double policy_score(SentenceId s) const { return f_->table.policy[s.value]; }
  ConceptId mark(SentenceId s) const { return f_->concept_ids[f_->table.mark[s.value]]; }
  double critic(const SearchState& st) const { return f_->table.critic[st.sentence->value]; }

 private:
  const TabulatedFixture* f_;
};

inline std::vector<SentenceId> root_ids(const TabulatedFixture& f) {
  std::vector<SentenceId> out;
  for (std::size_t s : f.table.root) out.push_back(SentenceId{static_cast<std::uint32_t>(s)});
  return out;
}

/// Builds the index for per-sentence concept lists; marks must be members.
inline TabulatedFixture assemble(std::size_t n_concepts,
                                 const std::vector<std::vector<std::size_t>>& mentions,
                                 oracle::TabulatedTask table) {
  IndexBuilder b;
  TabulatedFixture f;
  for (std::size_t s = 0; s < mentions.size(); ++s) {
    std::vector<std::string> rest;
    for (std::size_t i = 1; i < mentions[s].size(); ++i) rest.push_back("c" + std::to_string(mentions[s][i]));
    b.add_sentence("sentence " + std::to_string(s), "c" + std::to_string(mentions[s][0]), 0.5, rest);
  }
  f.index = std::move(b).build();
  for (std::size_t c = 0; c < n_concepts; ++c) {
    f.concept_ids.push_back(
        f.index.find_concept("c" + std::to_string(c)).value_or(ConceptId{~std::uint32_t{0}}));
  }
  // Group membership re-derived by scanning the mention lists.
  table.group_sentences.assign(n_concepts, {});
  for (std::size_t s = 0; s < mentions.size(); ++s) {
    for (std::size_t c : mentions[s]) table.group_sentences[c].push_back(s);
  }
  f.table = std::move(table);
  return f;
}

/// Random index with a tabulated task. Critic values are distinct points of a
/// 0.02-spaced grid so the optimum is unique in value.
inline TabulatedFixture random_tabulated(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> n_sent(8, 22), n_conc(3, 8), n_root(2, 5), n_men(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t ns = n_sent(rng), nc = n_conc(rng);
  std::vector<std::vector<std::size_t>> mentions(ns);
  oracle::TabulatedTask t;
  for (std::size_t s = 0; s < ns; ++s) {
    std::vector<std::size_t> all(nc);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(nc, n_men(rng)));
    mentions[s] = all;
    t.mark.push_back(all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)]);
    t.prune.push_back(unit(rng));
    t.policy.push_back(unit(rng));
  }
  std::vector<double> grid(ns);
  for (std::size_t i = 0; i < ns; ++i) grid[i] = 0.02 * static_cast<double>(i + 1);
  std::shuffle(grid.begin(), grid.end(), rng);
  t.critic = grid;
  std::vector<std::size_t> all(ns);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(n_root(rng));
  std::sort(all.begin(), all.end());
  t.root = all;
  return assemble(nc, mentions, std::move(t));
}

/// Three-hop fixture with one planted high-value chain: every level offers
/// five candidates (the planted one among them) and only planted sentences
/// score above 0.7. Policy scores are the critic plus uniform noise of width
/// `policy_noise`, mirroring the real tasks where the policy is the
/// similarity part of the critic.
struct PlantedFixture {
  TabulatedFixture f;
  std::vector<std::size_t> chain;
};

inline PlantedFixture planted_chain(std::uint64_t seed, double policy_noise = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0), low(0.0, 0.6);
  // Concept 0 seeds the root; sentence s marks concept s + 1, whose group is
  // the five sentences of the next level below s.
  std::vector<std::vector<std::size_t>> mentions;
  oracle::TabulatedTask t;
  std::size_t next_concept = 1;
  PlantedFixture out;
  std::vector<std::size_t> frontier_concepts{0};
  std::vector<std::vector<std::size_t>> levels;
  // level sentences: root 5, then 5 under each sentence of the previous level
  for (std::size_t depth = 0; depth < 3; ++depth) {
    std::vector<std::size_t> made;
    std::vector<std::size_t> next_frontier;
    for (std::size_t owner : frontier_concepts) {
      for (int k = 0; k < 5; ++k) {
        const std::size_t s = mentions.size();
        const std::size_t marked = next_concept++;
        mentions.push_back({owner, marked});
        t.mark.push_back(marked);
        t.prune.push_back(unit(rng));
        t.policy.push_back(unit(rng));
        t.critic.push_back(low(rng));
        made.push_back(s);
        next_frontier.push_back(marked);
      }
    }
    levels.push_back(made);
    frontier_concepts = next_frontier;
  }
  // Root candidates: level 0. Plant one chain through random choices.
  t.root = levels[0];
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, 4)(rng);
  std::size_t at = levels[0][pick];
  out.chain.push_back(at);
  for (std::size_t depth = 1; depth < 3; ++depth) {
    const std::size_t parent_index = static_cast<std::size_t>(
        std::find(levels[depth - 1].begin(), levels[depth - 1].end(), at) - levels[depth - 1].begin());
    pick = std::uniform_int_distribution<std::size_t>(0, 4)(rng);
    at = levels[depth][parent_index * 5 + pick];
    out.chain.push_back(at);
  }
  for (std::size_t s : out.chain) t.critic[s] = 0.75 + 0.2 * unit(rng);
  for (std::size_t s = 0; s < t.critic.size(); ++s) t.policy[s] = t.critic[s] + policy_noise * unit(rng);
  const std::size_t n_concepts = next_concept;
  out.f = assemble(n_concepts, mentions, std::move(t));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic commonsense corpus

inline const std::vector<std::vector<std::string>>& topics() {
  static const std::vector<std::vector<std::string>> t = {
      {"tree", "oxygen", "leaf", "forest", "root", "branch", "seed", "soil", "sunlight", "bark"},
      {"dog", "puppy", "leash", "bone", "walk", "park", "tail", "collar", "kennel", "fetch"},
      {"coffee", "morning", "caffeine", "mug", "breakfast", "alarm", "energy", "espresso", "cafe",
       "routine"},
      {"rain", "umbrella", "cloud", "storm", "puddle", "thunder", "raincoat", "weather", "flood",
       "drizzle"},
      {"exam", "student", "teacher", "homework", "classroom", "grade", "lecture", "library", "essay",
       "textbook"},
      {"kitchen", "recipe", "oven", "flour", "dinner", "knife", "spice", "soup", "bread", "chef"},
      {"job", "office", "salary", "manager", "meeting", "deadline", "promotion", "career", "boss",
       "project"},
      {"beach", "ocean", "wave", "sand", "sunscreen", "vacation", "surfing", "shell", "towel",
       "island"},
      {"doctor", "hospital", "medicine", "fever", "nurse", "illness", "clinic", "injury", "health",
       "patient"},
      {"music", "guitar", "concert", "song", "piano", "melody", "band", "singer", "rhythm", "drum"},
  };
  return t;
}

inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v = {
      "needs", "produces", "requires", "helps", "causes", "improves", "protects", "contains",
      "supports", "creates", "changes", "follows", "prevents", "feeds", "uses", "attracts"};
  return v;
}

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> a = {"fresh", "heavy", "bright", "quiet", "strong", "warm",
                                             "sharp", "gentle", "careful", "useful", "early", "busy"};
  return a;
}

struct SyntheticCorpus {
  std::string tsv;
  std::size_t rows = 0;
};

/// TERM<TAB>SENTENCE<TAB>SCORE rows drawn mostly from one topic each.
inline SyntheticCorpus make_corpus(std::uint64_t seed, std::size_t rows) {
  std::mt19937_64 rng(seed);
  const auto& tp = topics();
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::ostringstream out;
  out << "term\tsentence\tscore\n";
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& topic = tp[std::uniform_int_distribution<std::size_t>(0, tp.size() - 1)(rng)];
    const auto& other = unit(rng) < 0.3 ? tp[std::uniform_int_distribution<std::size_t>(0, tp.size() - 1)(rng)] : topic;
    const std::string term = pick(topic);
    std::string sentence;
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
      case 0:
        sentence = "A " + term + " " + pick(verbs()) + " " + pick(adjectives()) + " " + pick(topic) + ".";
        break;
      case 1:
        sentence = "Most " + term + " " + pick(verbs()) + " the " + pick(topic) + " and " + pick(other) + ".";
        break;
      case 2:
        sentence = "The " + term + " is " + pick(adjectives()) + " when the " + pick(other) + " " +
                   pick(verbs()) + " " + pick(topic) + ".";
        break;
      default:
        sentence = "Every " + term + " " + pick(verbs()) + " some " + pick(topic) + ", which " +
                   pick(verbs()) + " a " + pick(adjectives()) + " " + pick(other) + ".";
        break;
    }
    char score[16];
    std::snprintf(score, sizeof score, "%.3f", 0.2 + 0.8 * unit(rng));
    out << term << '\t' << sentence << '\t' << score << '\n';
  }
  return {out.str(), rows};
}

inline KnowledgeIndex corpus_index(const SyntheticCorpus& corpus, const EmbeddingProvider& embedder,
                                   double threshold = 0.6) {
  std::istringstream in(corpus.tsv);
  return build_node_groups(ingest_corpus(in), embedder, threshold);
}

inline ConversationInput make_conversation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& tp = topics();
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  const auto& a = tp[std::uniform_int_distribution<std::size_t>(0, tp.size() - 1)(rng)];
  const auto& b = tp[std::uniform_int_distribution<std::size_t>(0, tp.size() - 1)(rng)];
  ConversationInput conv;
  conv.id = "conv-" + std::to_string(seed);
  conv.turns.push_back({"A", "I keep thinking about the " + pick(a) + " and the " + pick(a) + "."});
  conv.turns.push_back({"B", "Was it " + pick(adjectives()) + "? My " + pick(b) + " was too."});
  if (std::uniform_int_distribution<int>(0, 1)(rng)) {
    conv.turns.push_back({"A", "Yes, and then the " + pick(b) + " " + pick(verbs()) + " everything."});
  }
  return conv;
}

}  // namespace fixture
