#pragma once

// Rollout-free Monte Carlo tree search over a KnowledgeIndex.
//
// A state is (context, sentence, marked concept, depth). The actions of a
// state are the sentences of the marked concept's node group (the root uses
// an explicit candidate list). Leaves are scored by a task critic instead of
// a rollout, and the value is backed up along the selected path.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "kbwalk/errors.hpp"
#include "kbwalk/ids.hpp"
#include "kbwalk/kb_core.hpp"
#include "kbwalk/simmath.hpp"

namespace kbwalk {

struct SearchConfig {
  std::size_t horizon = 3;          // maximum chain length
  std::size_t candidate_pool = 50;  // similarity-pruned candidates per expansion
  std::size_t branch = 5;           // children per expansion, and chains returned
  double c_puct = 0.70710678118654752440;
  std::size_t simulations = 100;
  std::uint64_t seed = 0;
  double temperature = 1.0;  // softmax temperature for child priors

  void validate() const {
    if (horizon < 1) throw PreconditionError("search: horizon must be at least 1");
    if (branch < 1) throw PreconditionError("search: branch must be at least 1");
    if (branch > candidate_pool) throw PreconditionError("search: branch exceeds candidate_pool");
    if (simulations < 1) throw PreconditionError("search: simulations must be at least 1");
    if (!(c_puct >= 0.0)) throw PreconditionError("search: c_puct must be non-negative");
    if (!(temperature > 0.0)) throw PreconditionError("search: temperature must be positive");
  }

  bool operator==(const SearchConfig&) const = default;
};

struct SearchState {
  std::string_view context;
  std::optional<SentenceId> sentence;  // absent at the root
  std::optional<ConceptId> marked_concept;
  std::size_t depth = 0;
};

struct SearchNode {
  SearchState state;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  std::uint64_t visits = 0;
  double total_value = 0.0;
  double prior = 0.0;
  std::optional<double> critic;        // cached critic value of this state
  std::uint64_t self_evaluations = 0;  // backups that started at this node
  bool expanded = false;
  bool terminal = false;  // expanded with no admissible candidate

  double mean_value() const noexcept {
    return visits ? total_value / static_cast<double>(visits) : 0.0;
  }
  SentenceId action() const { return *state.sentence; }
};

/// Q + c_puct * P * sqrt(N_parent) / (1 + N_child), with Q = 0 when unvisited.
inline double puct_score(const SearchNode& child, std::uint64_t parent_visits, double c_puct) {
  const double exploration = c_puct * child.prior * std::sqrt(static_cast<double>(parent_visits)) /
                             (1.0 + static_cast<double>(child.visits));
  return child.mean_value() + exploration;
}

/// Arena of nodes; node 0 is the root.
class SearchTree {
 public:
  SearchTree(SearchState root_state, std::vector<SentenceId> root_candidates)
      : root_candidates_(std::move(root_candidates)) {
    SearchNode root;
    root.state = root_state;
    nodes_.push_back(std::move(root));
  }

  static constexpr std::size_t root() noexcept { return 0; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const SearchNode& node(std::size_t i) const { return nodes_.at(i); }
  SearchNode& node(std::size_t i) { return nodes_.at(i); }
  std::span<const SearchNode> nodes() const noexcept { return nodes_; }
  std::span<const SentenceId> root_candidates() const noexcept { return root_candidates_; }

  std::size_t add_child(std::size_t parent, SearchState state, double prior) {
    SearchNode child;
    child.state = state;
    child.parent = parent;
    child.prior = prior;
    nodes_.push_back(std::move(child));
    nodes_[parent].children.push_back(nodes_.size() - 1);
    return nodes_.size() - 1;
  }

  /// Sentences on the path from the root to `i`, root side first.
  std::vector<SentenceId> path_sentences(std::size_t i) const {
    std::vector<SentenceId> path;
    for (std::optional<std::size_t> at = i; at; at = nodes_.at(*at).parent) {
      if (nodes_[*at].state.sentence) path.push_back(*nodes_[*at].state.sentence);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  /// N += 1 and W += value for `leaf` and all its ancestors.
  void backpropagate(std::size_t leaf, double value) {
    ++nodes_.at(leaf).self_evaluations;
    for (std::optional<std::size_t> at = leaf; at; at = nodes_[*at].parent) {
      ++nodes_[*at].visits;
      nodes_[*at].total_value += value;
    }
  }

  /// Structural invariants; throws Error describing the first violation.
  void audit(const KnowledgeIndex& index, std::size_t horizon) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      const auto where = "node " + std::to_string(i) + ": ";
      std::uint64_t child_visits = 0;
      double prior_sum = 0.0;
      for (std::size_t c : n.children) {
        child_visits += nodes_[c].visits;
        prior_sum += nodes_[c].prior;
        if (nodes_[c].parent != i) throw Error(where + "child with wrong parent");
        if (nodes_[c].state.depth != n.state.depth + 1) throw Error(where + "child depth");
      }
      if (n.visits != child_visits + n.self_evaluations) {
        throw Error(where + "visit count is not children + own evaluations");
      }
      if (!n.children.empty() && std::abs(prior_sum - 1.0) > 1e-6) {
        throw Error(where + "sibling priors do not sum to 1");
      }
      if (n.state.depth > horizon) throw Error(where + "depth beyond horizon");
      if (i == root()) {
        if (n.self_evaluations != 0) throw Error(where + "root was evaluated");
        continue;
      }
      if (!n.state.sentence || !n.state.marked_concept) throw Error(where + "missing sentence");
      const auto& concepts = index.sentence(*n.state.sentence).concepts;
      if (std::find(concepts.begin(), concepts.end(), *n.state.marked_concept) == concepts.end()) {
        throw Error(where + "marked concept not in sentence");
      }
      if (n.visits > 0 && n.self_evaluations == 0) throw Error(where + "visited but never evaluated");
      if (!n.children.empty() && n.self_evaluations > 1) {
        throw Error(where + "interior node evaluated more than once");
      }
    }
  }

 private:
  std::vector<SearchNode> nodes_;
  std::vector<SentenceId> root_candidates_;
};

/// The scorers an instantiation plugs into the search.
///   admits(s)       - whether sentence s may be an action at all
///   prune_score(s)  - similarity used to cut candidates to candidate_pool
///   policy_score(s) - ranks the pool; its softmax gives child priors
///   mark(s)         - concept of s marked for the next hop
///   critic(state)   - leaf value
template <typename T>
concept SearchTask = requires(const T& task, SentenceId s, const SearchState& state) {
  { task.admits(s) } -> std::convertible_to<bool>;
  { task.prune_score(s) } -> std::convertible_to<double>;
  { task.policy_score(s) } -> std::convertible_to<double>;
  { task.mark(s) } -> std::convertible_to<ConceptId>;
  { task.critic(state) } -> std::convertible_to<double>;
};

struct ChainStep {
  SentenceId sentence;
  ConceptId marked_concept;
  double critic_score = 0.0;

  bool operator==(const ChainStep&) const = default;
};

struct KnowledgeChain {
  std::vector<ChainStep> steps;
  double total_value = 0.0;  // sum of step critic scores

  double leaf_value() const { return steps.empty() ? 0.0 : steps.back().critic_score; }
  bool operator==(const KnowledgeChain&) const = default;
};

struct TraceRecord {
  std::size_t iteration = 0;
  std::vector<SentenceId> path;
  double value = 0.0;
  SentenceId chosen_action;
};

using TraceSink = std::function<void(const TraceRecord&)>;

/// Called with the tree after every simulation's backup.
using TreeObserver = std::function<void(const SearchTree&)>;

/// Trace sink writing one JSON object per simulation:
/// {"iter":i,"path":[ids],"value":v,"chosen_action":id}
inline TraceSink jsonl_trace(std::ostream& out) {
  return [&out](const TraceRecord& r) {
    nlohmann::ordered_json j;
    j["iter"] = r.iteration;
    j["path"] = nlohmann::ordered_json::array();
    for (SentenceId s : r.path) j["path"].push_back(s.value);
    j["value"] = r.value;
    j["chosen_action"] = r.chosen_action.value;
    out << j.dump() << '\n';
  };
}

struct SearchResult {
  SearchTree tree;
  std::vector<KnowledgeChain> chains;  // principal chain first
};

namespace detail {

struct Scored {
  SentenceId id;
  double score;
};

inline void keep_top(std::vector<Scored>& items, std::size_t limit) {
  const auto better = [](const Scored& a, const Scored& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  };
  if (items.size() > limit) {
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(limit), items.end(),
                      better);
    items.resize(limit);
  } else {
    std::sort(items.begin(), items.end(), better);
  }
}

// Most-visited child, then higher mean value, then lower action id.
inline bool more_visited(const SearchNode& a, const SearchNode& b) {
  if (a.visits != b.visits) return a.visits > b.visits;
  if (a.mean_value() != b.mean_value()) return a.mean_value() > b.mean_value();
  return a.action() < b.action();
}

}  // namespace detail

/// Candidate actions of `node` before pruning: the marked concept's group
/// sentences (root: the tree's root candidates), minus sentences already on
/// the path and sentences the task does not admit. Ascending id order.
template <SearchTask Task>
std::vector<SentenceId> action_candidates(const SearchTree& tree, std::size_t node,
                                          const KnowledgeIndex& index, const Task& task) {
  const auto& n = tree.node(node);
  const std::span<const SentenceId> pool =
      node == SearchTree::root() ? tree.root_candidates()
                                 : std::span<const SentenceId>(index.group_sentences(*n.state.marked_concept));
  const auto path = tree.path_sentences(node);
  std::vector<SentenceId> out;
  for (SentenceId s : pool) {
    if (std::find(path.begin(), path.end(), s) != path.end()) continue;
    if (!task.admits(s)) continue;
    out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Instantiates up to `branch` children of an unexpanded node. Candidates are
/// cut to `candidate_pool` by prune score, the best `branch` by policy score
/// become children, and child priors are the softmax of those policy scores.
/// A node with no candidates is marked terminal.
template <SearchTask Task>
std::vector<std::size_t> expand(SearchTree& tree, std::size_t node, const KnowledgeIndex& index,
                                const Task& task, const SearchConfig& config) {
  if (tree.node(node).expanded) throw PreconditionError("expand: node already expanded");
  if (tree.node(node).state.depth >= config.horizon) {
    throw PreconditionError("expand: node is at the search horizon");
  }
  const auto candidates = action_candidates(tree, node, index, task);
  tree.node(node).expanded = true;
  if (candidates.empty()) {
    tree.node(node).terminal = true;
    return {};
  }
  if constexpr (requires { task.prefetch(std::span<const SentenceId>(candidates)); }) {
    task.prefetch(std::span<const SentenceId>(candidates));
  }
  std::vector<detail::Scored> scored;
  scored.reserve(candidates.size());
  for (SentenceId s : candidates) scored.push_back({s, static_cast<double>(task.prune_score(s))});
  detail::keep_top(scored, config.candidate_pool);
  for (auto& item : scored) item.score = static_cast<double>(task.policy_score(item.id));
  detail::keep_top(scored, config.branch);

  std::vector<double> policy;
  policy.reserve(scored.size());
  for (const auto& item : scored) policy.push_back(item.score);
  const auto priors = policy_weights(policy, config.temperature);

  const SearchState parent_state = tree.node(node).state;
  std::vector<std::size_t> children;
  children.reserve(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    SearchState state;
    state.context = parent_state.context;
    state.sentence = scored[i].id;
    state.marked_concept = static_cast<ConceptId>(task.mark(scored[i].id));
    state.depth = parent_state.depth + 1;
    children.push_back(tree.add_child(node, state, priors[i]));
  }
  return children;
}

/// Free-function form of SearchTree::backpropagate.
inline void backpropagate(SearchTree& tree, std::size_t leaf, double value) {
  tree.backpropagate(leaf, value);
}

namespace detail {

inline std::size_t select_child(const SearchTree& tree, std::size_t node, double c_puct) {
  const auto& n = tree.node(node);
  std::size_t best = n.children.front();
  double best_score = puct_score(tree.node(best), n.visits, c_puct);
  for (std::size_t i = 1; i < n.children.size(); ++i) {
    const std::size_t c = n.children[i];
    const double score = puct_score(tree.node(c), n.visits, c_puct);
    if (score > best_score || (score == best_score && tree.node(c).action() < tree.node(best).action())) {
      best = c;
      best_score = score;
    }
  }
  return best;
}

inline KnowledgeChain descend(const SearchTree& tree, std::size_t start, bool include_start) {
  KnowledgeChain chain;
  auto push = [&](std::size_t i) {
    const auto& n = tree.node(i);
    chain.steps.push_back({*n.state.sentence, *n.state.marked_concept, n.critic.value_or(0.0)});
    chain.total_value += chain.steps.back().critic_score;
  };
  if (include_start) push(start);
  std::size_t at = start;
  while (true) {
    std::optional<std::size_t> best;
    for (std::size_t c : tree.node(at).children) {
      if (tree.node(c).visits == 0) continue;
      if (!best || more_visited(tree.node(c), tree.node(*best))) best = c;
    }
    if (!best) break;
    push(*best);
    at = *best;
  }
  return chain;
}

}  // namespace detail

/// Principal chain (most-visited descent from the root) followed by up to
/// branch - 1 alternates, each starting at another visited root child in
/// order of visits.
inline std::vector<KnowledgeChain> extract_chains(const SearchTree& tree, std::size_t branch) {
  std::vector<std::size_t> visited;
  for (std::size_t c : tree.node(SearchTree::root()).children) {
    if (tree.node(c).visits > 0) visited.push_back(c);
  }
  std::sort(visited.begin(), visited.end(), [&](std::size_t a, std::size_t b) {
    return detail::more_visited(tree.node(a), tree.node(b));
  });
  std::vector<KnowledgeChain> chains;
  for (std::size_t i = 0; i < visited.size() && chains.size() < branch; ++i) {
    chains.push_back(detail::descend(tree, visited[i], true));
  }
  return chains;
}

/// Runs `config.simulations` select/expand/evaluate/backup iterations from a
/// root whose actions are `root_candidates`.
template <SearchTask Task>
SearchResult search(const KnowledgeIndex& index, std::string_view context,
                    std::vector<SentenceId> root_candidates, const Task& task,
                    const SearchConfig& config, const TraceSink& trace = {},
                    const TreeObserver& observer = {}) {
  config.validate();
  SearchState root_state;
  root_state.context = context;
  SearchTree tree(root_state, std::move(root_candidates));
  auto evaluate = [&](std::size_t i) {
    auto& n = tree.node(i);
    if (!n.critic) n.critic = static_cast<double>(task.critic(n.state));
    return *n.critic;
  };
  for (std::size_t iter = 0; iter < config.simulations; ++iter) {
    std::size_t at = SearchTree::root();
    std::optional<std::size_t> leaf;
    while (!leaf) {
      if (!tree.node(at).expanded && tree.node(at).state.depth < config.horizon) {
        expand(tree, at, index, task, config);
      }
      if (tree.node(at).children.empty()) {
        if (at == SearchTree::root()) break;  // nothing to search
        leaf = at;
        break;
      }
      const std::size_t child = detail::select_child(tree, at, config.c_puct);
      if (tree.node(child).visits == 0) {
        leaf = child;
      } else {
        at = child;
      }
    }
    if (!leaf) break;
    const double value = evaluate(*leaf);
    tree.backpropagate(*leaf, value);
    if (trace) trace(TraceRecord{iter, tree.path_sentences(*leaf), value, tree.node(*leaf).action()});
    if (observer) observer(tree);
  }
  auto chains = extract_chains(tree, config.branch);
  return SearchResult{std::move(tree), std::move(chains)};
}

/// Resolves seed surfaces against the index, dropping unknown ones. Throws
/// LookupError naming every surface when none resolves.
inline std::vector<ConceptId> resolve_seeds(const KnowledgeIndex& index,
                                            std::span<const std::string> surfaces) {
  std::vector<ConceptId> out;
  std::vector<std::string> missing;
  for (const auto& s : surfaces) {
    if (auto id = index.find_concept(to_lower(trim(s)))) {
      if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    } else {
      missing.push_back(s);
    }
  }
  if (out.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw LookupError("no seed concept resolves in the index: " +
                      (names.empty() ? std::string("(none given)") : names));
  }
  return out;
}

/// Union of the seeds' group sentences, ascending.
inline std::vector<SentenceId> seed_candidates(const KnowledgeIndex& index,
                                               std::span<const ConceptId> seeds) {
  std::vector<SentenceId> out;
  for (ConceptId c : seeds) {
    const auto& ids = index.group_sentences(c);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Search rooted at the context's seed concepts.
template <SearchTask Task>
SearchResult search_from_seeds(const KnowledgeIndex& index, std::string_view context,
                               std::span<const ConceptId> seeds, const Task& task,
                               const SearchConfig& config, const TraceSink& trace = {}) {
  if (seeds.empty()) throw PreconditionError("search: no seed concepts");
  return search(index, context, seed_candidates(index, seeds), task, config, trace);
}

}  // namespace kbwalk
