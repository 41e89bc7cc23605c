#pragma once

// End-to-end orchestration: reason over the conversation, bridge its
// concepts into a sub-region once, then retrieve knowledge for every
// selected inference inside that sub-region with a shared history.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kbwalk/bridging.hpp"
#include "kbwalk/errors.hpp"
#include "kbwalk/kb_core.hpp"
#include "kbwalk/mcts.hpp"
#include "kbwalk/providers.hpp"
#include "kbwalk/reasoner.hpp"
#include "kbwalk/remote.hpp"
#include "kbwalk/retrieval.hpp"
#include "kbwalk/text.hpp"
#include "kbwalk/vector_store.hpp"

namespace kbwalk {

struct BridgingConfig {
  double lambda = kDefaultBridgeLambda;
  double cluster_threshold = 0.6;

  bool operator==(const BridgingConfig&) const = default;
};

struct RetrievalConfig {
  double length_weight = kDefaultLengthWeight;
  std::size_t max_tokens = kDefaultMaxTokens;

  bool operator==(const RetrievalConfig&) const = default;
};

/// Provider selectors: "stub", "stub:<dim>" (embedding only),
/// "file:<path>" (embedding only) or an "http://" base url.
struct ProviderConfig {
  std::string embedding = "stub";
  std::string inference = "stub";
  std::string entailment = "stub";
  std::int64_t timeout_ms = 30'000;
  int retries = 2;

  bool operator==(const ProviderConfig&) const = default;
};

struct PipelineConfig {
  SearchConfig search;
  ReasonerConfig reasoner;
  BridgingConfig bridging;
  RetrievalConfig retrieval;
  ProviderConfig providers;
  std::uint64_t seed = 0;  // seeds the stub inferencer
  std::size_t context_window = 4;
  std::size_t threads = 1;

  void validate() const {
    search.validate();
    if (reasoner.k_select == 0) throw ConfigError("reasoner.k_select must be at least 1");
    if (reasoner.n_per_relation == 0) throw ConfigError("reasoner.n_per_relation must be at least 1");
    if (reasoner.relations.empty()) throw ConfigError("reasoner.relations must not be empty");
    if (!(bridging.cluster_threshold >= 0.0 && bridging.cluster_threshold <= 1.0)) {
      throw ConfigError("bridging.cluster_threshold must lie in [0,1]");
    }
    if (retrieval.max_tokens == 0) throw ConfigError("retrieval.max_tokens must be positive");
    if (context_window == 0) throw ConfigError("context_window must be at least 1");
    if (threads == 0) throw ConfigError("threads must be at least 1");
    if (providers.timeout_ms <= 0) throw ConfigError("providers.timeout_ms must be positive");
    if (providers.retries < 0) throw ConfigError("providers.retries must be non-negative");
  }

  bool operator==(const PipelineConfig&) const = default;
};

struct ProviderSet {
  std::shared_ptr<const EmbeddingProvider> embedder;
  std::shared_ptr<const InferenceProvider> inferencer;
  std::shared_ptr<const EntailmentProvider> entailer;
};

namespace detail {

inline bool is_url(std::string_view s) {
  return s.starts_with("http://");
}

inline std::shared_ptr<const RemoteClient> remote_client(const std::string& url,
                                                         const ProviderConfig& cfg) {
  RemoteConfig rc;
  rc.base_url = url;
  rc.timeout = std::chrono::milliseconds(cfg.timeout_ms);
  rc.retries = cfg.retries;
  return std::make_shared<const RemoteClient>(std::move(rc));
}

}  // namespace detail

/// Builds the configured providers; the embedder is wrapped in a shared cache.
inline ProviderSet make_providers(const ProviderConfig& cfg, std::uint64_t seed) {
  ProviderSet set;
  std::shared_ptr<const EmbeddingProvider> embedder;
  if (cfg.embedding == "stub") {
    embedder = std::make_shared<const StubEmbedder>();
  } else if (cfg.embedding.starts_with("stub:")) {
    const std::string_view digits = std::string_view(cfg.embedding).substr(5);
    std::size_t dim = 0;
    const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), dim);
    if (ec != std::errc{} || end != digits.data() + digits.size() || dim == 0) {
      throw ConfigError("bad stub embedding dimension in '" + cfg.embedding + "'");
    }
    embedder = std::make_shared<const StubEmbedder>(dim);
  } else if (cfg.embedding.starts_with("file:")) {
    embedder = std::make_shared<const FileVectorStore>(FileVectorStore::load(cfg.embedding.substr(5)));
  } else if (detail::is_url(cfg.embedding)) {
    embedder = std::make_shared<const RemoteEmbedder>(detail::remote_client(cfg.embedding, cfg));
  } else {
    throw ConfigError("unknown embedding provider '" + cfg.embedding + "'");
  }
  set.embedder = std::make_shared<const CachedEmbedder>(std::move(embedder));

  if (cfg.inference == "stub") {
    set.inferencer = std::make_shared<const StubInferencer>(seed);
  } else if (detail::is_url(cfg.inference)) {
    set.inferencer = std::make_shared<const RemoteInferencer>(detail::remote_client(cfg.inference, cfg));
  } else {
    throw ConfigError("unknown inference provider '" + cfg.inference + "'");
  }

  if (cfg.entailment == "stub") {
    set.entailer = std::make_shared<const StubEntailer>();
  } else if (detail::is_url(cfg.entailment)) {
    set.entailer = std::make_shared<const RemoteEntailer>(detail::remote_client(cfg.entailment, cfg));
  } else {
    throw ConfigError("unknown entailment provider '" + cfg.entailment + "'");
  }
  return set;
}

struct Turn {
  std::string speaker;
  std::string text;
};

struct ConversationInput {
  std::string id;
  std::vector<Turn> turns;
};

/// Last `window` turns as "Speaker: text" lines.
inline std::string context_string(const ConversationInput& conv, std::size_t window) {
  if (conv.turns.empty()) throw PreconditionError("conversation '" + conv.id + "' has no turns");
  const std::size_t first = conv.turns.size() > window ? conv.turns.size() - window : 0;
  std::string out;
  for (std::size_t i = first; i < conv.turns.size(); ++i) {
    if (!out.empty()) out += '\n';
    out += conv.turns[i].speaker + ": " + conv.turns[i].text;
  }
  return out;
}

/// Explicit concepts of the last `window` turns, from the turn texts only.
inline std::vector<std::string> context_concepts(const ConversationInput& conv, std::size_t window) {
  const std::size_t first = conv.turns.size() > window ? conv.turns.size() - window : 0;
  std::string joined;
  for (std::size_t i = first; i < conv.turns.size(); ++i) joined += conv.turns[i].text + '\n';
  return extract_concepts(joined);
}

inline ConversationInput parse_conversation(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j.contains("turns") || !j["turns"].is_array()) {
    throw PreconditionError("conversation needs \"id\" and a \"turns\" array");
  }
  ConversationInput conv;
  conv.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  for (const auto& t : j["turns"]) {
    if (!t.is_object() || !t.contains("speaker") || !t.contains("text") ||
        !t["speaker"].is_string() || !t["text"].is_string()) {
      throw PreconditionError("conversation '" + conv.id + "': turn needs string speaker and text");
    }
    conv.turns.push_back({t["speaker"].get<std::string>(), t["text"].get<std::string>()});
  }
  if (conv.turns.empty()) throw PreconditionError("conversation '" + conv.id + "' has no turns");
  return conv;
}

/// One conversation object per non-blank line.
inline std::vector<ConversationInput> read_conversations(std::istream& in) {
  std::vector<ConversationInput> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_conversation(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw PreconditionError("conversation line " + std::to_string(lineno) + ": " + e.what());
    } catch (const PreconditionError& e) {
      throw PreconditionError("conversation line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// A pipeline failure tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ConversationResult {
  std::string conversation_id;
  std::vector<RetrievalResult> results;  // descending inference confidence
  std::vector<std::string> warnings;
  std::size_t subregion_size = 0;
};

namespace detail {

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

inline ConversationResult run_pipeline(const ConversationInput& conv, const KnowledgeIndex& index,
                                       const PipelineConfig& config, const ProviderSet& providers) {
  ConversationResult out;
  out.conversation_id = conv.id;
  const std::string context =
      detail::in_stage("input", [&] { return context_string(conv, config.context_window); });

  auto inferences = detail::in_stage("reason", [&] {
    return reason(context, *providers.inferencer, *providers.embedder, config.reasoner);
  });
  if (inferences.empty()) {
    out.warnings.push_back("reasoner produced no inferences for '" + conv.id + "'");
    return out;
  }

  const SubRegion region = detail::in_stage("bridge", [&] {
    const auto surfaces = context_concepts(conv, config.context_window);
    const auto query = make_bridge_query(index, context, surfaces, config.bridging.lambda);
    return build_subregion(query, index, *providers.embedder, config.search);
  });
  out.subregion_size = region.size();

  detail::in_stage("retrieve", [&] {
    std::vector<ProviderVector> history;
    for (auto& inf : inferences) {
      RetrievalQuery q;
      q.context = context;
      q.inference = std::move(inf);
      q.history = std::move(history);
      q.length_weight = config.retrieval.length_weight;
      q.max_tokens = config.retrieval.max_tokens;
      out.results.push_back(
          retrieve_for_inference(q, region, index, *providers.embedder, config.search));
      history = std::move(q.history);
    }
  });
  return out;
}

struct BatchItem {
  std::string conversation_id;
  std::optional<ConversationResult> result;
  std::optional<std::string> error;  // stage-tagged
};

/// Runs every conversation on a pool of `config.threads` workers over the
/// shared index. Items come back in input order; a failing conversation
/// records its error and the batch moves on.
inline std::vector<BatchItem> run_batch(std::span<const ConversationInput> convs,
                                        const KnowledgeIndex& index, const PipelineConfig& config,
                                        const ProviderSet& providers) {
  std::vector<BatchItem> items(convs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < convs.size(); i = next++) {
      items[i].conversation_id = convs[i].id;
      try {
        items[i].result = run_pipeline(convs[i], index, config, providers);
      } catch (const std::exception& e) {
        items[i].error = e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, convs.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  return items;
}

inline nlohmann::ordered_json chain_json(const KnowledgeChain& chain, const KnowledgeIndex& index) {
  nlohmann::ordered_json j;
  j["value"] = chain.total_value;
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& step : chain.steps) {
    nlohmann::ordered_json s;
    s["sentence_id"] = to_string(step.sentence);
    s["text"] = index.sentence(step.sentence).text;
    s["marked_concept"] = index.concept_node(step.marked_concept).surface;
    s["critic"] = step.critic_score;
    j["steps"].push_back(std::move(s));
  }
  return j;
}

/// One record per (conversation, inference).
inline nlohmann::ordered_json result_json(const std::string& conversation_id,
                                          const RetrievalResult& r, const KnowledgeIndex& index) {
  nlohmann::ordered_json j;
  j["conversation_id"] = conversation_id;
  j["inference"]["relation"] = std::string(relation_name(r.inference.candidate.relation));
  j["inference"]["text"] = r.inference.candidate.text;
  j["inference"]["confidence"] = r.inference.confidence;
  j["chains"] = nlohmann::ordered_json::array();
  for (const auto& c : r.chains) j["chains"].push_back(chain_json(c, index));
  j["knowledge"] = nlohmann::ordered_json::array();
  for (const auto& k : r.flat_knowledge) {
    nlohmann::ordered_json item;
    item["id"] = to_string(k.id);
    item["text"] = index.sentence(k.id).text;
    item["score"] = k.score;
    j["knowledge"].push_back(std::move(item));
  }
  return j;
}

inline void write_results_jsonl(const ConversationResult& conv, const KnowledgeIndex& index,
                                std::ostream& out) {
  for (const auto& r : conv.results) out << result_json(conv.conversation_id, r, index).dump() << '\n';
}

}  // namespace kbwalk
