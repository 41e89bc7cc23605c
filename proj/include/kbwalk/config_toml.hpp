#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include <toml.hpp>

#include "kbwalk/errors.hpp"
#include "kbwalk/pipeline.hpp"

namespace kbwalk {

namespace detail {

inline void reject_unknown(const toml::table& table, std::string_view where,
                           std::initializer_list<std::string_view> known) {
  for (const auto& [key, node] : table) {
    bool ok = false;
    for (auto k : known) ok = ok || key.str() == k;
    if (!ok) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + std::string(where));
    }
  }
}

inline const toml::table* section(const toml::table& root, std::string_view name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  if (!node->is_table()) throw ConfigError("'" + std::string(name) + "' must be a table");
  return node->as_table();
}

template <typename T>
void read_value(const toml::table& t, std::string_view where, std::string_view key, T& out) {
  const auto* node = t.get(key);
  if (!node) return;
  const std::string name = std::string(where) + "." + std::string(key);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!node->is_string()) throw ConfigError(name + " must be a string");
    out = node->as_string()->get();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (node->is_floating_point()) {
      out = node->as_floating_point()->get();
    } else if (node->is_integer()) {
      out = static_cast<T>(node->as_integer()->get());
    } else {
      throw ConfigError(name + " must be a number");
    }
  } else {
    if (!node->is_integer()) throw ConfigError(name + " must be an integer");
    const std::int64_t v = node->as_integer()->get();
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) throw ConfigError(name + " must be non-negative");
    }
    if (v < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
        (v > 0 && static_cast<std::uint64_t>(v) > std::numeric_limits<T>::max())) {
      throw ConfigError(name + " is out of range");
    }
    out = static_cast<T>(v);
  }
}

inline std::int64_t as_toml_int(std::uint64_t v, std::string_view name) {
  if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw ConfigError(std::string(name) + " does not fit a TOML integer");
  }
  return static_cast<std::int64_t>(v);
}

}  // namespace detail

/// Parses a TOML configuration. Absent keys keep their defaults; unknown keys
/// and wrongly typed values raise ConfigError. The result is validated.
inline PipelineConfig parse_config(std::string_view text, std::string_view source = "config") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  PipelineConfig c;
  using detail::read_value;
  detail::reject_unknown(root, "config",
                         {"seed", "context_window", "threads", "search", "reasoner", "bridging",
                          "retrieval", "providers"});
  read_value(root, "config", "seed", c.seed);
  read_value(root, "config", "context_window", c.context_window);
  read_value(root, "config", "threads", c.threads);

  if (const auto* t = detail::section(root, "search")) {
    detail::reject_unknown(*t, "search",
                           {"horizon", "candidate_pool", "branch", "c_puct", "simulations", "seed",
                            "temperature"});
    read_value(*t, "search", "horizon", c.search.horizon);
    read_value(*t, "search", "candidate_pool", c.search.candidate_pool);
    read_value(*t, "search", "branch", c.search.branch);
    read_value(*t, "search", "c_puct", c.search.c_puct);
    read_value(*t, "search", "simulations", c.search.simulations);
    read_value(*t, "search", "seed", c.search.seed);
    read_value(*t, "search", "temperature", c.search.temperature);
  }
  if (const auto* t = detail::section(root, "reasoner")) {
    detail::reject_unknown(*t, "reasoner", {"k_select", "n_per_relation", "relations"});
    read_value(*t, "reasoner", "k_select", c.reasoner.k_select);
    read_value(*t, "reasoner", "n_per_relation", c.reasoner.n_per_relation);
    if (const auto* node = t->get("relations")) {
      const auto* arr = node->as_array();
      if (!arr) throw ConfigError("reasoner.relations must be an array of names");
      c.reasoner.relations.clear();
      for (const auto& item : *arr) {
        const auto* name = item.as_string();
        if (!name) throw ConfigError("reasoner.relations must be an array of names");
        try {
          c.reasoner.relations.push_back(parse_relation(name->get()));
        } catch (const Error& e) {
          throw ConfigError(std::string("reasoner.relations: ") + e.what());
        }
      }
    }
  }
  if (const auto* t = detail::section(root, "bridging")) {
    detail::reject_unknown(*t, "bridging", {"lambda", "cluster_threshold"});
    read_value(*t, "bridging", "lambda", c.bridging.lambda);
    read_value(*t, "bridging", "cluster_threshold", c.bridging.cluster_threshold);
  }
  if (const auto* t = detail::section(root, "retrieval")) {
    detail::reject_unknown(*t, "retrieval", {"length_weight", "max_tokens"});
    read_value(*t, "retrieval", "length_weight", c.retrieval.length_weight);
    read_value(*t, "retrieval", "max_tokens", c.retrieval.max_tokens);
  }
  if (const auto* t = detail::section(root, "providers")) {
    detail::reject_unknown(*t, "providers",
                           {"embedding", "inference", "entailment", "timeout_ms", "retries"});
    read_value(*t, "providers", "embedding", c.providers.embedding);
    read_value(*t, "providers", "inference", c.providers.inference);
    read_value(*t, "providers", "entailment", c.providers.entailment);
    read_value(*t, "providers", "timeout_ms", c.providers.timeout_ms);
    read_value(*t, "providers", "retries", c.providers.retries);
  }
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline std::string serialize_config(const PipelineConfig& c) {
  using detail::as_toml_int;
  toml::table root;
  root.insert("seed", as_toml_int(c.seed, "seed"));
  root.insert("context_window", as_toml_int(c.context_window, "context_window"));
  root.insert("threads", as_toml_int(c.threads, "threads"));

  toml::table search;
  search.insert("horizon", as_toml_int(c.search.horizon, "search.horizon"));
  search.insert("candidate_pool", as_toml_int(c.search.candidate_pool, "search.candidate_pool"));
  search.insert("branch", as_toml_int(c.search.branch, "search.branch"));
  search.insert("c_puct", c.search.c_puct);
  search.insert("simulations", as_toml_int(c.search.simulations, "search.simulations"));
  search.insert("seed", as_toml_int(c.search.seed, "search.seed"));
  search.insert("temperature", c.search.temperature);
  root.insert("search", std::move(search));

  toml::table reasoner;
  reasoner.insert("k_select", as_toml_int(c.reasoner.k_select, "reasoner.k_select"));
  reasoner.insert("n_per_relation", as_toml_int(c.reasoner.n_per_relation, "reasoner.n_per_relation"));
  toml::array relations;
  for (Relation r : c.reasoner.relations) relations.push_back(std::string(relation_name(r)));
  reasoner.insert("relations", std::move(relations));
  root.insert("reasoner", std::move(reasoner));

  toml::table bridging;
  bridging.insert("lambda", c.bridging.lambda);
  bridging.insert("cluster_threshold", c.bridging.cluster_threshold);
  root.insert("bridging", std::move(bridging));

  toml::table retrieval;
  retrieval.insert("length_weight", c.retrieval.length_weight);
  retrieval.insert("max_tokens", as_toml_int(c.retrieval.max_tokens, "retrieval.max_tokens"));
  root.insert("retrieval", std::move(retrieval));

  toml::table providers;
  providers.insert("embedding", c.providers.embedding);
  providers.insert("inference", c.providers.inference);
  providers.insert("entailment", c.providers.entailment);
  providers.insert("timeout_ms", c.providers.timeout_ms);
  providers.insert("retries", static_cast<std::int64_t>(c.providers.retries));
  root.insert("providers", std::move(providers));

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

/// Config path to use: KBWALK_CONFIG when set and non-empty, else `flag`.
inline std::string config_path(const std::string& flag) {
  if (const char* env = std::getenv("KBWALK_CONFIG"); env && *env) return env;
  return flag;
}

}  // namespace kbwalk
