#pragma once

// HTTP client for the model-serving wire protocol:
//
//   POST /v1/embed  {"texts":[s,...]}                 -> {"dim":d,"vectors":[[f,...],...]}
//   POST /v1/infer  {"context":s,"relation":r,"n":k}  -> {"candidates":[{"text":s,"token_probs":[f,...]},...]}
//   POST /v1/entail {"premise":s,"hypothesis":s}      -> {"score":f}
//
// Non-200 responses carry {"error":s}.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "kbwalk/errors.hpp"
#include "kbwalk/providers.hpp"

namespace kbwalk {

struct RemoteConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  std::chrono::milliseconds timeout{30'000};
  int retries = 2;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
};

namespace wire {

using ordered_json = nlohmann::ordered_json;

inline std::string embed_request(std::span<const std::string> texts) {
  ordered_json body;
  body["texts"] = ordered_json::array();
  for (const auto& t : texts) body["texts"].push_back(t);
  return body.dump();
}

inline std::string infer_request(const std::string& context, Relation relation, std::size_t n) {
  ordered_json body;
  body["context"] = context;
  body["relation"] = std::string(relation_name(relation));
  body["n"] = n;
  return body.dump();
}

inline std::string entail_request(const std::string& premise, const std::string& hypothesis) {
  ordered_json body;
  body["premise"] = premise;
  body["hypothesis"] = hypothesis;
  return body.dump();
}

inline std::vector<ProviderVector> parse_embed_response(const std::string& body,
                                                        std::size_t expected) {
  const auto j = nlohmann::json::parse(body);
  const auto dim = j.at("dim").get<std::size_t>();
  const auto& vectors = j.at("vectors");
  if (!vectors.is_array() || vectors.size() != expected) {
    throw ProviderError("embed response: expected " + std::to_string(expected) + " vectors");
  }
  std::vector<ProviderVector> out;
  out.reserve(expected);
  for (const auto& v : vectors) {
    auto values = v.get<std::vector<double>>();
    if (values.size() != dim) throw ProviderError("embed response: vector dimension mismatch");
    out.push_back(ProviderVector::normalized(std::move(values), Provenance::remote));
  }
  return out;
}

inline std::vector<InferenceCandidate> parse_infer_response(const std::string& body,
                                                            Relation relation, std::size_t n) {
  const auto j = nlohmann::json::parse(body);
  std::vector<InferenceCandidate> out;
  for (const auto& c : j.at("candidates")) {
    if (out.size() == n) break;
    InferenceCandidate cand;
    cand.relation = relation;
    cand.text = c.at("text").get<std::string>();
    cand.token_probs = c.at("token_probs").get<std::vector<double>>();
    if (cand.token_probs.empty()) throw ProviderError("infer response: empty token_probs");
    for (double p : cand.token_probs) {
      if (!(p > 0.0 && p <= 1.0)) throw ProviderError("infer response: token prob out of (0,1]");
    }
    out.push_back(std::move(cand));
  }
  return out;
}

inline double parse_entail_response(const std::string& body) {
  const auto j = nlohmann::json::parse(body);
  const double score = j.at("score").get<double>();
  if (!(score >= 0.0 && score <= 1.0)) throw ProviderError("entail response: score out of [0,1]");
  return score;
}

}  // namespace wire

/// Blocking JSON-over-HTTP client. Transport failures and 5xx responses are
/// retried `retries` times with exponential backoff; 4xx fail immediately.
class RemoteClient {
 public:
  explicit RemoteClient(RemoteConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw PreconditionError("remote provider: empty base url");
  }

  const RemoteConfig& config() const noexcept { return config_; }

  std::string post(const std::string& path, const std::string& body) const {
    std::string last_error;
    auto delay = config_.backoff;
    const int attempts = 1 + std::max(0, config_.retries);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client client(config_.base_url);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      const auto usecs =
          std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      auto res = client.Post(path, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        return res->body;
      } else {
        last_error = "HTTP " + std::to_string(res->status) + ": " + error_message(res->body);
        if (res->status < 500) {
          throw ProviderError(path + " failed after " + std::to_string(attempt) +
                                  " attempt(s): " + last_error,
                              attempt);
        }
      }
      if (attempt < attempts) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
    throw ProviderError(path + " failed after " + std::to_string(attempts) +
                            " attempt(s): " + last_error,
                        attempts);
  }

 private:
  static std::string error_message(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      if (j.is_object() && j.contains("error")) return j["error"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    return body;
  }

  RemoteConfig config_;
};

class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(std::shared_ptr<const RemoteClient> client)
      : client_(std::move(client)) {}

  std::string id() const override { return "remote:" + client_->config().base_url; }
  std::size_t dim() const override { return dim_.load(); }

  std::vector<ProviderVector> embed(std::span<const std::string> texts) const override {
    detail::require_texts(texts);
    const auto body = client_->post("/v1/embed", wire::embed_request(texts));
    try {
      auto out = wire::parse_embed_response(body, texts.size());
      const std::size_t d = out.front().dim();
      std::size_t expected = 0;
      if (!dim_.compare_exchange_strong(expected, d) && expected != d) {
        throw ProviderError("remote embedder changed dimension from " +
                            std::to_string(expected) + " to " + std::to_string(d));
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed /v1/embed response: ") + e.what());
    }
  }

 private:
  std::shared_ptr<const RemoteClient> client_;
  mutable std::atomic<std::size_t> dim_{0};
};

class RemoteInferencer final : public InferenceProvider {
 public:
  explicit RemoteInferencer(std::shared_ptr<const RemoteClient> client)
      : client_(std::move(client)) {}

  std::vector<InferenceCandidate> infer(const std::string& context, Relation relation,
                                        std::size_t n) const override {
    if (n == 0) throw PreconditionError("infer: n must be at least 1");
    const auto body = client_->post("/v1/infer", wire::infer_request(context, relation, n));
    try {
      return wire::parse_infer_response(body, relation, n);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed /v1/infer response: ") + e.what());
    }
  }

 private:
  std::shared_ptr<const RemoteClient> client_;
};

class RemoteEntailer final : public EntailmentProvider {
 public:
  explicit RemoteEntailer(std::shared_ptr<const RemoteClient> client)
      : client_(std::move(client)) {}

  double entail(const std::string& premise, const std::string& hypothesis) const override {
    if (premise.empty() || hypothesis.empty()) {
      throw PreconditionError("entail: empty premise or hypothesis");
    }
    const auto body = client_->post("/v1/entail", wire::entail_request(premise, hypothesis));
    try {
      return wire::parse_entail_response(body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed /v1/entail response: ") + e.what());
    }
  }

 private:
  std::shared_ptr<const RemoteClient> client_;
};

}  // namespace kbwalk
