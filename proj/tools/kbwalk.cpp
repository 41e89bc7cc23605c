// kbwalk command line: index a corpus, query conversations, evaluate results.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kbwalk/config_toml.hpp"
#include "kbwalk/kb_core.hpp"
#include "kbwalk/metrics.hpp"
#include "kbwalk/pipeline.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> simulations;
  std::optional<std::size_t> threads;
  std::optional<double> cluster_threshold;
  std::optional<std::string> embedding;
  std::optional<std::string> inference;
  std::optional<std::string> entailment;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Stub inference seed");
  cmd->add_option("--simulations", o.simulations, "Search simulations per tree");
  cmd->add_option("--threads", o.threads, "Worker threads");
  cmd->add_option("--cluster-threshold", o.cluster_threshold, "Node-group cosine threshold");
  cmd->add_option("--embedding", o.embedding, "Embedding provider selector");
  cmd->add_option("--inference", o.inference, "Inference provider selector");
  cmd->add_option("--entailment", o.entailment, "Entailment provider selector");
}

kbwalk::PipelineConfig resolve_config(const std::string& flag_path, const Overrides& o) {
  const std::string path = kbwalk::config_path(flag_path);
  kbwalk::PipelineConfig c = path.empty() ? kbwalk::PipelineConfig{} : kbwalk::load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.simulations) c.search.simulations = *o.simulations;
  if (o.threads) c.threads = *o.threads;
  if (o.cluster_threshold) c.bridging.cluster_threshold = *o.cluster_threshold;
  if (o.embedding) c.providers.embedding = *o.embedding;
  if (o.inference) c.providers.inference = *o.inference;
  if (o.entailment) c.providers.entailment = *o.entailment;
  c.validate();
  return c;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw kbwalk::Error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kbwalk::Error("cannot open " + path);
  return in;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (kbwalk::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw kbwalk::Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// {"conversation_id": s, "<field>": [s, ...]} lines, grouped by conversation.
std::map<std::string, std::vector<std::string>> read_lists(const std::string& path,
                                                           const std::string& field) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& j : read_jsonl(path)) {
    if (!j.contains("conversation_id") || !j.contains(field) || !j[field].is_array()) {
      throw kbwalk::Error(path + ": each line needs conversation_id and a " + field + " array");
    }
    auto& list = out[j["conversation_id"].get<std::string>()];
    for (const auto& s : j[field]) list.push_back(s.get<std::string>());
  }
  return out;
}

int cmd_index(const std::string& corpus, const std::string& out_path, const std::string& config,
              std::optional<std::size_t> max_rows, const Overrides& o) {
  const auto cfg = resolve_config(config, o);
  const auto providers = kbwalk::make_providers(cfg.providers, cfg.seed);
  kbwalk::IngestReport report;
  auto raw = kbwalk::ingest_corpus(corpus, kbwalk::IngestConfig{max_rows}, &report);
  auto index = kbwalk::build_node_groups(raw, *providers.embedder, cfg.bridging.cluster_threshold);
  kbwalk::save_snapshot(index, out_path);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "rows " << report.rows_read << " accepted " << report.accepted << " malformed "
            << report.malformed << " duplicates " << report.duplicates << '\n'
            << "sentences " << index.sentences().size() << " concepts "
            << index.concepts().size() << " groups " << index.groups().size() << '\n';
  return 0;
}

int cmd_query(const std::string& index_path, const std::string& conv_path,
              const std::string& out_path, const std::string& config, const Overrides& o) {
  const auto cfg = resolve_config(config, o);
  const auto providers = kbwalk::make_providers(cfg.providers, cfg.seed);
  const auto index = kbwalk::load_snapshot(index_path);
  auto conv_in = open_in(conv_path);
  const auto convs = kbwalk::read_conversations(conv_in);
  const auto items = kbwalk::run_batch(convs, index, cfg, providers);

  std::ofstream file;
  if (!out_path.empty() && out_path != "-") file = open_out(out_path);
  std::ostream& out = file.is_open() ? static_cast<std::ostream&>(file) : std::cout;
  std::size_t failed = 0, records = 0;
  for (const auto& item : items) {
    if (item.error) {
      ++failed;
      std::cerr << "error: conversation '" << item.conversation_id << "': " << *item.error << '\n';
      continue;
    }
    for (const auto& w : item.result->warnings) std::cerr << "warning: " << w << '\n';
    kbwalk::write_results_jsonl(*item.result, index, out);
    records += item.result->results.size();
  }
  out.flush();
  std::cerr << "conversations " << items.size() << " failed " << failed << " records " << records
            << '\n';
  return failed == 0 ? 0 : kExitRuntime;
}

int cmd_eval(const std::string& results_path, const std::string& transitions_path,
             const std::string& events_path, double theta, bool sweep, const std::string& out_path,
             const std::string& config, const Overrides& o) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw UsageError("--theta must lie in [0,1]");
  if (transitions_path.empty() != events_path.empty()) {
    throw UsageError("--transitions and --events must be given together");
  }
  const auto cfg = resolve_config(config, o);
  const auto providers = kbwalk::make_providers(cfg.providers, cfg.seed);

  // Knowledge texts per conversation (all inferences), and per record.
  std::map<std::string, std::vector<std::string>> by_conversation;
  std::vector<std::vector<std::string>> per_record;
  for (const auto& j : read_jsonl(results_path)) {
    std::vector<std::string> texts;
    for (const auto& k : j.at("knowledge")) texts.push_back(k.at("text").get<std::string>());
    auto& all = by_conversation[j.at("conversation_id").get<std::string>()];
    all.insert(all.end(), texts.begin(), texts.end());
    per_record.push_back(std::move(texts));
  }

  kbwalk::DiversityReport total;
  std::size_t scored = 0;
  for (const auto& texts : per_record) {
    if (texts.size() < 2) continue;
    const auto d = kbwalk::diversity(texts, *providers.embedder);
    total.rouge1 += d.rouge1;
    total.rouge2 += d.rouge2;
    total.rougeL += d.rougeL;
    total.semantic_precision += d.semantic_precision;
    total.semantic_recall += d.semantic_recall;
    total.semantic_f1 += d.semantic_f1;
    total.n_pairs += d.n_pairs;
    ++scored;
  }
  if (scored > 0) {
    const double n = static_cast<double>(scored);
    for (double* v : {&total.rouge1, &total.rouge2, &total.rougeL, &total.semantic_precision,
                      &total.semantic_recall, &total.semantic_f1}) {
      *v /= n;
    }
  }

  std::ofstream file;
  if (!out_path.empty()) file = open_out(out_path);
  auto emit = [&](const nlohmann::ordered_json& j) {
    if (file.is_open()) file << j.dump() << '\n';
  };
  nlohmann::ordered_json dj;
  dj["kind"] = "diversity";
  dj["records"] = scored;
  dj.update(kbwalk::to_json(total));
  emit(dj);

  std::vector<kbwalk::AlignmentReport> means;
  if (!transitions_path.empty()) {
    const auto transitions = read_lists(transitions_path, "transitions");
    const auto events = read_lists(events_path, "events");
    std::vector<double> thetas;
    if (sweep) {
      for (int i = 0; i <= 9; ++i) thetas.push_back(i / 10.0);
    } else {
      thetas.push_back(theta);
    }
    std::vector<kbwalk::AlignmentReport> sums(thetas.size());
    std::vector<std::size_t> counted(thetas.size(), 0);
    for (const auto& [id, ts] : transitions) {
      auto ev = events.find(id);
      if (ev == events.end() || ts.empty()) continue;
      auto kn = by_conversation.find(id);
      const std::vector<std::string> none;
      const auto& retrieved = kn == by_conversation.end() ? none : kn->second;
      const auto km = kbwalk::entailment_matrix(retrieved, ev->second, *providers.entailer);
      const auto tm = kbwalk::entailment_matrix(ts, ev->second, *providers.entailer);
      for (std::size_t i = 0; i < thetas.size(); ++i) {
        const auto r = kbwalk::alignment_from_scores(km, tm, thetas[i]);
        nlohmann::ordered_json aj;
        aj["kind"] = "alignment";
        aj["conversation_id"] = id;
        aj.update(kbwalk::to_json(r));
        emit(aj);
        if (r.no_transitions_in_play) continue;
        sums[i].score += r.score;
        sums[i].covered += r.covered;
        sums[i].knowledge_in_play.insert(sums[i].knowledge_in_play.end(),
                                         r.knowledge_in_play.begin(), r.knowledge_in_play.end());
        sums[i].transitions_in_play.insert(sums[i].transitions_in_play.end(),
                                           r.transitions_in_play.begin(),
                                           r.transitions_in_play.end());
        ++counted[i];
      }
    }
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      auto m = std::move(sums[i]);
      m.theta = thetas[i];
      m.no_transitions_in_play = counted[i] == 0;
      if (counted[i] > 0) m.score /= static_cast<double>(counted[i]);
      nlohmann::ordered_json aj;
      aj["kind"] = "alignment_mean";
      aj["conversations"] = counted[i];
      aj.update(kbwalk::to_json(m));
      emit(aj);
      means.push_back(std::move(m));
    }
  }
  kbwalk::write_summary(std::cout, total, means);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kbwalk: reasoning-aware knowledge retrieval"};
  app.require_subcommand(1);
  std::string config;
  Overrides overrides;

  auto* index = app.add_subcommand("index", "Ingest a term<TAB>sentence<TAB>score corpus");
  std::string corpus, index_out;
  std::optional<std::size_t> max_rows;
  index->add_option("--corpus", corpus, "Corpus TSV")->required();
  index->add_option("--out", index_out, "Snapshot to write")->required();
  index->add_option("--max-rows", max_rows, "Stop after this many data rows");
  index->add_option("--config", config, "TOML config (KBWALK_CONFIG overrides)");
  add_override_flags(index, overrides);

  auto* query = app.add_subcommand("query", "Retrieve knowledge for conversations");
  std::string index_path, conv_path, results_out;
  query->add_option("--index", index_path, "Index snapshot")->required();
  query->add_option("--conversation", conv_path, "Conversation JSONL")->required();
  query->add_option("--out", results_out, "Results JSONL ('-' for stdout)")->default_val("-");
  query->add_option("--config", config, "TOML config (KBWALK_CONFIG overrides)");
  add_override_flags(query, overrides);

  auto* eval = app.add_subcommand("eval", "Diversity and alignment of retrieved knowledge");
  std::string results_in, transitions, events, eval_out;
  double theta = 0.5;
  bool sweep = false;
  eval->add_option("--results", results_in, "Results JSONL")->required();
  eval->add_option("--transitions", transitions, "Transitions JSONL");
  eval->add_option("--events", events, "Events JSONL");
  eval->add_option("--theta", theta, "Entailment threshold")->default_val(0.5);
  eval->add_flag("--sweep", sweep, "Report theta = 0.0, 0.1, ..., 0.9");
  eval->add_option("--out", eval_out, "Report JSONL");
  eval->add_option("--config", config, "TOML config (KBWALK_CONFIG overrides)");
  add_override_flags(eval, overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*index) return cmd_index(corpus, index_out, config, max_rows, overrides);
    if (*query) return cmd_query(index_path, conv_path, results_out, config, overrides);
    return cmd_eval(results_in, transitions, events, theta, sweep, eval_out, config, overrides);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const kbwalk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
