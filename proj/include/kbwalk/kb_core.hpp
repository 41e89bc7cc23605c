#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kbwalk/errors.hpp"
#include "kbwalk/ids.hpp"
#include "kbwalk/providers.hpp"
#include "kbwalk/text.hpp"

namespace kbwalk {

struct KnowledgeSentence {
  SentenceId id;
  std::string text;
  std::string source_term;
  double score = 0.0;
  std::vector<ConceptId> concepts;  // source term first, then in order of appearance
  std::uint32_t token_count = 1;
};

struct ConceptNode {
  ConceptId id;
  std::string surface;
  std::vector<SentenceId> sentence_ids;  // ascending
  GroupId group_id;
};

struct NodeGroup {
  GroupId id;
  std::vector<ConceptId> member_concepts;  // ascending
  std::vector<SentenceId> sentence_ids;    // ascending union over members
};

class IndexBuilder;

/// Sentence/concept/group tables with the sentence<->concept links in both
/// directions. Immutable once built; share it freely across readers.
class KnowledgeIndex {
 public:
  KnowledgeIndex() = default;

  const std::vector<KnowledgeSentence>& sentences() const noexcept { return sentences_; }
  const std::vector<ConceptNode>& concepts() const noexcept { return concepts_; }
  const std::vector<NodeGroup>& groups() const noexcept { return groups_; }

  const KnowledgeSentence& sentence(SentenceId id) const {
    if (id.value >= sentences_.size()) throw LookupError("unknown sentence id " + to_string(id));
    return sentences_[id.value];
  }

  const ConceptNode& concept_node(ConceptId id) const {
    if (id.value >= concepts_.size()) throw LookupError("unknown concept id " + to_string(id));
    return concepts_[id.value];
  }

  const NodeGroup& group(GroupId id) const {
    if (id.value >= groups_.size()) throw LookupError("unknown group id " + to_string(id));
    return groups_[id.value];
  }

  const NodeGroup& group_of(ConceptId id) const { return group(concept_node(id).group_id); }

  std::optional<ConceptId> find_concept(std::string_view surface) const {
    const auto it = surface_lookup_.find(std::string(surface));
    if (it == surface_lookup_.end()) return std::nullopt;
    return it->second;
  }

  /// Every sentence linked to any member of the concept's node group.
  const std::vector<SentenceId>& group_sentences(ConceptId id) const {
    return group_of(id).sentence_ids;
  }

  /// Same tables, concepts repartitioned. `assignment[c]` is the group of
  /// concept c; group ids must be dense, starting at 0.
  KnowledgeIndex with_groups(std::span<const GroupId> assignment) const {
    KnowledgeIndex out;
    out.sentences_ = sentences_;
    out.concepts_ = concepts_;
    out.surface_lookup_ = surface_lookup_;
    out.assign_groups(assignment);
    return out;
  }

 private:
  friend class IndexBuilder;

  void link_concepts() {
    for (auto& c : concepts_) c.sentence_ids.clear();
    for (const auto& s : sentences_) {
      for (ConceptId c : s.concepts) concepts_[c.value].sentence_ids.push_back(s.id);
    }
    for (const auto& c : concepts_) {
      if (c.sentence_ids.empty()) {
        throw CorpusError("concept '" + c.surface + "' has no sentences");
      }
    }
  }

  void assign_groups(std::span<const GroupId> assignment) {
    if (assignment.size() != concepts_.size()) {
      throw PreconditionError("group assignment size does not match concept count");
    }
    std::uint32_t group_count = 0;
    for (GroupId g : assignment) group_count = std::max(group_count, g.value + 1);
    groups_.assign(group_count, NodeGroup{});
    for (std::uint32_t g = 0; g < group_count; ++g) groups_[g].id = GroupId{g};
    for (std::size_t c = 0; c < concepts_.size(); ++c) {
      concepts_[c].group_id = assignment[c];
      groups_[assignment[c].value].member_concepts.push_back(concepts_[c].id);
    }
    for (auto& g : groups_) {
      if (g.member_concepts.empty()) {
        throw PreconditionError("group " + to_string(g.id) + " has no members");
      }
      for (ConceptId c : g.member_concepts) {
        const auto& ids = concepts_[c.value].sentence_ids;
        g.sentence_ids.insert(g.sentence_ids.end(), ids.begin(), ids.end());
      }
      std::sort(g.sentence_ids.begin(), g.sentence_ids.end());
      g.sentence_ids.erase(std::unique(g.sentence_ids.begin(), g.sentence_ids.end()),
                           g.sentence_ids.end());
    }
  }

  std::vector<KnowledgeSentence> sentences_;
  std::vector<ConceptNode> concepts_;
  std::vector<NodeGroup> groups_;
  std::unordered_map<std::string, ConceptId> surface_lookup_;
};

/// Accumulates sentences and interns their concept surfaces. Concept ids are
/// assigned in order of first appearance. `build` puts every concept in its
/// own group; use `build_node_groups` or `with_groups` to cluster.
class IndexBuilder {
 public:
  /// Adds a sentence whose concepts are the source term followed by
  /// `extract_concepts(text)`.
  SentenceId add_sentence(std::string text, std::string source_term, double score) {
    auto surfaces = extract_concepts(text);
    return add_sentence(std::move(text), std::move(source_term), score, surfaces);
  }

  /// Adds a sentence with an explicit concept list (the source term is always
  /// prepended if missing).
  SentenceId add_sentence(std::string text, std::string source_term, double score,
                          std::span<const std::string> concept_surfaces) {
    if (trim(text).empty()) throw PreconditionError("sentence text is empty");
    source_term = to_lower(trim(source_term));
    if (source_term.empty()) throw PreconditionError("source term is empty");
    KnowledgeSentence s;
    s.id = SentenceId{static_cast<std::uint32_t>(index_.sentences_.size())};
    s.score = score;
    s.token_count = static_cast<std::uint32_t>(std::max<std::size_t>(1, tokenize(text).size()));
    s.concepts.push_back(intern(source_term));
    for (const auto& surface : concept_surfaces) {
      const ConceptId c = intern(to_lower(trim(surface)));
      if (std::find(s.concepts.begin(), s.concepts.end(), c) == s.concepts.end()) {
        s.concepts.push_back(c);
      }
    }
    s.text = std::move(text);
    s.source_term = std::move(source_term);
    index_.sentences_.push_back(std::move(s));
    return index_.sentences_.back().id;
  }

  std::size_t sentence_count() const noexcept { return index_.sentences_.size(); }

  KnowledgeIndex build() && {
    index_.link_concepts();
    std::vector<GroupId> singleton(index_.concepts_.size());
    for (std::size_t c = 0; c < singleton.size(); ++c) {
      singleton[c] = GroupId{static_cast<std::uint32_t>(c)};
    }
    index_.assign_groups(singleton);
    return std::move(index_);
  }

  // Snapshot loading restores concept ids verbatim.
  ConceptId intern(const std::string& surface) {
    if (surface.empty()) throw PreconditionError("empty concept surface");
    const auto [it, inserted] = index_.surface_lookup_.try_emplace(
        surface, ConceptId{static_cast<std::uint32_t>(index_.concepts_.size())});
    if (inserted) {
      ConceptNode node;
      node.id = it->second;
      node.surface = surface;
      index_.concepts_.push_back(std::move(node));
    }
    return it->second;
  }

 private:
  KnowledgeIndex index_;
};

struct IngestConfig {
  std::optional<std::size_t> max_rows;  // data rows read; unlimited by default
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t accepted = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  bool header_skipped = false;
  std::vector<std::string> warnings;  // first few malformed rows
};

namespace detail {

inline std::optional<double> parse_real(std::string_view field) {
  field = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) return std::nullopt;
  return value;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace detail

/// Reads `TERM<TAB>SENTENCE<TAB>SCORE` rows. A first row whose score column
/// is not numeric is treated as a header. Malformed rows are skipped and
/// counted; duplicate (term, sentence) pairs keep the higher score.
inline KnowledgeIndex ingest_corpus(std::istream& in, const IngestConfig& config = {},
                                    IngestReport* report = nullptr) {
  struct Row {
    std::string term;
    std::string sentence;
    double score;
  };
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep = IngestReport{};

  std::vector<Row> rows;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  auto warn = [&](const std::string& msg) {
    ++rep.malformed;
    if (rep.warnings.size() < 20) rep.warnings.push_back("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = detail::split_tabs(line);
    const auto score = fields.size() == 3 ? detail::parse_real(fields[2]) : std::nullopt;
    if (first) {
      first = false;
      if (fields.size() == 3 && !score) {
        rep.header_skipped = true;
        continue;
      }
    }
    if (config.max_rows && rep.rows_read >= *config.max_rows) break;
    ++rep.rows_read;
    if (fields.size() != 3) {
      warn("expected 3 tab-separated fields, got " + std::to_string(fields.size()));
      continue;
    }
    const auto term = to_lower(trim(fields[0]));
    const auto sentence = std::string(trim(fields[1]));
    if (term.empty() || sentence.empty()) {
      warn("empty term or sentence");
      continue;
    }
    if (!score || !std::isfinite(*score) || *score < 0.0 || *score > 1.0) {
      warn("score is not a real in [0,1]");
      continue;
    }
    std::string key = term;
    key.push_back('\t');
    key += sentence;
    const auto [it, inserted] = seen.try_emplace(std::move(key), rows.size());
    if (inserted) {
      rows.push_back(Row{term, sentence, *score});
    } else {
      ++rep.duplicates;
      rows[it->second].score = std::max(rows[it->second].score, *score);
    }
  }
  if (rows.empty()) throw CorpusError("empty corpus");

  IndexBuilder builder;
  for (auto& row : rows) builder.add_sentence(std::move(row.sentence), std::move(row.term), row.score);
  rep.accepted = rows.size();
  return std::move(builder).build();
}

inline KnowledgeIndex ingest_corpus(const std::filesystem::path& path,
                                    const IngestConfig& config = {},
                                    IngestReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus " + path.string());
  return ingest_corpus(in, config, report);
}

/// Greedy streaming clustering of concept embeddings. Concepts are visited in
/// id order; each joins the first group whose (unit) centroid has cosine >=
/// threshold, otherwise it founds a new group. Centroids are running means,
/// renormalized after every join.
inline KnowledgeIndex build_node_groups(const KnowledgeIndex& index,
                                        const EmbeddingProvider& embedder, double threshold,
                                        std::size_t batch = 4096) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw PreconditionError("cluster threshold must lie in [0,1]");
  }
  const auto& concepts = index.concepts();
  std::vector<GroupId> assignment(concepts.size());
  std::vector<double> sums;       // group-major running sums
  std::vector<double> centroids;  // group-major unit centroids
  std::size_t dim = 0;
  std::size_t groups = 0;
  std::vector<std::string> surfaces;
  for (std::size_t begin = 0; begin < concepts.size(); begin += batch) {
    const std::size_t end = std::min(concepts.size(), begin + batch);
    surfaces.clear();
    for (std::size_t c = begin; c < end; ++c) surfaces.push_back(concepts[c].surface);
    const auto vectors = embedder.embed(surfaces);
    if (vectors.size() != surfaces.size()) {
      throw ProviderError("embedding provider returned wrong vector count");
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const auto v = vectors[i].values();
      if (dim == 0) dim = v.size();
      if (v.size() != dim) throw ProviderError("embedding dimension changed during clustering");
      std::optional<std::size_t> joined;
      for (std::size_t g = 0; g < groups && !joined; ++g) {
        const double* centroid = centroids.data() + g * dim;
        double cos = 0.0;
        for (std::size_t d = 0; d < dim; ++d) cos += centroid[d] * v[d];
        if (cos >= threshold) joined = g;
      }
      const std::size_t g = joined.value_or(groups);
      if (!joined) {
        ++groups;
        sums.resize(groups * dim, 0.0);
        centroids.resize(groups * dim, 0.0);
      }
      double* sum = sums.data() + g * dim;
      double sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        sum[d] += v[d];
        sq += sum[d] * sum[d];
      }
      const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
      double* centroid = centroids.data() + g * dim;
      for (std::size_t d = 0; d < dim; ++d) centroid[d] = sum[d] * inv;
      assignment[begin + i] = GroupId{static_cast<std::uint32_t>(g)};
    }
  }
  return index.with_groups(assignment);
}

inline constexpr std::string_view kIndexMagic = "KBWALK-IDX v1";

namespace detail {

inline void write_ids(std::ostream& out, std::span<const ConceptId> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ',';
    out << ids[i].value;
  }
}

inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Line-oriented text snapshot:
///
///   KBWALK-IDX v1
///   counts <sentences> <concepts> <groups>
///   C\t<id>\t<surface>                      (one per concept, id order)
///   S\t<id>\t<score>\t<concept ids>\t<term>\t<text>
///   G\t<id>\t<member concept ids>
///
/// Sentence->concept links and group sentence sets are rebuilt on load.
inline void save_snapshot(const KnowledgeIndex& index, std::ostream& out) {
  out << kIndexMagic << '\n';
  out << "counts " << index.sentences().size() << ' ' << index.concepts().size() << ' '
      << index.groups().size() << '\n';
  for (const auto& c : index.concepts()) out << "C\t" << c.id.value << '\t' << c.surface << '\n';
  for (const auto& s : index.sentences()) {
    out << "S\t" << s.id.value << '\t' << detail::format_real(s.score) << '\t';
    detail::write_ids(out, s.concepts);
    out << '\t' << s.source_term << '\t' << s.text << '\n';
  }
  for (const auto& g : index.groups()) {
    out << "G\t" << g.id.value << '\t';
    detail::write_ids(out, g.member_concepts);
    out << '\n';
  }
}

inline void save_snapshot(const KnowledgeIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write snapshot " + path.string());
  save_snapshot(index, out);
  if (!out) throw CorpusError("error writing snapshot " + path.string());
}

inline KnowledgeIndex load_snapshot(std::istream& in) {
  std::string line;
  auto fail = [](const std::string& msg) -> CorpusError { return CorpusError("snapshot: " + msg); };
  if (!std::getline(in, line) || line != kIndexMagic) throw fail("missing 'KBWALK-IDX v1' header");
  std::size_t ns = 0, nc = 0, ng = 0;
  {
    if (!std::getline(in, line)) throw fail("missing counts line");
    std::istringstream counts(line);
    std::string tag;
    if (!(counts >> tag >> ns >> nc >> ng) || tag != "counts") throw fail("bad counts line");
  }
  auto parse_ids = [&](std::string_view csv, std::size_t limit) {
    std::vector<std::uint32_t> ids;
    while (!csv.empty()) {
      const auto comma = csv.find(',');
      const auto field = csv.substr(0, comma);
      std::uint32_t v = 0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc{} || ptr != field.data() + field.size() || v >= limit) {
        throw fail("bad id list '" + std::string(csv) + "'");
      }
      ids.push_back(v);
      if (comma == std::string_view::npos) break;
      csv.remove_prefix(comma + 1);
    }
    return ids;
  };

  IndexBuilder builder;
  std::vector<std::string> surfaces;
  surfaces.reserve(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    if (!std::getline(in, line)) throw fail("truncated concept table");
    const auto f = detail::split_tabs(line);
    if (f.size() != 3 || f[0] != "C" || f[1] != std::to_string(i)) throw fail("bad concept row");
    if (builder.intern(std::string(f[2])).value != i) throw fail("duplicate concept surface");
    surfaces.emplace_back(f[2]);
  }
  for (std::size_t i = 0; i < ns; ++i) {
    if (!std::getline(in, line)) throw fail("truncated sentence table");
    const auto f = detail::split_tabs(line);
    if (f.size() != 6 || f[0] != "S" || f[1] != std::to_string(i)) throw fail("bad sentence row");
    const auto score = detail::parse_real(f[2]);
    if (!score) throw fail("bad sentence score");
    std::vector<std::string> concept_surfaces;
    for (std::uint32_t c : parse_ids(f[3], nc)) concept_surfaces.push_back(surfaces[c]);
    if (concept_surfaces.empty() || concept_surfaces.front() != f[4]) {
      throw fail("sentence " + std::to_string(i) + ": first concept must be the source term");
    }
    builder.add_sentence(std::string(f[5]), std::string(f[4]), *score,
                         std::span<const std::string>(concept_surfaces).subspan(1));
  }
  std::vector<GroupId> assignment(nc, GroupId{~0u});
  for (std::size_t g = 0; g < ng; ++g) {
    if (!std::getline(in, line)) throw fail("truncated group table");
    const auto f = detail::split_tabs(line);
    if (f.size() != 3 || f[0] != "G" || f[1] != std::to_string(g)) throw fail("bad group row");
    for (std::uint32_t c : parse_ids(f[2], nc)) {
      if (assignment[c].value != ~0u) throw fail("concept in more than one group");
      assignment[c] = GroupId{static_cast<std::uint32_t>(g)};
    }
  }
  for (const auto& g : assignment) {
    if (g.value == ~0u) throw fail("concept without a group");
  }
  return std::move(builder).build().with_groups(assignment);
}

inline KnowledgeIndex load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open snapshot " + path.string());
  return load_snapshot(in);
}

}  // namespace kbwalk
