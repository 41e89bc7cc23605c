#pragma once

#include <openssl/evp.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbwalk/errors.hpp"
#include "kbwalk/providers.hpp"

namespace kbwalk {

inline constexpr std::string_view kVectorStoreMagic = "KBWALK-VEC v1";

/// Lowercase hex SHA-256 of the UTF-8 bytes of `text`.
inline std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw ProviderError("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

/// Embedding provider backed by a precomputed vector file:
///
///   KBWALK-VEC v1 <dim>
///   <sha256-of-text>\t<f>,<f>,...
class FileVectorStore final : public EmbeddingProvider {
 public:
  static FileVectorStore load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ProviderError("cannot open vector store " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ProviderError("empty vector store " + path.string());
    std::istringstream header(line);
    std::string magic, version;
    std::size_t dim = 0;
    header >> magic >> version >> dim;
    if (magic + " " + version != kVectorStoreMagic || dim == 0) {
      throw ProviderError("bad vector store header: '" + line + "'");
    }
    FileVectorStore store(dim, path.string());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw ProviderError("vector store line " + std::to_string(line_no) + ": missing tab");
      }
      std::vector<double> values;
      values.reserve(dim);
      std::string_view rest(line);
      rest.remove_prefix(tab + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto field = rest.substr(0, comma);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size()) {
          throw ProviderError("vector store line " + std::to_string(line_no) +
                              ": bad number '" + std::string(field) + "'");
        }
        values.push_back(v);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (values.size() != dim) {
        throw ProviderError("vector store line " + std::to_string(line_no) + ": expected " +
                            std::to_string(dim) + " components, got " +
                            std::to_string(values.size()));
      }
      store.vectors_.insert_or_assign(line.substr(0, tab),
                                      ProviderVector::normalized(std::move(values), Provenance::file));
    }
    return store;
  }

  std::string id() const override { return "file:" + source_; }
  std::size_t dim() const override { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  std::vector<ProviderVector> embed(std::span<const std::string> texts) const override {
    detail::require_texts(texts);
    std::vector<ProviderVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
      const auto key = sha256_hex(text);
      const auto it = vectors_.find(key);
      if (it == vectors_.end()) {
        throw ProviderError("vector store has no entry for key " + key + " (text '" + text + "')");
      }
      out.push_back(it->second);
    }
    return out;
  }

 private:
  FileVectorStore(std::size_t dim, std::string source) : dim_(dim), source_(std::move(source)) {}

  std::size_t dim_;
  std::string source_;
  std::unordered_map<std::string, ProviderVector> vectors_;
};

/// Writes the vectors `provider` returns for `texts` in vector-store format.
inline void write_vector_store(const std::filesystem::path& path, const EmbeddingProvider& provider,
                               std::span<const std::string> texts) {
  const auto vectors = provider.embed(texts);
  if (vectors.empty()) throw PreconditionError("write_vector_store: nothing to write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ProviderError("cannot write vector store " + path.string());
  out << kVectorStoreMagic << ' ' << vectors.front().dim() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out << sha256_hex(texts[i]) << '\t';
    const auto values = vectors[i].values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (j) out << ',';
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values[j]);
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

}  // namespace kbwalk
