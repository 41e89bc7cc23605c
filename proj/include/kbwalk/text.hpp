#pragma once

#include <iterator>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace kbwalk {

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

namespace detail {

inline bool is_token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c >= 0x80;
}

// English function words plus a few corpus-frequent modal/quantifier words.
inline constexpr std::string_view kStopwords[] = {
    "a",        "about",   "above",   "after",   "again",   "against", "all",
    "also",     "am",      "an",      "and",     "any",     "are",     "as",
    "at",       "be",      "because", "been",    "before",  "being",   "below",
    "between",  "both",    "but",     "by",      "can",     "cannot",  "could",
    "did",      "do",      "does",    "doing",   "down",    "during",  "each",
    "either",   "else",    "ever",    "every",   "few",     "for",     "from",
    "further",  "had",     "has",     "have",    "having",  "he",      "her",
    "here",     "hers",    "herself", "him",     "himself", "his",     "how",
    "however",  "if",      "in",      "into",    "is",      "it",      "its",
    "itself",   "just",    "least",   "less",    "let",     "like",    "many",
    "may",      "me",      "might",   "more",    "most",    "much",    "must",
    "my",       "myself",  "neither", "no",      "nor",     "not",     "now",
    "of",       "off",     "often",   "on",      "once",    "one",     "only",
    "or",       "other",   "others",  "ought",   "our",     "ours",    "ourselves",
    "out",      "over",    "own",     "per",     "quite",   "rather",  "same",
    "several",  "shall",   "she",     "should",  "since",   "so",      "some",
    "such",     "than",    "that",    "the",     "their",   "theirs",  "them",
    "themselves", "then",  "there",   "these",   "they",    "this",    "those",
    "though",   "through", "thus",    "to",      "too",     "under",   "until",
    "up",       "upon",    "us",      "usually", "very",    "via",     "was",
    "we",       "well",    "were",    "what",    "whatever", "when",   "where",
    "whether",  "which",   "while",   "who",     "whom",    "whose",   "why",
    "will",     "with",    "within",  "without", "would",   "yet",     "you",
    "your",     "yours",   "yourself", "yourselves", "s",   "t",       "don",
    "ll",       "re",      "ve",      "oh",      "yes",
};

inline const std::unordered_set<std::string_view>& stopword_set() {
  static const std::unordered_set<std::string_view> set(std::begin(kStopwords),
                                                        std::end(kStopwords));
  return set;
}

}  // namespace detail

inline bool is_stopword(std::string_view token) {
  return detail::stopword_set().contains(token);
}

/// Lowercased alphanumeric runs. Bytes >= 0x80 count as word characters so
/// UTF-8 words stay intact; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (detail::is_token_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                             : static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// Tokens that carry content: stopwords and single-byte tokens dropped,
/// order and multiplicity kept.
inline std::vector<std::string> content_tokens(std::string_view text) {
  auto tokens = tokenize(text);
  std::erase_if(tokens, [](const std::string& t) {
    return t.size() < 2 || is_stopword(t);
  });
  return tokens;
}

/// Candidate concept surfaces of a sentence: content tokens in order of first
/// appearance, without duplicates. May be empty.
inline std::vector<std::string> extract_concepts(std::string_view text) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& token : content_tokens(text)) {
    if (seen.insert(token).second) out.push_back(std::move(token));
  }
  return out;
}

}  // namespace kbwalk
