#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "qclass/corpus.hpp"
#include "qclass/error.hpp"

namespace qclass {

using TokenId = std::uint32_t;

namespace detail {

template <typename Fn>
void for_each_code_point(std::string_view text, Fn&& fn) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto n = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < n) {
    const std::int32_t start = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    fn(c, text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
  }
}

inline bool is_bengali_digit(UChar32 c) { return c >= 0x09E6 && c <= 0x09EF; }

}  // namespace detail

/// True for code points that filtration removes: every Unicode P* general
/// category, plus the Bengali danda and double danda.
inline bool is_punctuation(UChar32 c) {
  return c == 0x0964 || c == 0x0965 || (c >= 0 && u_ispunct(c));
}

inline std::string filter_punctuation(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  detail::for_each_code_point(text, [&](UChar32 c, std::string_view bytes) {
    if (!is_punctuation(c)) out.append(bytes);
  });
  return out;
}

/// Splits on runs of Unicode White_Space.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  detail::for_each_code_point(text, [&](UChar32 c, std::string_view bytes) {
    if (c >= 0 && u_isUWhiteSpace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.append(bytes);
    }
  });
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// ASCII and/or Bengali digits, optionally separated by '.', ',', '/', '-'.
/// At least one digit is required.
inline bool is_numeric_token(std::string_view token) {
  bool digit = false;
  bool ok = !token.empty();
  detail::for_each_code_point(token, [&](UChar32 c, std::string_view) {
    if ((c >= '0' && c <= '9') || detail::is_bengali_digit(c)) {
      digit = true;
    } else if (c != '.' && c != ',' && c != '/' && c != '-') {
      ok = false;
    }
  });
  return ok && digit;
}

inline bool is_english_token(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z');
  });
}

/// Fills QuestionSample::tokens from the raw text (filtration + tokenization).
inline void prepare_tokens(std::vector<QuestionSample>& samples) {
  for (auto& s : samples) s.tokens = tokenize(filter_punctuation(s.text));
}

/// Frequent-token table. Ids 0..3 are reserved for PAD, UNK, NUM and ENG;
/// the remaining ids are the top words, ordered by descending frequency and
/// then by token bytes.
class Vocabulary {
 public:
  static constexpr TokenId pad = 0;
  static constexpr TokenId unk = 1;
  static constexpr TokenId num = 2;
  static constexpr TokenId eng = 3;
  static constexpr std::size_t reserved_count = 4;
  static constexpr std::array<std::string_view, reserved_count> reserved_tokens = {"PAD", "UNK", "NUM",
                                                                                  "ENG"};

  Vocabulary() {
    for (auto name : reserved_tokens) tokens_.emplace_back(name);
    counts_.assign(reserved_count, 0);
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] std::size_t min_count() const { return min_count_; }
  [[nodiscard]] const std::string& token(TokenId id) const { return tokens_.at(id); }
  [[nodiscard]] std::size_t count(TokenId id) const { return counts_.at(id); }

  /// Looks up a top word. Reserved ids are never returned.
  [[nodiscard]] std::optional<TokenId> find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// `token<TAB>id<TAB>count`, reserved entries first.
  void save(std::ostream& out) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      out << tokens_[i] << '\t' << i << '\t' << counts_[i] << '\n';
    }
  }

  static Vocabulary parse(std::istream& in, std::size_t min_count = 1) {
    Vocabulary v;
    v.min_count_ = min_count;
    std::string line;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = detail::split_tabs(line);
      if (fields.size() != 3) throw DataError("vocabulary: malformed line '" + line + "'");
      std::size_t id = 0;
      std::size_t count = 0;
      try {
        id = std::stoull(std::string(fields[1]));
        count = std::stoull(std::string(fields[2]));
      } catch (const std::exception&) {
        throw DataError("vocabulary: malformed numbers in line '" + line + "'");
      }
      if (id != expected) throw DataError("vocabulary: ids are not dense at id " + std::to_string(id));
      if (id < reserved_count) {
        if (fields[0] != reserved_tokens[id]) throw DataError("vocabulary: reserved entry mismatch");
        v.counts_[id] = count;
      } else {
        v.add(std::string(fields[0]), count);
      }
      ++expected;
    }
    if (expected < reserved_count) throw DataError("vocabulary: missing reserved entries");
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

 private:
  friend Vocabulary build_vocabulary(std::span<const std::vector<std::string>>, std::size_t);

  void add(std::string token, std::size_t count) {
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, id).second) throw DataError("vocabulary: duplicate token '" + token + "'");
    tokens_.push_back(std::move(token));
    counts_.push_back(count);
  }

  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t min_count_ = 1;
};

/// Counts tokens after NUM/ENG mapping and keeps the ones seen at least
/// `min_count` times. Occurrences of dropped tokens are tallied under UNK.
inline Vocabulary build_vocabulary(std::span<const std::vector<std::string>> token_lists,
                                   std::size_t min_count) {
  if (min_count < 1) throw UsageError("build_vocabulary: min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  Vocabulary v;
  v.min_count_ = min_count;
  for (const auto& tokens : token_lists) {
    for (const auto& t : tokens) {
      ++total;
      if (is_numeric_token(t)) {
        ++v.counts_[Vocabulary::num];
      } else if (is_english_token(t)) {
        ++v.counts_[Vocabulary::eng];
      } else {
        ++counts[t];
      }
    }
  }
  if (total == 0) throw DataError("build_vocabulary: empty corpus");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : counts) {
    if (count >= min_count) {
      kept.emplace_back(token, count);
    } else {
      v.counts_[Vocabulary::unk] += count;
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [token, count] : kept) v.add(std::move(token), count);
  return v;
}

inline TokenId normalize_token(std::string_view token, const Vocabulary& vocab) {
  if (is_numeric_token(token)) return Vocabulary::num;
  if (is_english_token(token)) return Vocabulary::eng;
  return vocab.find(token).value_or(Vocabulary::unk);
}

inline std::vector<TokenId> normalize_tokens(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(normalize_token(t, vocab));
  return ids;
}

}  // namespace qclass
