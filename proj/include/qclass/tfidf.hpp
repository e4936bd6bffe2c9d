#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qclass/corpus.hpp"
#include "qclass/error.hpp"

namespace qclass {

using Bigram = std::pair<std::string, std::string>;

/// Sparse vector with strictly increasing indices.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  [[nodiscard]] double at(std::size_t i) const {
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] == i) return values[k];
    }
    return 0.0;
  }

  [[nodiscard]] double norm() const {
    double s = 0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

inline std::vector<Bigram> extract_bigrams(std::span<const std::string> tokens) {
  std::vector<Bigram> out;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) out.emplace_back(tokens[i], tokens[i + 1]);
  return out;
}

/// Bigram TF-IDF model fitted on the questions of one coarse class.
/// Columns are the fitted bigrams in lexicographic order;
/// idf(t) = ln((1 + N) / (1 + df(t))) + 1.
class TfidfVectorizer {
 public:
  [[nodiscard]] std::size_t dimension() const { return idf_.size(); }
  [[nodiscard]] std::size_t doc_count() const { return doc_count_; }
  [[nodiscard]] const std::vector<double>& idf() const { return idf_; }
  [[nodiscard]] const std::map<Bigram, std::uint32_t>& index() const { return index_; }

  [[nodiscard]] std::optional<std::uint32_t> column(const Bigram& b) const {
    const auto it = index_.find(b);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  static TfidfVectorizer fit(std::span<const std::vector<std::string>> docs) {
    if (docs.empty()) throw DataError("tfidf: cannot fit on zero samples");
    std::map<Bigram, std::size_t> df;
    for (const auto& doc : docs) {
      const auto grams = extract_bigrams(doc);
      const std::set<Bigram> unique(grams.begin(), grams.end());
      for (const auto& g : unique) ++df[g];
    }
    TfidfVectorizer v;
    v.doc_count_ = docs.size();
    const double n = static_cast<double>(docs.size());
    for (const auto& [gram, count] : df) {
      v.index_.emplace(gram, static_cast<std::uint32_t>(v.idf_.size()));
      v.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    return v;
  }

  /// Raw-count tf times idf, L2-normalized; unknown bigrams are ignored and
  /// an all-zero vector stays zero.
  [[nodiscard]] SparseVector transform(std::span<const std::string> tokens) const {
    std::map<std::uint32_t, double> tf;
    for (const auto& g : extract_bigrams(tokens)) {
      if (const auto col = column(g)) tf[*col] += 1.0;
    }
    SparseVector out;
    out.dim = dimension();
    double norm = 0;
    for (const auto& [col, count] : tf) {
      const double w = count * idf_[col];
      out.indices.push_back(col);
      out.values.push_back(w);
      norm += w * w;
    }
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (auto& v : out.values) v /= norm;
    }
    return out;
  }

  static constexpr char unit_separator = '\x1f';

  /// `doc_count<TAB>N` header, then `token1<US>token2<TAB>column<TAB>idf`.
  void save(std::ostream& out) const {
    out << "doc_count\t" << doc_count_ << '\n';
    char buf[32];
    for (const auto& [gram, col] : index_) {
      std::snprintf(buf, sizeof buf, "%.17g", idf_[col]);
      out << gram.first << unit_separator << gram.second << '\t' << col << '\t' << buf << '\n';
    }
  }

  static TfidfVectorizer parse(std::istream& in) {
    TfidfVectorizer v;
    std::string line;
    if (!std::getline(in, line) || line.rfind("doc_count\t", 0) != 0) {
      throw DataError("tfidf: missing doc_count header");
    }
    try {
      v.doc_count_ = std::stoull(line.substr(10));
    } catch (const std::exception&) {
      throw DataError("tfidf: bad doc_count header");
    }
    std::map<std::uint32_t, double> idf;
    while (std::getline(in, line)) {
      const auto fields = detail::split_tabs(line);
      const auto sep = fields.empty() ? std::string_view::npos : fields[0].find(unit_separator);
      if (fields.size() != 3 || sep == std::string_view::npos) throw DataError("tfidf: malformed line");
      Bigram gram{std::string(fields[0].substr(0, sep)), std::string(fields[0].substr(sep + 1))};
      std::uint32_t col = 0;
      double w = 0;
      try {
        col = static_cast<std::uint32_t>(std::stoul(std::string(fields[1])));
        w = std::stod(std::string(fields[2]));
      } catch (const std::exception&) {
        throw DataError("tfidf: malformed numbers");
      }
      if (!v.index_.emplace(std::move(gram), col).second || !idf.emplace(col, w).second) {
        throw DataError("tfidf: duplicate entry");
      }
    }
    for (const auto& [col, w] : idf) {
      if (col != v.idf_.size()) throw DataError("tfidf: columns are not dense");
      v.idf_.push_back(w);
    }
    return v;
  }

  friend bool operator==(const TfidfVectorizer&, const TfidfVectorizer&) = default;

 private:
  std::map<Bigram, std::uint32_t> index_;
  std::vector<double> idf_;
  std::size_t doc_count_ = 0;
};

inline TfidfVectorizer fit_tfidf(std::span<const std::vector<std::string>> docs) {
  return TfidfVectorizer::fit(docs);
}

}  // namespace qclass
