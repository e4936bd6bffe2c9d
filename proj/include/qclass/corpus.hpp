#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <unicode/utf8.h>

#include "qclass/error.hpp"
#include "qclass/random.hpp"

namespace qclass {

struct CoarseId {
  std::uint32_t value = 0;
  friend auto operator<=>(const CoarseId&, const CoarseId&) = default;
};

/// Index into the taxonomy's flat finer-class list (not local to a coarse class).
struct FinerId {
  std::uint32_t value = 0;
  friend auto operator<=>(const FinerId&, const FinerId&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool is_valid_utf8(std::string_view s) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const auto n = static_cast<std::int32_t>(s.size());
  std::int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) return false;
  }
  return true;
}

inline std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line) + ": ";
}

// Reads lines, dropping a trailing '\r', and skipping blank and '#' lines.
template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    fn(std::string_view(line), number);
  }
}

}  // namespace detail

/// Two-level label hierarchy: coarse classes, each owning a list of finer
/// classes. Finer names are unique only within their parent (OTHER appears
/// under several coarse classes).
class Taxonomy {
 public:
  struct Finer {
    std::string name;
    CoarseId parent;
  };

  CoarseId add_coarse(std::string_view name) {
    if (name.empty()) throw DataError("taxonomy: empty coarse class name");
    if (find_coarse(name)) {
      throw DataError("taxonomy: duplicate coarse class '" + std::string(name) + "'");
    }
    coarse_.emplace_back(name);
    return CoarseId{static_cast<std::uint32_t>(coarse_.size() - 1)};
  }

  FinerId add_finer(std::string_view name, CoarseId parent) {
    if (name.empty()) throw DataError("taxonomy: empty finer class name");
    if (parent.value >= coarse_.size()) throw DataError("taxonomy: finer class with unknown parent");
    if (find_finer(parent, name)) {
      throw DataError("taxonomy: duplicate finer class '" + std::string(name) + "' under '" +
                      coarse_[parent.value] + "'");
    }
    finer_.push_back(Finer{std::string(name), parent});
    return FinerId{static_cast<std::uint32_t>(finer_.size() - 1)};
  }

  [[nodiscard]] std::size_t coarse_count() const { return coarse_.size(); }
  [[nodiscard]] std::size_t finer_count() const { return finer_.size(); }
  [[nodiscard]] const std::string& coarse_name(CoarseId id) const { return coarse_.at(id.value); }
  [[nodiscard]] const std::string& finer_name(FinerId id) const { return finer_.at(id.value).name; }
  [[nodiscard]] CoarseId parent(FinerId id) const { return finer_.at(id.value).parent; }
  [[nodiscard]] const std::vector<std::string>& coarse_names() const { return coarse_; }

  [[nodiscard]] std::optional<CoarseId> find_coarse(std::string_view name) const {
    for (std::size_t i = 0; i < coarse_.size(); ++i) {
      if (coarse_[i] == name) return CoarseId{static_cast<std::uint32_t>(i)};
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<FinerId> find_finer(CoarseId parent, std::string_view name) const {
    for (std::size_t i = 0; i < finer_.size(); ++i) {
      if (finer_[i].parent == parent && finer_[i].name == name) {
        return FinerId{static_cast<std::uint32_t>(i)};
      }
    }
    return std::nullopt;
  }

  [[nodiscard]] std::vector<FinerId> finer_of(CoarseId parent) const {
    std::vector<FinerId> out;
    for (std::size_t i = 0; i < finer_.size(); ++i) {
      if (finer_[i].parent == parent) out.push_back(FinerId{static_cast<std::uint32_t>(i)});
    }
    return out;
  }

  /// `coarse<TAB>finer` per line, grouped in first-seen order.
  void save(std::ostream& out) const {
    for (const auto& f : finer_) out << coarse_[f.parent.value] << '\t' << f.name << '\n';
  }

  static Taxonomy parse(std::istream& in, std::string_view source = "<taxonomy>") {
    Taxonomy t;
    detail::for_each_record(in, [&](std::string_view line, std::size_t number) {
      const auto fields = detail::split_tabs(line);
      if (fields.size() != 2) {
        throw DataError(detail::where(source, number) + "expected 'coarse<TAB>finer'");
      }
      const auto coarse_name = detail::trim(fields[0]);
      const auto finer_name = detail::trim(fields[1]);
      if (coarse_name.empty() || finer_name.empty()) {
        throw DataError(detail::where(source, number) + "empty class name");
      }
      const auto existing = t.find_coarse(coarse_name);
      const auto parent = existing ? *existing : t.add_coarse(coarse_name);
      if (t.find_finer(parent, finer_name)) {
        throw DataError(detail::where(source, number) + "duplicate finer class '" +
                        std::string(finer_name) + "'");
      }
      t.add_finer(finer_name, parent);
    });
    if (t.coarse_count() == 0) throw DataError(std::string(source) + ": empty taxonomy");
    return t;
  }

  static Taxonomy load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open taxonomy file '" + path + "'");
    return parse(in, path);
  }

  /// The six-coarse-class Bengali question taxonomy, with the per-finer-class
  /// sample counts of the original 3333-question dataset.
  using ReferenceTable =
      std::vector<std::pair<std::string_view, std::vector<std::pair<std::string_view, std::size_t>>>>;

  static const ReferenceTable& reference_table() {
    static const ReferenceTable table = {
            {"ENTITY",
             {{"SUBSTANCE", 10}, {"SYMBOL", 11}, {"CURRENCY", 24}, {"TERM", 10},    {"WORD", 10},
              {"LANGUAGE", 30},  {"COLOR", 10},  {"RELIGION", 15}, {"SPORT", 10},   {"BODY", 10},
              {"FOOD", 11},      {"TECHNIQUE", 10}, {"PRODUCT", 10}, {"DISEASE", 10}, {"OTHER", 22},
              {"LETTER", 10},    {"VEHICLE", 11}, {"PLANT", 12},    {"CREATIVE", 216},
              {"INSTRUMENT", 10}, {"ANIMAL", 10}, {"EVENT", 10}}},
            {"NUMERIC",
             {{"COUNT", 213}, {"DISTANCE", 13}, {"CODE", 10}, {"TEMPERATURE", 13}, {"WEIGHT", 20},
              {"MONEY", 10}, {"PERCENT", 27}, {"PERIOD", 33}, {"OTHER", 34}, {"DATE", 452},
              {"SPEED", 10}, {"SIZE", 54}}},
            {"HUMAN", {{"INDIVIDUAL", 610}, {"GROUP", 18}, {"DESCRIPTION", 13}, {"TITLE", 10}}},
            {"LOCATION",
             {{"MOUNTAIN", 23}, {"COUNTRY", 105}, {"STATE", 88}, {"OTHER", 121}, {"CITY", 274}}},
            {"DESCRIPTION",
             {{"DEFINITION", 141}, {"REASON", 26}, {"MANNER", 12}, {"DESCRIPTION", 19}}},
            {"ABBREVIATION", {{"ABBREVIATION", 489}, {"EXPRESSION", 13}}},
        };
    return table;
  }

  static Taxonomy reference() {
    Taxonomy t;
    for (const auto& [coarse, finers] : reference_table()) {
      const auto id = t.add_coarse(coarse);
      for (const auto& [finer, count] : finers) t.add_finer(finer, id);
    }
    return t;
  }

 private:
  std::vector<std::string> coarse_;
  std::vector<Finer> finer_;
};

/// One labeled (or, at predict time, unlabeled-finer) question.
struct QuestionSample {
  std::string text;
  std::vector<std::string> tokens;  // filled by preprocess::prepare_tokens
  CoarseId coarse;
  std::optional<FinerId> finer;

  friend bool operator==(const QuestionSample&, const QuestionSample&) = default;
};

/// Parses `question<TAB>coarse<TAB>finer` records. The finer column may be
/// omitted. Any bad record aborts the whole load.
inline std::vector<QuestionSample> parse_corpus(std::istream& in, const Taxonomy& taxonomy,
                                                std::string_view source = "<corpus>") {
  std::vector<QuestionSample> samples;
  detail::for_each_record(in, [&](std::string_view line, std::size_t number) {
    const auto at = detail::where(source, number);
    if (!detail::is_valid_utf8(line)) throw DataError(at + "invalid UTF-8");
    const auto fields = detail::split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3) {
      throw DataError(at + "expected 'question<TAB>coarse<TAB>finer', got " +
                      std::to_string(fields.size()) + " field(s)");
    }
    const auto text = detail::trim(fields[0]);
    if (text.empty()) throw DataError(at + "empty question text");
    const auto coarse_name = detail::trim(fields[1]);
    const auto coarse = taxonomy.find_coarse(coarse_name);
    if (!coarse) throw DataError(at + "unknown coarse label '" + std::string(coarse_name) + "'");

    QuestionSample sample{std::string(text), {}, *coarse, std::nullopt};
    if (fields.size() == 3) {
      const auto finer_name = detail::trim(fields[2]);
      if (!finer_name.empty()) {
        const auto finer = taxonomy.find_finer(*coarse, finer_name);
        if (!finer) {
          bool elsewhere = false;
          for (std::size_t c = 0; c < taxonomy.coarse_count(); ++c) {
            elsewhere |= taxonomy.find_finer(CoarseId{static_cast<std::uint32_t>(c)}, finer_name).has_value();
          }
          throw DataError(at + (elsewhere ? "finer label '" + std::string(finer_name) +
                                                "' does not belong to coarse class '" +
                                                std::string(coarse_name) + "'"
                                          : "unknown finer label '" + std::string(finer_name) + "'"));
        }
        sample.finer = *finer;
      }
    }
    samples.push_back(std::move(sample));
  });
  if (samples.empty()) throw DataError(std::string(source) + ": corpus contains no records");
  return samples;
}

inline std::vector<QuestionSample> load_corpus(const std::string& path, const Taxonomy& taxonomy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, taxonomy, path);
}

inline void save_corpus(std::ostream& out, const std::vector<QuestionSample>& samples,
                        const Taxonomy& taxonomy) {
  for (const auto& s : samples) {
    out << s.text << '\t' << taxonomy.coarse_name(s.coarse) << '\t';
    if (s.finer) out << taxonomy.finer_name(*s.finer);
    out << '\n';
  }
}

inline std::map<CoarseId, std::size_t> class_counts(const std::vector<QuestionSample>& samples) {
  std::map<CoarseId, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.coarse];
  return counts;
}

/// Fold assignment for k-fold cross-validation.
struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::uint32_t> assignments;

  [[nodiscard]] std::vector<std::size_t> validation_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(i);
    }
    return out;
  }

  [[nodiscard]] std::vector<std::size_t> training_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(i);
    }
    return out;
  }

  [[nodiscard]] std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }
};

/// Coarse-stratified k-fold plan.
///
/// Samples are bucketed by (coarse, finer), shuffled inside each bucket and
/// then dealt round-robin with a single running counter. Buckets of the same
/// coarse class are contiguous in the deal, so per-coarse fold counts differ
/// by at most one; finer classes get the same guarantee as a side effect, and
/// total fold sizes differ by at most one too.
inline FoldPlan stratified_kfold(const std::vector<QuestionSample>& samples, std::size_t k,
                                 std::uint64_t seed) {
  if (k < 2) throw UsageError("stratified_kfold: k must be at least 2");
  if (k > samples.size()) {
    throw UsageError("stratified_kfold: k=" + std::to_string(k) + " exceeds sample count " +
                     std::to_string(samples.size()));
  }
  std::map<std::pair<std::uint32_t, std::int64_t>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::int64_t finer = samples[i].finer ? samples[i].finer->value : -1;
    buckets[{samples[i].coarse.value, finer}].push_back(i);
  }
  Rng rng(seed);
  FoldPlan plan{k, std::vector<std::uint32_t>(samples.size(), 0)};
  std::size_t counter = 0;
  for (auto& [key, members] : buckets) {
    rng.shuffle(members.begin(), members.end());
    for (auto idx : members) plan.assignments[idx] = static_cast<std::uint32_t>(counter++ % k);
  }
  return plan;
}

}  // namespace qclass
