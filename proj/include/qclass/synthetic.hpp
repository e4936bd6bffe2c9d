#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qclass/corpus.hpp"
#include "qclass/error.hpp"
#include "qclass/random.hpp"

namespace qclass::synthetic {

/// Generated Bengali-script question corpus with known structure.
///
/// A question is a run of shared stop words plus two short phrases: a coarse
/// phrase (a class marker word followed by one of the class's keywords) and
/// a finer phrase (two words from the finer class's own pool, adjacent, so
/// the finer class shows as a recurring bigram). Keywords are drawn with
/// Zipf-like frequencies, so a class has a few common and several rare
/// keywords. A share of questions drop the marker word.
struct GeneratorConfig {
  std::size_t coarse_classes = 6;
  std::size_t finer_per_coarse = 3;
  std::size_t samples = 600;
  double imbalance = 5.0;  // largest / smallest coarse class size
  std::size_t stop_words = 24;
  std::size_t coarse_markers = 2;
  std::size_t coarse_keywords = 4;
  double keyword_skew = 0.0;  // Zipf exponent of keyword frequencies; 0 = uniform
  std::size_t finer_keywords = 2;
  bool shared_finer_words = false;  // finer class f of every coarse class uses the same word pool
  std::size_t min_words = 3;  // stop words per question
  std::size_t max_words = 7;
  double marker_drop_rate = 0.0;
  double distractor_rate = 0.0;  // share of questions with a keyword of another class
  double number_rate = 0.1;
  double english_rate = 0.05;
};

/// Generator seed of the end-to-end benchmark corpus.
inline constexpr std::uint64_t benchmark_seed = 7;

/// Benchmark corpus: 600 questions, 6 x 3 classes, 5:1 imbalance. Finer
/// words are shared across coarse classes and a few questions lose their
/// marker, so the coarse class rests on the keyword alone and the rare
/// keywords of small classes are what oversampling has to help with.
inline GeneratorConfig benchmark_config() {
  GeneratorConfig g;
  g.coarse_keywords = 16;
  g.keyword_skew = 0.8;
  g.marker_drop_rate = 0.07;
  g.shared_finer_words = true;
  return g;
}

struct Corpus {
  Taxonomy taxonomy;
  std::vector<QuestionSample> samples;
};

namespace detail {

inline constexpr std::array<std::string_view, 28> consonants{
    "ক", "খ", "গ", "ঘ", "চ", "ছ", "জ", "ঝ", "ট", "ঠ", "ড", "ঢ", "ত", "থ",
    "দ", "ধ", "ন", "প", "ফ", "ব", "ভ", "ম", "য", "র", "ল", "শ", "স", "হ"};
inline constexpr std::array<std::string_view, 8> vowel_signs{"", "া", "ি", "ী", "ু", "ূ", "ে", "ো"};
inline constexpr std::array<std::string_view, 10> digits{"০", "১", "২", "৩", "৪", "৫", "৬", "৭", "৮", "৯"};
inline constexpr std::array<std::string_view, 8> english{"FIFA", "NASA", "UNESCO", "DNA", "Dhaka", "Oscar", "BBC",
                                                         "Google"};

/// Distinct three-syllable pseudo-word for every index below 224^3.
inline std::string pseudo_word(std::uint64_t index) {
  constexpr std::uint64_t syllables = consonants.size() * vowel_signs.size();
  const std::uint64_t space = syllables * syllables * syllables;
  // Multiplying by a unit modulo `space` scatters consecutive indices.
  std::uint64_t code = (index * 2654435761ULL + 12345) % space;
  std::string word;
  for (int i = 0; i < 3; ++i) {
    const auto s = code % syllables;
    code /= syllables;
    word += consonants[s / vowel_signs.size()];
    word += vowel_signs[s % vowel_signs.size()];
  }
  return word;
}

class WordSource {
 public:
  std::vector<std::string> take(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(pseudo_word(next_++));
    return out;
  }

 private:
  std::uint64_t next_ = 0;
};

inline std::string number_token(Rng& rng) {
  std::string out;
  const auto len = 1 + rng.below(4);
  for (std::uint64_t i = 0; i < len; ++i) out += digits[rng.below(digits.size())];
  return out;
}

}  // namespace detail

/// Class sizes in a geometric progression from largest to smallest with the
/// given ratio, summing to `total`.
inline std::vector<std::size_t> geometric_sizes(std::size_t classes, std::size_t total, double ratio) {
  if (classes == 0 || total < classes) throw UsageError("synthetic: need at least one sample per class");
  std::vector<double> w(classes);
  for (std::size_t i = 0; i < classes; ++i) {
    w[i] = classes == 1 ? 1.0 : std::pow(ratio, -static_cast<double>(i) / static_cast<double>(classes - 1));
  }
  double sum = 0;
  for (double x : w) sum += x;
  std::vector<std::size_t> sizes(classes);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < classes; ++i) {
    sizes[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(w[i] / sum * static_cast<double>(total))));
    assigned += sizes[i];
  }
  for (std::size_t i = 0; assigned < total; i = (i + 1) % classes, ++assigned) ++sizes[i];
  return sizes;
}

namespace detail {

class ZipfPicker {
 public:
  ZipfPicker(std::size_t n, double exponent) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      total += std::pow(static_cast<double>(i + 1), -exponent);
      cumulative_.push_back(total);
    }
    for (auto& c : cumulative_) c /= total;
  }

  std::size_t draw(Rng& rng) const {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), rng.uniform());
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

inline void insert_at_random(std::vector<std::string>& tokens, std::vector<std::string> phrase, Rng& rng) {
  const auto at = static_cast<std::ptrdiff_t>(rng.below(tokens.size() + 1));
  tokens.insert(tokens.begin() + at, phrase.begin(), phrase.end());
}

}  // namespace detail

/// Builds the questions of every finer class; `counts[c][f]` samples of
/// finer class f of coarse class c.
inline std::vector<QuestionSample> generate_questions(const Taxonomy& taxonomy,
                                                      const std::vector<std::vector<std::size_t>>& counts,
                                                      const GeneratorConfig& cfg, Rng rng) {
  if (cfg.coarse_keywords == 0 || cfg.coarse_markers == 0 || cfg.finer_keywords == 0 || cfg.stop_words == 0 ||
      cfg.max_words < cfg.min_words || cfg.keyword_skew < 0) {
    throw UsageError("synthetic: invalid generator configuration");
  }
  const std::size_t coarse_n = taxonomy.coarse_count();
  detail::WordSource words;
  const auto stop = words.take(cfg.stop_words);
  std::vector<std::vector<std::string>> markers(coarse_n);
  std::vector<std::vector<std::string>> keywords(coarse_n);
  std::vector<std::vector<std::vector<std::string>>> finer_words(coarse_n);
  for (std::size_t c = 0; c < coarse_n; ++c) {
    markers[c] = words.take(cfg.coarse_markers);
    keywords[c] = words.take(cfg.coarse_keywords);
    for (std::size_t f = 0; f < counts[c].size(); ++f) {
      if (cfg.shared_finer_words && c > 0 && f < finer_words[0].size()) {
        finer_words[c].push_back(finer_words[0][f]);
      } else {
        finer_words[c].push_back(words.take(cfg.finer_keywords));
      }
    }
  }
  const detail::ZipfPicker keyword_picker(cfg.coarse_keywords, cfg.keyword_skew);
  auto pick = [&](const std::vector<std::string>& pool) { return pool[rng.below(pool.size())]; };

  std::vector<QuestionSample> out;
  for (std::size_t c = 0; c < coarse_n; ++c) {
    const auto members = taxonomy.finer_of(CoarseId{static_cast<std::uint32_t>(c)});
    for (std::size_t f = 0; f < counts[c].size(); ++f) {
      for (std::size_t i = 0; i < counts[c][f]; ++i) {
        const auto len = cfg.min_words + rng.below(cfg.max_words - cfg.min_words + 1);
        std::vector<std::string> tokens;
        for (std::size_t t = 0; t < len; ++t) tokens.push_back(pick(stop));
        std::vector<std::string> coarse_phrase{keywords[c][keyword_picker.draw(rng)]};
        if (rng.uniform() >= cfg.marker_drop_rate) coarse_phrase.insert(coarse_phrase.begin(), pick(markers[c]));
        detail::insert_at_random(tokens, coarse_phrase, rng);
        detail::insert_at_random(tokens, {pick(finer_words[c][f]), pick(finer_words[c][f])}, rng);
        if (coarse_n > 1 && rng.uniform() < cfg.distractor_rate) {
          auto other = rng.below(coarse_n - 1);
          if (other >= c) ++other;
          detail::insert_at_random(tokens, {keywords[other][keyword_picker.draw(rng)]}, rng);
        }
        if (rng.uniform() < cfg.number_rate) detail::insert_at_random(tokens, {detail::number_token(rng)}, rng);
        if (rng.uniform() < cfg.english_rate) {
          detail::insert_at_random(tokens, {std::string(detail::english[rng.below(detail::english.size())])}, rng);
        }
        std::string text;
        for (const auto& t : tokens) text += (text.empty() ? "" : " ") + t;
        text += rng.below(2) == 0 ? "?" : " ।";
        out.push_back(QuestionSample{text, {}, CoarseId{static_cast<std::uint32_t>(c)}, members[f]});
      }
    }
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

/// Corpus over the built-in coarse classes (cycled if more are requested),
/// each restricted to its first `finer_per_coarse` finer classes. Coarse
/// sizes fall geometrically in taxonomy order; finer sizes within a coarse
/// class are as equal as possible.
inline Corpus generate(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.coarse_classes == 0 || cfg.finer_per_coarse == 0 || cfg.imbalance < 1.0) {
    throw UsageError("synthetic: invalid generator configuration");
  }
  const auto& table = Taxonomy::reference_table();
  Corpus corpus;
  for (std::size_t c = 0; c < cfg.coarse_classes; ++c) {
    const auto& [name, finers] = table[c % table.size()];
    const auto id = corpus.taxonomy.add_coarse(c < table.size() ? std::string(name)
                                                                : std::string(name) + "_" + std::to_string(c));
    for (std::size_t f = 0; f < cfg.finer_per_coarse; ++f) {
      std::string finer = f < finers.size() ? std::string(finers[f].first) : "OTHER";
      if (corpus.taxonomy.find_finer(id, finer)) finer = "FINER_" + std::to_string(f);
      corpus.taxonomy.add_finer(finer, id);
    }
  }
  const auto coarse_sizes = geometric_sizes(cfg.coarse_classes, cfg.samples, cfg.imbalance);
  std::vector<std::vector<std::size_t>> counts;
  for (auto size : coarse_sizes) {
    if (size < cfg.finer_per_coarse) throw UsageError("synthetic: too few samples for the finer classes");
    std::vector<std::size_t> per(cfg.finer_per_coarse, size / cfg.finer_per_coarse);
    for (std::size_t f = 0; f < size % cfg.finer_per_coarse; ++f) ++per[f];
    counts.push_back(per);
  }
  corpus.samples = generate_questions(corpus.taxonomy, counts, cfg, Rng(seed).substream("synthetic"));
  return corpus;
}

/// Corpus with the built-in taxonomy and its per-finer-class counts
/// (3333 questions, 6 coarse classes).
inline Corpus generate_reference_shaped(const GeneratorConfig& cfg, std::uint64_t seed) {
  Corpus corpus{Taxonomy::reference(), {}};
  std::vector<std::vector<std::size_t>> counts;
  for (const auto& [coarse, finers] : Taxonomy::reference_table()) {
    std::vector<std::size_t> per;
    for (const auto& [finer, count] : finers) per.push_back(count);
    counts.push_back(per);
  }
  corpus.samples = generate_questions(corpus.taxonomy, counts, cfg, Rng(seed).substream("synthetic"));
  return corpus;
}

}  // namespace qclass::synthetic
