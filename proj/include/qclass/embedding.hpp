#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qclass/error.hpp"
#include "qclass/preprocess.hpp"
#include "qclass/random.hpp"

namespace qclass {

/// Row-major |vocab| x dim table of word vectors.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t r, std::size_t d) : rows(r), dim(d), values(r * d, 0.0) {}

  [[nodiscard]] std::span<const double> row(std::size_t id) const { return {values.data() + id * dim, dim}; }
  [[nodiscard]] std::span<double> row(std::size_t id) { return {values.data() + id * dim, dim}; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

/// A question as a fixed max_len x dim matrix; rows past `length` are zero.
struct EncodedSample {
  std::size_t max_len = 0;
  std::size_t dim = 0;
  std::size_t length = 0;
  std::vector<double> values;

  [[nodiscard]] std::span<const double> row(std::size_t t) const { return {values.data() + t * dim, dim}; }
};

struct EmbeddingConfig {
  std::size_t dim = 100;
  std::size_t window = 2;
  std::size_t negatives = 5;
  std::size_t epochs = 100;
  double learning_rate = 0.025;
  // Floor of the linear decay, as a fraction of learning_rate.
  double min_learning_rate_fraction = 1e-4;
};

/// All (center, context) pairs with 0 < |i - j| <= window, in center order.
inline std::vector<std::pair<TokenId, TokenId>> generate_skipgram_pairs(std::span<const TokenId> ids,
                                                                        std::size_t window) {
  if (window < 1) throw UsageError("generate_skipgram_pairs: window must be at least 1");
  std::vector<std::pair<TokenId, TokenId>> pairs;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == Vocabulary::pad) continue;
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(ids.size() - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j == i || ids[j] == Vocabulary::pad) continue;
      pairs.emplace_back(ids[i], ids[j]);
    }
  }
  return pairs;
}

/// One skip-gram training example: a positive (center, context) pair and the
/// negative context words drawn for it.
struct SkipGramExample {
  TokenId center;
  TokenId context;
  std::vector<TokenId> negatives;
};

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace detail

/// Negative-sampling loss of one example:
///   -log s(u_o . v_c) - sum_k log s(-u_k . v_c)
/// with v the input (center) table and u the output (context) table.
inline double skipgram_loss(const EmbeddingMatrix& input, const EmbeddingMatrix& output,
                            const SkipGramExample& ex) {
  const auto v = input.row(ex.center);
  double loss = -detail::log_sigmoid(detail::dot(output.row(ex.context), v));
  for (auto neg : ex.negatives) loss -= detail::log_sigmoid(-detail::dot(output.row(neg), v));
  return loss;
}

/// Accumulates d(loss)/d(input) and d(loss)/d(output) of one example into the
/// gradient tables (same shapes as the embedding tables).
inline void skipgram_gradient(const EmbeddingMatrix& input, const EmbeddingMatrix& output,
                              const SkipGramExample& ex, EmbeddingMatrix& grad_input,
                              EmbeddingMatrix& grad_output) {
  const auto v = input.row(ex.center);
  auto gv = grad_input.row(ex.center);
  const double gpos = detail::sigmoid(detail::dot(output.row(ex.context), v)) - 1.0;
  detail::axpy(gpos, output.row(ex.context), gv);
  detail::axpy(gpos, v, grad_output.row(ex.context));
  for (auto neg : ex.negatives) {
    const double gneg = detail::sigmoid(detail::dot(output.row(neg), v));
    detail::axpy(gneg, output.row(neg), gv);
    detail::axpy(gneg, v, grad_output.row(neg));
  }
}

/// Samples negatives from the unigram distribution raised to 0.75.
class NegativeSampler {
 public:
  explicit NegativeSampler(std::span<const std::size_t> counts) {
    cumulative_.reserve(counts.size());
    double total = 0;
    for (auto c : counts) {
      total += c > 0 ? std::pow(static_cast<double>(c), 0.75) : 0.0;
      cumulative_.push_back(total);
    }
    if (total <= 0) throw DataError("word2vec: no tokens to sample negatives from");
    for (auto& c : cumulative_) c /= total;
  }

  TokenId draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = static_cast<std::size_t>(it - cumulative_.begin());
    return static_cast<TokenId>(std::min(idx, cumulative_.size() - 1));
  }

 private:
  std::vector<double> cumulative_;
};

struct Word2VecResult {
  EmbeddingMatrix input;
  EmbeddingMatrix output;
  std::vector<double> epoch_loss;  // mean per-example loss before each update
};

/// Skip-gram with negative sampling, plain per-example SGD with a linearly
/// decaying learning rate. Returns both tables; the input table is the
/// embedding. The PAD row starts at zero and is never touched.
inline Word2VecResult train_word2vec_full(std::span<const std::vector<TokenId>> corpus_ids,
                                          std::size_t vocab_size, const EmbeddingConfig& cfg, Rng rng) {
  if (vocab_size < 2) throw DataError("word2vec: vocabulary needs at least 2 entries");
  if (corpus_ids.empty()) throw DataError("word2vec: empty corpus");
  if (cfg.dim == 0 || cfg.window == 0) throw UsageError("word2vec: dim and window must be positive");

  std::vector<std::size_t> counts(vocab_size, 0);
  std::size_t pair_count = 0;
  for (const auto& ids : corpus_ids) {
    for (auto id : ids) {
      if (id >= vocab_size) throw DataError("word2vec: token id out of range");
      if (id != Vocabulary::pad) ++counts[id];
    }
    pair_count += generate_skipgram_pairs(ids, cfg.window).size();
  }
  const NegativeSampler sampler(counts);

  Word2VecResult r{EmbeddingMatrix(vocab_size, cfg.dim), EmbeddingMatrix(vocab_size, cfg.dim), {}};
  const double bound = 0.5 / static_cast<double>(cfg.dim);
  for (std::size_t id = 1; id < vocab_size; ++id) {
    for (auto& x : r.input.row(id)) x = rng.uniform(-bound, bound);
  }

  std::vector<std::size_t> order(corpus_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const double total_steps = static_cast<double>(std::max<std::size_t>(1, pair_count * cfg.epochs));
  double step = 0;
  std::vector<double> grad_center(cfg.dim);
  SkipGramExample ex{0, 0, {}};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t examples = 0;
    for (auto s : order) {
      for (const auto& [center, context] : generate_skipgram_pairs(corpus_ids[s], cfg.window)) {
        const double lr = cfg.learning_rate *
                          std::max(cfg.min_learning_rate_fraction, 1.0 - step / total_steps);
        step += 1;
        ex.center = center;
        ex.context = context;
        ex.negatives.clear();
        for (std::size_t n = 0; n < cfg.negatives; ++n) {
          const auto neg = sampler.draw(rng);
          if (neg != context) ex.negatives.push_back(neg);
        }
        loss_sum += skipgram_loss(r.input, r.output, ex);
        ++examples;

        // Same gradient as skipgram_gradient, applied in place: output rows
        // first, the center row once all of its contributions are summed.
        auto v = r.input.row(center);
        std::fill(grad_center.begin(), grad_center.end(), 0.0);
        auto apply = [&](TokenId target, double label) {
          auto u = r.output.row(target);
          const double g = detail::sigmoid(detail::dot(u, v)) - label;
          detail::axpy(g, u, grad_center);
          detail::axpy(-lr * g, v, u);
        };
        apply(context, 1.0);
        for (auto neg : ex.negatives) apply(neg, 0.0);
        detail::axpy(-lr, grad_center, v);
      }
    }
    const double mean = examples ? loss_sum / static_cast<double>(examples) : 0.0;
    if (!std::isfinite(mean)) {
      throw NumericError("word2vec: non-finite loss at epoch " + std::to_string(epoch));
    }
    r.epoch_loss.push_back(mean);
  }
  return r;
}

inline EmbeddingMatrix train_word2vec(std::span<const std::vector<TokenId>> corpus_ids, std::size_t vocab_size,
                                      const EmbeddingConfig& cfg, Rng rng) {
  return train_word2vec_full(corpus_ids, vocab_size, cfg, rng).input;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(detail::dot(a, a));
  const double nb = std::sqrt(detail::dot(b, b));
  if (na == 0 || nb == 0) return 0.0;
  return detail::dot(a, b) / (na * nb);
}

/// Row t holds the embedding of ids[t] for t < min(|ids|, max_len); the
/// tail beyond max_len is dropped.
inline EncodedSample encode_question(std::span<const TokenId> ids, const EmbeddingMatrix& emb,
                                     std::size_t max_len) {
  if (max_len < 1) throw UsageError("encode_question: max_len must be at least 1");
  EncodedSample out{max_len, emb.dim, std::min(ids.size(), max_len),
                    std::vector<double>(max_len * emb.dim, 0.0)};
  for (std::size_t t = 0; t < out.length; ++t) {
    if (ids[t] >= emb.rows) throw DataError("encode_question: token id out of range");
    std::copy_n(emb.row(ids[t]).begin(), emb.dim, out.values.begin() + static_cast<std::ptrdiff_t>(t * emb.dim));
  }
  return out;
}

/// Word-vector text format: `rows dim` header, then `token v1 ... vdim`.
inline void save_embeddings(std::ostream& out, const EmbeddingMatrix& emb, const Vocabulary& vocab) {
  if (emb.rows != vocab.size()) throw DataError("save_embeddings: row count differs from vocabulary size");
  out << emb.rows << ' ' << emb.dim << '\n';
  char buf[32];
  for (std::size_t r = 0; r < emb.rows; ++r) {
    out << vocab.token(static_cast<TokenId>(r));
    for (double x : emb.row(r)) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      out << buf;
    }
    out << '\n';
  }
}

inline EmbeddingMatrix load_embeddings(std::istream& in, const Vocabulary& vocab) {
  std::size_t rows = 0;
  std::size_t dim = 0;
  if (!(in >> rows >> dim)) throw DataError("embeddings: missing header");
  if (rows != vocab.size()) throw DataError("embeddings: row count differs from vocabulary size");
  EmbeddingMatrix emb(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    std::string token;
    if (!(in >> token)) throw DataError("embeddings: truncated file");
    if (token != vocab.token(static_cast<TokenId>(r))) {
      throw DataError("embeddings: token '" + token + "' out of vocabulary order");
    }
    for (auto& x : emb.row(r)) {
      if (!(in >> x)) throw DataError("embeddings: truncated row for '" + token + "'");
    }
  }
  return emb;
}

}  // namespace qclass
