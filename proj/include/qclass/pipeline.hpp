#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qclass/balance.hpp"
#include "qclass/cnn.hpp"
#include "qclass/config.hpp"
#include "qclass/container.hpp"
#include "qclass/corpus.hpp"
#include "qclass/embedding.hpp"
#include "qclass/error.hpp"
#include "qclass/preprocess.hpp"
#include "qclass/random.hpp"
#include "qclass/sgd_linear.hpp"
#include "qclass/tfidf.hpp"

namespace qclass {

/// Stage-two model of one coarse class.
struct FinerStage {
  TfidfVectorizer vectorizer;
  LinearModel model;
};

struct PipelineModel {
  Taxonomy taxonomy;
  Vocabulary vocabulary;
  EmbeddingMatrix embeddings;
  std::size_t max_len = 0;
  cnn::CnnModel coarse;
  std::vector<FinerStage> finer;  // indexed by coarse id
  std::uint64_t fingerprint = 0;
};

/// Diagnostics collected while training; not part of the model.
struct PipelineTrace {
  std::vector<double> word2vec_loss;
  cnn::TrainingLog cnn;
  std::size_t real_samples = 0;
  std::size_t synthetic_samples = 0;
};

template <typename Fn>
auto run_stage(std::string_view stage, Fn&& fn) -> decltype(fn()) {
  const auto prefix = std::string(stage) + ": ";
  try {
    return fn();
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const UsageError& e) {
    throw UsageError(prefix + e.what());
  }
}

inline std::vector<QuestionSample> with_tokens(std::vector<QuestionSample> samples) {
  prepare_tokens(samples);
  return samples;
}

/// Stage-one training material: the fitted vocabulary and embeddings and the
/// (optionally SMOTE-balanced) flattened training set. Real samples keep
/// their index into the input as `origin`.
struct CoarseTrainingData {
  Vocabulary vocabulary;
  EmbeddingMatrix embeddings;
  std::vector<double> word2vec_loss;
  std::vector<FlatSample> train;
  std::vector<SmoteProvenance> provenance;
};

inline std::vector<TokenId> question_ids(const QuestionSample& s, const Vocabulary& vocab) {
  return normalize_tokens(s.tokens, vocab);
}

/// `train` must have tokens filled in.
inline CoarseTrainingData prepare_coarse_training(const std::vector<QuestionSample>& train, const PipelineConfig& cfg,
                                                  const Rng& root, bool record_provenance = false) {
  CoarseTrainingData out;
  std::vector<std::vector<std::string>> token_lists;
  token_lists.reserve(train.size());
  for (const auto& s : train) token_lists.push_back(s.tokens);
  out.vocabulary = run_stage("vocabulary", [&] { return build_vocabulary(token_lists, cfg.preprocess.min_count); });

  std::vector<std::vector<TokenId>> ids;
  ids.reserve(train.size());
  for (const auto& s : train) ids.push_back(question_ids(s, out.vocabulary));
  auto w2v = run_stage("word2vec", [&] {
    return train_word2vec_full(ids, out.vocabulary.size(), cfg.embedding, root.substream("word2vec"));
  });
  out.embeddings = std::move(w2v.input);
  out.word2vec_loss = std::move(w2v.epoch_loss);

  std::vector<FlatSample> flat;
  flat.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    flat.push_back(flatten(encode_question(ids[i], out.embeddings, cfg.preprocess.max_len), train[i].coarse, i));
  }
  if (!cfg.smote.enabled) {
    out.train = std::move(flat);
    return out;
  }
  auto balanced = run_stage("smote", [&] {
    return smote_oversample(flat, majority_targets(flat), cfg.smote.k, root.substream("smote"), record_provenance);
  });
  out.train = std::move(balanced.samples);
  out.provenance = std::move(balanced.provenance);
  return out;
}

inline EncodedSample encode_text_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                                        const EmbeddingMatrix& emb, std::size_t max_len) {
  return encode_question(normalize_tokens(tokens, vocab), emb, max_len);
}

/// Stratified hold-out: one fold of a ceil(1 / fraction)-fold plan.
/// Returns the whole input as training data when the split is impossible.
inline std::pair<std::vector<QuestionSample>, std::vector<QuestionSample>> split_validation(
    const std::vector<QuestionSample>& samples, double fraction, std::uint64_t seed) {
  if (fraction <= 0) return {samples, {}};
  const auto k = static_cast<std::size_t>(std::ceil(1.0 / fraction));
  if (k < 2 || k > samples.size()) return {samples, {}};
  const auto plan = stratified_kfold(samples, k, seed);
  std::pair<std::vector<QuestionSample>, std::vector<QuestionSample>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (plan.assignments[i] == 0 ? out.second : out.first).push_back(samples[i]);
  }
  return out;
}

/// Trains both stages. `val` only drives CNN early stopping; it may be empty.
///
/// Order: vocabulary -> word2vec -> encoding -> SMOTE (training data only)
/// -> CNN; then per coarse class a bigram TF-IDF fit and an SGD model on
/// that class's gold-labeled training questions.
inline PipelineModel train_pipeline(const Taxonomy& taxonomy, const std::vector<QuestionSample>& train_in,
                                    const std::vector<QuestionSample>& val_in, const PipelineConfig& cfg,
                                    std::uint64_t seed, PipelineTrace* trace = nullptr) {
  validate(cfg);
  if (train_in.empty()) throw DataError("train: empty training set");
  std::vector<std::size_t> per_coarse(taxonomy.coarse_count(), 0);
  for (const auto& s : train_in) {
    if (s.coarse.value >= taxonomy.coarse_count()) throw DataError("train: coarse label outside the taxonomy");
    if (!s.finer) throw DataError("train: sample without a finer label: '" + s.text + "'");
    if (taxonomy.parent(*s.finer) != s.coarse) throw DataError("train: finer label does not belong to its coarse class");
    ++per_coarse[s.coarse.value];
  }
  for (std::size_t c = 0; c < per_coarse.size(); ++c) {
    if (per_coarse[c] == 0) {
      throw DataError("train: coarse class '" + taxonomy.coarse_names()[c] + "' has no training samples");
    }
  }

  const Rng root(seed);
  const auto train = with_tokens(train_in);
  const auto val = with_tokens(val_in);

  PipelineModel model;
  model.taxonomy = taxonomy;
  model.max_len = cfg.preprocess.max_len;
  model.fingerprint = config_fingerprint(cfg, seed);

  auto data = prepare_coarse_training(train, cfg, root);
  model.vocabulary = std::move(data.vocabulary);
  model.embeddings = std::move(data.embeddings);

  cnn::LabeledInputs train_set;
  for (const auto& f : data.train) {
    train_set.inputs.emplace_back(f.vector);
    train_set.labels.push_back(f.label.value);
  }
  std::vector<EncodedSample> val_encoded;
  for (const auto& s : val) {
    val_encoded.push_back(encode_text_tokens(s.tokens, model.vocabulary, model.embeddings, model.max_len));
  }
  cnn::LabeledInputs val_set;
  for (std::size_t i = 0; i < val.size(); ++i) {
    val_set.inputs.emplace_back(val_encoded[i].values);
    val_set.labels.push_back(val[i].coarse.value);
  }

  cnn::TrainingLog log;
  model.coarse = run_stage("cnn", [&] {
    Rng init = root.substream("cnn_init");
    auto net = cnn::build_model(cfg.architecture, cnn::Shape{model.max_len, model.embeddings.dim},
                                taxonomy.coarse_count(), init);
    return cnn::train_cnn(std::move(net), train_set, val_set, cfg.training, root.substream("cnn_train"), &log);
  });

  model.finer.resize(taxonomy.coarse_count());
  const Rng sgd_root = root.substream("sgd");
  for (std::size_t c = 0; c < taxonomy.coarse_count(); ++c) {
    std::vector<std::vector<std::string>> docs;
    std::vector<FinerId> labels;
    for (const auto& s : train) {
      if (s.coarse.value != c) continue;
      docs.push_back(s.tokens);
      labels.push_back(*s.finer);
    }
    model.finer[c] = run_stage("finer[" + taxonomy.coarse_names()[c] + "]", [&] {
      FinerStage stage{fit_tfidf(docs), {}};
      std::vector<SparseVector> X;
      X.reserve(docs.size());
      for (const auto& d : docs) X.push_back(stage.vectorizer.transform(d));
      stage.model = train_sgd(X, labels, cfg.sgd, sgd_root.substream(c));
      return stage;
    });
  }

  if (trace) {
    trace->word2vec_loss = data.word2vec_loss;
    trace->cnn = log;
    trace->synthetic_samples = 0;
    for (const auto& f : data.train) trace->synthetic_samples += f.synthetic ? 1 : 0;
    trace->real_samples = data.train.size() - trace->synthetic_samples;
  }
  return model;
}

struct Classification {
  CoarseId coarse;
  FinerId finer;
  std::vector<double> coarse_probabilities;
  std::vector<double> finer_scores;
};

/// Stage two only, with the coarse class given (gold routing).
inline FinerPrediction classify_finer(const PipelineModel& model, CoarseId coarse, std::span<const std::string> tokens) {
  const auto& stage = model.finer.at(coarse.value);
  return predict_finer(stage.model, stage.vectorizer.transform(tokens));
}

inline cnn::CoarsePrediction classify_coarse(const PipelineModel& model, std::span<const std::string> tokens) {
  const auto encoded = encode_text_tokens(tokens, model.vocabulary, model.embeddings, model.max_len);
  return cnn::predict_coarse(model.coarse, encoded.values);
}

/// Both stages with hard routing: the finer label always belongs to the
/// predicted coarse class.
inline Classification classify_tokens(const PipelineModel& model, std::span<const std::string> tokens) {
  auto coarse = classify_coarse(model, tokens);
  const CoarseId c{static_cast<std::uint32_t>(coarse.label)};
  auto finer = classify_finer(model, c, tokens);
  return Classification{c, finer.label, std::move(coarse.probabilities), std::move(finer.scores)};
}

inline Classification classify(const PipelineModel& model, std::string_view question) {
  const auto tokens = tokenize(filter_punctuation(question));
  return classify_tokens(model, tokens);
}

inline Container pipeline_container(const PipelineModel& model) {
  Container c;
  {
    ByteWriter w;
    w.put_u64(model.fingerprint);
    w.put_u64(model.max_len);
    c.add("meta", w.take());
  }
  {
    std::ostringstream os;
    model.taxonomy.save(os);
    c.add("taxonomy", os.str());
  }
  {
    std::ostringstream os;
    model.vocabulary.save(os);
    c.add("vocabulary", os.str());
  }
  {
    ByteWriter w;
    w.put_u64(model.embeddings.rows);
    w.put_u64(model.embeddings.dim);
    w.put_doubles(model.embeddings.values);
    c.add("embeddings", w.take());
  }
  c.add("cnn", cnn::serialize_model(model.coarse));
  for (std::size_t i = 0; i < model.finer.size(); ++i) {
    std::ostringstream os;
    model.finer[i].vectorizer.save(os);
    c.add("finer/" + std::to_string(i) + "/tfidf", os.str());
    c.add("finer/" + std::to_string(i) + "/linear", serialize_linear(model.finer[i].model));
  }
  return c;
}

inline std::string serialize_pipeline(const PipelineModel& model) { return pipeline_container(model).encode(); }

inline PipelineModel pipeline_from_container(const Container& c) {
  PipelineModel m;
  {
    ByteReader r(c.section("meta"), "meta");
    m.fingerprint = r.get_u64();
    m.max_len = r.get_u64();
    r.expect_done();
  }
  {
    std::istringstream is(c.section("taxonomy"));
    m.taxonomy = Taxonomy::parse(is, "bundle taxonomy");
  }
  {
    std::istringstream is(c.section("vocabulary"));
    m.vocabulary = Vocabulary::parse(is);
  }
  {
    ByteReader r(c.section("embeddings"), "embeddings");
    m.embeddings.rows = r.get_u64();
    m.embeddings.dim = r.get_u64();
    m.embeddings.values = r.get_doubles();
    r.expect_done();
    if (m.embeddings.rows != m.vocabulary.size() ||
        m.embeddings.values.size() != m.embeddings.rows * m.embeddings.dim) {
      throw DataError("bundle: embeddings do not match the vocabulary");
    }
  }
  m.coarse = cnn::deserialize_model(c.section("cnn"));
  if (m.coarse.input_shape() != cnn::Shape{m.max_len, m.embeddings.dim} ||
      m.coarse.class_count() != m.taxonomy.coarse_count()) {
    throw DataError("bundle: coarse model does not match taxonomy or embeddings");
  }
  for (std::size_t i = 0; i < m.taxonomy.coarse_count(); ++i) {
    std::istringstream is(c.section("finer/" + std::to_string(i) + "/tfidf"));
    FinerStage stage{TfidfVectorizer::parse(is), deserialize_linear(c.section("finer/" + std::to_string(i) + "/linear"))};
    if (stage.model.dim != stage.vectorizer.dimension()) throw DataError("bundle: finer model dimension mismatch");
    for (auto f : stage.model.classes) {
      if (f.value >= m.taxonomy.finer_count() || m.taxonomy.parent(f).value != i) {
        throw DataError("bundle: finer model references a class outside its coarse class");
      }
    }
    m.finer.push_back(std::move(stage));
  }
  return m;
}

inline PipelineModel deserialize_pipeline(std::string_view bytes) { return pipeline_from_container(Container::decode(bytes)); }

inline void save_pipeline(const PipelineModel& model, const std::string& path) {
  pipeline_container(model).write_file(path);
}

/// Reads the bundle through a read-only stream; nothing is built unless the
/// whole file validates.
inline PipelineModel load_pipeline(const std::string& path) { return pipeline_from_container(Container::read_file(path)); }

}  // namespace qclass
