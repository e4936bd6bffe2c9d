#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qclass/pipeline.hpp"
#include "qclass/synthetic.hpp"

using namespace qclass;

namespace {

PipelineConfig small_config() {
  // Small enough for a unit test; the long patience rides out the flat start.
  PipelineConfig c;
  c.preprocess.min_count = 2;
  c.preprocess.max_len = 16;
  c.embedding.dim = 8;
  c.architecture.conv_filters = {16, 16};
  c.architecture.dense_units = {16};
  c.training.max_epochs = 150;
  c.training.patience = 40;
  return c;
}

struct Fixture {
  synthetic::Corpus corpus;
  PipelineModel model;
  PipelineTrace trace;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    synthetic::GeneratorConfig g;
    g.samples = 180;
    x.corpus = synthetic::generate(g, 3);
    x.model = train_pipeline(x.corpus.taxonomy, x.corpus.samples, {}, small_config(), 5, &x.trace);
    return x;
  }();
  return f;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Pipeline, TrainsOneFinerModelPerCoarseClass) {
  const auto& f = fixture();
  EXPECT_EQ(f.model.finer.size(), f.corpus.taxonomy.coarse_count());
  EXPECT_EQ(f.model.coarse.class_count(), f.corpus.taxonomy.coarse_count());
  EXPECT_GT(f.trace.synthetic_samples, 0u);
  EXPECT_EQ(f.trace.real_samples, f.corpus.samples.size());
  EXPECT_FALSE(f.trace.word2vec_loss.empty());
}

TEST(Pipeline, HardRoutingKeepsFinerInsidePredictedCoarse) {
  const auto& f = fixture();
  std::size_t correct = 0;
  for (const auto& s : f.corpus.samples) {
    const auto c = classify(f.model, s.text);
    EXPECT_EQ(f.model.taxonomy.parent(c.finer), c.coarse);
    EXPECT_EQ(c.coarse_probabilities.size(), f.model.taxonomy.coarse_count());
    correct += c.coarse == s.coarse;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(f.corpus.samples.size()), 0.9);
}

TEST(Pipeline, EmptyQuestionIsBiasDriven) {
  const auto c = classify(fixture().model, "???");
  double s = 0;
  for (double p : c.coarse_probabilities) s += p;
  EXPECT_NEAR(s, 1.0, 1e-9);
}

TEST(Pipeline, ReferenceTaxonomyHumanRouting) {
  // A HUMAN-routed question gets one of HUMAN's finer classes.
  const auto tax = Taxonomy::reference();
  const auto human = *tax.find_coarse("HUMAN");
  synthetic::GeneratorConfig g;
  auto corpus = synthetic::generate_reference_shaped(g, 1);
  std::vector<QuestionSample> subset;
  std::map<FinerId, std::size_t> taken;
  for (const auto& s : corpus.samples) {
    if (taken[*s.finer]++ < 6) subset.push_back(s);
  }
  const auto model = train_pipeline(tax, subset, {}, small_config(), 1);
  const auto stage = classify_finer(model, human, std::vector<std::string>{"x", "y"});
  EXPECT_EQ(tax.parent(stage.label), human);
}

TEST(Pipeline, SaveLoadRoundTrip) {
  const auto& f = fixture();
  const auto path = temp_path("qclass_pipeline_test.qcb");
  save_pipeline(f.model, path);
  const auto back = load_pipeline(path);
  std::remove(path.c_str());
  EXPECT_EQ(serialize_pipeline(back), serialize_pipeline(f.model));
  for (std::size_t i = 0; i < 100 && i < f.corpus.samples.size(); ++i) {
    const auto a = classify(f.model, f.corpus.samples[i].text);
    const auto b = classify(back, f.corpus.samples[i].text);
    EXPECT_EQ(a.coarse, b.coarse);
    EXPECT_EQ(a.finer, b.finer);
    EXPECT_EQ(a.coarse_probabilities, b.coarse_probabilities);
    EXPECT_EQ(a.finer_scores, b.finer_scores);
  }
}

TEST(Pipeline, CorruptedChecksumAndOldVersionRejected) {
  const auto bytes = serialize_pipeline(fixture().model);
  auto corrupt = bytes;
  corrupt[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize_pipeline(corrupt), DataError);
  auto container = pipeline_container(fixture().model);
  try {
    deserialize_pipeline(container.encode(0));
    FAIL() << "no error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(load_pipeline(temp_path("qclass_missing_bundle.qcb")), DataError);
}

TEST(Pipeline, SameSeedGivesIdenticalBundle) {
  const auto& f = fixture();
  const auto again = train_pipeline(f.corpus.taxonomy, f.corpus.samples, {}, small_config(), 5);
  EXPECT_EQ(serialize_pipeline(again), serialize_pipeline(f.model));
}

TEST(Pipeline, SmoteOffSkipsSynthesisOnly) {
  const auto& f = fixture();
  auto cfg = small_config();
  cfg.smote.enabled = false;
  PipelineTrace trace;
  const auto model = train_pipeline(f.corpus.taxonomy, f.corpus.samples, {}, cfg, 5, &trace);
  EXPECT_EQ(trace.synthetic_samples, 0u);
  EXPECT_EQ(trace.real_samples, f.corpus.samples.size());
  // Vocabulary and embeddings come before balancing and are unaffected.
  EXPECT_EQ(model.vocabulary, f.model.vocabulary);
  EXPECT_EQ(model.embeddings.values, f.model.embeddings.values);
  EXPECT_NE(model.fingerprint, f.model.fingerprint);
}

TEST(Pipeline, SyntheticSamplesOnlyFromTrainingData) {
  const auto& f = fixture();
  auto samples = with_tokens(f.corpus.samples);
  const auto data = prepare_coarse_training(samples, small_config(), Rng(5), true);
  for (const auto& p : data.provenance) {
    EXPECT_LT(p.x_index, samples.size());
    EXPECT_LT(p.n_index, samples.size());
    EXPECT_EQ(samples[p.x_index].coarse, p.label);
  }
  for (const auto& s : data.train) EXPECT_EQ(s.synthetic, !s.origin.has_value());
}

TEST(Pipeline, Errors) {
  const auto& f = fixture();
  EXPECT_THROW(train_pipeline(f.corpus.taxonomy, {}, {}, small_config(), 1), DataError);
  std::vector<QuestionSample> one_class;
  for (const auto& s : f.corpus.samples) {
    if (s.coarse.value == 0) one_class.push_back(s);
  }
  try {
    train_pipeline(f.corpus.taxonomy, one_class, {}, small_config(), 1);
    FAIL() << "no error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no training samples"), std::string::npos);
  }
  auto unlabeled = f.corpus.samples;
  unlabeled[0].finer.reset();
  EXPECT_THROW(train_pipeline(f.corpus.taxonomy, unlabeled, {}, small_config(), 1), DataError);
  auto bad = small_config();
  bad.training.adam.learning_rate = -1;
  EXPECT_THROW(train_pipeline(f.corpus.taxonomy, f.corpus.samples, {}, bad, 1), UsageError);
}

TEST(Pipeline, StageNameInErrors) {
  const auto& f = fixture();
  auto cfg = small_config();
  cfg.architecture.conv_widths = {50, 50};
  try {
    train_pipeline(f.corpus.taxonomy, f.corpus.samples, {}, cfg, 1);
    FAIL() << "no error";
  } catch (const UsageError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("cnn: ", 0), 0u) << e.what();
  }
}

TEST(Pipeline, SplitValidationIsStratifiedHoldOut) {
  const auto& f = fixture();
  const auto [train, val] = split_validation(f.corpus.samples, 0.1, 4);
  EXPECT_EQ(train.size() + val.size(), f.corpus.samples.size());
  EXPECT_NEAR(static_cast<double>(val.size()), 0.1 * static_cast<double>(f.corpus.samples.size()), 6.0);
  const auto [all, none] = split_validation(f.corpus.samples, 0.0, 4);
  EXPECT_EQ(all.size(), f.corpus.samples.size());
  EXPECT_TRUE(none.empty());
}
