#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "qclass/eval.hpp"
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

const synthetic::Corpus& corpus() {
  static const auto c = [] {
    synthetic::GeneratorConfig g;
    g.samples = 240;
    return synthetic::generate(g, 11);
  }();
  return c;
}

const CrossValidationResult& cv() {
  static const auto r = cross_validate(corpus().taxonomy, corpus().samples, small_config(), 3, 7);
  return r;
}

MetricsReport report_of(std::vector<std::size_t> gold, std::vector<std::size_t> pred, std::size_t n) {
  return precision_recall_f1(confusion_matrix(gold, pred, n));
}

}  // namespace

TEST(Summarize, AveragesOverFoldsAndActiveClasses) {
  const auto a = report_of({0, 0, 1}, {0, 1, 1}, 3);  // class 2 absent
  const auto b = report_of({0, 2}, {0, 2}, 3);        // class 1 absent
  const auto s = summarize({&a, &b});
  EXPECT_EQ(s.folds, 2u);
  EXPECT_DOUBLE_EQ(s.macro.f1, (a.macro.f1 + b.macro.f1) / 2);
  EXPECT_DOUBLE_EQ(s.accuracy, (2.0 / 3.0 + 1.0) / 2);
  EXPECT_EQ(s.per_class_folds, (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_DOUBLE_EQ(s.per_class[1].f1, a.per_class[1].f1);
  EXPECT_DOUBLE_EQ(s.per_class[2].f1, 1.0);
  EXPECT_EQ(summarize({}).folds, 0u);
}

TEST(CrossValidation, FoldHygiene) {
  const auto& r = cv();
  ASSERT_EQ(r.folds.size(), 3u);
  std::vector<int> seen(corpus().samples.size(), 0);
  for (const auto& f : r.folds) {
    for (auto i : f.validation_indices) ++seen[i];
    EXPECT_EQ(f.train_size + f.validation_indices.size(), corpus().samples.size());
    EXPECT_GT(f.synthetic_count, 0u);
    EXPECT_EQ(f.coarse_gold.size(), f.validation_indices.size());
    // Every validation item is a real corpus question.
    for (std::size_t j = 0; j < f.validation_indices.size(); ++j) {
      EXPECT_EQ(f.coarse_gold[j], corpus().samples[f.validation_indices[j]].coarse.value);
    }
    EXPECT_GT(f.early_stop_size, 0u);
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(CrossValidation, LearnsSeparableCorpus) {
  const auto& r = cv();
  EXPECT_GT(r.coarse.macro.f1, 0.8);
  EXPECT_GT(r.finer_gold_average.f1, 0.7);
  EXPECT_LE(r.finer_routed_average.f1, r.finer_gold_average.f1 + 1e-12);
}

TEST(CrossValidation, ReportIsDeterministicAndCarriesReferenceLines) {
  std::ostringstream a, b;
  write_report_tsv(a, cv(), corpus().taxonomy);
  const auto again = cross_validate(corpus().taxonomy, corpus().samples, small_config(), 3, 7);
  write_report_tsv(b, again, corpus().taxonomy);
  EXPECT_EQ(a.str(), b.str());
  const auto text = a.str();
  EXPECT_EQ(text.rfind("scope\tclass\tmetric\tvalue\n", 0), 0u);
  EXPECT_NE(text.find("reference\tcoarse\tf1\t0.932500\n"), std::string::npos);
  EXPECT_NE(text.find("reference\tfiner_gold/average\tf1\t0.872300\n"), std::string::npos);
  EXPECT_NE(text.find("coarse\tmacro\tf1\t"), std::string::npos);
  EXPECT_NE(text.find("finer_gold\taverage\tf1\t"), std::string::npos);
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3) << line;
  }
}

TEST(CrossValidation, TablePrintsReferenceTargets) {
  std::ostringstream out;
  print_report_table(out, cv(), corpus().taxonomy);
  EXPECT_NE(out.str().find("reference F1 0.9325"), std::string::npos);
  EXPECT_NE(out.str().find("reference F1 0.8723"), std::string::npos);
}

TEST(CrossValidation, DifferentSeedChangesFolds) {
  const CvSeeds a{7};
  const CvSeeds b{8};
  EXPECT_NE(a.folds(), b.folds());
  EXPECT_NE(a.training(0), a.training(1));
  EXPECT_NE(a.early_stop_split(0), a.training(0));
}

TEST(CrossValidation, ErrorsCarryFoldName) {
  auto cfg = small_config();
  cfg.architecture.conv_widths = {50, 50};
  try {
    cross_validate(corpus().taxonomy, corpus().samples, cfg, 3, 1);
    FAIL() << "no error";
  } catch (const UsageError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("fold 0: cnn: ", 0), 0u) << e.what();
  }
  EXPECT_THROW(cross_validate(corpus().taxonomy, corpus().samples, small_config(), 1, 1), UsageError);
}

TEST(EvaluateFold, MisroutedCountsAsMissInRoutedScope) {
  const auto& r = cv();
  for (const auto& f : r.folds) {
    for (std::size_t c = 0; c < f.finer_gold.size(); ++c) {
      if (!f.finer_routed[c]) continue;
      // Routing can only lose recall relative to the gold-routed scope.
      std::size_t gold_support = 0, routed_support = 0;
      for (const auto& pc : f.finer_gold[c]->per_class) gold_support += pc.support;
      for (const auto& pc : f.finer_routed[c]->per_class) routed_support += pc.support;
      EXPECT_EQ(gold_support, routed_support);
    }
  }
}
