#include <gtest/gtest.h>

#include <cmath>

#include "qclass/sgd_linear.hpp"

using namespace qclass;

namespace {

SparseVector dense1(double x) { return SparseVector{1, {0}, {x}}; }

SparseVector onehot(std::size_t dim, std::uint32_t i, double v = 1.0) { return SparseVector{dim, {i}, {v}}; }

}  // namespace

TEST(ModifiedHuber, Values) {
  EXPECT_EQ(modified_huber_loss(2.0).loss, 0.0);
  EXPECT_EQ(modified_huber_loss(2.0).derivative, 0.0);
  EXPECT_EQ(modified_huber_loss(0.0).loss, 1.0);
  EXPECT_EQ(modified_huber_loss(0.0).derivative, -2.0);
  EXPECT_EQ(modified_huber_loss(-2.0).loss, 8.0);
  EXPECT_EQ(modified_huber_loss(-2.0).derivative, -4.0);
}

TEST(ModifiedHuber, SeamIsContinuous) {
  const double h = 1e-9;
  const auto left = modified_huber_loss(-1.0 - h);
  const auto right = modified_huber_loss(-1.0 + h);
  EXPECT_NEAR(left.loss, 4.0, 1e-8);
  EXPECT_NEAR(right.loss, 4.0, 1e-8);
  EXPECT_NEAR(left.derivative, -4.0, 1e-8);
  EXPECT_NEAR(right.derivative, -4.0, 1e-8);
  EXPECT_EQ(modified_huber_loss(-1.0).loss, 4.0);
}

TEST(ModifiedHuberProperty, ConvexAndDerivativeMatches) {
  for (double z = -5.0; z <= 5.0; z += 0.01) {
    const double h = 1e-6;
    const double a = modified_huber_loss(z - h).loss;
    const double b = modified_huber_loss(z).loss;
    const double c = modified_huber_loss(z + h).loss;
    EXPECT_GE(a + c - 2 * b, -1e-12) << z;
    EXPECT_NEAR((c - a) / (2 * h), modified_huber_loss(z).derivative, 1e-5) << z;
    EXPECT_GE(b, 0.0);
  }
}

TEST(HuberMargin, Values) {
  EXPECT_EQ(huber_margin_loss(1.0, 1.0).loss, 0.0);
  EXPECT_DOUBLE_EQ(huber_margin_loss(0.5, 1.0).loss, 0.125);
  EXPECT_DOUBLE_EQ(huber_margin_loss(-2.0, 1.0).loss, 2.5);
  EXPECT_DOUBLE_EQ(huber_margin_loss(-2.0, 1.0).derivative, -1.0);
  EXPECT_DOUBLE_EQ(huber_margin_loss(4.0, 1.0).derivative, 1.0);
}

TEST(Sgd, SeparableOneDimensional) {
  std::vector<SparseVector> X;
  std::vector<FinerId> y;
  for (int i = 0; i < 20; ++i) {
    X.push_back(dense1(i % 2 == 0 ? 1.0 : -1.0));
    y.push_back(FinerId{i % 2 == 0 ? 3u : 7u});
  }
  const auto m = train_sgd(X, y, SgdConfig{}, Rng(1));
  EXPECT_EQ(m.classes, (std::vector<FinerId>{FinerId{3}, FinerId{7}}));
  for (std::size_t i = 0; i < X.size(); ++i) EXPECT_EQ(predict_finer(m, X[i]).label, y[i]);
}

TEST(Sgd, HugeAlphaDegeneratesToBias) {
  std::vector<SparseVector> X;
  std::vector<FinerId> y;
  for (int i = 0; i < 30; ++i) {
    const std::uint32_t c = i < 20 ? 0 : 1;
    X.push_back(onehot(4, c));
    y.push_back(FinerId{c});
  }
  SgdConfig cfg;
  cfg.alpha = 1e8;
  const auto m = train_sgd(X, y, cfg, Rng(2));
  EXPECT_LT(m.weight_norm(), 1e-6);
  for (const auto& x : X) EXPECT_EQ(predict_finer(m, x).label, FinerId{0});
}

TEST(Sgd, Deterministic) {
  Rng rng(4);
  std::vector<SparseVector> X;
  std::vector<FinerId> y;
  for (int i = 0; i < 40; ++i) {
    const auto c = static_cast<std::uint32_t>(rng.below(3));
    X.push_back(SparseVector{6, {c, static_cast<std::uint32_t>(3 + rng.below(3))}, {0.8, 0.6}});
    y.push_back(FinerId{c});
  }
  const auto a = train_sgd(X, y, SgdConfig{}, Rng(5));
  const auto b = train_sgd(X, y, SgdConfig{}, Rng(5));
  EXPECT_TRUE(a == b);
  for (std::size_t i = 0; i < X.size(); ++i) EXPECT_EQ(predict_finer(a, X[i]).label, y[i]);
}

TEST(Sgd, SingleClassAlwaysPredicted) {
  const std::vector<SparseVector> X{onehot(3, 0), onehot(3, 2)};
  const std::vector<FinerId> y{FinerId{4}, FinerId{4}};
  const auto m = train_sgd(X, y, SgdConfig{}, Rng(1));
  EXPECT_EQ(predict_finer(m, onehot(3, 1)).label, FinerId{4});
}

TEST(Sgd, Errors) {
  const std::vector<SparseVector> X{onehot(3, 0), onehot(2, 1)};
  const std::vector<FinerId> y{FinerId{0}, FinerId{1}};
  EXPECT_THROW(train_sgd({}, {}, SgdConfig{}, Rng(1)), DataError);
  EXPECT_THROW(train_sgd(X, y, SgdConfig{}, Rng(1)), DataError);
  const std::vector<SparseVector> ok{onehot(3, 0), onehot(3, 1)};
  EXPECT_THROW(train_sgd(ok, std::vector<FinerId>{FinerId{0}}, SgdConfig{}, Rng(1)), DataError);
  SgdConfig bad;
  bad.alpha = -1;
  EXPECT_THROW(train_sgd(ok, y, bad, Rng(1)), UsageError);
  bad = SgdConfig{};
  bad.eta0_grid.clear();
  EXPECT_THROW(train_sgd(ok, y, bad, Rng(1)), UsageError);
  const auto m = train_sgd(ok, y, SgdConfig{}, Rng(1));
  EXPECT_THROW(m.scores(onehot(5, 0)), DataError);
}

TEST(Sgd, HuberLossAlsoSeparates) {
  std::vector<SparseVector> X;
  std::vector<FinerId> y;
  for (int i = 0; i < 30; ++i) {
    X.push_back(onehot(3, static_cast<std::uint32_t>(i % 3)));
    y.push_back(FinerId{static_cast<std::uint32_t>(i % 3)});
  }
  SgdConfig cfg;
  cfg.loss = LinearLoss::huber;
  const auto m = train_sgd(X, y, cfg, Rng(3));
  for (std::size_t i = 0; i < X.size(); ++i) EXPECT_EQ(predict_finer(m, X[i]).label, y[i]);
}

TEST(Predict, ArgmaxTiesAndZeroVector) {
  LinearModel m{{FinerId{0}, FinerId{1}, FinerId{2}}, 2, {0, 0, 0, 0, 0, 0}, {0.2, 0.9, -0.3}};
  EXPECT_EQ(predict_finer(m, SparseVector{2, {}, {}}).index, 1u);
  m.bias = {0.5, 0.1, 0.5};
  EXPECT_EQ(predict_finer(m, SparseVector{2, {}, {}}).index, 0u);
}

TEST(PredictProperty, ArgmaxStableUnderPositiveScaling) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    LinearModel m{{FinerId{0}, FinerId{1}, FinerId{2}}, 3, std::vector<double>(9), std::vector<double>(3)};
    for (auto& w : m.weights) w = rng.uniform(-1.0, 1.0);
    for (auto& b : m.bias) b = rng.uniform(-1.0, 1.0);
    const SparseVector x{3, {0, 1, 2}, {rng.uniform(), rng.uniform(), rng.uniform()}};
    const auto before = predict_finer(m, x).index;
    const double s = rng.uniform(0.1, 10.0);
    for (auto& w : m.weights) w *= s;
    for (auto& b : m.bias) b *= s;
    EXPECT_EQ(predict_finer(m, x).index, before);
  }
}

TEST(Sgd, SerializeRoundTrip) {
  const std::vector<SparseVector> X{onehot(3, 0), onehot(3, 1), onehot(3, 2)};
  const std::vector<FinerId> y{FinerId{0}, FinerId{1}, FinerId{2}};
  const auto m = train_sgd(X, y, SgdConfig{}, Rng(1));
  const auto bytes = serialize_linear(m);
  EXPECT_TRUE(deserialize_linear(bytes) == m);
  EXPECT_THROW(deserialize_linear(bytes.substr(0, bytes.size() - 1)), DataError);
}

TEST(SgdProperty, ObjectiveNotAboveZeroModel) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<SparseVector> X;
    std::vector<FinerId> y;
    for (int i = 0; i < 30; ++i) {
      X.push_back(onehot(5, static_cast<std::uint32_t>(rng.below(5)), rng.uniform(0.5, 1.0)));
      y.push_back(FinerId{static_cast<std::uint32_t>(rng.below(3))});
    }
    const SgdConfig cfg;
    const auto m = train_sgd(X, y, cfg, Rng(trial));
    LinearModel zero = m;
    std::fill(zero.weights.begin(), zero.weights.end(), 0.0);
    std::fill(zero.bias.begin(), zero.bias.end(), 0.0);
    EXPECT_LE(training_objective(m, X, y, cfg), training_objective(zero, X, y, cfg));
  }
}
