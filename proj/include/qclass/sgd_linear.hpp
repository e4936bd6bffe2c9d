#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qclass/container.hpp"
#include "qclass/corpus.hpp"
#include "qclass/error.hpp"
#include "qclass/random.hpp"
#include "qclass/tfidf.hpp"

namespace qclass {

enum class LinearLoss : std::uint8_t { modified_huber = 0, huber = 1 };

struct LossValue {
  double loss = 0;
  double derivative = 0;  // with respect to the margin z = y * f(x)
};

/// Smoothed hinge: (max(0, 1 - z))^2 for z >= -1, else -4z.
inline LossValue modified_huber_loss(double z) {
  if (z >= 1.0) return {0.0, 0.0};
  if (z >= -1.0) return {(1.0 - z) * (1.0 - z), -2.0 * (1.0 - z)};
  return {-4.0 * z, -4.0};
}

/// Regression Huber loss on the residual y - f, written in terms of the
/// margin: |y - f| = |1 - z| for y in {-1, +1}.
inline LossValue huber_margin_loss(double z, double delta) {
  const double r = 1.0 - z;
  if (std::abs(r) <= delta) return {0.5 * r * r, -r};
  return {delta * (std::abs(r) - 0.5 * delta), r > 0 ? -delta : delta};
}

struct SgdConfig {
  LinearLoss loss = LinearLoss::modified_huber;
  double alpha = 1e-4;   // L2 strength
  double delta = 1.0;    // Huber transition (huber loss only)
  std::size_t epochs = 30;
  std::vector<double> eta0_grid{0.01, 0.03, 0.1, 0.3, 1.0};
  double tol = 1e-5;
  std::size_t n_iter_no_change = 5;
};

/// One-vs-rest linear scorer over the finer classes of one coarse class.
struct LinearModel {
  std::vector<FinerId> classes;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes.size() x dim, row-major
  std::vector<double> bias;

  [[nodiscard]] std::vector<double> scores(const SparseVector& x) const {
    if (x.dim != dim) {
      throw DataError("linear model: feature dimension " + std::to_string(x.dim) + " does not match " +
                      std::to_string(dim));
    }
    std::vector<double> s(bias);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const double* row = weights.data() + c * dim;
      for (std::size_t k = 0; k < x.indices.size(); ++k) s[c] += row[x.indices[k]] * x.values[k];
    }
    return s;
  }

  [[nodiscard]] double weight_norm() const {
    double s = 0;
    for (double w : weights) s += w * w;
    return std::sqrt(s);
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

inline LossValue linear_loss(const SgdConfig& cfg, double margin) {
  return cfg.loss == LinearLoss::modified_huber ? modified_huber_loss(margin) : huber_margin_loss(margin, cfg.delta);
}

/// Mean loss plus (alpha / 2) * ||W||^2, summed over the one-vs-rest problems.
inline double training_objective(const LinearModel& model, std::span<const SparseVector> X, std::span<const FinerId> y,
                                 const SgdConfig& cfg) {
  double loss = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const auto s = model.scores(X[i]);
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
      const double target = model.classes[c] == y[i] ? 1.0 : -1.0;
      loss += linear_loss(cfg, target * s[c]).loss;
    }
  }
  const double norm = model.weight_norm();
  return loss / static_cast<double>(std::max<std::size_t>(1, X.size())) + 0.5 * cfg.alpha * norm * norm;
}

namespace detail {

// Binary SGD state with the weights stored as scale * v, so the L2 shrink is
// O(1) per step on sparse inputs.
struct ScaledWeights {
  std::vector<double> v;
  double scale = 1.0;
  double bias = 0.0;

  double dot(const SparseVector& x) const {
    double s = 0;
    for (std::size_t k = 0; k < x.indices.size(); ++k) s += v[x.indices[k]] * x.values[k];
    return s * scale;
  }

  void shrink(double factor) {
    if (factor <= 0.0) {
      std::fill(v.begin(), v.end(), 0.0);
      scale = 1.0;
      return;
    }
    scale *= factor;
    if (scale < 1e-9) {
      for (auto& w : v) w *= scale;
      scale = 1.0;
    }
  }

  void add(const SparseVector& x, double step) {
    for (std::size_t k = 0; k < x.indices.size(); ++k) v[x.indices[k]] += step * x.values[k] / scale;
  }
};

inline LinearModel train_sgd_fixed(std::span<const SparseVector> X, std::span<const FinerId> y,
                                   const std::vector<FinerId>& classes, std::size_t dim, const SgdConfig& cfg,
                                   double eta0, Rng rng) {
  const std::size_t n = X.size();
  std::vector<ScaledWeights> w(classes.size());
  for (auto& wc : w) wc.v.assign(dim, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    for (auto i : order) {
      const double eta = eta0 / (1.0 + eta0 * cfg.alpha * static_cast<double>(t));
      // The unregularized bias decays per epoch, independent of alpha.
      const double eta_bias = eta0 / (1.0 + static_cast<double>(t) / static_cast<double>(n));
      for (std::size_t c = 0; c < classes.size(); ++c) {
        const double target = classes[c] == y[i] ? 1.0 : -1.0;
        const double margin = target * (w[c].dot(X[i]) + w[c].bias);
        const auto lv = linear_loss(cfg, margin);
        epoch_loss += lv.loss;
        w[c].shrink(1.0 - eta * cfg.alpha);
        if (lv.derivative != 0.0) {
          w[c].add(X[i], -eta * lv.derivative * target);
          w[c].bias -= eta_bias * lv.derivative * target;
        }
      }
      ++t;
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw NumericError("sgd: non-finite loss at epoch " + std::to_string(epoch));
    if (epoch_loss > best - cfg.tol) {
      if (++stale >= cfg.n_iter_no_change) break;
    } else {
      stale = 0;
    }
    best = std::min(best, epoch_loss);
  }

  LinearModel model{classes, dim, std::vector<double>(classes.size() * dim, 0.0), std::vector<double>(classes.size())};
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t j = 0; j < dim; ++j) model.weights[c * dim + j] = w[c].v[j] * w[c].scale;
    model.bias[c] = w[c].bias;
  }
  return model;
}

}  // namespace detail

/// One-vs-rest SGD. Classes are the distinct labels of `y`, in id order.
/// Every eta0 of the grid is tried with the same shuffles; the model with
/// the lowest final training objective wins (earliest grid entry on ties).
inline LinearModel train_sgd(std::span<const SparseVector> X, std::span<const FinerId> y, const SgdConfig& cfg,
                             const Rng& rng) {
  if (X.empty()) throw DataError("sgd: empty training set");
  if (X.size() != y.size()) throw DataError("sgd: sample and label counts differ");
  if (cfg.alpha < 0 || cfg.delta <= 0 || cfg.epochs < 1 || cfg.eta0_grid.empty()) {
    throw UsageError("sgd: invalid configuration");
  }
  const std::size_t dim = X[0].dim;
  for (const auto& x : X) {
    if (x.dim != dim) throw DataError("sgd: feature-dimension mismatch");
  }
  std::vector<FinerId> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  if (classes.size() == 1) {
    return LinearModel{classes, dim, std::vector<double>(dim, 0.0), std::vector<double>{1.0}};
  }
  LinearModel best;
  double best_objective = std::numeric_limits<double>::infinity();
  for (double eta0 : cfg.eta0_grid) {
    auto model = detail::train_sgd_fixed(X, y, classes, dim, cfg, eta0, rng);
    const double objective = training_objective(model, X, y, cfg);
    if (objective < best_objective) {
      best_objective = objective;
      best = std::move(model);
    }
  }
  if (!std::isfinite(best_objective)) throw NumericError("sgd: every learning rate diverged");
  return best;
}

struct FinerPrediction {
  FinerId label;
  std::size_t index = 0;  // position within LinearModel::classes
  std::vector<double> scores;
};

/// argmax of W x + b, ties to the lowest class index.
inline FinerPrediction predict_finer(const LinearModel& model, const SparseVector& x) {
  auto s = model.scores(x);
  const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  return FinerPrediction{model.classes.at(best), best, std::move(s)};
}

inline std::string serialize_linear(const LinearModel& m) {
  ByteWriter w;
  w.put_u64(m.dim);
  w.put_u32(static_cast<std::uint32_t>(m.classes.size()));
  for (auto c : m.classes) w.put_u32(c.value);
  w.put_doubles(m.weights);
  w.put_doubles(m.bias);
  return w.take();
}

inline LinearModel deserialize_linear(std::string_view bytes) {
  ByteReader r(bytes, "linear model");
  LinearModel m;
  m.dim = r.get_u64();
  const auto count = r.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) m.classes.push_back(FinerId{r.get_u32()});
  m.weights = r.get_doubles();
  m.bias = r.get_doubles();
  r.expect_done();
  if (m.classes.empty() || m.weights.size() != m.classes.size() * m.dim || m.bias.size() != m.classes.size()) {
    throw DataError("linear model: inconsistent tensor sizes");
  }
  return m;
}

}  // namespace qclass
