#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qclass/cnn.hpp"
#include "qclass/embedding.hpp"
#include "qclass/random.hpp"

namespace qclass::gradcheck {

struct CheckResult {
  std::string name;
  double max_relative_error = 0;
  std::size_t checked = 0;  // coordinates compared
  std::size_t skipped = 0;  // coordinates whose perturbation crossed a ReLU kink
  bool passed = false;
};

struct Options {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

/// |a - n| / max(|a|, |n|, 1e-6).
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace detail {

// ReLU on/off pattern of a forward pass; a finite difference is only valid
// when both perturbed passes share the unperturbed pattern.
inline std::vector<bool> relu_pattern(const cnn::CnnModel& model, const cnn::Tape& tape) {
  std::vector<bool> out;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& spec = model.layers()[i].spec;
    bool relu = false;
    if (const auto* c = std::get_if<cnn::Conv1d>(&spec)) relu = c->activation == cnn::Activation::relu;
    if (const auto* d = std::get_if<cnn::Dense>(&spec)) relu = d->activation == cnn::Activation::relu;
    if (!relu) continue;
    for (double v : tape.outputs[i]) out.push_back(v > 0);
  }
  return out;
}

struct Probe {
  double loss = 0;
  std::vector<bool> pattern;
};

class Accumulator {
 public:
  void compare(double analytic, double numeric) {
    worst_ = std::max(worst_, relative_error(analytic, numeric));
    ++checked_;
  }
  void skip() { ++skipped_; }

  CheckResult finish(std::string name, double tolerance) const {
    return CheckResult{std::move(name), worst_, checked_, skipped_, checked_ > 0 && worst_ < tolerance};
  }

 private:
  double worst_ = 0;
  std::size_t checked_ = 0;
  std::size_t skipped_ = 0;
};

}  // namespace detail

/// Compares backward_sample against central differences for every weight,
/// bias and input coordinate. In train mode the dropout masks are held fixed
/// by replaying the same generator state for every forward pass.
inline CheckResult check_cnn(std::string name, cnn::CnnModel model, std::vector<double> input, std::size_t label,
                             bool train_mode, const Options& opt) {
  const Rng mask_rng(opt.seed ^ 0x6d61736bULL);
  auto probe = [&]() {
    Rng rng = mask_rng;
    cnn::Tape tape;
    cnn::forward_sample(model, input, train_mode, &rng, tape);
    return detail::Probe{-cnn::detail::log_softmax_at(tape.logits, label), detail::relu_pattern(model, tape)};
  };

  cnn::Tape tape;
  Rng rng = mask_rng;
  cnn::forward_sample(model, input, train_mode, &rng, tape);
  const auto base_pattern = detail::relu_pattern(model, tape);
  auto grads = cnn::Gradients::zeros_like(model);
  std::vector<double> input_grad;
  cnn::backward_sample(model, input, label, tape, grads, &input_grad);

  detail::Accumulator acc;
  auto check = [&](std::span<double> values, std::span<const double> analytic) {
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + opt.epsilon;
      const auto plus = probe();
      values[j] = saved - opt.epsilon;
      const auto minus = probe();
      values[j] = saved;
      if (plus.pattern != base_pattern || minus.pattern != base_pattern) {
        acc.skip();
        continue;
      }
      acc.compare(analytic[j], (plus.loss - minus.loss) / (2.0 * opt.epsilon));
    }
  };
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    auto& layer = model.layers()[i];
    check(layer.weights, grads.weights[i]);
    check(layer.bias, grads.bias[i]);
  }
  check(input, input_grad);
  return acc.finish(std::move(name), opt.tolerance);
}

/// d(-log softmax(z)_k)/dz = softmax(z) - e_k, checked directly on logits.
inline CheckResult check_softmax_cross_entropy(const Options& opt) {
  Rng rng = Rng(opt.seed).substream("softmax");
  const std::size_t n = 2 + rng.below(6);
  std::vector<double> z(n);
  for (auto& v : z) v = rng.uniform(-3.0, 3.0);
  const std::size_t k = rng.below(n);
  std::vector<double> analytic(z);
  cnn::detail::softmax_inplace(analytic);
  analytic[k] -= 1.0;
  detail::Accumulator acc;
  for (std::size_t j = 0; j < n; ++j) {
    const double saved = z[j];
    z[j] = saved + opt.epsilon;
    const double plus = -cnn::detail::log_softmax_at(z, k);
    z[j] = saved - opt.epsilon;
    const double minus = -cnn::detail::log_softmax_at(z, k);
    z[j] = saved;
    acc.compare(analytic[j], (plus - minus) / (2.0 * opt.epsilon));
  }
  return acc.finish("softmax_cross_entropy", opt.tolerance);
}

inline CheckResult check_word2vec(const Options& opt) {
  Rng rng = Rng(opt.seed).substream("word2vec");
  const std::size_t rows = 6 + rng.below(6);
  const std::size_t dim = 3 + rng.below(6);
  EmbeddingMatrix in(rows, dim);
  EmbeddingMatrix out(rows, dim);
  for (auto& v : in.values) v = rng.uniform(-1.0, 1.0);
  for (auto& v : out.values) v = rng.uniform(-1.0, 1.0);
  SkipGramExample ex;
  ex.center = static_cast<TokenId>(1 + rng.below(rows - 1));
  ex.context = static_cast<TokenId>(1 + rng.below(rows - 1));
  for (int i = 0; i < 5; ++i) ex.negatives.push_back(static_cast<TokenId>(1 + rng.below(rows - 1)));

  EmbeddingMatrix gin(rows, dim);
  EmbeddingMatrix gout(rows, dim);
  skipgram_gradient(in, out, ex, gin, gout);

  detail::Accumulator acc;
  for (auto [table, grad] : {std::pair{&in, &gin}, std::pair{&out, &gout}}) {
    for (std::size_t j = 0; j < table->values.size(); ++j) {
      const double saved = table->values[j];
      table->values[j] = saved + opt.epsilon;
      const double plus = skipgram_loss(in, out, ex);
      table->values[j] = saved - opt.epsilon;
      const double minus = skipgram_loss(in, out, ex);
      table->values[j] = saved;
      acc.compare(grad->values[j], (plus - minus) / (2.0 * opt.epsilon));
    }
  }
  return acc.finish("word2vec_negative_sampling", opt.tolerance);
}

namespace detail {

inline std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

inline cnn::CnnModel random_model(Rng& rng, cnn::Shape input, const std::vector<cnn::LayerSpec>& specs) {
  cnn::CnnModel model(input, specs);
  model.initialize(rng);
  // Non-zero biases so that bias gradients are exercised away from zero.
  for (auto& layer : model.layers()) {
    for (auto& b : layer.bias) b = rng.uniform(-0.1, 0.1);
  }
  return model;
}

}  // namespace detail

/// Every check on freshly randomized small shapes.
inline std::vector<CheckResult> run_all(const Options& opt = {}) {
  std::vector<CheckResult> results;
  Rng rng = Rng(opt.seed).substream("shapes");
  using namespace cnn;

  {
    const std::size_t len = 4 + rng.below(4), ch = 2 + rng.below(3), filters = 2 + rng.below(3), width = 2 + rng.below(2);
    const std::size_t classes = 2 + rng.below(3);
    const Shape in{len, ch};
    const std::vector<LayerSpec> specs{Conv1d{ch, filters, width, Activation::identity}, Flatten{},
                                       Dense{(len - width + 1) * filters, classes, Activation::softmax}};
    results.push_back(check_cnn("conv1d", detail::random_model(rng, in, specs), detail::random_vector(rng, in.size()),
                                rng.below(classes), false, opt));
    const std::vector<LayerSpec> relu{Conv1d{ch, filters, width, Activation::relu}, Flatten{},
                                      Dense{(len - width + 1) * filters, classes, Activation::softmax}};
    results.push_back(check_cnn("conv1d_relu", detail::random_model(rng, in, relu),
                                detail::random_vector(rng, in.size()), rng.below(classes), false, opt));
  }
  {
    const std::size_t inputs = 3 + rng.below(6), hidden = 2 + rng.below(6), classes = 2 + rng.below(4);
    const Shape in{1, inputs};
    const std::vector<LayerSpec> specs{Dense{inputs, hidden, Activation::relu}, Dense{hidden, classes, Activation::softmax}};
    results.push_back(check_cnn("dense", detail::random_model(rng, in, specs), detail::random_vector(rng, inputs),
                                rng.below(classes), false, opt));
  }
  results.push_back(check_softmax_cross_entropy(opt));
  {
    const std::size_t inputs = 4 + rng.below(5), classes = 2 + rng.below(3);
    const Shape in{1, inputs};
    const std::vector<LayerSpec> specs{Dropout{0.5}, Dense{inputs, classes, Activation::softmax}};
    const auto model = detail::random_model(rng, in, specs);
    const auto x = detail::random_vector(rng, inputs);
    const auto label = rng.below(classes);
    results.push_back(check_cnn("dropout_inference", model, x, label, false, opt));
    results.push_back(check_cnn("dropout_train_fixed_mask", model, x, label, true, opt));
  }
  results.push_back(check_word2vec(opt));
  {
    const Shape in{5 + rng.below(3), 3};
    ArchitectureConfig arch;
    arch.conv_filters = {3, 4};
    arch.conv_widths = {2, 2};
    arch.dense_units = {5};
    const std::size_t classes = 3;
    const auto model = detail::random_model(rng, in, build_layers(arch, in, classes));
    results.push_back(check_cnn("cnn_stack_train", model, detail::random_vector(rng, in.size()), rng.below(classes), true,
                                opt));
  }
  return results;
}

}  // namespace qclass::gradcheck
