#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "qclass/container.hpp"
#include "qclass/embedding.hpp"
#include "qclass/error.hpp"
#include "qclass/random.hpp"

namespace qclass::cnn {

enum class Activation : std::uint8_t { identity = 0, relu = 1, softmax = 2 };

/// Valid-padding, stride-1 convolution over a (length x channels) sequence.
struct Conv1d {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  std::size_t width = 0;
  Activation activation = Activation::relu;
};

struct Dense {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  Activation activation = Activation::relu;
};

/// Inverted dropout: kept units are scaled by 1 / (1 - rate) during training.
struct Dropout {
  double rate = 0.0;
};

struct Flatten {};

using LayerSpec = std::variant<Conv1d, Dense, Dropout, Flatten>;

/// Activation shape: sequence length x channels. Dense activations are 1 x n.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  [[nodiscard]] std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Layer {
  LayerSpec spec;
  std::vector<double> weights;  // conv: [filter][tap][channel]; dense: [output][input]
  std::vector<double> bias;
};

/// Layer stack for single-label classification. The last layer is always a
/// softmax Dense whose width is the class count.
class CnnModel {
 public:
  CnnModel() = default;

  CnnModel(Shape input, const std::vector<LayerSpec>& specs) : input_(input) {
    if (specs.empty()) throw UsageError("cnn: empty layer list");
    Shape shape = input;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const bool last = i + 1 == specs.size();
      Layer layer{specs[i], {}, {}};
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Conv1d>) {
              if (s.in_channels != shape.cols || s.width == 0 || s.width > shape.rows || s.filters == 0) {
                throw UsageError("cnn: conv1d layer " + std::to_string(i) + " does not fit its input");
              }
              if (s.activation == Activation::softmax) throw UsageError("cnn: softmax only on the output layer");
              layer.weights.assign(s.filters * s.width * s.in_channels, 0.0);
              layer.bias.assign(s.filters, 0.0);
              shape = Shape{shape.rows - s.width + 1, s.filters};
            } else if constexpr (std::is_same_v<T, Dense>) {
              if (shape.rows != 1 || s.inputs != shape.cols || s.outputs == 0) {
                throw UsageError("cnn: dense layer " + std::to_string(i) + " does not fit its input");
              }
              if ((s.activation == Activation::softmax) != last) {
                throw UsageError("cnn: the output layer, and only it, must be softmax");
              }
              layer.weights.assign(s.outputs * s.inputs, 0.0);
              layer.bias.assign(s.outputs, 0.0);
              shape = Shape{1, s.outputs};
            } else if constexpr (std::is_same_v<T, Dropout>) {
              if (!(s.rate >= 0.0 && s.rate < 1.0)) throw UsageError("cnn: dropout rate must be in [0, 1)");
            } else {
              shape = Shape{1, shape.size()};
            }
          },
          specs[i]);
      layers_.push_back(std::move(layer));
      shapes_.push_back(shape);
    }
    const auto* out = std::get_if<Dense>(&layers_.back().spec);
    if (!out || out->activation != Activation::softmax) {
      throw UsageError("cnn: the last layer must be a softmax dense layer");
    }
  }

  /// He-uniform for ReLU/identity layers, Glorot-uniform for the softmax
  /// layer, zero biases.
  void initialize(Rng& rng) {
    for (auto& layer : layers_) {
      double limit = 0;
      if (const auto* c = std::get_if<Conv1d>(&layer.spec)) {
        limit = std::sqrt(6.0 / static_cast<double>(c->width * c->in_channels));
      } else if (const auto* d = std::get_if<Dense>(&layer.spec)) {
        limit = d->activation == Activation::softmax
                    ? std::sqrt(6.0 / static_cast<double>(d->inputs + d->outputs))
                    : std::sqrt(6.0 / static_cast<double>(d->inputs));
      }
      for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
  }

  [[nodiscard]] Shape input_shape() const { return input_; }
  [[nodiscard]] Shape output_shape(std::size_t layer) const { return shapes_.at(layer); }
  [[nodiscard]] std::size_t class_count() const { return shapes_.empty() ? 0 : shapes_.back().cols; }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  [[nodiscard]] std::vector<Layer>& layers() { return layers_; }

  [[nodiscard]] std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
  }

  /// Weight and bias views of every parametrized layer, in layer order.
  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    for (auto& l : layers_) {
      if (l.weights.empty()) continue;
      out.emplace_back(l.weights);
      out.emplace_back(l.bias);
    }
    return out;
  }

  [[nodiscard]] bool parameters_finite() const {
    for (const auto& l : layers_) {
      for (double w : l.weights) {
        if (!std::isfinite(w)) return false;
      }
      for (double b : l.bias) {
        if (!std::isfinite(b)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const CnnModel& a, const CnnModel& b) {
    if (a.input_ != b.input_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (a.layers_[i].weights != b.layers_[i].weights || a.layers_[i].bias != b.layers_[i].bias) return false;
      if (a.layers_[i].spec.index() != b.layers_[i].spec.index()) return false;
    }
    return true;
  }

 private:
  Shape input_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Layer sizes of the default conv -> dense stack.
struct ArchitectureConfig {
  std::vector<std::size_t> conv_filters{64, 128};
  std::vector<std::size_t> conv_widths{3, 3};
  double conv_dropout = 0.25;
  std::vector<std::size_t> dense_units{128};
  double dense_dropout = 0.5;
};

/// conv(+dropout)* -> flatten -> dense(+dropout)* -> softmax dense.
inline std::vector<LayerSpec> build_layers(const ArchitectureConfig& arch, Shape input, std::size_t class_count) {
  if (arch.conv_filters.size() != arch.conv_widths.size()) {
    throw UsageError("cnn: conv_filters and conv_widths differ in length");
  }
  std::vector<LayerSpec> specs;
  std::size_t channels = input.cols;
  std::size_t length = input.rows;
  for (std::size_t i = 0; i < arch.conv_filters.size(); ++i) {
    if (arch.conv_widths[i] == 0 || arch.conv_widths[i] > length) throw UsageError("cnn: conv width exceeds input length");
    specs.emplace_back(Conv1d{channels, arch.conv_filters[i], arch.conv_widths[i], Activation::relu});
    specs.emplace_back(Dropout{arch.conv_dropout});
    channels = arch.conv_filters[i];
    length = length - arch.conv_widths[i] + 1;
  }
  specs.emplace_back(Flatten{});
  std::size_t width = length * channels;
  for (auto units : arch.dense_units) {
    specs.emplace_back(Dense{width, units, Activation::relu});
    specs.emplace_back(Dropout{arch.dense_dropout});
    width = units;
  }
  specs.emplace_back(Dense{width, class_count, Activation::softmax});
  return specs;
}

inline CnnModel build_model(const ArchitectureConfig& arch, Shape input, std::size_t class_count, Rng& rng) {
  CnnModel model(input, build_layers(arch, input, class_count));
  model.initialize(rng);
  return model;
}

/// Per-layer gradient tensors mirroring CnnModel's parameters.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  static Gradients zeros_like(const CnnModel& model) {
    Gradients g;
    for (const auto& l : model.layers()) {
      g.weights.emplace_back(l.weights.size(), 0.0);
      g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  void fill(double v) {
    for (auto& w : weights) std::fill(w.begin(), w.end(), v);
    for (auto& b : bias) std::fill(b.begin(), b.end(), v);
  }

  void scale(double s) {
    for (auto& w : weights) {
      for (auto& x : w) x *= s;
    }
    for (auto& b : bias) {
      for (auto& x : b) x *= s;
    }
  }

  /// Views in the same order as CnnModel::parameters().
  std::vector<std::span<const double>> views() const {
    std::vector<std::span<const double>> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i].empty()) continue;
      out.emplace_back(weights[i]);
      out.emplace_back(bias[i]);
    }
    return out;
  }
};

/// Activations cached by a forward pass for the backward pass.
struct Tape {
  std::vector<std::vector<double>> outputs;  // output of each layer (softmax probabilities last)
  std::vector<std::vector<double>> masks;    // dropout multipliers, train mode only
  std::vector<double> logits;                // pre-softmax output
  std::vector<double> delta;
  std::vector<double> delta_in;
};

namespace detail {

using qclass::detail::axpy;
using qclass::detail::dot;

inline void apply_activation(Activation a, std::span<double> v) {
  if (a == Activation::relu) {
    for (auto& x : v) x = x > 0 ? x : 0.0;
  }
}

inline void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0;
  for (auto& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (auto& x : v) x /= sum;
}

inline double log_softmax_at(std::span<const double> logits, std::size_t k) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double x : logits) sum += std::exp(x - m);
  return logits[k] - m - std::log(sum);
}

}  // namespace detail

/// Forward pass of one sample. `rng` is required when train_mode is set and
/// the model has dropout. Returns the class probabilities (held in the tape).
inline std::span<const double> forward_sample(const CnnModel& model, std::span<const double> input, bool train_mode,
                                              Rng* rng, Tape& tape) {
  const auto& layers = model.layers();
  if (input.size() != model.input_shape().size()) {
    throw DataError("cnn: input has " + std::to_string(input.size()) + " values, model expects " +
                    std::to_string(model.input_shape().size()));
  }
  tape.outputs.resize(layers.size());
  tape.masks.resize(layers.size());
  std::span<const double> in = input;
  Shape in_shape = model.input_shape();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    auto& out = tape.outputs[i];
    const Shape out_shape = model.output_shape(i);
    out.resize(out_shape.size());
    tape.masks[i].clear();
    if (const auto* c = std::get_if<Conv1d>(&layer.spec)) {
      const std::size_t span_len = c->width * c->in_channels;
      for (std::size_t t = 0; t < out_shape.rows; ++t) {
        const auto window = in.subspan(t * c->in_channels, span_len);
        for (std::size_t f = 0; f < c->filters; ++f) {
          out[t * c->filters + f] =
              layer.bias[f] + detail::dot(std::span<const double>(layer.weights).subspan(f * span_len, span_len), window);
        }
      }
      detail::apply_activation(c->activation, out);
    } else if (const auto* d = std::get_if<Dense>(&layer.spec)) {
      for (std::size_t o = 0; o < d->outputs; ++o) {
        out[o] = layer.bias[o] +
                 detail::dot(std::span<const double>(layer.weights).subspan(o * d->inputs, d->inputs), in);
      }
      if (d->activation == Activation::softmax) {
        tape.logits.assign(out.begin(), out.end());
        detail::softmax_inplace(out);
      } else {
        detail::apply_activation(d->activation, out);
      }
    } else if (const auto* drop = std::get_if<Dropout>(&layer.spec)) {
      std::copy(in.begin(), in.end(), out.begin());
      if (train_mode && drop->rate > 0) {
        if (rng == nullptr) throw std::invalid_argument("cnn: train-mode dropout needs a generator");
        auto& mask = tape.masks[i];
        mask.resize(out.size());
        const double keep_scale = 1.0 / (1.0 - drop->rate);
        for (std::size_t j = 0; j < out.size(); ++j) {
          mask[j] = rng->uniform() >= drop->rate ? keep_scale : 0.0;
          out[j] *= mask[j];
        }
      }
    } else {
      std::copy(in.begin(), in.end(), out.begin());
    }
    in = out;
    in_shape = out_shape;
  }
  return tape.outputs.back();
}

/// Backward pass of one sample after forward_sample, for the cross-entropy
/// loss of `label`. Adds the parameter gradients into `grads`; if
/// `input_grad` is non-null it receives d(loss)/d(input).
inline void backward_sample(const CnnModel& model, std::span<const double> input, std::size_t label, Tape& tape,
                            Gradients& grads, std::vector<double>* input_grad = nullptr) {
  const auto& layers = model.layers();
  auto& delta = tape.delta;
  auto& delta_in = tape.delta_in;
  delta.assign(tape.outputs.back().begin(), tape.outputs.back().end());
  delta[label] -= 1.0;  // d(-log softmax)/d(logits)

  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const std::span<const double> in = li == 0 ? input : std::span<const double>(tape.outputs[li - 1]);
    const auto& out = tape.outputs[li];
    const bool need_input_grad = li > 0 || input_grad != nullptr;
    delta_in.assign(need_input_grad ? in.size() : 0, 0.0);

    if (const auto* c = std::get_if<Conv1d>(&layer.spec)) {
      if (c->activation == Activation::relu) {
        for (std::size_t j = 0; j < delta.size(); ++j) {
          if (out[j] <= 0) delta[j] = 0;
        }
      }
      const std::size_t span_len = c->width * c->in_channels;
      const std::size_t rows = out.size() / c->filters;
      auto& gw = grads.weights[li];
      auto& gb = grads.bias[li];
      for (std::size_t t = 0; t < rows; ++t) {
        const auto window = in.subspan(t * c->in_channels, span_len);
        for (std::size_t f = 0; f < c->filters; ++f) {
          const double g = delta[t * c->filters + f];
          if (g == 0) continue;
          gb[f] += g;
          detail::axpy(g, window, std::span<double>(gw).subspan(f * span_len, span_len));
          if (need_input_grad) {
            detail::axpy(g, std::span<const double>(layer.weights).subspan(f * span_len, span_len),
                         std::span<double>(delta_in).subspan(t * c->in_channels, span_len));
          }
        }
      }
    } else if (const auto* d = std::get_if<Dense>(&layer.spec)) {
      if (d->activation == Activation::relu) {
        for (std::size_t j = 0; j < delta.size(); ++j) {
          if (out[j] <= 0) delta[j] = 0;
        }
      }
      auto& gw = grads.weights[li];
      auto& gb = grads.bias[li];
      for (std::size_t o = 0; o < d->outputs; ++o) {
        const double g = delta[o];
        if (g == 0) continue;
        gb[o] += g;
        detail::axpy(g, in, std::span<double>(gw).subspan(o * d->inputs, d->inputs));
        if (need_input_grad) {
          detail::axpy(g, std::span<const double>(layer.weights).subspan(o * d->inputs, d->inputs), delta_in);
        }
      }
    } else if (std::holds_alternative<Dropout>(layer.spec)) {
      if (need_input_grad) {
        const auto& mask = tape.masks[li];
        for (std::size_t j = 0; j < delta.size(); ++j) delta_in[j] = mask.empty() ? delta[j] : delta[j] * mask[j];
      }
    } else if (need_input_grad) {
      std::copy(delta.begin(), delta.end(), delta_in.begin());
    }
    if (!need_input_grad) break;
    std::swap(delta, delta_in);
  }
  if (input_grad != nullptr) *input_grad = delta;
}

inline void check_finite_input(std::span<const double> input) {
  for (double x : input) {
    if (!std::isfinite(x)) throw DataError("cnn: non-finite input value");
  }
}

/// Class probabilities for every sample of the batch.
inline std::vector<std::vector<double>> forward(const CnnModel& model, std::span<const std::span<const double>> batch,
                                                bool train_mode, Rng* rng = nullptr) {
  Tape tape;
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const auto& input : batch) {
    check_finite_input(input);
    const auto probs = forward_sample(model, input, train_mode, rng, tape);
    out.emplace_back(probs.begin(), probs.end());
  }
  return out;
}

struct LossAndGradients {
  double loss = 0;
  Gradients gradients;
};

/// Mean categorical cross-entropy over the batch and its gradient.
inline LossAndGradients loss_and_grads(const CnnModel& model, std::span<const std::span<const double>> batch,
                                       std::span<const std::size_t> labels, bool train_mode = false,
                                       Rng* rng = nullptr) {
  if (batch.size() != labels.size()) throw DataError("cnn: batch and label counts differ");
  if (batch.empty()) throw DataError("cnn: empty batch");
  LossAndGradients r{0.0, Gradients::zeros_like(model)};
  Tape tape;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (labels[i] >= model.class_count()) throw DataError("cnn: invalid label id " + std::to_string(labels[i]));
    forward_sample(model, batch[i], train_mode, rng, tape);
    r.loss -= detail::log_softmax_at(tape.logits, labels[i]);
    backward_sample(model, batch[i], labels[i], tape, r.gradients);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  r.loss *= inv;
  r.gradients.scale(inv);
  return r;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every tensor; all tensors share the
/// step counter.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size()) {
      throw std::invalid_argument("adam: tensor shape mismatch");
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      params[i][j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
};

/// Inputs are views into caller-owned storage (flattened max_len x dim rows).
struct LabeledInputs {
  std::vector<std::span<const double>> inputs;
  std::vector<std::size_t> labels;
};

struct TrainingLog {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
};

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Mean inference-mode cross-entropy.
inline double evaluate_loss(const CnnModel& model, const LabeledInputs& data) {
  Tape tape;
  double loss = 0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    forward_sample(model, data.inputs[i], false, nullptr, tape);
    loss -= detail::log_softmax_at(tape.logits, data.labels[i]);
  }
  return data.inputs.empty() ? 0.0 : loss / static_cast<double>(data.inputs.size());
}

/// Mini-batch Adam training with early stopping on validation loss.
///
/// Returns the parameters of the epoch with the lowest validation loss; with
/// an empty validation set, the parameters after the last epoch.
inline CnnModel train_cnn(CnnModel model, const LabeledInputs& train, const LabeledInputs& val,
                          const TrainConfig& cfg, Rng rng, TrainingLog* log = nullptr) {
  if (train.inputs.empty()) throw DataError("cnn: empty training set");
  if (train.inputs.size() != train.labels.size() || val.inputs.size() != val.labels.size()) {
    throw DataError("cnn: input and label counts differ");
  }
  if (cfg.batch_size < 1) throw UsageError("cnn: batch size must be at least 1");
  for (auto l : train.labels) {
    if (l >= model.class_count()) throw DataError("cnn: invalid label id " + std::to_string(l));
  }
  for (auto l : val.labels) {
    if (l >= model.class_count()) throw DataError("cnn: invalid label id " + std::to_string(l));
  }
  for (const auto& x : train.inputs) check_finite_input(x);

  Rng order_rng = rng.substream("order");
  Rng dropout_rng = rng.substream("dropout");
  TrainingLog local;
  TrainingLog& history = log ? *log : local;
  history = TrainingLog{};

  AdamState adam;
  Gradients grads = Gradients::zeros_like(model);
  Tape tape;
  std::vector<std::size_t> order(train.inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  CnnModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grads.fill(0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto idx = order[b];
        const auto probs = forward_sample(model, train.inputs[idx], true, &dropout_rng, tape);
        loss_sum -= detail::log_softmax_at(tape.logits, train.labels[idx]);
        correct += argmax(probs) == train.labels[idx] ? 1 : 0;
        backward_sample(model, train.inputs[idx], train.labels[idx], tape, grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      const auto views = grads.views();
      const auto params = model.parameters();
      try {
        adam_step(params, views, adam, cfg.adam);
      } catch (const NumericError&) {
        throw NumericError("cnn: non-finite gradient at epoch " + std::to_string(epoch));
      }
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(train_loss) || !model.parameters_finite()) {
      throw NumericError("cnn: training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    history.train_loss.push_back(train_loss);
    history.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));

    if (val.inputs.empty()) {
      best = model;
      history.best_epoch = epoch;
      continue;
    }
    const double val_loss = evaluate_loss(model, val);
    history.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  return best;
}

struct CoarsePrediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// Inference-mode argmax; ties go to the lowest class id.
inline CoarsePrediction predict_coarse(const CnnModel& model, std::span<const double> input) {
  Tape tape;
  const auto probs = forward_sample(model, input, false, nullptr, tape);
  return CoarsePrediction{argmax(probs), std::vector<double>(probs.begin(), probs.end())};
}

/// Checkpoint payload: input shape, then per layer a kind tag, its
/// hyperparameters and its raw little-endian float64 tensors.
inline std::string serialize_model(const CnnModel& model) {
  ByteWriter w;
  w.put_u64(model.input_shape().rows);
  w.put_u64(model.input_shape().cols);
  w.put_u32(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    w.put_u8(static_cast<std::uint8_t>(layer.spec.index()));
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Conv1d>) {
            w.put_u64(s.in_channels);
            w.put_u64(s.filters);
            w.put_u64(s.width);
            w.put_u8(static_cast<std::uint8_t>(s.activation));
          } else if constexpr (std::is_same_v<T, Dense>) {
            w.put_u64(s.inputs);
            w.put_u64(s.outputs);
            w.put_u8(static_cast<std::uint8_t>(s.activation));
          } else if constexpr (std::is_same_v<T, Dropout>) {
            w.put_f64(s.rate);
          }
        },
        layer.spec);
    w.put_doubles(layer.weights);
    w.put_doubles(layer.bias);
  }
  return w.take();
}

inline CnnModel deserialize_model(std::string_view bytes) {
  ByteReader r(bytes, "cnn checkpoint");
  const Shape input{r.get_u64(), r.get_u64()};
  const auto count = r.get_u32();
  std::vector<LayerSpec> specs;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> tensors;
  auto activation = [&] {
    const auto a = r.get_u8();
    if (a > 2) throw DataError("cnn checkpoint: bad activation tag");
    return static_cast<Activation>(a);
  };
  for (std::uint32_t i = 0; i < count; ++i) {
    switch (r.get_u8()) {
      case 0: {
        Conv1d c;
        c.in_channels = r.get_u64();
        c.filters = r.get_u64();
        c.width = r.get_u64();
        c.activation = activation();
        specs.emplace_back(c);
        break;
      }
      case 1: {
        Dense d;
        d.inputs = r.get_u64();
        d.outputs = r.get_u64();
        d.activation = activation();
        specs.emplace_back(d);
        break;
      }
      case 2:
        specs.emplace_back(Dropout{r.get_f64()});
        break;
      case 3:
        specs.emplace_back(Flatten{});
        break;
      default:
        throw DataError("cnn checkpoint: unknown layer kind");
    }
    auto w = r.get_doubles();
    auto b = r.get_doubles();
    tensors.emplace_back(std::move(w), std::move(b));
  }
  r.expect_done();
  CnnModel model;
  try {
    model = CnnModel(input, specs);
  } catch (const UsageError& e) {
    throw DataError(std::string("cnn checkpoint: ") + e.what());
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& layer = model.layers()[i];
    if (tensors[i].first.size() != layer.weights.size() || tensors[i].second.size() != layer.bias.size()) {
      throw DataError("cnn checkpoint: tensor size mismatch in layer " + std::to_string(i));
    }
    layer.weights = std::move(tensors[i].first);
    layer.bias = std::move(tensors[i].second);
  }
  return model;
}

}  // namespace qclass::cnn
