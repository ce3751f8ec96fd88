#pragma once

// Dense feedforward networks with explicit parameter/gradient storage and Adam.

#include "splice/core.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

namespace splice {

enum class Activation : std::uint8_t { Linear = 0, LeakyRelu = 1, Tanh = 2 };

struct ActivationSpec {
  Activation kind = Activation::LeakyRelu;
  double slope = 0.01;  // LeakyRelu only
};

inline Activation activation_from_tag(std::uint8_t tag) {
  if (tag > 2) throw ConfigError("unknown activation tag " + std::to_string(tag));
  return static_cast<Activation>(tag);
}

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

struct MlpGradients {
  std::vector<Mat> weight;
  std::vector<Vec> bias;
  Mat input;  // d loss / d batch
};

/// A stack of dense layers. Hidden layers use `hidden_activation`; the output
/// layer is always linear. A default-constructed Mlp is an empty placeholder
/// (used for an omitted private encoder or its measurement network).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> dims, ActivationSpec hidden) : dims_(std::move(dims)), act_(hidden) {
    if (dims_.size() < 2) throw ConfigError("Mlp needs at least input and output dims");
    for (std::size_t d : dims_)
      if (d == 0) throw ConfigError("Mlp layer dims must be positive");
    layers_.resize(dims_.size() - 1);
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
      layers_[i].weight = Mat::Zero(static_cast<Index>(dims_[i + 1]), static_cast<Index>(dims_[i]));
      layers_[i].bias = Vec::Zero(static_cast<Index>(dims_[i + 1]));
    }
  }

  bool empty() const { return layers_.empty(); }
  std::size_t input_dim() const { return dims_.empty() ? 0 : dims_.front(); }
  std::size_t output_dim() const { return dims_.empty() ? 0 : dims_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const ActivationSpec& activation() const { return act_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Forward pass that records activations for a following `backward`.
  Mat forward(const Mat& batch) {
    check_input(batch);
    cache_inputs_.clear();
    cache_pre_.clear();
    Mat h = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      cache_inputs_.push_back(h);
      Mat z = h * layers_[i].weight.transpose();
      z.rowwise() += layers_[i].bias.transpose();
      cache_pre_.push_back(z);
      h = last(i) ? z : apply(z);
    }
    has_cache_ = true;
    return h;
  }

  /// Forward pass without touching the backward cache.
  Mat predict(const Mat& batch) const {
    check_input(batch);
    Mat h = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Mat z = h * layers_[i].weight.transpose();
      z.rowwise() += layers_[i].bias.transpose();
      h = last(i) ? std::move(z) : apply(z);
    }
    return h;
  }

  /// Gradients of a scalar loss given d loss / d output for the last forward batch.
  MlpGradients backward(const Mat& upstream) const {
    if (!has_cache_) throw StateError("Mlp::backward called before forward");
    const Index rows = cache_inputs_.front().rows();
    if (upstream.rows() != rows || upstream.cols() != static_cast<Index>(output_dim()))
      throw ConfigError("Mlp::backward: upstream gradient shape mismatch");
    MlpGradients g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Mat delta = upstream;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (!last(i)) delta = delta.cwiseProduct(derivative(cache_pre_[i]));
      g.weight[i] = delta.transpose() * cache_inputs_[i];
      g.bias[i] = delta.colwise().sum().transpose();
      delta = delta * layers_[i].weight;
    }
    g.input = std::move(delta);
    return g;
  }

  void clear_cache() {
    cache_inputs_.clear();
    cache_pre_.clear();
    has_cache_ = false;
  }

 private:
  bool last(std::size_t i) const { return i + 1 == layers_.size(); }

  void check_input(const Mat& batch) const {
    if (empty()) throw ConfigError("forward through an empty network");
    if (batch.cols() != static_cast<Index>(input_dim()))
      throw ConfigError("Mlp input has " + std::to_string(batch.cols()) + " columns, expected " +
                        std::to_string(input_dim()));
  }

  Mat apply(const Mat& z) const {
    switch (act_.kind) {
      case Activation::Linear:
        return z;
      case Activation::Tanh:
        return z.array().tanh().matrix();
      case Activation::LeakyRelu: {
        const double s = act_.slope;
        return z.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
      }
    }
    return z;
  }

  Mat derivative(const Mat& z) const {
    switch (act_.kind) {
      case Activation::Linear:
        return Mat::Ones(z.rows(), z.cols());
      case Activation::Tanh:
        return (1.0 - z.array().tanh().square()).matrix();
      case Activation::LeakyRelu: {
        const double s = act_.slope;
        return z.unaryExpr([s](double v) { return v > 0.0 ? 1.0 : s; });
      }
    }
    return Mat::Ones(z.rows(), z.cols());
  }

  std::vector<std::size_t> dims_;
  ActivationSpec act_;
  std::vector<DenseLayer> layers_;
  std::vector<Mat> cache_inputs_;
  std::vector<Mat> cache_pre_;
  bool has_cache_ = false;
};

inline Mat forward(Mlp& net, const Mat& batch) { return net.forward(batch); }
inline MlpGradients backward(const Mlp& net, const Mat& upstream) { return net.backward(upstream); }

/// He-style initialisation: weights ~ N(0, 2 / fan_in), zero biases.
inline Mlp init_net(const std::vector<std::size_t>& dims, ActivationSpec hidden, std::uint64_t seed) {
  Mlp net(dims, hidden);
  Rng rng(seed);
  for (auto& layer : net.layers()) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.weight.cols()));
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = scale * standard_normal(rng);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Adam with a linearly decaying learning rate.

struct AdamConfig {
  double base_lr = 1e-3;
  double final_lr = 1e-5;
  long total_epochs = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// base_lr + (final_lr - base_lr) * epoch / total_epochs, clamped to the segment.
  double lr_at(double epoch) const {
    const double frac = total_epochs > 0 ? epoch / static_cast<double>(total_epochs) : 1.0;
    if (frac >= 1.0) return final_lr;
    if (frac <= 0.0) return base_lr;
    const double lr = base_lr + (final_lr - base_lr) * frac;
    return std::clamp(lr, std::min(base_lr, final_lr), std::max(base_lr, final_lr));
  }
};

struct AdamState {
  AdamConfig config;
  std::vector<Mat> m_weight, v_weight;
  std::vector<Vec> m_bias, v_bias;
  long step = 0;

  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig cfg) : config(cfg) { reset(net); }

  void reset(const Mlp& net) {
    m_weight.clear();
    v_weight.clear();
    m_bias.clear();
    v_bias.clear();
    for (const auto& l : net.layers()) {
      m_weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
      v_weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
      m_bias.push_back(Vec::Zero(l.bias.size()));
      v_bias.push_back(Vec::Zero(l.bias.size()));
    }
    step = 0;
  }
};

/// One bias-corrected Adam update at the learning rate for `epoch`.
inline void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state, double epoch) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.m_weight.size() != layers.size())
    throw ConfigError("adam_step: gradient/state layer count mismatch");
  const AdamConfig& c = state.config;
  ++state.step;
  const double lr = c.lr_at(epoch);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (g.rows() != param.rows() || g.cols() != param.cols())
      throw ConfigError("adam_step: gradient shape mismatch");
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads.weight[i], state.m_weight[i], state.v_weight[i]);
    update(layers[i].bias, grads.bias[i], state.m_bias[i], state.v_bias[i]);
  }
}

}  // namespace splice
