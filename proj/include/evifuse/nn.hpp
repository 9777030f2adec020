#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "evifuse/rng.hpp"

// Minimal feedforward machinery: dense layers with ReLU/Softplus/identity
// activations, exact reverse-mode gradients against a forward cache, and a
// standard bias-corrected Adam optimizer. Single-threaded and deterministic.

namespace evifuse {

enum class Activation { Identity, ReLU, Softplus };

/// Overflow-safe softplus ln(1 + e^x), floored at the smallest normal double
/// so outputs stay strictly positive for any finite input.
inline double softplus(double x) {
  const double value = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return std::max(value, std::numeric_limits<double>::min());
}

/// d softplus / dx = sigmoid(x), overflow-safe.
inline double softplus_derivative(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Softplus: return softplus(x);
    case Activation::Identity: return x;
  }
  return x;
}

inline double activation_derivative(Activation act, double pre) {
  switch (act) {
    case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Softplus: return softplus_derivative(pre);
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

struct Layer {
  Matrix weight;               // out x in
  std::vector<double> bias;    // out
  Activation activation = Activation::Identity;
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& layer = layers[i];
      if (layer.weight.rows == 0 || layer.weight.cols == 0 ||
          layer.weight.a.size() != layer.weight.rows * layer.weight.cols ||
          layer.bias.size() != layer.weight.rows) {
        throw std::invalid_argument("mlp: inconsistent layer shapes");
      }
      if (i > 0 && layer.weight.cols != layers[i - 1].weight.rows) {
        throw std::invalid_argument("mlp: layer dimensions do not chain");
      }
      for (const double v : layer.weight.a) {
        if (!std::isfinite(v)) throw std::invalid_argument("mlp: non-finite weight");
      }
      for (const double v : layer.bias) {
        if (!std::isfinite(v)) throw std::invalid_argument("mlp: non-finite bias");
      }
    }
  }
};

/// Glorot-style uniform init in +-sqrt(6 / (fan_in + fan_out)), drawn in a
/// fixed order from the given stream. Biases start at a small positive value
/// so no layer is exactly dead at initialization (a zero-vector output would
/// break downstream L2 normalization).
inline MlpParams init_mlp(const std::vector<std::size_t>& dims,
                          const std::vector<Activation>& activations, Rng& rng) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw std::invalid_argument("init_mlp: need dims n+1 and activations n");
  }
  MlpParams params;
  params.layers.resize(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer& layer = params.layers[l];
    layer.weight = Matrix(dims[l + 1], dims[l]);
    layer.bias.assign(dims[l + 1], 0.01);
    layer.activation = activations[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    for (double& w : layer.weight.a) w = rng.uniform(-bound, bound);
  }
  return params;
}

/// Per-layer inputs and pre-activations captured by forward for the matching
/// backward call.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre_activations;
};

inline std::vector<double> forward(const MlpParams& params, const std::vector<double>& x,
                                   ForwardCache* cache = nullptr) {
  if (x.size() != params.input_dim()) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre_activations.clear();
  }
  std::vector<double> current = x;
  for (const Layer& layer : params.layers) {
    if (cache != nullptr) cache->inputs.push_back(current);
    std::vector<double> pre(layer.weight.rows, 0.0);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      double acc = layer.bias[r];
      const double* row = layer.weight.a.data() + r * layer.weight.cols;
      for (std::size_t c = 0; c < layer.weight.cols; ++c) acc += row[c] * current[c];
      pre[r] = acc;
    }
    if (cache != nullptr) cache->pre_activations.push_back(pre);
    current.resize(pre.size());
    for (std::size_t r = 0; r < pre.size(); ++r) {
      current[r] = apply_activation(layer.activation, pre[r]);
    }
  }
  return current;
}

/// Parameter gradients shaped like MlpParams.
struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  static MlpGradients zeros_like(const MlpParams& params) {
    MlpGradients g;
    g.weight.reserve(params.layers.size());
    g.bias.reserve(params.layers.size());
    for (const Layer& layer : params.layers) {
      g.weight.emplace_back(layer.weight.rows, layer.weight.cols);
      g.bias.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
  }

  void scale(double factor) {
    for (Matrix& w : weight) {
      for (double& v : w.a) v *= factor;
    }
    for (auto& b : bias) {
      for (double& v : b) v *= factor;
    }
  }
};

/// Reverse-mode pass. Accumulates parameter gradients into `grads` and
/// returns the gradient with respect to the network input.
inline std::vector<double> backward(const MlpParams& params, const ForwardCache& cache,
                                    const std::vector<double>& upstream,
                                    MlpGradients& grads) {
  const std::size_t num_layers = params.layers.size();
  if (cache.inputs.size() != num_layers || cache.pre_activations.size() != num_layers) {
    throw std::invalid_argument("backward: cache does not match network");
  }
  if (upstream.size() != params.output_dim()) {
    throw std::invalid_argument("backward: upstream dimension mismatch");
  }
  if (grads.weight.size() != num_layers || grads.bias.size() != num_layers) {
    throw std::invalid_argument("backward: gradient shapes do not match network");
  }
  std::vector<double> delta = upstream;
  for (std::size_t l = num_layers; l-- > 0;) {
    const Layer& layer = params.layers[l];
    const std::vector<double>& pre = cache.pre_activations[l];
    const std::vector<double>& input = cache.inputs[l];
    if (pre.size() != layer.weight.rows || input.size() != layer.weight.cols) {
      throw std::invalid_argument("backward: stale cache for layer " + std::to_string(l));
    }
    for (std::size_t r = 0; r < pre.size(); ++r) {
      delta[r] *= activation_derivative(layer.activation, pre[r]);
    }
    Matrix& dw = grads.weight[l];
    std::vector<double>& db = grads.bias[l];
    std::vector<double> next(layer.weight.cols, 0.0);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      db[r] += delta[r];
      const double* row = layer.weight.a.data() + r * layer.weight.cols;
      double* drow = dw.a.data() + r * layer.weight.cols;
      for (std::size_t c = 0; c < layer.weight.cols; ++c) {
        drow[c] += delta[r] * input[c];
        next[c] += row[c] * delta[r];
      }
    }
    delta = std::move(next);
  }
  return delta;
}

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Matrix> m_weight, v_weight;
  std::vector<std::vector<double>> m_bias, v_bias;

  static AdamState for_params(const MlpParams& params, double learning_rate = 1e-3) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (const Layer& layer : params.layers) {
      s.m_weight.emplace_back(layer.weight.rows, layer.weight.cols);
      s.v_weight.emplace_back(layer.weight.rows, layer.weight.cols);
      s.m_bias.emplace_back(layer.bias.size(), 0.0);
      s.v_bias.emplace_back(layer.bias.size(), 0.0);
    }
    return s;
  }
};

namespace detail {

inline void adam_update(double g, double& m, double& v, double lr, double corr1,
                        double corr2, double beta1, double beta2, double eps,
                        double& param) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  const double m_hat = m / corr1;
  const double v_hat = v / corr2;
  param -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace detail

/// Bias-corrected Adam step; increments the step counter.
inline void adam_step(AdamState& state, MlpParams& params, const MlpGradients& grads) {
  if (state.m_weight.size() != params.layers.size() ||
      grads.weight.size() != params.layers.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(state.beta1, t);
  const double corr2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& layer = params.layers[l];
    if (grads.weight[l].a.size() != layer.weight.a.size() ||
        grads.bias[l].size() != layer.bias.size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < layer.weight.a.size(); ++i) {
      detail::adam_update(grads.weight[l].a[i], state.m_weight[l].a[i], state.v_weight[l].a[i],
                          state.learning_rate, corr1, corr2, state.beta1, state.beta2,
                          state.epsilon, layer.weight.a[i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      detail::adam_update(grads.bias[l][i], state.m_bias[l][i], state.v_bias[l][i],
                          state.learning_rate, corr1, corr2, state.beta1, state.beta2,
                          state.epsilon, layer.bias[i]);
    }
  }
}

}  // namespace evifuse
