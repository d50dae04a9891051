#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "genrecnn/errors.hpp"
#include "genrecnn/tensor.hpp"

namespace genrecnn::nn {

/// One layer's parameters and the gradients accumulated for them. Gradient
/// tensors always have the same shapes as their parameters.
template <typename T>
struct LayerParamsT {
  TensorT<T> weights;
  TensorT<T> biases;
  TensorT<T> weight_grads;
  TensorT<T> bias_grads;

  void allocate(std::vector<std::size_t> w_shape,
                std::vector<std::size_t> b_shape) {
    weights.resize(w_shape);
    biases.resize(b_shape);
    biases.fill(T(0));
    weight_grads.resize(w_shape);
    bias_grads.resize(b_shape);
    zero_grads();
  }

  void zero_grads() {
    weight_grads.fill(T(0));
    bias_grads.fill(T(0));
  }

  std::size_t parameter_count() const {
    return weights.size() + biases.size();
  }
};

using LayerParams = LayerParamsT<float>;

/// Mini-batch SGD settings. The paper-silent values (rate, momentum, batch,
/// lambda, dropout) carry the trainer defaults and are all overridable.
struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  double l2_lambda = 1e-4;
  double dropout_rate_fc = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("sgd: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("sgd: momentum must be in [0, 1)");
    }
    if (batch_size < 1) throw ConfigError("sgd: batch_size must be >= 1");
    if (l2_lambda < 0.0) throw ConfigError("sgd: l2_lambda must be >= 0");
    if (dropout_rate_fc < 0.0 || dropout_rate_fc >= 1.0) {
      throw ConfigError("sgd: dropout rate must be in [0, 1)");
    }
  }
};

/// Momentum buffers for one layer, shape-matched to its parameters.
template <typename T>
struct SgdVelocityT {
  TensorT<T> weights;
  TensorT<T> biases;

  void match(const LayerParamsT<T>& p) {
    if (weights.shape != p.weights.shape) {
      weights.resize(p.weights.shape);
      weights.fill(T(0));
    }
    if (biases.shape != p.biases.shape) {
      biases.resize(p.biases.shape);
      biases.fill(T(0));
    }
  }
};

using SgdVelocity = SgdVelocityT<float>;

/// One momentum-SGD update:
///   v <- momentum * v - lr * (grad + lambda * w)   (weights)
///   v <- momentum * v - lr * grad                  (biases; no weight decay)
///   p <- p + v
/// Gradients must already be the mean over the mini-batch.
template <typename T>
void sgd_step(LayerParamsT<T>& params, SgdVelocityT<T>& velocity,
              const SgdConfig& cfg) {
  velocity.match(params);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T mu = static_cast<T>(cfg.momentum);
  const T lambda = static_cast<T>(cfg.l2_lambda);
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const T g = params.weight_grads[i] + lambda * params.weights[i];
    velocity.weights[i] = mu * velocity.weights[i] - lr * g;
    params.weights[i] += velocity.weights[i];
  }
  for (std::size_t i = 0; i < params.biases.size(); ++i) {
    velocity.biases[i] = mu * velocity.biases[i] - lr * params.bias_grads[i];
    params.biases[i] += velocity.biases[i];
  }
}

/// (lambda/2) * ||w||^2 summed over the given layers' weights (biases are
/// not penalized). This is the term whose gradient sgd_step applies.
template <typename T>
double l2_penalty(const std::vector<const LayerParamsT<T>*>& layers,
                  double lambda) {
  double acc = 0.0;
  for (const auto* layer : layers) {
    for (std::size_t i = 0; i < layer->weights.size(); ++i) {
      const double w = static_cast<double>(layer->weights[i]);
      acc += w * w;
    }
  }
  return 0.5 * lambda * acc;
}

/// Kaiming-uniform initialization for ReLU layers: U(-b, b) with
/// b = sqrt(6 / fan_in); biases are zeroed.
template <typename T, typename Rng>
void kaiming_uniform_init(LayerParamsT<T>& params, std::size_t fan_in,
                          Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    params.weights[i] = static_cast<T>(dist(rng));
  }
  params.biases.fill(T(0));
}

}  // namespace genrecnn::nn
