#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "genrecnn/errors.hpp"
#include "genrecnn/tensor.hpp"

// Dense-tensor layer primitives with exact manual gradients. All 2-D ops use
// valid padding and stride 1; convolution is cross-correlation (no kernel
// flip). Every op has an *_into variant that writes into caller-owned
// storage so the training loop can reuse buffers.

namespace genrecnn::nn {

/// Dot product with 16 independent accumulator lanes so the reduction
/// vectorizes under strict IEEE semantics. The summation order is fixed, so
/// results stay bit-reproducible across runs.
template <typename T>
T dot_product(const T* a, const T* b, std::size_t n) {
  T lanes[16] = {};
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    for (std::size_t k = 0; k < 16; ++k) lanes[k] += a[j + k] * b[j + k];
  }
  T tail = 0;
  for (; j < n; ++j) tail += a[j] * b[j];
  T acc = tail;
  for (std::size_t k = 0; k < 16; ++k) acc += lanes[k];
  return acc;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
void conv2d_check_shapes(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& biases) {
  check_rank(input, 3, "conv2d input");
  check_rank(weights, 4, "conv2d weights");
  check_rank(biases, 1, "conv2d biases");
  if (weights.shape[1] != input.shape[0]) {
    throw ShapeError("conv2d: weights expect " +
                     std::to_string(weights.shape[1]) + " input channels, got " +
                     std::to_string(input.shape[0]));
  }
  if (biases.shape[0] != weights.shape[0]) {
    throw ShapeError("conv2d: bias count does not match output channels");
  }
  if (weights.shape[2] > input.shape[1] || weights.shape[3] > input.shape[2]) {
    throw ShapeError("conv2d: kernel " + weights.shape_str() +
                     " larger than input " + input.shape_str());
  }
}

/// out[o,i,j] = b[o] + sum_{c,u,v} in[c,i+u,j+v] * w[o,c,u,v]
template <typename T>
void conv2d_forward_into(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& biases, TensorT<T>& out) {
  conv2d_check_shapes(input, weights, biases);
  const std::size_t c_in = input.shape[0], h = input.shape[1],
                    w = input.shape[2];
  const std::size_t c_out = weights.shape[0], kh = weights.shape[2],
                    kw = weights.shape[3];
  const std::size_t h_out = h - kh + 1, w_out = w - kw + 1;
  out.resize({c_out, h_out, w_out});

  for (std::size_t o = 0; o < c_out; ++o) {
    T* out_plane = out.ptr() + o * h_out * w_out;
    std::fill(out_plane, out_plane + h_out * w_out, biases[o]);
    for (std::size_t c = 0; c < c_in; ++c) {
      const T* in_plane = input.ptr() + c * h * w;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const T wt = weights.at4(o, c, u, v);
          for (std::size_t i = 0; i < h_out; ++i) {
            const T* in_row = in_plane + (i + u) * w + v;
            T* out_row = out_plane + i * w_out;
            for (std::size_t j = 0; j < w_out; ++j) {
              out_row[j] += wt * in_row[j];
            }
          }
        }
      }
    }
  }
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& biases) {
  TensorT<T> out;
  conv2d_forward_into(input, weights, biases, out);
  return out;
}

template <typename T>
struct ConvGrads {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> biases;
};

/// Exact gradients of conv2d_forward. All three outputs are overwritten;
/// mini-batch accumulation is the caller's job. Pass need_grad_input = false
/// for the first layer, whose input gradient nobody consumes.
template <typename T>
void conv2d_backward_into(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& grad_out, TensorT<T>& grad_input,
                          TensorT<T>& grad_weights, TensorT<T>& grad_biases,
                          bool need_grad_input = true) {
  conv2d_check_shapes(input, weights, TensorT<T>({weights.shape[0]}));
  const std::size_t c_in = input.shape[0], h = input.shape[1],
                    w = input.shape[2];
  const std::size_t c_out = weights.shape[0], kh = weights.shape[2],
                    kw = weights.shape[3];
  const std::size_t h_out = h - kh + 1, w_out = w - kw + 1;
  if (grad_out.shape != std::vector<std::size_t>{c_out, h_out, w_out}) {
    throw ShapeError("conv2d backward: grad_out shape " + grad_out.shape_str() +
                     " does not match forward output");
  }
  grad_input.resize({c_in, h, w});
  grad_input.fill(T(0));
  grad_weights.resize({c_out, c_in, kh, kw});
  grad_biases.resize({c_out});

  for (std::size_t o = 0; o < c_out; ++o) {
    const T* go_plane = grad_out.ptr() + o * h_out * w_out;
    T bias_acc = 0;
    for (std::size_t i = 0; i < h_out * w_out; ++i) bias_acc += go_plane[i];
    grad_biases[o] = bias_acc;

    for (std::size_t c = 0; c < c_in; ++c) {
      const T* in_plane = input.ptr() + c * h * w;
      T* gi_plane = grad_input.ptr() + c * h * w;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const T wt = weights.at4(o, c, u, v);
          T w_acc = 0;
          for (std::size_t i = 0; i < h_out; ++i) {
            const T* go_row = go_plane + i * w_out;
            const T* in_row = in_plane + (i + u) * w + v;
            w_acc += dot_product(go_row, in_row, w_out);
          }
          grad_weights.at4(o, c, u, v) = w_acc;
          if (need_grad_input) {
            for (std::size_t i = 0; i < h_out; ++i) {
              const T* go_row = go_plane + i * w_out;
              T* gi_row = gi_plane + (i + u) * w + v;
              for (std::size_t j = 0; j < w_out; ++j) gi_row[j] += wt * go_row[j];
            }
          }
        }
      }
    }
  }
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& grad_out) {
  ConvGrads<T> g;
  conv2d_backward_into(input, weights, grad_out, g.input, g.weights, g.biases);
  return g;
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPoolResult {
  TensorT<T> output;
  // Flat index into the input tensor of each window's max; first occurrence
  // in row-major order wins ties (this fixes the backward routing).
  std::vector<std::uint32_t> argmax;
};

template <typename T>
void maxpool_forward_into(const TensorT<T>& input, std::size_t pool_h,
                          std::size_t pool_w, TensorT<T>& output,
                          std::vector<std::uint32_t>& argmax) {
  check_rank(input, 3, "maxpool input");
  if (pool_h < 1 || pool_w < 1) throw ConfigError("maxpool: pool size >= 1");
  const std::size_t c_n = input.shape[0], h = input.shape[1],
                    w = input.shape[2];
  const std::size_t h_out = h / pool_h, w_out = w / pool_w;
  if (h_out == 0 || w_out == 0) {
    throw ShapeError("maxpool: window " + std::to_string(pool_h) + "x" +
                     std::to_string(pool_w) + " larger than input " +
                     input.shape_str());
  }
  output.resize({c_n, h_out, w_out});
  argmax.resize(c_n * h_out * w_out);

  std::size_t out_idx = 0;
  for (std::size_t c = 0; c < c_n; ++c) {
    const T* plane = input.ptr() + c * h * w;
    for (std::size_t i = 0; i < h_out; ++i) {
      for (std::size_t j = 0; j < w_out; ++j) {
        std::size_t best = (i * pool_h) * w + j * pool_w;
        T best_v = plane[best];
        for (std::size_t u = 0; u < pool_h; ++u) {
          const std::size_t row = (i * pool_h + u) * w + j * pool_w;
          for (std::size_t v = 0; v < pool_w; ++v) {
            if (plane[row + v] > best_v) {
              best_v = plane[row + v];
              best = row + v;
            }
          }
        }
        output[out_idx] = best_v;
        argmax[out_idx] = static_cast<std::uint32_t>(c * h * w + best);
        ++out_idx;
      }
    }
  }
}

template <typename T>
MaxPoolResult<T> maxpool_forward(const TensorT<T>& input, std::size_t pool_h,
                                 std::size_t pool_w) {
  MaxPoolResult<T> r;
  maxpool_forward_into(input, pool_h, pool_w, r.output, r.argmax);
  return r;
}

/// Routes each output gradient to its recorded argmax position; every other
/// input position gets zero.
template <typename T>
void maxpool_backward_into(const std::vector<std::uint32_t>& argmax,
                           const std::vector<std::size_t>& input_shape,
                           const TensorT<T>& grad_out, TensorT<T>& grad_input) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool backward: argmax/grad_out size mismatch");
  }
  grad_input.resize(input_shape);
  grad_input.fill(T(0));
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    grad_input[argmax[i]] += grad_out[i];
  }
}

template <typename T>
TensorT<T> maxpool_backward(const std::vector<std::uint32_t>& argmax,
                            const std::vector<std::size_t>& input_shape,
                            const TensorT<T>& grad_out) {
  TensorT<T> g;
  maxpool_backward_into(argmax, input_shape, grad_out, g);
  return g;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

template <typename T>
void dense_forward_into(const TensorT<T>& input, const TensorT<T>& weights,
                        const TensorT<T>& biases, TensorT<T>& out) {
  check_rank(weights, 2, "dense weights");
  const std::size_t m = weights.shape[0], n = weights.shape[1];
  if (input.size() != n) {
    throw ShapeError("dense: input size " + std::to_string(input.size()) +
                     " does not match weights " + weights.shape_str());
  }
  if (biases.size() != m) throw ShapeError("dense: bias size mismatch");
  out.resize({m});
  const T* in = input.ptr();
  for (std::size_t r = 0; r < m; ++r) {
    out[r] = biases[r] + dot_product(weights.ptr() + r * n, in, n);
  }
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& biases) {
  TensorT<T> out;
  dense_forward_into(input, weights, biases, out);
  return out;
}

/// Exact gradients of dense_forward; outputs are overwritten.
template <typename T>
void dense_backward_into(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& grad_out, TensorT<T>& grad_input,
                         TensorT<T>& grad_weights, TensorT<T>& grad_biases) {
  const std::size_t m = weights.shape[0], n = weights.shape[1];
  if (input.size() != n) throw ShapeError("dense backward: input size");
  if (grad_out.size() != m) throw ShapeError("dense backward: grad_out size");
  grad_input.resize({n});
  grad_input.fill(T(0));
  grad_weights.resize({m, n});
  grad_biases.resize({m});
  const T* in = input.ptr();
  T* gi = grad_input.ptr();
  for (std::size_t r = 0; r < m; ++r) {
    const T g = grad_out[r];
    grad_biases[r] = g;
    const T* w_row = weights.ptr() + r * n;
    T* gw_row = grad_weights.ptr() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      gw_row[j] = g * in[j];
      gi[j] += g * w_row[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Activations, loss, dropout
// ---------------------------------------------------------------------------

template <typename T>
void relu_into(const TensorT<T>& input, TensorT<T>& out) {
  out.resize(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > T(0) ? input[i] : T(0);
  }
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
  TensorT<T> out;
  relu_into(input, out);
  return out;
}

/// Passes gradient where the pre-activation was strictly positive.
template <typename T>
void relu_backward_into(const TensorT<T>& pre_activation,
                        const TensorT<T>& grad_out, TensorT<T>& grad_input) {
  if (!pre_activation.same_shape(grad_out)) {
    throw ShapeError("relu backward: shape mismatch");
  }
  grad_input.resize(pre_activation.shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_input[i] = pre_activation[i] > T(0) ? grad_out[i] : T(0);
  }
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& pre_activation,
                         const TensorT<T>& grad_out) {
  TensorT<T> g;
  relu_backward_into(pre_activation, grad_out, g);
  return g;
}

/// Max-subtracted softmax; output sums to 1 and every entry is in (0, 1].
template <typename T>
void softmax_into(const TensorT<T>& logits, TensorT<T>& out) {
  if (logits.size() == 0) throw ShapeError("softmax: empty input");
  out.resize(logits.shape);
  T max_z = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    max_z = std::max(max_z, logits[i]);
  }
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_z);
    sum += out[i];
  }
  const T inv = T(1) / sum;
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] *= inv;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  TensorT<T> out;
  softmax_into(logits, out);
  return out;
}

/// -ln(probs[label]).
template <typename T>
T cross_entropy_loss(const TensorT<T>& probs, std::size_t label) {
  if (label >= probs.size()) {
    throw DomainError("cross entropy: label " + std::to_string(label) +
                      " out of range for " + std::to_string(probs.size()) +
                      " classes");
  }
  return -std::log(probs[label]);
}

/// Cross-entropy evaluated straight from the logits (log-sum-exp form): the
/// loss stays finite even when probs[label] underflows to zero.
template <typename T>
T softmax_cross_entropy_loss_from_logits(const TensorT<T>& logits,
                                         std::size_t label) {
  if (label >= logits.size()) {
    throw DomainError("cross entropy: label out of range");
  }
  T max_z = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) {
    max_z = std::max(max_z, logits[i]);
  }
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    sum += std::exp(logits[i] - max_z);
  }
  return std::log(sum) - (logits[label] - max_z);
}

/// Combined softmax + cross-entropy gradient with respect to the logits:
/// p - onehot(label).
template <typename T>
void softmax_cross_entropy_grad_into(const TensorT<T>& probs, std::size_t label,
                                     TensorT<T>& grad_logits) {
  if (label >= probs.size()) {
    throw DomainError("cross entropy grad: label out of range");
  }
  grad_logits.resize(probs.shape);
  for (std::size_t i = 0; i < probs.size(); ++i) grad_logits[i] = probs[i];
  grad_logits[label] -= T(1);
}

template <typename T>
struct DropoutResult {
  TensorT<T> output;
  std::vector<std::uint8_t> kept;  // empty in inference mode
};

/// Inverted dropout: in training each unit is zeroed with probability `rate`
/// and survivors are scaled by 1/(1-rate); in inference this is the identity.
template <typename T, typename Rng>
void dropout_into(const TensorT<T>& input, double rate, bool training, Rng& rng,
                  TensorT<T>& output, std::vector<std::uint8_t>& kept) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1)");
  }
  output.resize(input.shape);
  if (!training || rate == 0.0) {
    std::copy(input.data.begin(), input.data.end(), output.data.begin());
    kept.clear();
    return;
  }
  kept.resize(input.size());
  const T scale = T(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool keep = unit(rng) >= rate;
    kept[i] = keep ? 1 : 0;
    output[i] = keep ? input[i] * scale : T(0);
  }
}

template <typename T, typename Rng>
DropoutResult<T> dropout(const TensorT<T>& input, double rate, bool training,
                         Rng& rng) {
  DropoutResult<T> r;
  dropout_into(input, rate, training, rng, r.output, r.kept);
  return r;
}

/// Backward of training-mode dropout; `kept` empty means it ran as identity.
template <typename T>
void dropout_backward_into(const std::vector<std::uint8_t>& kept, double rate,
                           const TensorT<T>& grad_out, TensorT<T>& grad_input) {
  grad_input.resize(grad_out.shape);
  if (kept.empty()) {
    std::copy(grad_out.data.begin(), grad_out.data.end(),
              grad_input.data.begin());
    return;
  }
  if (kept.size() != grad_out.size()) {
    throw ShapeError("dropout backward: mask size mismatch");
  }
  const T scale = T(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_input[i] = kept[i] ? grad_out[i] * scale : T(0);
  }
}

}  // namespace genrecnn::nn
