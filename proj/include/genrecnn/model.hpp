#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "genrecnn/nn/ops.hpp"
#include "genrecnn/nn/optimizer.hpp"

namespace genrecnn::model {

// Fixed topology. With valid padding the shape chain for a 1x64x256 segment
// is 64x62x254 -> 64x31x63 -> 64x29x59 -> 64x14x14 -> 12544 -> 32 -> 10.
constexpr std::size_t kInputMels = 64;
constexpr std::size_t kInputFrames = 256;
constexpr std::size_t kConvChannels = 64;
constexpr std::size_t kConv1Kh = 3, kConv1Kw = 3;
constexpr std::size_t kConv2Kh = 3, kConv2Kw = 5;
constexpr std::size_t kPoolH = 2, kPoolW = 4;
constexpr std::size_t kHiddenUnits = 32;
constexpr std::size_t kNumClasses = 10;

constexpr std::size_t kConv1OutH = kInputMels - kConv1Kh + 1;     // 62
constexpr std::size_t kConv1OutW = kInputFrames - kConv1Kw + 1;   // 254
constexpr std::size_t kPool1OutH = kConv1OutH / kPoolH;           // 31
constexpr std::size_t kPool1OutW = kConv1OutW / kPoolW;           // 63
constexpr std::size_t kConv2OutH = kPool1OutH - kConv2Kh + 1;     // 29
constexpr std::size_t kConv2OutW = kPool1OutW - kConv2Kw + 1;     // 59
constexpr std::size_t kPool2OutH = kConv2OutH / kPoolH;           // 14
constexpr std::size_t kPool2OutW = kConv2OutW / kPoolW;           // 14
constexpr std::size_t kFlatDim =
    kConvChannels * kPool2OutH * kPool2OutW;                      // 12544

/// Named internal layers, used by the receptive-field and filter-estimation
/// tooling.
enum class LayerId { kConv1, kPool1, kConv2, kPool2, kFc1 };

const char* layer_name(LayerId id);
LayerId layer_from_name(const std::string& name);

/// Every intermediate activation of one forward pass, kept for backward and
/// for post-hoc analysis.
template <typename T>
struct ForwardCacheT {
  TensorT<T> input;             // 1x64x256
  TensorT<T> conv1_pre;         // 64x62x254, pre-ReLU
  TensorT<T> conv1_act;         // post-ReLU
  TensorT<T> pool1_out;         // 64x31x63
  std::vector<std::uint32_t> pool1_argmax;
  TensorT<T> conv2_pre;         // 64x29x59
  TensorT<T> conv2_act;
  TensorT<T> pool2_out;         // 64x14x14
  std::vector<std::uint32_t> pool2_argmax;
  TensorT<T> flat;              // 12544
  TensorT<T> fc1_pre;           // 32
  TensorT<T> fc1_act;           // post-ReLU
  TensorT<T> fc1_dropped;       // after dropout (training) or copy
  std::vector<std::uint8_t> dropout_kept;
  TensorT<T> logits;            // 10
  TensorT<T> probs;             // 10
  bool valid = false;

  /// Activation tensor of a named layer (post-ReLU for conv1/conv2/fc1).
  const TensorT<T>& activation(LayerId layer) const {
    switch (layer) {
      case LayerId::kConv1: return conv1_act;
      case LayerId::kPool1: return pool1_out;
      case LayerId::kConv2: return conv2_act;
      case LayerId::kPool2: return pool2_out;
      case LayerId::kFc1: return fc1_act;
    }
    throw DomainError("unknown layer");
  }
};

using ForwardCache = ForwardCacheT<float>;

/// Gradients for all four parameterized layers, in network order.
template <typename T>
struct GradientSetT {
  TensorT<T> conv1_w, conv1_b;
  TensorT<T> conv2_w, conv2_b;
  TensorT<T> fc1_w, fc1_b;
  TensorT<T> out_w, out_b;
};

/// The genre classifier: conv(3x3) -> ReLU -> pool(2x4) -> conv(3x5) -> ReLU
/// -> pool(2x4) -> flatten -> dense(32) -> ReLU -> dropout -> dense(10) ->
/// softmax.
template <typename T>
struct GenreCnnT {
  nn::LayerParamsT<T> conv1;  // 64x1x3x3
  nn::LayerParamsT<T> conv2;  // 64x64x3x5
  nn::LayerParamsT<T> fc1;    // 32x12544
  nn::LayerParamsT<T> out;    // 10x32
  nn::SgdConfig hyper;

  // Training metadata carried by checkpoints.
  std::uint32_t epochs_seen = 0;
  float best_val_accuracy = 0.0f;

  GenreCnnT() {
    conv1.allocate({kConvChannels, 1, kConv1Kh, kConv1Kw}, {kConvChannels});
    conv2.allocate({kConvChannels, kConvChannels, kConv2Kh, kConv2Kw},
                   {kConvChannels});
    fc1.allocate({kHiddenUnits, kFlatDim}, {kHiddenUnits});
    out.allocate({kNumClasses, kHiddenUnits}, {kNumClasses});
  }

  /// Seeded Kaiming-uniform weights, zero biases.
  explicit GenreCnnT(std::uint64_t seed) : GenreCnnT() {
    hyper.seed = seed;
    std::mt19937_64 rng(seed);
    nn::kaiming_uniform_init(conv1, 1 * kConv1Kh * kConv1Kw, rng);
    nn::kaiming_uniform_init(conv2, kConvChannels * kConv2Kh * kConv2Kw, rng);
    nn::kaiming_uniform_init(fc1, kFlatDim, rng);
    nn::kaiming_uniform_init(out, kHiddenUnits, rng);
  }

  std::size_t parameter_count() const {
    return conv1.parameter_count() + conv2.parameter_count() +
           fc1.parameter_count() + out.parameter_count();
  }

  std::array<nn::LayerParamsT<T>*, 4> layers() {
    return {&conv1, &conv2, &fc1, &out};
  }
  std::array<const nn::LayerParamsT<T>*, 4> layers() const {
    return {&conv1, &conv2, &fc1, &out};
  }

  void zero_grads() {
    for (auto* l : layers()) l->zero_grads();
  }

  /// Full forward pass over one 1x64x256 segment. Dropout fires only when
  /// `training` is set; `rng` is untouched otherwise. The cache keeps every
  /// intermediate for backward and analysis.
  template <typename Rng>
  void forward(const TensorT<T>& segment, bool training, Rng& rng,
               ForwardCacheT<T>& cache) const {
    if (segment.shape != std::vector<std::size_t>{1, kInputMels, kInputFrames}) {
      throw ShapeError("forward: expected 1x64x256 segment, got " +
                       segment.shape_str());
    }
    cache.input = segment;
    nn::conv2d_forward_into(cache.input, conv1.weights, conv1.biases,
                            cache.conv1_pre);
    nn::relu_into(cache.conv1_pre, cache.conv1_act);
    nn::maxpool_forward_into(cache.conv1_act, kPoolH, kPoolW, cache.pool1_out,
                             cache.pool1_argmax);
    nn::conv2d_forward_into(cache.pool1_out, conv2.weights, conv2.biases,
                            cache.conv2_pre);
    nn::relu_into(cache.conv2_pre, cache.conv2_act);
    nn::maxpool_forward_into(cache.conv2_act, kPoolH, kPoolW, cache.pool2_out,
                             cache.pool2_argmax);
    cache.flat = cache.pool2_out;
    cache.flat.reshape({kFlatDim});
    nn::dense_forward_into(cache.flat, fc1.weights, fc1.biases, cache.fc1_pre);
    nn::relu_into(cache.fc1_pre, cache.fc1_act);
    nn::dropout_into(cache.fc1_act, hyper.dropout_rate_fc, training, rng,
                     cache.fc1_dropped, cache.dropout_kept);
    nn::dense_forward_into(cache.fc1_dropped, out.weights, out.biases,
                           cache.logits);
    nn::softmax_into(cache.logits, cache.probs);
    cache.valid = true;
  }

  /// Loss of the cached forward pass against `label` (data term only).
  T loss(const ForwardCacheT<T>& cache, std::size_t label) const {
    if (!cache.valid) throw StateError("loss: no forward cache");
    return nn::softmax_cross_entropy_loss_from_logits(cache.logits, label);
  }

  /// Backpropagates one sample's cross-entropy loss; writes all eight
  /// gradient tensors (overwrite semantics).
  void backward(const ForwardCacheT<T>& cache, std::size_t label,
                GradientSetT<T>& grads) const {
    if (!cache.valid) throw StateError("backward: no forward cache");

    TensorT<T> grad_logits;
    nn::softmax_cross_entropy_grad_into(cache.probs, label, grad_logits);

    TensorT<T> grad_fc1_dropped;
    nn::dense_backward_into(cache.fc1_dropped, out.weights, grad_logits,
                            grad_fc1_dropped, grads.out_w, grads.out_b);

    TensorT<T> grad_fc1_act;
    nn::dropout_backward_into(cache.dropout_kept, hyper.dropout_rate_fc,
                              grad_fc1_dropped, grad_fc1_act);

    TensorT<T> grad_fc1_pre;
    nn::relu_backward_into(cache.fc1_pre, grad_fc1_act, grad_fc1_pre);

    TensorT<T> grad_flat;
    nn::dense_backward_into(cache.flat, fc1.weights, grad_fc1_pre, grad_flat,
                            grads.fc1_w, grads.fc1_b);
    grad_flat.reshape({kConvChannels, kPool2OutH, kPool2OutW});

    TensorT<T> grad_conv2_act;
    nn::maxpool_backward_into(cache.pool2_argmax, cache.conv2_act.shape,
                              grad_flat, grad_conv2_act);

    TensorT<T> grad_conv2_pre;
    nn::relu_backward_into(cache.conv2_pre, grad_conv2_act, grad_conv2_pre);

    TensorT<T> grad_pool1;
    nn::conv2d_backward_into(cache.pool1_out, conv2.weights, grad_conv2_pre,
                             grad_pool1, grads.conv2_w, grads.conv2_b);

    TensorT<T> grad_conv1_act;
    nn::maxpool_backward_into(cache.pool1_argmax, cache.conv1_act.shape,
                              grad_pool1, grad_conv1_act);

    TensorT<T> grad_conv1_pre;
    nn::relu_backward_into(cache.conv1_pre, grad_conv1_act, grad_conv1_pre);

    TensorT<T> grad_input;  // first layer: input gradient not needed
    nn::conv2d_backward_into(cache.input, conv1.weights, grad_conv1_pre,
                             grad_input, grads.conv1_w, grads.conv1_b,
                             /*need_grad_input=*/false);
  }

  /// Backward into the model's own gradient buffers (accumulating), scaled
  /// by `scale` (1/batch for a mean over the mini-batch).
  void accumulate_gradients(const GradientSetT<T>& g, T scale) {
    auto add = [scale](TensorT<T>& dst, const TensorT<T>& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    };
    add(conv1.weight_grads, g.conv1_w);
    add(conv1.bias_grads, g.conv1_b);
    add(conv2.weight_grads, g.conv2_w);
    add(conv2.bias_grads, g.conv2_b);
    add(fc1.weight_grads, g.fc1_w);
    add(fc1.bias_grads, g.fc1_b);
    add(out.weight_grads, g.out_w);
    add(out.bias_grads, g.out_b);
  }

  /// Spec contract form: backward one sample straight into the model's
  /// gradient buffers (overwriting previous contents).
  void backward(const ForwardCacheT<T>& cache, std::size_t label) {
    GradientSetT<T> g;
    backward(cache, label, g);
    zero_grads();
    accumulate_gradients(g, T(1));
  }
};

using GenreCnn = GenreCnnT<float>;

/// Checkpoint file: magic "GCNN", version u32, architecture descriptor,
/// hyperparameters, training metadata, then the eight parameter tensors
/// (shape header + f32 data each). Byte layout documented in the README.
void save_checkpoint(const GenreCnn& model, const std::filesystem::path& path);
GenreCnn load_checkpoint(const std::filesystem::path& path);

}  // namespace genrecnn::model
