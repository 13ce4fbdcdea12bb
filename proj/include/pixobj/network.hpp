#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pixobj/grid.hpp"
#include "pixobj/tensor.hpp"

namespace pixobj {

enum class LayerKind { kConv, kRelu, kMaxPool, kDropout };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int channels = 0;  // conv output channels
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  double rate = 0.0;  // dropout

  // 3x3 convs pad by their dilation so spatial size is preserved; 1x1 convs
  // do not pad.
  static LayerSpec conv(int channels, int kernel, int dilation = 1);
  static LayerSpec relu();
  static LayerSpec pool(int kernel, int stride, int pad = 1);
  static LayerSpec drop(double rate);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkConfig {
  std::string preset = "custom";
  int input_channels = 3;
  std::vector<LayerSpec> layers;

  // The appendix architecture: VGG-16 trunk, stride-1 pools 4 and 5, dilated
  // block 5 and conv3-1024 head, 2-way output.
  static NetworkConfig paper();
  // Desk-scale variant: 2-2-3 conv blocks of width 16/32/32, one subsampling
  // pool (output stride 2), dilated block 3 and a dilation-12 head.
  static NetworkConfig toy();
  static NetworkConfig from_preset(const std::string& name);

  void validate() const;
  int conv_count() const;
  int output_stride() const;
  Shape output_shape(const Shape& input) const;
  // Shape after running layers [0, last].
  Shape shape_after(const Shape& input, std::size_t last) const;
  std::int64_t parameter_count() const;
  // Input channel count seen by each conv layer, keyed by layer index.
  std::map<std::size_t, int> conv_input_channels() const;
  // Last relu before the classifier conv: the shared feature tensor.
  std::size_t feature_layer() const;
  int feature_channels() const;
  // Last pooling layer ("pool5" for the paper preset).
  std::size_t activation_layer() const;
};

template <typename T>
struct LayerGrad {
  BasicTensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
using NetworkGrads = std::map<std::size_t, LayerGrad<T>>;

template <typename T>
class BasicNetwork {
 public:
  struct Trace {
    std::vector<BasicTensor<T>> inputs;  // input to each layer
    std::vector<std::vector<std::int64_t>> argmax;
    std::vector<std::vector<T>> masks;
    BasicTensor<T> output;
  };

  BasicNetwork() = default;
  // Zero-initialized parameters.
  explicit BasicNetwork(NetworkConfig config);

  // Centered Gaussian weights with std sqrt(2 / fan_in), zero biases.
  static BasicNetwork random(NetworkConfig config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  std::map<std::size_t, ConvParams<T>>& params() { return params_; }
  const std::map<std::size_t, ConvParams<T>>& params() const { return params_; }
  std::map<std::size_t, LayerGrad<T>>& velocity() { return velocity_; }
  const std::map<std::size_t, LayerGrad<T>>& velocity() const { return velocity_; }
  std::int64_t iteration() const { return iteration_; }
  void set_iteration(std::int64_t it) { iteration_ = it; }

  std::int64_t parameter_count() const;

  // Eval-mode forward through all layers.
  BasicTensor<T> forward(const BasicTensor<T>& input) const;
  // Eval-mode forward through layers [0, last].
  BasicTensor<T> forward_until(const BasicTensor<T>& input, std::size_t last) const;
  // Forward that records what backward needs. Dropout masks come from
  // per-layer streams of `dropout_seed`.
  Trace forward_trace(const BasicTensor<T>& input, bool train_mode, std::uint64_t dropout_seed) const;
  NetworkGrads<T> backward(const Trace& trace, const BasicTensor<T>& out_grad,
                           BasicTensor<T>* input_grad = nullptr) const;

  void apply_sgd(const NetworkGrads<T>& grads, const SgdOptions& opt);

  template <typename U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> out(config_);
    for (const auto& [idx, p] : params_) {
      auto& q = out.params().at(idx);
      q.weights = p.weights.template cast<U>();
      q.bias.assign(p.bias.begin(), p.bias.end());
    }
    return out;
  }

  friend bool operator==(const BasicNetwork& a, const BasicNetwork& b) {
    if (!(a.config_.layers == b.config_.layers) || a.params_.size() != b.params_.size()) return false;
    for (const auto& [idx, p] : a.params_) {
      const auto it = b.params_.find(idx);
      if (it == b.params_.end() || !(p.weights == it->second.weights) || p.bias != it->second.bias) return false;
    }
    return true;
  }

 private:
  NetworkConfig config_;
  std::map<std::size_t, ConvParams<T>> params_;
  std::map<std::size_t, LayerGrad<T>> velocity_;
  std::int64_t iteration_ = 0;
};

using Network = BasicNetwork<float>;
using NetworkD = BasicNetwork<double>;

// Foreground probability at input resolution: 2-way softmax on the logits,
// then corner-aligned bilinear upsampling. `image` is (1, c, h, w).
ObjectnessMap predict_objectness(const Network& net, const Tensor& image);

// Channel-summed activations of the last pooling layer, upsampled to image
// size and min-max normalized to [0, 1]. A flat map normalizes to zeros.
Grid<float> activation_map(const Network& net, const Tensor& image);
// Same map before normalization.
Grid<float> activation_map_raw(const Network& net, const Tensor& image);

}  // namespace pixobj
