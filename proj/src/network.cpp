#include "pixobj/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pixobj/rng.hpp"

namespace pixobj {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv:
      return "conv";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kMaxPool:
      return "pool";
    case LayerKind::kDropout:
      return "dropout";
  }
  return "?";
}

LayerSpec LayerSpec::conv(int channels, int kernel, int dilation) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.channels = channels;
  s.kernel = kernel;
  s.dilation = dilation;
  s.pad = kernel == 1 ? 0 : dilation * (kernel / 2);
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::pool(int kernel, int stride, int pad) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  return s;
}

LayerSpec LayerSpec::drop(double rate) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.rate = rate;
  return s;
}

namespace {

void conv_block(std::vector<LayerSpec>& layers, int count, int channels, int dilation) {
  for (int i = 0; i < count; ++i) {
    layers.push_back(LayerSpec::conv(channels, 3, dilation));
    layers.push_back(LayerSpec::relu());
  }
}

}  // namespace

NetworkConfig NetworkConfig::paper() {
  NetworkConfig cfg;
  cfg.preset = "paper";
  auto& l = cfg.layers;
  conv_block(l, 2, 64, 1);
  l.push_back(LayerSpec::pool(3, 2));
  conv_block(l, 2, 128, 1);
  l.push_back(LayerSpec::pool(3, 2));
  conv_block(l, 3, 256, 1);
  l.push_back(LayerSpec::pool(3, 2));
  conv_block(l, 3, 512, 1);
  l.push_back(LayerSpec::pool(3, 1));
  conv_block(l, 3, 512, 2);
  l.push_back(LayerSpec::pool(3, 1));
  l.push_back(LayerSpec::conv(1024, 3, 12));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::drop(0.5));
  l.push_back(LayerSpec::conv(1024, 1));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::drop(0.5));
  l.push_back(LayerSpec::conv(2, 1));
  return cfg;
}

NetworkConfig NetworkConfig::toy() {
  NetworkConfig cfg;
  cfg.preset = "toy";
  auto& l = cfg.layers;
  conv_block(l, 2, 16, 1);
  l.push_back(LayerSpec::pool(3, 2));
  conv_block(l, 2, 32, 1);
  l.push_back(LayerSpec::pool(3, 1));
  conv_block(l, 3, 32, 2);
  l.push_back(LayerSpec::pool(3, 1));
  l.push_back(LayerSpec::conv(64, 3, 12));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::drop(0.5));
  l.push_back(LayerSpec::conv(64, 1));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::drop(0.5));
  l.push_back(LayerSpec::conv(2, 1));
  return cfg;
}

NetworkConfig NetworkConfig::from_preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  throw ContractViolation("unknown network preset '" + name + "' (expected paper|toy)");
}

void NetworkConfig::validate() const {
  if (input_channels < 1) throw ContractViolation("NetworkConfig: input_channels must be >= 1");
  if (layers.empty()) throw ContractViolation("NetworkConfig: empty layer list");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i];
    const std::string where = "NetworkConfig: layer " + std::to_string(i) + " (" + to_string(s.kind) + ")";
    switch (s.kind) {
      case LayerKind::kConv:
        if (s.channels < 1 || s.kernel < 1 || s.kernel % 2 == 0 || s.stride < 1 || s.pad < 0 || s.dilation < 1) {
          throw ContractViolation(where + ": invalid conv parameters");
        }
        break;
      case LayerKind::kMaxPool:
        if (s.kernel < 1 || s.stride < 1 || s.pad < 0 || s.pad >= s.kernel) {
          throw ContractViolation(where + ": invalid pool parameters");
        }
        break;
      case LayerKind::kDropout:
        if (!(s.rate >= 0.0 && s.rate < 1.0)) throw ContractViolation(where + ": rate must be in [0, 1)");
        break;
      case LayerKind::kRelu:
        break;
    }
  }
  const LayerSpec& last = layers.back();
  if (last.kind != LayerKind::kConv || last.channels != 2) {
    throw ContractViolation("NetworkConfig: final layer must be a 2-channel conv");
  }
}

int NetworkConfig::conv_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const LayerSpec& s) { return s.kind == LayerKind::kConv; }));
}

int NetworkConfig::output_stride() const {
  int stride = 1;
  for (const auto& s : layers) {
    if (s.kind == LayerKind::kConv || s.kind == LayerKind::kMaxPool) stride *= s.stride;
  }
  return stride;
}

Shape NetworkConfig::shape_after(const Shape& input, std::size_t last) const {
  if (input.c != input_channels) {
    throw ContractViolation("network expects " + std::to_string(input_channels) + " input channels, got " +
                            input.str());
  }
  Shape s = input;
  for (std::size_t i = 0; i <= last && i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::kConv) {
      s.c = l.channels;
      s.h = conv_output_size(s.h, l.kernel, l.stride, l.pad, l.dilation);
      s.w = conv_output_size(s.w, l.kernel, l.stride, l.pad, l.dilation);
    } else if (l.kind == LayerKind::kMaxPool) {
      s.h = pool_output_size(s.h, l.kernel, l.stride, l.pad);
      s.w = pool_output_size(s.w, l.kernel, l.stride, l.pad);
    }
    if (s.h < 1 || s.w < 1) throw ContractViolation("input " + input.str() + " too small for layer " + std::to_string(i));
  }
  return s;
}

Shape NetworkConfig::output_shape(const Shape& input) const { return shape_after(input, layers.size() - 1); }

std::map<std::size_t, int> NetworkConfig::conv_input_channels() const {
  std::map<std::size_t, int> out;
  int ch = input_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::kConv) {
      out[i] = ch;
      ch = layers[i].channels;
    }
  }
  return out;
}

std::int64_t NetworkConfig::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& [idx, in_c] : conv_input_channels()) {
    const LayerSpec& l = layers[idx];
    total += static_cast<std::int64_t>(l.channels) * (static_cast<std::int64_t>(in_c) * l.kernel * l.kernel + 1);
  }
  return total;
}

std::size_t NetworkConfig::feature_layer() const {
  std::size_t last_conv = layers.size();
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (layers[i].kind == LayerKind::kConv) {
      last_conv = i;
      break;
    }
  }
  for (std::size_t i = last_conv; i-- > 0;) {
    if (layers[i].kind == LayerKind::kRelu) return i;
  }
  throw ContractViolation("NetworkConfig: no feature layer before the classifier");
}

int NetworkConfig::feature_channels() const {
  const std::size_t f = feature_layer();
  for (std::size_t i = f + 1; i-- > 0;) {
    if (layers[i].kind == LayerKind::kConv) return layers[i].channels;
  }
  return input_channels;
}

std::size_t NetworkConfig::activation_layer() const {
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (layers[i].kind == LayerKind::kMaxPool) return i;
  }
  throw ContractViolation("NetworkConfig: no pooling layer");
}

template <typename T>
BasicNetwork<T>::BasicNetwork(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& [idx, in_c] : config_.conv_input_channels()) {
    const LayerSpec& l = config_.layers[idx];
    ConvParams<T> p;
    p.weights = BasicTensor<T>(Shape{l.channels, in_c, l.kernel, l.kernel});
    p.bias.assign(static_cast<std::size_t>(l.channels), T{0});
    p.stride = l.stride;
    p.pad = l.pad;
    p.dilation = l.dilation;
    params_.emplace(idx, std::move(p));
    velocity_.emplace(idx, LayerGrad<T>{BasicTensor<T>(Shape{l.channels, in_c, l.kernel, l.kernel}),
                                        std::vector<T>(static_cast<std::size_t>(l.channels), T{0})});
  }
}

template <typename T>
BasicNetwork<T> BasicNetwork<T>::random(NetworkConfig config, std::uint64_t seed) {
  BasicNetwork net(std::move(config));
  for (auto& [idx, p] : net.params_) {
    auto rng = stream_rng(seed, "init", idx);
    const double fan_in = static_cast<double>(p.in_channels()) * p.kernel() * p.kernel();
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : p.weights.data()) v = static_cast<T>(dist(rng));
  }
  return net;
}

template <typename T>
std::int64_t BasicNetwork<T>::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& [idx, p] : params_) total += static_cast<std::int64_t>(p.weights.numel() + p.bias.size());
  return total;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward(const BasicTensor<T>& input) const {
  return forward_until(input, config_.layers.size() - 1);
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward_until(const BasicTensor<T>& input, std::size_t last) const {
  config_.shape_after(input.shape(), last);  // validates sizes up front
  BasicTensor<T> x = input;
  for (std::size_t i = 0; i <= last && i < config_.layers.size(); ++i) {
    const LayerSpec& l = config_.layers[i];
    switch (l.kind) {
      case LayerKind::kConv:
        x = conv2d(x, params_.at(i));
        break;
      case LayerKind::kRelu:
        x = relu(x);
        break;
      case LayerKind::kMaxPool:
        x = std::move(maxpool(x, l.kernel, l.stride, l.pad).output);
        break;
      case LayerKind::kDropout:
        break;  // identity at inference
    }
  }
  return x;
}

template <typename T>
typename BasicNetwork<T>::Trace BasicNetwork<T>::forward_trace(const BasicTensor<T>& input, bool train_mode,
                                                               std::uint64_t dropout_seed) const {
  config_.output_shape(input.shape());
  const std::size_t n = config_.layers.size();
  Trace t;
  t.inputs.resize(n);
  t.argmax.resize(n);
  t.masks.resize(n);
  BasicTensor<T> x = input;
  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& l = config_.layers[i];
    t.inputs[i] = x;
    switch (l.kind) {
      case LayerKind::kConv:
        x = conv2d(x, params_.at(i));
        break;
      case LayerKind::kRelu:
        x = relu(x);
        break;
      case LayerKind::kMaxPool: {
        auto r = maxpool(x, l.kernel, l.stride, l.pad);
        x = std::move(r.output);
        t.argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::kDropout: {
        auto rng = stream_rng(dropout_seed, "dropout", i);
        auto r = dropout(x, l.rate, train_mode, rng);
        x = std::move(r.output);
        t.masks[i] = std::move(r.mask);
        break;
      }
    }
  }
  t.output = std::move(x);
  return t;
}

template <typename T>
NetworkGrads<T> BasicNetwork<T>::backward(const Trace& trace, const BasicTensor<T>& out_grad,
                                          BasicTensor<T>* input_grad) const {
  if (out_grad.shape() != trace.output.shape()) {
    throw ContractViolation("network backward: out_grad " + out_grad.shape().str() + " vs output " +
                            trace.output.shape().str());
  }
  NetworkGrads<T> grads;
  BasicTensor<T> g = out_grad;
  for (std::size_t i = config_.layers.size(); i-- > 0;) {
    const LayerSpec& l = config_.layers[i];
    const BasicTensor<T>& x = trace.inputs[i];
    switch (l.kind) {
      case LayerKind::kConv: {
        auto cg = conv2d_backward(x, params_.at(i), g);
        grads.emplace(i, LayerGrad<T>{std::move(cg.weights), std::move(cg.bias)});
        g = std::move(cg.input);
        break;
      }
      case LayerKind::kRelu:
        g = relu_backward(x, g);
        break;
      case LayerKind::kMaxPool:
        g = maxpool_backward(x.shape(), trace.argmax[i], g);
        break;
      case LayerKind::kDropout:
        g = dropout_backward(trace.masks[i], g);
        break;
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(g);
  return grads;
}

template <typename T>
void BasicNetwork<T>::apply_sgd(const NetworkGrads<T>& grads, const SgdOptions& opt) {
  for (auto& [idx, p] : params_) {
    const auto it = grads.find(idx);
    if (it == grads.end()) throw ContractViolation("apply_sgd: missing gradient for layer " + std::to_string(idx));
    auto& v = velocity_.at(idx);
    sgd_update<T>(p.weights.data(), it->second.weights.data(), v.weights.data(), opt);
    sgd_update<T>(std::span<T>(p.bias), std::span<const T>(it->second.bias), std::span<T>(v.bias), opt);
  }
  ++iteration_;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

ObjectnessMap predict_objectness(const Network& net, const Tensor& image) {
  if (image.n() != 1) throw ContractViolation("predict_objectness: expected a single image, got " + image.shape().str());
  const Tensor logits = net.forward(image);
  const Tensor fg = softmax_foreground(logits);
  const Tensor up = bilinear_resize(fg, image.h(), image.w());
  std::vector<float> probs(up.data().begin(), up.data().end());
  for (auto& p : probs) p = std::clamp(p, 0.0f, 1.0f);
  return ObjectnessMap(image.h(), image.w(), std::move(probs));
}

Grid<float> activation_map_raw(const Network& net, const Tensor& image) {
  if (image.n() != 1) throw ContractViolation("activation_map: expected a single image");
  const Tensor act = net.forward_until(image, net.config().activation_layer());
  Tensor summed(Shape{1, 1, act.h(), act.w()});
  const std::size_t plane = static_cast<std::size_t>(act.h()) * act.w();
  for (int ch = 0; ch < act.c(); ++ch) {
    const float* src = act.data().data() + act.offset(0, ch, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) summed.data()[i] += src[i];
  }
  const Tensor up = bilinear_resize(summed, image.h(), image.w());
  return Grid<float>(image.h(), image.w(), std::vector<float>(up.data().begin(), up.data().end()));
}

Grid<float> activation_map(const Network& net, const Tensor& image) {
  Grid<float> m = activation_map_raw(net, image);
  const auto [lo_it, hi_it] = std::minmax_element(m.data().begin(), m.data().end());
  const float lo = *lo_it;
  const float range = *hi_it - lo;
  for (auto& v : m.data()) v = range > 0.0f ? (v - lo) / range : 0.0f;
  return m;
}

}  // namespace pixobj
