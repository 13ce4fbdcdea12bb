#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pixobj/errors.hpp"
#include "pixobj/grid.hpp"

namespace pixobj {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense NCHW array with an optional same-shape gradient buffer.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  bool has_grad() const { return grad_.has_value(); }
  // Allocates a zero gradient buffer on first use.
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();
  void drop_grad() { grad_.reset(); }

  // Slice of one batch item as a standalone tensor.
  BasicTensor sample(int index) const;
  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.storage()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename T>
struct ConvParams {
  BasicTensor<T> weights;  // (out_c, in_c, k, k)
  std::vector<T> bias;     // out_c
  int stride = 1;
  int pad = 0;
  int dilation = 1;

  int out_channels() const { return weights.n(); }
  int in_channels() const { return weights.c(); }
  int kernel() const { return weights.h(); }
  int extent() const { return (kernel() - 1) * dilation + 1; }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  std::vector<T> bias;
};

int conv_output_size(int in, int kernel, int stride, int pad, int dilation);
// Ceil-mode pooling size; a last window starting inside the right padding is
// dropped.
int pool_output_size(int in, int kernel, int stride, int pad);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvParams<T>& p);
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p,
                             const BasicTensor<T>& out_grad);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& out_grad);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::int64_t> argmax;  // flat input offset per output element
};

template <typename T>
PoolResult<T> maxpool(const BasicTensor<T>& input, int kernel, int stride, int pad);
template <typename T>
BasicTensor<T> maxpool_backward(const Shape& input_shape, const std::vector<std::int64_t>& argmax,
                                const BasicTensor<T>& out_grad);

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  std::vector<T> mask;  // 0 or 1/(1-rate) per element; empty when identity
};

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, bool train_mode, std::mt19937_64& rng);
template <typename T>
BasicTensor<T> dropout_backward(const std::vector<T>& mask, const BasicTensor<T>& out_grad);

// Corner-aligned bilinear resampling of every (n, c) plane.
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& input, int out_h, int out_w);
template <typename T>
BasicTensor<T> bilinear_resize_backward(const Shape& input_shape, const BasicTensor<T>& out_grad);

enum class Reduction { kSum, kMean };

template <typename T>
struct XentResult {
  double loss = 0.0;
  std::int64_t contributing = 0;
  BasicTensor<T> logit_grad;
};

// Two-way softmax cross-entropy per pixel. `labels` holds one LabelMap per
// batch item, each matching the logit spatial size.
template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const LabelMap> labels, Reduction reduction);

// Foreground (channel 0) probability per pixel of a (n, 2, h, w) logit tensor.
template <typename T>
BasicTensor<T> softmax_foreground(const BasicTensor<T>& logits);

struct SgdOptions {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum*v + grad + decay*param; param <- param - lr*v.
template <typename T>
void sgd_update(std::span<T> params, std::span<const T> grads, std::span<T> velocity, const SgdOptions& opt);

struct GradCheckOptions {
  double epsilon = 1e-5;
  int samples = 64;  // coordinates checked; <= 0 checks all
  // Denominator floor so near-zero gradients are compared absolutely.
  double abs_floor = 1e-6;
  std::uint64_t seed = 7;
  // Coordinates rejected by this predicate are skipped (kinks).
  std::function<bool(std::size_t)> accept;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

// Central finite differences of a scalar function against `analytic` on
// randomly sampled coordinates of `x`.
GradCheckResult grad_check(const std::function<double(const TensorD&)>& f, const TensorD& x,
                           std::span<const double> analytic, const GradCheckOptions& opt = {});

}  // namespace pixobj
