#include "pixobj/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pixobj {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

std::string dims(const Shape& s) { return s.str(); }

template <typename T>
void check_conv(const BasicTensor<T>& input, const ConvParams<T>& p) {
  const Shape& ws = p.weights.shape();
  if (ws.h != ws.w || ws.h <= 0) {
    throw ContractViolation("conv2d: kernel must be square and non-empty, got " + dims(ws));
  }
  if (static_cast<int>(p.bias.size()) != ws.n) {
    throw ContractViolation("conv2d: bias length " + std::to_string(p.bias.size()) + " != out_c " +
                            std::to_string(ws.n));
  }
  if (input.c() != ws.c) {
    throw ContractViolation("conv2d: input channels " + std::to_string(input.c()) + " != weight in_c " +
                            std::to_string(ws.c) + " (input " + dims(input.shape()) + ", weights " +
                            dims(ws) + ")");
  }
  if (p.stride < 1 || p.dilation < 1 || p.pad < 0) {
    throw ContractViolation("conv2d: invalid stride/pad/dilation");
  }
  const int extent = p.extent();
  if (extent > input.h() + 2 * p.pad || extent > input.w() + 2 * p.pad) {
    throw ContractViolation("conv2d: kernel extent " + std::to_string(extent) + " exceeds padded input " +
                            std::to_string(input.h() + 2 * p.pad) + "x" + std::to_string(input.w() + 2 * p.pad));
  }
}

// Column buffer layout: rows = (ic, ky, kx), cols = (oy, ox).
template <typename T>
void im2col(const T* img, int channels, int height, int width, int k, int pad, int stride, int dilation,
            int out_h, int out_w, T* col) {
  const int out_size = out_h * out_w;
  for (int ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * out_size;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky * dilation;
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T{0});
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(ch) * height + iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx * dilation;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int height, int width, int k, int pad, int stride, int dilation,
            int out_h, int out_w, T* img) {
  const int out_size = out_h * out_w;
  for (int ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * out_size;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky * dilation;
          if (iy < 0 || iy >= height) continue;
          T* dst = img + (static_cast<std::size_t>(ch) * height + iy) * width;
          const T* src = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx * dilation;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
bool is_pointwise(const ConvParams<T>& p) {
  return p.kernel() == 1 && p.stride == 1 && p.pad == 0;
}

}  // namespace

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ContractViolation("Tensor: negative dimension in " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape.numel()) {
    throw ContractViolation("Tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape.str());
  }
}

template <typename T>
std::span<T> BasicTensor<T>::grad() {
  if (!grad_) grad_.emplace(data_.size(), T{0});
  return *grad_;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!grad_) throw ContractViolation("Tensor: no gradient buffer");
  return *grad_;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::sample(int index) const {
  if (index < 0 || index >= shape_.n) throw ContractViolation("Tensor::sample: index out of range");
  const Shape s{1, shape_.c, shape_.h, shape_.w};
  const std::size_t len = s.numel();
  std::vector<T> d(data_.begin() + static_cast<std::ptrdiff_t>(len * index),
                   data_.begin() + static_cast<std::ptrdiff_t>(len * (index + 1)));
  return BasicTensor(s, std::move(d));
}

int conv_output_size(int in, int kernel, int stride, int pad, int dilation) {
  if (in < 1 || kernel < 1 || stride < 1 || pad < 0 || dilation < 1) {
    throw ContractViolation("conv size: invalid in=" + std::to_string(in) + " k=" + std::to_string(kernel) +
                            " stride=" + std::to_string(stride) + " pad=" + std::to_string(pad) +
                            " dilation=" + std::to_string(dilation));
  }
  const int extent = (kernel - 1) * dilation + 1;
  if (extent > in + 2 * pad) {
    throw ContractViolation("conv size: kernel extent " + std::to_string(extent) + " exceeds padded input " +
                            std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - extent) / stride + 1;
}

int pool_output_size(int in, int kernel, int stride, int pad) {
  if (in < 1 || kernel < 1 || stride < 1 || pad < 0 || pad >= kernel || kernel > in + 2 * pad) {
    throw ContractViolation("pool size: invalid in=" + std::to_string(in) + " k=" + std::to_string(kernel) +
                            " stride=" + std::to_string(stride) + " pad=" + std::to_string(pad));
  }
  int out = static_cast<int>(std::ceil(static_cast<double>(in + 2 * pad - kernel) / stride)) + 1;
  if (pad > 0 && (out - 1) * stride >= in + pad) --out;
  return out;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvParams<T>& p) {
  check_conv(input, p);
  const int k = p.kernel();
  const int oh = conv_output_size(input.h(), k, p.stride, p.pad, p.dilation);
  const int ow = conv_output_size(input.w(), k, p.stride, p.pad, p.dilation);
  const int oc = p.out_channels();
  const int ic = p.in_channels();
  const int rows = ic * k * k;
  const int cols = oh * ow;

  BasicTensor<T> out(Shape{input.n(), oc, oh, ow});
  std::vector<T> col;
  const bool pointwise = is_pointwise(p);
  if (!pointwise) col.resize(static_cast<std::size_t>(rows) * cols);

  ConstMatMap<T> weights(p.weights.data().data(), oc, rows);
  for (int b = 0; b < input.n(); ++b) {
    const T* img = input.data().data() + input.offset(b, 0, 0, 0);
    const T* col_ptr = img;
    if (!pointwise) {
      im2col(img, ic, input.h(), input.w(), k, p.pad, p.stride, p.dilation, oh, ow, col.data());
      col_ptr = col.data();
    }
    ConstMatMap<T> columns(col_ptr, rows, cols);
    MatMap<T> result(out.data().data() + out.offset(b, 0, 0, 0), oc, cols);
    result.noalias() = weights * columns;
    for (int o = 0; o < oc; ++o) result.row(o).array() += p.bias[o];
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p, const BasicTensor<T>& out_grad) {
  check_conv(input, p);
  const int k = p.kernel();
  const int oh = conv_output_size(input.h(), k, p.stride, p.pad, p.dilation);
  const int ow = conv_output_size(input.w(), k, p.stride, p.pad, p.dilation);
  const int oc = p.out_channels();
  const int ic = p.in_channels();
  const Shape expected{input.n(), oc, oh, ow};
  if (out_grad.shape() != expected) {
    throw ContractViolation("conv2d_backward: out_grad shape " + out_grad.shape().str() + " != expected " +
                            expected.str());
  }
  const int rows = ic * k * k;
  const int cols = oh * ow;

  ConvGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(p.weights.shape()), std::vector<T>(oc, T{0})};
  ConstMatMap<T> weights(p.weights.data().data(), oc, rows);
  MatMap<T> weight_grad(g.weights.data().data(), oc, rows);

  const bool pointwise = is_pointwise(p);
  std::vector<T> col;
  std::vector<T> col_grad;
  if (!pointwise) {
    col.resize(static_cast<std::size_t>(rows) * cols);
    col_grad.resize(col.size());
  }

  for (int b = 0; b < input.n(); ++b) {
    const T* img = input.data().data() + input.offset(b, 0, 0, 0);
    T* img_grad = g.input.data().data() + g.input.offset(b, 0, 0, 0);
    ConstMatMap<T> dout(out_grad.data().data() + out_grad.offset(b, 0, 0, 0), oc, cols);

    for (int o = 0; o < oc; ++o) {
      T acc{0};
      const T* row = dout.data() + static_cast<std::size_t>(o) * cols;
      for (int j = 0; j < cols; ++j) acc += row[j];
      g.bias[o] += acc;
    }

    if (pointwise) {
      ConstMatMap<T> columns(img, rows, cols);
      weight_grad.noalias() += dout * columns.transpose();
      MatMap<T> dimg(img_grad, rows, cols);
      dimg.noalias() = weights.transpose() * dout;
    } else {
      im2col(img, ic, input.h(), input.w(), k, p.pad, p.stride, p.dilation, oh, ow, col.data());
      ConstMatMap<T> columns(col.data(), rows, cols);
      weight_grad.noalias() += dout * columns.transpose();
      MatMap<T> dcol(col_grad.data(), rows, cols);
      dcol.noalias() = weights.transpose() * dout;
      col2im(col_grad.data(), ic, input.h(), input.w(), k, p.pad, p.stride, p.dilation, oh, ow, img_grad);
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& out_grad) {
  if (input.shape() != out_grad.shape()) {
    throw ContractViolation("relu_backward: shape " + input.shape().str() + " vs " + out_grad.shape().str());
  }
  BasicTensor<T> g(input.shape());
  auto x = input.data();
  auto dy = out_grad.data();
  auto dx = g.data();
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return g;
}

template <typename T>
PoolResult<T> maxpool(const BasicTensor<T>& input, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1 || pad < 0 || pad >= kernel) {
    throw ContractViolation("maxpool: invalid kernel/stride/pad");
  }
  const int oh = pool_output_size(input.h(), kernel, stride, pad);
  const int ow = pool_output_size(input.w(), kernel, stride, pad);
  if (oh < 1 || ow < 1) throw ContractViolation("maxpool: input " + input.shape().str() + " too small");

  PoolResult<T> r{BasicTensor<T>(Shape{input.n(), input.c(), oh, ow}), {}};
  r.argmax.resize(r.output.numel());
  const auto in = input.data();
  auto out = r.output.data();
  std::size_t o = 0;
  for (int b = 0; b < input.n(); ++b) {
    for (int ch = 0; ch < input.c(); ++ch) {
      const std::size_t plane = input.offset(b, ch, 0, 0);
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = oy * stride - pad;
        const int y_lo = std::max(y0, 0);
        const int y_hi = std::min(y0 + kernel, input.h());
        for (int ox = 0; ox < ow; ++ox, ++o) {
          const int x0 = ox * stride - pad;
          const int x_lo = std::max(x0, 0);
          const int x_hi = std::min(x0 + kernel, input.w());
          if (y_lo >= y_hi || x_lo >= x_hi) {
            throw ContractViolation("maxpool: window entirely in padding at output (" + std::to_string(oy) +
                                    "," + std::to_string(ox) + ")");
          }
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          // Raster scan with strict '>' keeps the lowest flat index on ties.
          for (int y = y_lo; y < y_hi; ++y) {
            for (int x = x_lo; x < x_hi; ++x) {
              const std::size_t idx = plane + static_cast<std::size_t>(y) * input.w() + x;
              if (best_idx < 0 || in[idx] > best) {
                best = in[idx];
                best_idx = static_cast<std::int64_t>(idx);
              }
            }
          }
          out[o] = best;
          r.argmax[o] = best_idx;
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape& input_shape, const std::vector<std::int64_t>& argmax,
                                const BasicTensor<T>& out_grad) {
  if (argmax.size() != out_grad.numel()) {
    throw ContractViolation("maxpool_backward: argmax/out_grad size mismatch");
  }
  BasicTensor<T> g(input_shape);
  auto dx = g.data();
  auto dy = out_grad.data();
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[static_cast<std::size_t>(argmax[i])] += dy[i];
  return g;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, bool train_mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractViolation("dropout: rate must be in [0, 1)");
  DropoutResult<T> r{input, {}};
  if (!train_mode || rate == 0.0) return r;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  r.mask.resize(input.numel());
  // Drop decision from the top 53 bits so float and double agree.
  auto out = r.output.data();
  for (std::size_t i = 0; i < r.mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    r.mask[i] = u < rate ? T{0} : scale;
    out[i] *= r.mask[i];
  }
  return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const std::vector<T>& mask, const BasicTensor<T>& out_grad) {
  if (mask.empty()) return out_grad;
  if (mask.size() != out_grad.numel()) throw ContractViolation("dropout_backward: mask size mismatch");
  BasicTensor<T> g = out_grad;
  auto d = g.data();
  for (std::size_t i = 0; i < mask.size(); ++i) d[i] *= mask[i];
  return g;
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

// Corner-aligned source coordinate for each output index.
std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = out > 1 ? static_cast<double>(in - 1) / (out - 1) : 0.0;
  for (int i = 0; i < out; ++i) {
    const double src = i * scale;
    int lo = static_cast<int>(std::floor(src));
    lo = std::clamp(lo, 0, in - 1);
    const int hi = std::min(lo + 1, in - 1);
    taps[i] = Tap{lo, hi, src - lo};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractViolation("bilinear_resize: output size must be >= 1");
  if (input.h() < 1 || input.w() < 1) throw ContractViolation("bilinear_resize: empty input");
  if (out_h == input.h() && out_w == input.w()) return input;
  const auto ty = bilinear_taps(input.h(), out_h);
  const auto tx = bilinear_taps(input.w(), out_w);
  BasicTensor<T> out(Shape{input.n(), input.c(), out_h, out_w});
  const auto in = input.data();
  auto dst = out.data();
  std::size_t o = 0;
  for (int b = 0; b < input.n(); ++b) {
    for (int ch = 0; ch < input.c(); ++ch) {
      const std::size_t plane = input.offset(b, ch, 0, 0);
      for (int y = 0; y < out_h; ++y) {
        const T fy = static_cast<T>(ty[y].frac);
        const T* r0 = in.data() + plane + static_cast<std::size_t>(ty[y].lo) * input.w();
        const T* r1 = in.data() + plane + static_cast<std::size_t>(ty[y].hi) * input.w();
        for (int x = 0; x < out_w; ++x, ++o) {
          const T fx = static_cast<T>(tx[x].frac);
          const T top = r0[tx[x].lo] + (r0[tx[x].hi] - r0[tx[x].lo]) * fx;
          const T bottom = r1[tx[x].lo] + (r1[tx[x].hi] - r1[tx[x].lo]) * fx;
          dst[o] = top + (bottom - top) * fy;
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> bilinear_resize_backward(const Shape& input_shape, const BasicTensor<T>& out_grad) {
  if (out_grad.n() != input_shape.n || out_grad.c() != input_shape.c) {
    throw ContractViolation("bilinear_resize_backward: batch/channel mismatch");
  }
  if (out_grad.h() == input_shape.h && out_grad.w() == input_shape.w) return out_grad;
  const auto ty = bilinear_taps(input_shape.h, out_grad.h());
  const auto tx = bilinear_taps(input_shape.w, out_grad.w());
  BasicTensor<T> g(input_shape);
  auto dx = g.data();
  const auto dy = out_grad.data();
  std::size_t o = 0;
  for (int b = 0; b < input_shape.n; ++b) {
    for (int ch = 0; ch < input_shape.c; ++ch) {
      const std::size_t plane = g.offset(b, ch, 0, 0);
      for (int y = 0; y < out_grad.h(); ++y) {
        const T fy = static_cast<T>(ty[y].frac);
        T* r0 = dx.data() + plane + static_cast<std::size_t>(ty[y].lo) * input_shape.w;
        T* r1 = dx.data() + plane + static_cast<std::size_t>(ty[y].hi) * input_shape.w;
        for (int x = 0; x < out_grad.w(); ++x, ++o) {
          const T fx = static_cast<T>(tx[x].frac);
          const T d = dy[o];
          r0[tx[x].lo] += d * (T{1} - fy) * (T{1} - fx);
          r0[tx[x].hi] += d * (T{1} - fy) * fx;
          r1[tx[x].lo] += d * fy * (T{1} - fx);
          r1[tx[x].hi] += d * fy * fx;
        }
      }
    }
  }
  return g;
}

template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const LabelMap> labels, Reduction reduction) {
  if (logits.c() != 2) throw ContractViolation("softmax_xent: expected 2 channels, got " + logits.shape().str());
  if (static_cast<int>(labels.size()) != logits.n()) {
    throw ContractViolation("softmax_xent: " + std::to_string(labels.size()) + " label maps for batch " +
                            std::to_string(logits.n()));
  }
  XentResult<T> r{0.0, 0, BasicTensor<T>(logits.shape())};
  const auto z = logits.data();
  auto g = r.logit_grad.data();
  const std::size_t plane = static_cast<std::size_t>(logits.h()) * logits.w();
  for (int b = 0; b < logits.n(); ++b) {
    const LabelMap& lab = labels[b];
    if (lab.rows() != logits.h() || lab.cols() != logits.w()) {
      throw ContractViolation("softmax_xent: label map " + std::to_string(lab.rows()) + "x" +
                              std::to_string(lab.cols()) + " vs logits " + logits.shape().str());
    }
    const std::size_t obj = logits.offset(b, 0, 0, 0);
    const std::size_t bg = logits.offset(b, 1, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::uint8_t l = lab.data()[i];
      if (l == kIgnore) continue;
      if (l != kObject && l != kBackground) {
        throw ContractViolation("softmax_xent: label " + std::to_string(l) + " outside {0,1,255}");
      }
      // Channel 0 scores "object", channel 1 "background".
      const double a = static_cast<double>(z[obj + i]);
      const double c = static_cast<double>(z[bg + i]);
      const double m = std::max(a, c);
      const double lse = m + std::log(std::exp(a - m) + std::exp(c - m));
      const double p_obj = std::exp(a - lse);
      const double p_bg = std::exp(c - lse);
      const bool is_obj = l == kObject;
      r.loss += lse - (is_obj ? a : c);
      g[obj + i] = static_cast<T>(p_obj - (is_obj ? 1.0 : 0.0));
      g[bg + i] = static_cast<T>(p_bg - (is_obj ? 0.0 : 1.0));
      ++r.contributing;
    }
  }
  if (reduction == Reduction::kMean && r.contributing > 0) {
    const double inv = 1.0 / static_cast<double>(r.contributing);
    r.loss *= inv;
    for (auto& v : g) v = static_cast<T>(v * inv);
  }
  return r;
}

template <typename T>
BasicTensor<T> softmax_foreground(const BasicTensor<T>& logits) {
  if (logits.c() != 2) throw ContractViolation("softmax_foreground: expected 2 channels");
  BasicTensor<T> out(Shape{logits.n(), 1, logits.h(), logits.w()});
  const std::size_t plane = static_cast<std::size_t>(logits.h()) * logits.w();
  const auto z = logits.data();
  auto p = out.data();
  for (int b = 0; b < logits.n(); ++b) {
    const std::size_t obj = logits.offset(b, 0, 0, 0);
    const std::size_t bg = logits.offset(b, 1, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(z[bg + i]) - static_cast<double>(z[obj + i]);
      p[b * plane + i] = static_cast<T>(1.0 / (1.0 + std::exp(d)));
    }
  }
  return out;
}

template <typename T>
void sgd_update(std::span<T> params, std::span<const T> grads, std::span<T> velocity, const SgdOptions& opt) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ContractViolation("sgd_update: params/grads/velocity length mismatch");
  }
  const T mom = static_cast<T>(opt.momentum);
  const T decay = static_cast<T>(opt.weight_decay);
  const T lr = static_cast<T>(opt.lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mom * velocity[i] + grads[i] + decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

GradCheckResult grad_check(const std::function<double(const TensorD&)>& f, const TensorD& x,
                           std::span<const double> analytic, const GradCheckOptions& opt) {
  if (analytic.size() != x.numel()) throw ContractViolation("grad_check: analytic gradient length mismatch");
  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opt.accept) {
    std::erase_if(coords, [&](std::size_t i) { return !opt.accept(i); });
  }
  if (opt.samples > 0 && static_cast<std::size_t>(opt.samples) < coords.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(opt.samples));
    std::sort(coords.begin(), coords.end());
  }
  GradCheckResult r;
  TensorD probe = x;
  for (std::size_t i : coords) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + opt.epsilon;
    const double up = f(probe);
    probe.data()[i] = orig - opt.epsilon;
    const double down = f(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * opt.epsilon);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), opt.abs_floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(numeric - analytic[i]) / denom);
    ++r.checked;
  }
  return r;
}

#define PIXOBJ_INSTANTIATE(T)                                                                                   \
  template class BasicTensor<T>;                                                                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const ConvParams<T>&);                                 \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template PoolResult<T> maxpool(const BasicTensor<T>&, int, int, int);                                        \
  template BasicTensor<T> maxpool_backward(const Shape&, const std::vector<std::int64_t>&,                     \
                                           const BasicTensor<T>&);                                             \
  template DropoutResult<T> dropout(const BasicTensor<T>&, double, bool, std::mt19937_64&);                    \
  template BasicTensor<T> dropout_backward(const std::vector<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> bilinear_resize(const BasicTensor<T>&, int, int);                                    \
  template BasicTensor<T> bilinear_resize_backward(const Shape&, const BasicTensor<T>&);                       \
  template XentResult<T> softmax_xent(const BasicTensor<T>&, std::span<const LabelMap>, Reduction);            \
  template BasicTensor<T> softmax_foreground(const BasicTensor<T>&);                                           \
  template void sgd_update(std::span<T>, std::span<const T>, std::span<T>, const SgdOptions&);

PIXOBJ_INSTANTIATE(float)
PIXOBJ_INSTANTIATE(double)

#undef PIXOBJ_INSTANTIATE

}  // namespace pixobj
