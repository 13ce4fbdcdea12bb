#pragma once

// Finite-difference checks shared by the unit tests and the acceptance run.
// Each function builds one random instance from `seed` and returns the
// largest relative error over every gradient it produces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "pixobj/network.hpp"
#include "pixobj/rng.hpp"
#include "pixobj/tensor.hpp"

namespace pixobj::testing {

inline TensorD random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  TensorD t(s);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

inline double dot(const TensorD& a, const TensorD& b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

// Probe <r, op(x)>: its gradient w.r.t. x is backward(r).
inline GradCheckOptions all_coords(double eps = 1e-6) {
  GradCheckOptions o;
  o.epsilon = eps;
  o.samples = 0;
  return o;
}

inline double conv_grad_error(int dilation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int k = 3;
  const int extent = (k - 1) * dilation + 1;
  const int side = dilation >= 12 ? 3 + (seed % 3) : extent + 1 + static_cast<int>(seed % 3);
  const int pad = dilation;  // size-preserving 3x3
  const TensorD x = random_tensor({1, 2, side, side}, rng);
  ConvParams<double> p;
  p.weights = random_tensor({3, 2, k, k}, rng, 0.5);
  p.bias = {0.1, -0.2, 0.3};
  p.pad = pad;
  p.dilation = dilation;
  const TensorD r = random_tensor(conv2d(x, p).shape(), rng);
  const auto g = conv2d_backward(x, p, r);

  double worst = 0.0;
  worst = std::max(worst, grad_check([&](const TensorD& xi) { return dot(r, conv2d(xi, p)); }, x,
                                     g.input.data(), all_coords())
                              .max_rel_error);
  worst = std::max(worst, grad_check(
                              [&](const TensorD& w) {
                                auto q = p;
                                q.weights = w;
                                return dot(r, conv2d(x, q));
                              },
                              p.weights, g.weights.data(), all_coords())
                              .max_rel_error);
  TensorD b({1, 1, 1, 3}, p.bias);
  worst = std::max(worst, grad_check(
                              [&](const TensorD& bi) {
                                auto q = p;
                                q.bias.assign(bi.data().begin(), bi.data().end());
                                return dot(r, conv2d(x, q));
                              },
                              b, g.bias, all_coords())
                              .max_rel_error);
  return worst;
}

// Distinct, well-separated values so no window max changes under +-eps.
inline TensorD separated_tensor(Shape s, std::mt19937_64& rng) {
  TensorD t(s);
  std::vector<double> v(t.numel());
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (std::size_t i = 0; i < v.size(); ++i) t.data()[i] = 0.1 * v[i] - 1.0;
  return t;
}

inline double pool_grad_error(int stride, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int side = 5 + static_cast<int>(seed % 4);
  const TensorD x = separated_tensor({1, 2, side, side}, rng);
  const auto fwd = maxpool(x, 3, stride, 1);
  const TensorD r = random_tensor(fwd.output.shape(), rng);
  const TensorD g = maxpool_backward(x.shape(), fwd.argmax, r);
  return grad_check([&](const TensorD& xi) { return dot(r, maxpool(xi, 3, stride, 1).output); }, x, g.data(),
                    all_coords())
      .max_rel_error;
}

inline double relu_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const TensorD x = random_tensor({1, 3, 4, 5}, rng);
  const TensorD r = random_tensor(x.shape(), rng);
  const TensorD g = relu_backward(x, r);
  auto opt = all_coords();
  opt.accept = [&](std::size_t i) { return std::abs(x.data()[i]) > 10 * opt.epsilon; };
  return grad_check([&](const TensorD& xi) { return dot(r, relu(xi)); }, x, g.data(), opt).max_rel_error;
}

inline double bilinear_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int h = 2 + static_cast<int>(seed % 4);
  const int w = 3 + static_cast<int>(seed % 3);
  const int oh = 1 + static_cast<int>((seed / 3) % 9);
  const int ow = 2 + static_cast<int>((seed / 5) % 9);
  const TensorD x = random_tensor({1, 2, h, w}, rng);
  const TensorD r = random_tensor({1, 2, oh, ow}, rng);
  const TensorD g = bilinear_resize_backward(x.shape(), r);
  return grad_check([&](const TensorD& xi) { return dot(r, bilinear_resize(xi, oh, ow)); }, x, g.data(),
                    all_coords())
      .max_rel_error;
}

inline std::vector<LabelMap> random_labels(int n, int h, int w, std::mt19937_64& rng) {
  std::vector<LabelMap> labels;
  for (int i = 0; i < n; ++i) {
    LabelMap l(h, w);
    for (auto& v : l.data()) {
      const auto u = rng() % 5;
      v = u < 2 ? kBackground : (u < 4 ? kObject : kIgnore);
    }
    labels.push_back(std::move(l));
  }
  return labels;
}

inline double xent_grad_error(std::uint64_t seed, Reduction reduction = Reduction::kMean) {
  std::mt19937_64 rng(seed);
  const TensorD x = random_tensor({2, 2, 3, 4}, rng, 2.0);
  const auto labels = random_labels(2, 3, 4, rng);
  const auto res = softmax_xent(x, labels, reduction);
  return grad_check([&](const TensorD& xi) { return softmax_xent(xi, labels, reduction).loss; }, x,
                    res.logit_grad.data(), all_coords())
      .max_rel_error;
}

// Whole toy network, train mode (fixed dropout masks), mean cross-entropy.
// All input coordinates and a sample of every parameter tensor are checked.
inline double network_grad_error(std::uint64_t seed) {
  const NetworkD net = Network::random(NetworkConfig::toy(), seed).cast<double>();
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  const int side = 8 + static_cast<int>(seed % 3) * 2;
  const TensorD x = random_tensor({1, 3, side, side}, rng);
  const Shape out = net.config().output_shape(x.shape());
  const auto labels = random_labels(1, out.h, out.w, rng);
  const std::uint64_t drop_seed = derive_seed(seed, "dropout");

  auto loss_of = [&](const NetworkD& n, const TensorD& in) {
    return softmax_xent(n.forward_trace(in, true, drop_seed).output, labels, Reduction::kMean).loss;
  };
  const auto trace = net.forward_trace(x, true, drop_seed);
  const auto xent = softmax_xent(trace.output, labels, Reduction::kMean);
  TensorD input_grad;
  const auto grads = net.backward(trace, xent.logit_grad, &input_grad);

  GradCheckOptions opt;
  opt.epsilon = 1e-5;
  opt.samples = 24;
  opt.seed = seed;
  double worst = grad_check([&](const TensorD& xi) { return loss_of(net, xi); }, x, input_grad.data(), opt)
                     .max_rel_error;
  for (const auto& [idx, g] : grads) {
    worst = std::max(worst, grad_check(
                                [&, idx = idx](const TensorD& w) {
                                  NetworkD n2 = net;
                                  n2.params().at(idx).weights = w;
                                  return loss_of(n2, x);
                                },
                                net.params().at(idx).weights, g.weights.data(), opt)
                                .max_rel_error);
    TensorD b({1, 1, 1, static_cast<int>(g.bias.size())}, net.params().at(idx).bias);
    worst = std::max(worst, grad_check(
                                [&, idx = idx](const TensorD& bi) {
                                  NetworkD n2 = net;
                                  n2.params().at(idx).bias.assign(bi.data().begin(), bi.data().end());
                                  return loss_of(n2, x);
                                },
                                b, g.bias, opt)
                                .max_rel_error);
  }
  return worst;
}

}  // namespace pixobj::testing
