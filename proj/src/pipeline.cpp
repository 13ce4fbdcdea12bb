#include "pixobj/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "pixobj/errors.hpp"
#include "pixobj/metrics.hpp"
#include "pixobj/postprocess.hpp"

namespace pixobj {

ObjectnessMap objectness(const Network& net, const RgbImage& image, const SegmentOptions& opt) {
  if (opt.input_size < 0) throw ContractViolation("objectness: negative input size");
  if (opt.input_size == 0 || (opt.input_size == image.rows() && opt.input_size == image.cols())) {
    return predict_objectness(net, image_to_tensor(image, opt.means));
  }
  const ObjectnessMap small =
      predict_objectness(net, image_to_tensor(resize_bilinear(image, opt.input_size, opt.input_size), opt.means));
  Tensor t(Shape{1, 1, small.rows(), small.cols()});
  std::copy(small.data().begin(), small.data().end(), t.data().begin());
  const Tensor big = bilinear_resize(t, image.rows(), image.cols());
  ObjectnessMap out(image.rows(), image.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::clamp(big.data()[i], 0.0f, 1.0f);
  return out;
}

BinaryMask segment(const Network& net, const RgbImage& image, const SegmentOptions& opt) {
  const BinaryMask mask = threshold_map(objectness(net, image, opt));
  if (!opt.largest_only) return mask;
  auto region = largest_foreground(mask, opt.min_area_frac);
  return region ? std::move(*region) : BinaryMask(mask.rows(), mask.cols(), 0);
}

BinaryMask color_threshold_segment(const RgbImage& image, double tau) {
  if (image.empty()) throw ContractViolation("color_threshold_segment: empty image");
  const int n = image.rows();
  const int m = image.cols();
  std::array<std::vector<float>, 3> border;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < m; ++c) {
      if (r != 0 && r != n - 1 && c != 0 && c != m - 1) continue;
      for (int ch = 0; ch < 3; ++ch) border[static_cast<std::size_t>(ch)].push_back(image(ch, r, c));
    }
  }
  std::array<float, 3> med{};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    auto& v = border[ch];
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    med[ch] = v[v.size() / 2];
  }
  BinaryMask out(n, m, 0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < m; ++c) {
      double d2 = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double d = image(ch, r, c) - med[static_cast<std::size_t>(ch)];
        d2 += d * d;
      }
      out(r, c) = std::sqrt(d2) > tau ? 1 : 0;
    }
  }
  return out;
}

BinaryMask all_foreground(int rows, int cols) { return BinaryMask(rows, cols, 1); }

std::vector<double> jaccard_scores(const Network& net, std::span<const LabeledSample> samples,
                                   const SegmentOptions& opt, int threads) {
  std::vector<double> out(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  auto work = [&](std::size_t i) noexcept {
    try {
      out[i] = jaccard(segment(net, samples[i].image, opt), samples[i].label);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < samples.size(); i += workers) work(i);
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("mean: no values");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace pixobj
