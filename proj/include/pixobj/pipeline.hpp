#pragma once

#include <array>
#include <span>
#include <vector>

#include "pixobj/grid.hpp"
#include "pixobj/image.hpp"
#include "pixobj/network.hpp"
#include "pixobj/training.hpp"

namespace pixobj {

struct SegmentOptions {
  std::array<float, 3> means = kDefaultMeans;
  // Square size the image is resized to before the forward pass; the map is
  // resized back afterwards. 0 runs at native resolution.
  int input_size = 0;
  // Keep only the largest region that passes the area rule (empty mask if
  // none does). Off by default: plain thresholded objectness.
  bool largest_only = false;
  double min_area_frac = 0.06;
};

ObjectnessMap objectness(const Network& net, const RgbImage& image, const SegmentOptions& opt = {});
BinaryMask segment(const Network& net, const RgbImage& image, const SegmentOptions& opt = {});

// Marks a pixel foreground when its RGB distance to the per-channel median
// of the border pixels exceeds `tau`.
BinaryMask color_threshold_segment(const RgbImage& image, double tau = 0.25);

// Every pixel foreground.
BinaryMask all_foreground(int rows, int cols);

// Per-image Jaccard of `net` on `samples` (ignore labels excluded). Images
// are processed by up to `threads` workers; results keep dataset order.
std::vector<double> jaccard_scores(const Network& net, std::span<const LabeledSample> samples,
                                   const SegmentOptions& opt = {}, int threads = 1);

double mean(std::span<const double> values);

}  // namespace pixobj
