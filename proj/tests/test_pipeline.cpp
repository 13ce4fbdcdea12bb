#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pixobj/errors.hpp"
#include "pixobj/metrics.hpp"
#include "pixobj/pipeline.hpp"

using namespace pixobj;

namespace {

Network constant_segmenter(float object_bias) {
  Network net(NetworkConfig::toy());
  net.params().rbegin()->second.bias = {object_bias, 0.0f};
  return net;
}

}  // namespace

TEST(Objectness, MapMatchesImageDims) {
  const Network net = Network::random(NetworkConfig::toy(), 1);
  const RgbImage img(23, 37, 0.3f);
  for (int input : {0, 32}) {
    SegmentOptions opt;
    opt.input_size = input;
    const auto m = objectness(net, img, opt);
    EXPECT_EQ(m.rows(), 23);
    EXPECT_EQ(m.cols(), 37);
    for (float v : m.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Objectness, ConstantLogitsGiveSigmoidOfBias) {
  const auto m = objectness(constant_segmenter(1.0f), RgbImage(10, 10, 0.5f));
  for (float v : m.data()) EXPECT_NEAR(v, 1.0f / (1.0f + std::exp(-1.0f)), 1e-6);
}

TEST(Segment, ThresholdAndLargestRegion) {
  const RgbImage img(12, 14, 0.2f);
  EXPECT_EQ(segment(constant_segmenter(0.0f), img).count(), 0);
  EXPECT_EQ(segment(constant_segmenter(2.0f), img).count(), 12 * 14);
  SegmentOptions opt;
  opt.largest_only = true;
  EXPECT_EQ(segment(constant_segmenter(2.0f), img, opt).count(), 12 * 14);
  EXPECT_EQ(segment(constant_segmenter(-2.0f), img, opt).count(), 0);
}

TEST(ColorThreshold, SeparatesObjectFromUniformBorder) {
  RgbImage img(10, 10, 0.1f);
  BinaryMask expect(10, 10);
  for (int r = 3; r < 7; ++r)
    for (int c = 2; c < 6; ++c) {
      img.set_pixel(r, c, {0.9f, 0.1f, 0.1f});
      expect(r, c) = 1;
    }
  EXPECT_TRUE(color_threshold_segment(img) == expect);
  // A difference of 0.2 in one channel is within tau = 0.25.
  img.set_pixel(0, 0, {0.3f, 0.1f, 0.1f});
  EXPECT_TRUE(color_threshold_segment(img) == expect);
  EXPECT_EQ(color_threshold_segment(img, 0.1).count(), expect.count() + 1);
}

TEST(ColorThreshold, BorderMedianIgnoresMinorityColors) {
  RgbImage img(9, 9, 0.0f);
  img.set_pixel(0, 4, {1, 1, 1});  // one bright border pixel
  img.set_pixel(4, 4, {1, 1, 1});
  const auto m = color_threshold_segment(img);
  EXPECT_TRUE(m.test(4, 4));
  EXPECT_TRUE(m.test(0, 4));
  EXPECT_EQ(m.count(), 2);
}

TEST(AllForeground, EveryPixel) {
  const auto m = all_foreground(3, 4);
  EXPECT_EQ(m.count(), 12);
}

TEST(JaccardScores, OrderAndThreads) {
  SyntheticSpec spec;
  spec.count = 6;
  spec.size = 24;
  const auto data = generate_synthetic_dataset(spec);
  const Network all = constant_segmenter(3.0f);
  const auto one = jaccard_scores(all, data);
  const auto many = jaccard_scores(all, data, {}, 3);
  ASSERT_EQ(one.size(), 6u);
  EXPECT_EQ(one, many);
  for (std::size_t i = 0; i < data.size(); ++i)
    EXPECT_DOUBLE_EQ(one[i], jaccard(all_foreground(24, 24), data[i].label));
}

TEST(Mean, Basic) {
  const std::vector<double> v{1.0, 2.0, 4.5};
  EXPECT_DOUBLE_EQ(mean(v), 2.5);
  EXPECT_THROW(mean(std::vector<double>{}), ContractViolation);
}
