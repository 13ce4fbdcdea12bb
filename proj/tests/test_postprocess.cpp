#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <random>
#include <set>

#include "pixobj/errors.hpp"
#include "oracles.hpp"
#include "pixobj/postprocess.hpp"

using namespace pixobj;
using pixobj::testing::random_mask;
using pixobj::testing::union_find_roots;

namespace {

BinaryMask blob(BinaryMask m, int r0, int c0, int h, int w) {
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) m(r, c) = 1;
  return m;
}

}  // namespace

TEST(Threshold, TieIsBackground) {
  const auto hi = threshold_map(ObjectnessMap(3, 3, 0.9f));
  EXPECT_EQ(hi.count(), 9);
  const auto tie = threshold_map(ObjectnessMap(3, 3, 0.5f));
  EXPECT_EQ(tie.count(), 0);
  ObjectnessMap one(4, 5, 0.1f);
  one(2, 3) = 0.6f;
  const auto m = threshold_map(one);
  EXPECT_EQ(m.count(), 1);
  EXPECT_TRUE(m.test(2, 3));
}

TEST(Components, EmptyMaskHasNone) {
  EXPECT_EQ(connected_components(BinaryMask(5, 5)).count(), 0);
}

TEST(Components, DiagonalNeighbours) {
  BinaryMask m(2, 2);
  m(0, 0) = 1;
  m(1, 1) = 1;
  EXPECT_EQ(connected_components(m, Connectivity::kFour).count(), 2);
  EXPECT_EQ(connected_components(m, Connectivity::kEight).count(), 1);
  EXPECT_EQ(connected_components(m).count(), 1);
}

TEST(Components, RasterOrderNumbering) {
  BinaryMask m(3, 5);
  m(0, 4) = 1;
  m(2, 0) = 1;
  m(1, 2) = 1;
  const auto cc = connected_components(m, Connectivity::kFour);
  EXPECT_EQ(cc.labels(0, 4), 1);
  EXPECT_EQ(cc.labels(1, 2), 2);
  EXPECT_EQ(cc.labels(2, 0), 3);
}

class ComponentsOracle : public ::testing::TestWithParam<Connectivity> {};

// The labelling must induce exactly the partition the oracle finds, with
// areas, a partition of the mask, and raster-order numbering.
TEST_P(ComponentsOracle, MatchesUnionFindOn500RandomMasks) {
  const Connectivity conn = GetParam();
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const auto m = random_mask(16, 16, 0.2 + 0.6 * (trial % 7) / 6.0, rng);
    const auto cc = connected_components(m, conn);
    const auto roots = union_find_roots(m, conn);
    std::map<int, int> root_to_label;
    std::map<int, int> label_to_root;
    std::vector<std::int64_t> areas(cc.count(), 0);
    int next_expected = 1;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const int lab = cc.labels.data()[i];
      if (!m.data()[i]) {
        ASSERT_EQ(lab, 0);
        continue;
      }
      ASSERT_GE(lab, 1);
      ASSERT_LE(lab, cc.count());
      ++areas[lab - 1];
      const auto [it, fresh] = root_to_label.emplace(roots[i], lab);
      ASSERT_EQ(it->second, lab) << "trial " << trial;
      const auto [jt, fresh2] = label_to_root.emplace(lab, roots[i]);
      ASSERT_EQ(jt->second, roots[i]) << "trial " << trial;
      if (fresh) {
        ASSERT_EQ(lab, next_expected++);
      }
    }
    ASSERT_EQ(static_cast<int>(root_to_label.size()), cc.count());
    ASSERT_EQ(areas, cc.areas);
  }
}

INSTANTIATE_TEST_SUITE_P(BothConnectivities, ComponentsOracle,
                         ::testing::Values(Connectivity::kFour, Connectivity::kEight));

TEST(LargestForeground, SevenPercentBlobKept) {
  BinaryMask m(100, 100);
  m = blob(m, 0, 0, 10, 70);   // 700 px
  m = blob(m, 50, 0, 10, 50);  // 500 px
  const auto r = largest_foreground(m);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->count(), 700);
  EXPECT_TRUE(r->test(0, 0));
  EXPECT_FALSE(r->test(50, 0));
}

TEST(LargestForeground, FivePercentRejected) {
  BinaryMask m(100, 100);
  m = blob(m, 0, 0, 10, 50);
  m = blob(m, 50, 50, 5, 5);
  EXPECT_FALSE(largest_foreground(m).has_value());
}

TEST(LargestForeground, ExactlySixPercentRejected) {
  BinaryMask m(100, 100);
  m = blob(m, 0, 0, 10, 60);
  EXPECT_FALSE(largest_foreground(m).has_value());
  m = blob(m, 0, 60, 1, 1);
  EXPECT_TRUE(largest_foreground(m).has_value());
}

TEST(LargestForeground, FullFrame) {
  const BinaryMask m(8, 9, 1);
  const auto r = largest_foreground(m);
  ASSERT_TRUE(r.has_value());
  EXPECT_TRUE(*r == m);
}

TEST(LargestForeground, TieGoesToFirstRegion) {
  BinaryMask m(10, 10);
  m = blob(m, 0, 6, 3, 3);
  m = blob(m, 6, 0, 3, 3);
  const auto r = largest_foreground(m, 0.05);
  ASSERT_TRUE(r.has_value());
  EXPECT_TRUE(r->test(0, 6));
  EXPECT_FALSE(r->test(6, 0));
}

TEST(LargestForeground, SubsetAndConnected) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto m = random_mask(20, 20, 0.45, rng);
    const auto r = largest_foreground(m, 0.0);
    ASSERT_TRUE(r.has_value());
    for (std::size_t i = 0; i < m.size(); ++i)
      if (r->data()[i]) {
        EXPECT_TRUE(m.data()[i]);
      }
    EXPECT_EQ(connected_components(*r).count(), 1);
    const auto cc = connected_components(m);
    EXPECT_EQ(r->count(), *std::max_element(cc.areas.begin(), cc.areas.end()));
  }
}

TEST(TightBox, Examples) {
  BinaryMask m(10, 12);
  EXPECT_FALSE(tight_bbox(m).has_value());
  m(7, 3) = 1;  // row 7, column 3
  EXPECT_EQ(*tight_bbox(m), (BBox{3, 7, 3, 7}));
  BinaryMask two(10, 12);
  two(0, 0) = 1;
  two(4, 9) = 1;
  EXPECT_EQ(*tight_bbox(two), (BBox{0, 0, 9, 4}));
}

TEST(TightBox, ContainsAllAndIsMinimal) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto m = random_mask(9, 13, 0.08, rng);
    const auto b = tight_bbox(m);
    if (m.count() == 0) {
      EXPECT_FALSE(b.has_value());
      continue;
    }
    ASSERT_TRUE(b.has_value());
    bool touch[4] = {false, false, false, false};
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) {
        if (!m.test(r, c)) continue;
        EXPECT_TRUE(c >= b->x_min && c <= b->x_max && r >= b->y_min && r <= b->y_max);
        touch[0] |= c == b->x_min;
        touch[1] |= c == b->x_max;
        touch[2] |= r == b->y_min;
        touch[3] |= r == b->y_max;
      }
    for (bool x : touch) EXPECT_TRUE(x);
  }
}

TEST(Rasterize, FillsInclusiveBox) {
  const auto m = rasterize(BBox{1, 2, 3, 4}, 6, 6);
  EXPECT_EQ(m.count(), 9);
  EXPECT_TRUE(m.test(2, 1));
  EXPECT_TRUE(m.test(4, 3));
  EXPECT_FALSE(m.test(1, 1));
}
