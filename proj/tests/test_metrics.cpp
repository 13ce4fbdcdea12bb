#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pixobj/errors.hpp"
#include "pixobj/metrics.hpp"
#include "pixobj/training.hpp"

using namespace pixobj;

namespace {

BinaryMask mask_of(int rows, int cols, std::initializer_list<std::pair<int, int>> on) {
  BinaryMask m(rows, cols);
  for (auto [r, c] : on) m(r, c) = 1;
  return m;
}

RgbImage two_color(const BinaryMask& fg, std::array<float, 3> in, std::array<float, 3> out) {
  RgbImage img(fg.rows(), fg.cols());
  for (int r = 0; r < fg.rows(); ++r)
    for (int c = 0; c < fg.cols(); ++c) img.set_pixel(r, c, fg.test(r, c) ? in : out);
  return img;
}

// Cosine distance between the two 30-bin histograms, computed from bin
// indices directly.
double separability_oracle(const RgbImage& img, const BinaryMask& m) {
  std::vector<double> a(30, 0.0), b(30, 0.0);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const int bin = std::min(9, static_cast<int>(std::floor(img(ch, r, c) * 10.0f)));
        (m.test(r, c) ? a : b)[ch * 10 + bin] += 1.0;
      }
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < 30; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return 1.0 - dot / std::sqrt(na * nb);
}

}  // namespace

TEST(Jaccard, Examples) {
  const auto a = mask_of(2, 2, {{0, 0}, {0, 1}});
  const auto b = mask_of(2, 2, {{0, 1}, {1, 1}});
  EXPECT_NEAR(jaccard(a, b), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(jaccard(a, a), 1.0, 1e-12);
  EXPECT_NEAR(jaccard(a, mask_of(2, 2, {{1, 0}, {1, 1}})), 0.0, 1e-12);
}

TEST(Jaccard, EmptyConventions) {
  EXPECT_EQ(jaccard(BinaryMask(3, 3), BinaryMask(3, 3)), 1.0);
  EXPECT_EQ(jaccard(BinaryMask(3, 3), mask_of(3, 3, {{1, 1}})), 0.0);
  EXPECT_EQ(jaccard(mask_of(3, 3, {{1, 1}}), BinaryMask(3, 3)), 0.0);
}

TEST(Jaccard, DimMismatchThrows) {
  EXPECT_THROW(jaccard(BinaryMask(2, 3), BinaryMask(3, 2)), ContractViolation);
}

TEST(Jaccard, IgnorePixelsExcluded) {
  LabelMap gt(1, 4, kBackground);
  gt(0, 0) = kObject;
  gt(0, 1) = kIgnore;
  const auto pred = mask_of(1, 4, {{0, 0}, {0, 1}, {0, 2}});
  EXPECT_NEAR(jaccard(pred, gt), 0.5, 1e-12);
}

TEST(Jaccard, SymmetricBoundedAndOneIffEqual) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution on(0.3);
  for (int t = 0; t < 300; ++t) {
    BinaryMask a(5, 6), b(5, 6);
    for (auto& v : a.data()) v = on(rng);
    for (auto& v : b.data()) v = on(rng);
    if (t % 10 == 0) b = a;
    const double j = jaccard(a, b);
    EXPECT_EQ(j, jaccard(b, a));
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, 1.0);
    EXPECT_EQ(j == 1.0, a == b);
  }
}

TEST(BoxIou, HalfOverlapIsOneThirdAndFailsCorloc) {
  const BBox gt{0, 0, 9, 9};
  const BBox pred{5, 0, 14, 9};
  EXPECT_NEAR(box_iou(pred, gt), 1.0 / 3.0, 1e-12);
  const std::vector<BBox> gts{gt};
  EXPECT_FALSE(corloc(pred, gts));
  EXPECT_TRUE(corloc(gt, gts));
}

TEST(BoxIou, AnyGroundTruthMatches) {
  const std::vector<BBox> gts{{0, 0, 2, 2}, {10, 10, 20, 20}, {30, 0, 40, 5}};
  EXPECT_TRUE(corloc(BBox{10, 10, 20, 20}, gts));
  EXPECT_FALSE(corloc(BBox{50, 50, 60, 60}, gts));
  EXPECT_FALSE(corloc(BBox{0, 0, 1, 1}, std::vector<BBox>{}));
}

TEST(BoxIou, ThresholdIsStrict) {
  // 10x10 vs 10x5 inside it: IoU exactly 0.5.
  const std::vector<BBox> gts{{0, 0, 9, 9}};
  EXPECT_DOUBLE_EQ(box_iou(BBox{0, 0, 9, 4}, gts[0]), 0.5);
  EXPECT_FALSE(corloc(BBox{0, 0, 9, 4}, gts));
}

TEST(BoxIou, EqualsRasterizedJaccard) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coord(0, 19);
  for (int t = 0; t < 500; ++t) {
    auto box = [&] {
      int x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
      return BBox{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
    };
    const BBox a = box(), b = box();
    EXPECT_NEAR(box_iou(a, b), jaccard(rasterize(a, 20, 20), rasterize(b, 20, 20)), 1e-12);
  }
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(average_precision({true, true, true}), 1.0, 1e-12);
  EXPECT_NEAR(average_precision({false, true}), 0.5, 1e-12);
  EXPECT_NEAR(average_precision({true, false, true}), 5.0 / 6.0, 1e-12);
  EXPECT_THROW(average_precision({false, false}), ContractViolation);
  EXPECT_THROW(average_precision({}), ContractViolation);
}

TEST(AveragePrecision, TrailingIrrelevantItemsDoNotMatter) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution rel(0.3);
  for (int t = 0; t < 200; ++t) {
    std::vector<bool> r(12);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rel(rng);
    r[0] = true;
    auto longer = r;
    longer.insert(longer.end(), 1 + t % 5, false);
    EXPECT_DOUBLE_EQ(average_precision(r), average_precision(longer));
  }
}

TEST(MeanAp, AveragesQueries) {
  const std::vector<double> aps{1.0, 0.5, 5.0 / 6.0};
  EXPECT_NEAR(mean_ap(aps), (1.0 + 0.5 + 5.0 / 6.0) / 3.0, 1e-12);
  EXPECT_THROW(mean_ap(std::vector<double>{}), ContractViolation);
}

TEST(Separability, IdenticalColorsScoreZero) {
  const auto m = mask_of(4, 4, {{1, 1}, {1, 2}});
  EXPECT_NEAR(separability(two_color(m, {0.3f, 0.3f, 0.3f}, {0.3f, 0.3f, 0.3f}), m), 0.0, 1e-12);
}

TEST(Separability, RedOnBlueSharesTheGreenBin) {
  // Per-channel histograms put all three colors' green values in bin 0, so
  // pure red against pure blue is not orthogonal: cosine 1/3.
  const auto m = mask_of(4, 4, {{1, 1}, {1, 2}, {2, 1}});
  const auto img = two_color(m, {1, 0, 0}, {0, 0, 1});
  EXPECT_NEAR(separability(img, m), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(separability(img, m), separability_oracle(img, m), 1e-12);
}

TEST(Separability, WhiteOnBlackIsOrthogonal) {
  const auto m = mask_of(4, 4, {{0, 0}, {3, 3}});
  EXPECT_NEAR(separability(two_color(m, {1, 1, 1}, {0, 0, 0}), m), 1.0, 1e-12);
}

TEST(Separability, DegenerateMaskThrows) {
  const RgbImage img(3, 3, 0.2f);
  EXPECT_THROW(separability(img, BinaryMask(3, 3)), ContractViolation);
  EXPECT_THROW(separability(img, BinaryMask(3, 3, 1)), ContractViolation);
}

TEST(Separability, MatchesOracleOnRandomImages) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < 100; ++t) {
    RgbImage img(6, 7);
    for (auto& v : img.storage()) v = u(rng);
    BinaryMask m(6, 7);
    for (auto& v : m.data()) v = u(rng) < 0.4f;
    m(0, 0) = 1;
    m(5, 6) = 0;
    EXPECT_NEAR(separability(img, m), separability_oracle(img, m), 1e-12);
  }
}

TEST(Separability, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < 50; ++t) {
    RgbImage img(5, 5);
    for (auto& v : img.storage()) v = u(rng);
    BinaryMask m(5, 5);
    for (auto& v : m.data()) v = u(rng) < 0.5f;
    m(0, 0) = 1;
    m(4, 4) = 0;
    BinaryMask inv(5, 5);
    for (std::size_t i = 0; i < m.size(); ++i) inv.data()[i] = !m.data()[i];
    EXPECT_NEAR(separability(img, m), separability(img, inv), 1e-12);
    const RgbImage big = [&] {
      RgbImage b(10, 10);
      for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) b.set_pixel(r, c, img.pixel(r / 2, c / 2));
      return b;
    }();
    BinaryMask bigm(10, 10);
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 10; ++c) bigm(r, c) = m(r / 2, c / 2);
    EXPECT_NEAR(separability(img, m), separability(big, bigm), 1e-12);
  }
}

// Same seeds, so geometry and palettes are shared and only the object color
// moves from a background color towards its own color.
TEST(Separability, GrowsWithColorSeparation) {
  double mean[3] = {0, 0, 0};
  const double rates[3] = {0.0, 0.5, 1.0};
  for (int seed = 1; seed <= 100; ++seed) {
    for (int k = 0; k < 3; ++k) {
      SyntheticSpec spec;
      spec.count = 1;
      spec.seed = static_cast<std::uint64_t>(seed);
      spec.min_shapes = spec.max_shapes = 1;
      spec.separation_min = spec.separation_max = rates[k];
      const auto s = generate_synthetic_dataset(spec).front();
      BinaryMask m(s.label.rows(), s.label.cols());
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = s.label.data()[i] == kObject;
      mean[k] += separability(s.image, m) / 100.0;
    }
  }
  EXPECT_LT(mean[0], mean[1]);
  EXPECT_LT(mean[1], mean[2]);
}

TEST(SeparabilityReport, IdenticalMethodGivesZeroGain) {
  std::vector<SeparabilityEntry> e;
  for (int i = 0; i < 10; ++i)
    e.push_back({"im" + std::to_string(i), i / 10.0 + 0.05, {{"ours", 0.1 * i}, {"copy", 0.1 * i}}});
  const auto rep = separability_report(e, "ours");
  ASSERT_EQ(rep.buckets.size(), 10u);
  for (const auto& b : rep.buckets) {
    EXPECT_EQ(b.min_gain, 0.0);
    EXPECT_EQ(b.max_gain, 0.0);
  }
}

TEST(SeparabilityReport, HandComputedBuckets) {
  const std::vector<SeparabilityEntry> e{
      {"a", 0.12, {{"ours", 0.8}, {"base", 0.3}}},
      {"b", 0.17, {{"ours", 0.6}, {"base", 0.5}}},
      {"c", 0.91, {{"ours", 0.9}, {"base", 0.95}}},
      {"d", std::nullopt, {{"ours", 0.0}, {"base", 0.0}}},
  };
  const auto rep = separability_report(e, "ours", 0.25);
  ASSERT_EQ(rep.buckets.size(), 2u);
  EXPECT_EQ(rep.skipped, 1);
  EXPECT_NEAR(rep.buckets[0].lo, 0.0, 1e-12);
  EXPECT_EQ(rep.buckets[0].count, 2);
  EXPECT_NEAR(rep.buckets[0].reference_mean, 0.7, 1e-12);
  EXPECT_NEAR(rep.buckets[0].baseline_means.at("base"), 0.4, 1e-12);
  EXPECT_NEAR(rep.buckets[0].min_gain, 0.3, 1e-12);
  EXPECT_NEAR(rep.buckets[1].lo, 0.75, 1e-12);
  EXPECT_NEAR(rep.buckets[1].min_gain, -0.05, 1e-12);
  // Two empty buckets and the skipped image.
  EXPECT_EQ(rep.notes.size(), 3u);
}

TEST(SeparabilityReport, PopulationsPartitionTheSet) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SeparabilityEntry> e;
  int skipped = 0;
  for (int i = 0; i < 137; ++i) {
    std::optional<double> s = u(rng);
    if (i % 17 == 0) s.reset(), ++skipped;
    if (i == 5) s = 1.0;
    e.push_back({std::to_string(i), s, {{"ours", u(rng)}, {"base", u(rng)}}});
  }
  const auto rep = separability_report(e, "ours");
  int total = 0;
  for (const auto& b : rep.buckets) total += b.count;
  EXPECT_EQ(total, 137 - skipped);
  EXPECT_EQ(rep.skipped, skipped);
}

TEST(Report, TextRoundTrip) {
  EvalReport r;
  r.mode = "seg";
  r.records = {{"a", 0.25, "x"}, {"b", 1.0 / 3.0, ""}};
  r.aggregates = {{"mean", 0.2916666666666667}};
  r.notes = {"missing c"};
  const auto back = EvalReport::parse(r.to_text());
  EXPECT_EQ(back.mode, "seg");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[0].id, "a");
  EXPECT_EQ(back.records[0].group, "x");
  EXPECT_NEAR(back.records[1].score, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(*back.aggregate("mean"), 0.2916666666666667, 1e-12);
  EXPECT_FALSE(back.aggregate("nope").has_value());
  ASSERT_EQ(back.notes.size(), 1u);
  EXPECT_EQ(back.notes[0], "missing c");
}

TEST(Report, ParseRejectsGarbage) {
  EXPECT_THROW(EvalReport::parse("mode\tseg\nrecord\ta\tnotanumber\n"), IoError);
  EXPECT_THROW(EvalReport::parse("what\n"), IoError);
  EXPECT_THROW(EvalReport::read("/nonexistent/report.tsv"), IoError);
}

TEST(Report, DiffSubtractsMatchingIds) {
  EvalReport a, b;
  a.mode = "seg";
  b.mode = "seg";
  a.records = {{"x", 0.9, ""}, {"y", 0.5, ""}};
  b.records = {{"x", 0.4, ""}};
  a.aggregates = {{"mean", 0.7}};
  b.aggregates = {{"mean", 0.4}};
  const auto d = diff_reports(a, b);
  ASSERT_EQ(d.records.size(), 1u);
  EXPECT_NEAR(d.records[0].score, 0.5, 1e-12);
  EXPECT_NEAR(*d.aggregate("mean"), 0.3, 1e-12);
  ASSERT_EQ(d.notes.size(), 1u);
}
