#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixobj/grid.hpp"
#include "pixobj/image.hpp"
#include "pixobj/postprocess.hpp"

namespace pixobj {

// |pred & gt| / |pred | gt|. Two empty masks score 1, one empty mask 0.
double jaccard(const BinaryMask& pred, const BinaryMask& gt);
// Same, with pixels labelled ignore in `gt` excluded from both counts.
double jaccard(const BinaryMask& pred, const LabelMap& gt);

double box_iou(const BBox& a, const BBox& b);
// True iff IoU with some ground-truth box is strictly above `threshold`.
bool corloc(const BBox& pred, std::span<const BBox> gt_boxes, double threshold = 0.5);

// Mean of precision@k over the relevant positions k. Throws if nothing is
// relevant.
double average_precision(const std::vector<bool>& ranked_relevance);
double mean_ap(std::span<const double> aps);

inline constexpr int kBinsPerChannel = 10;
using ColorHistogram = std::array<double, 3 * kBinsPerChannel>;

// Per-channel 10-bin histograms concatenated, L1-normalized, over the pixels
// whose mask bit equals `foreground`.
ColorHistogram color_histogram(const RgbImage& image, const BinaryMask& mask, bool foreground);

// 1 - cosine similarity of the foreground and background histograms.
double separability(const RgbImage& image, const BinaryMask& gt);

struct SeparabilityEntry {
  std::string id;
  std::optional<double> score;              // nullopt for degenerate masks
  std::map<std::string, double> jaccard;    // method -> score on this image
};

struct SeparabilityBucket {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double reference_mean = 0.0;
  std::map<std::string, double> baseline_means;
  double min_gain = 0.0;  // min over baselines of reference_mean - baseline mean
  double max_gain = 0.0;
};

struct SeparabilityReport {
  std::string reference;
  std::vector<SeparabilityBucket> buckets;  // populated buckets only, ascending
  std::vector<std::string> notes;           // empty buckets, skipped images
  int skipped = 0;
};

SeparabilityReport separability_report(std::span<const SeparabilityEntry> entries, const std::string& reference,
                                       double bucket_width = 0.1);

struct EvalRecord {
  std::string id;
  double score = 0.0;
  std::string group;
};

// Tab-separated text: a "mode" line, one "record" line per item, then
// "aggregate" and "note" lines.
struct EvalReport {
  std::string mode;
  std::vector<EvalRecord> records;
  std::vector<std::pair<std::string, double>> aggregates;
  std::vector<std::string> notes;

  std::optional<double> aggregate(const std::string& key) const;
  std::string to_text() const;
  static EvalReport parse(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static EvalReport read(const std::filesystem::path& path);
};

EvalReport to_eval_report(const SeparabilityReport& report);

// Record-wise difference a - b over ids present in both.
EvalReport diff_reports(const EvalReport& a, const EvalReport& b);

}  // namespace pixobj
