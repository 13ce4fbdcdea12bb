#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixobj/image.hpp"
#include "pixobj/metrics.hpp"
#include "pixobj/network.hpp"
#include "pixobj/postprocess.hpp"
#include "pixobj/training.hpp"

namespace pixobj {

enum class RepresentationMode { kFull, kFg, kFf };

std::string to_string(RepresentationMode m);
RepresentationMode parse_representation_mode(const std::string& s);

// Unit-L2-norm descriptor.
struct FeatureVector {
  std::vector<float> values;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector l2_normalized(std::vector<float> raw);
double cosine(const FeatureVector& a, const FeatureVector& b);

// Raw (unnormalized) descriptor of a whole image. Implementations must be
// deterministic and safe to call concurrently.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::vector<float> describe(const RgbImage& image) const = 0;
  virtual int dimension() const = 0;
};

// Resizes to a fixed input size, runs the network up to its shared feature
// layer and average-pools each channel.
class NetworkFeatures final : public FeatureProvider {
 public:
  NetworkFeatures(const Network& net, int input_size, std::array<float, 3> means = kDefaultMeans);
  std::vector<float> describe(const RgbImage& image) const override;
  int dimension() const override;

 private:
  const Network* net_;
  int input_size_;
  std::array<float, 3> means_;
};

FeatureVector extract_features(const FeatureProvider& provider, const RgbImage& image,
                               const std::optional<BBox>& region = std::nullopt);

struct RetrievalOptions {
  double min_area_frac = 0.06;
  std::array<float, 3> means = kDefaultMeans;
  int segment_input_size = 0;  // see SegmentOptions::input_size
};

// Foreground box used by the FG path: tight box of the largest region that
// survives the area rule, or nothing.
std::optional<BBox> foreground_region(const Network& segmenter, const RgbImage& image,
                                      const RetrievalOptions& opt = {});

struct Representation {
  FeatureVector vector;
  bool fg_fallback = false;  // FG path fell back to the whole image
};

Representation represent(const Network& segmenter, const FeatureProvider& features, const RgbImage& image,
                         RepresentationMode mode, const RetrievalOptions& opt = {});

struct IndexEntry {
  std::string id;
  std::string class_name;
  FeatureVector vector;
};

struct RankedItem {
  std::string id;
  double similarity = 0.0;
};

class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  RetrievalIndex(RepresentationMode mode, int dimension) : mode_(mode), dimension_(dimension) {}

  RepresentationMode mode() const { return mode_; }
  int dimension() const { return dimension_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  void add(IndexEntry entry);

  // Descending cosine similarity, ties by ascending id; `exclude` is left out.
  std::vector<RankedItem> rank(const FeatureVector& query, const std::string& exclude = {}) const;

  // Directory with manifest.txt (mode, dimension, count) and entries.bin:
  // per entry u32 id length, id bytes, u32 class length, class bytes,
  // dimension little-endian float32 values.
  void save(const std::filesystem::path& dir) const;
  static RetrievalIndex load(const std::filesystem::path& dir);

 private:
  RepresentationMode mode_ = RepresentationMode::kFull;
  int dimension_ = 0;
  std::vector<IndexEntry> entries_;
};

struct IndexBuild {
  RetrievalIndex index;
  int fg_fallbacks = 0;
};

// Per-image work may run on `threads` workers; entries keep dataset order.
IndexBuild build_index(const Network& segmenter, const FeatureProvider& features,
                       std::span<const LabeledSample> samples, RepresentationMode mode,
                       const RetrievalOptions& opt = {}, int threads = 1);

struct RetrievalEvaluation {
  double map = 0.0;
  std::map<std::string, double> per_class_ap;
  std::vector<EvalRecord> per_query;  // id, AP, class
  int skipped_queries = 0;
  int fg_fallbacks = 0;
  int images = 0;

  EvalReport to_report(RepresentationMode mode) const;
};

// Every entry queries all others; relevant = same class.
RetrievalEvaluation evaluate_index(const RetrievalIndex& index);

RetrievalEvaluation evaluate_retrieval(const Network& segmenter, const FeatureProvider& features,
                                       std::span<const LabeledSample> samples, RepresentationMode mode,
                                       const RetrievalOptions& opt = {}, int threads = 1);

}  // namespace pixobj
