#include "pixobj/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "pixobj/pipeline.hpp"

namespace pixobj {

namespace fs = std::filesystem;

std::string to_string(RepresentationMode m) {
  switch (m) {
    case RepresentationMode::kFull:
      return "FULL";
    case RepresentationMode::kFg:
      return "FG";
    case RepresentationMode::kFf:
      return "FF";
  }
  return "?";
}

RepresentationMode parse_representation_mode(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "FULL") return RepresentationMode::kFull;
  if (u == "FG") return RepresentationMode::kFg;
  if (u == "FF") return RepresentationMode::kFf;
  throw ContractViolation("unknown representation mode '" + s + "' (expected FULL|FG|FF)");
}

FeatureVector l2_normalized(std::vector<float> raw) {
  double norm = 0.0;
  for (float v : raw) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    // All-zero descriptor: use the uniform unit vector.
    const float u = raw.empty() ? 0.0f : static_cast<float>(1.0 / std::sqrt(static_cast<double>(raw.size())));
    std::fill(raw.begin(), raw.end(), u);
    return FeatureVector{std::move(raw)};
  }
  for (auto& v : raw) v = static_cast<float>(v / norm);
  return FeatureVector{std::move(raw)};
}

double cosine(const FeatureVector& a, const FeatureVector& b) {
  if (a.values.size() != b.values.size()) {
    throw ContractViolation("cosine: length " + std::to_string(a.values.size()) + " vs " +
                            std::to_string(b.values.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  return (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
}

NetworkFeatures::NetworkFeatures(const Network& net, int input_size, std::array<float, 3> means)
    : net_(&net), input_size_(input_size), means_(means) {
  if (input_size < 1) throw ContractViolation("NetworkFeatures: input size must be >= 1");
  net.config().shape_after(Shape{1, net.config().input_channels, input_size, input_size}, net.config().feature_layer());
}

std::vector<float> NetworkFeatures::describe(const RgbImage& image) const {
  const RgbImage resized = resize_bilinear(image, input_size_, input_size_);
  const Tensor act = net_->forward_until(image_to_tensor(resized, means_), net_->config().feature_layer());
  std::vector<float> out(static_cast<std::size_t>(act.c()));
  const std::size_t plane = static_cast<std::size_t>(act.h()) * act.w();
  for (int ch = 0; ch < act.c(); ++ch) {
    const float* p = act.data().data() + act.offset(0, ch, 0, 0);
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    out[static_cast<std::size_t>(ch)] = static_cast<float>(s / static_cast<double>(plane));
  }
  return out;
}

int NetworkFeatures::dimension() const { return net_->config().feature_channels(); }

FeatureVector extract_features(const FeatureProvider& provider, const RgbImage& image,
                               const std::optional<BBox>& region) {
  if (!region) return l2_normalized(provider.describe(image));
  const BBox& b = *region;
  if (b.x_min < 0 || b.y_min < 0 || b.x_max >= image.cols() || b.y_max >= image.rows()) {
    throw ContractViolation("extract_features: region outside image");
  }
  if (b.x_max < b.x_min || b.y_max < b.y_min) throw ContractViolation("extract_features: degenerate region");
  return l2_normalized(provider.describe(crop(image, b.y_min, b.x_min, b.height(), b.width())));
}

std::optional<BBox> foreground_region(const Network& segmenter, const RgbImage& image, const RetrievalOptions& opt) {
  SegmentOptions so;
  so.means = opt.means;
  so.input_size = opt.segment_input_size;
  const auto region = largest_foreground(segment(segmenter, image, so), opt.min_area_frac);
  if (!region) return std::nullopt;
  return tight_bbox(*region);
}

Representation represent(const Network& segmenter, const FeatureProvider& features, const RgbImage& image,
                         RepresentationMode mode, const RetrievalOptions& opt) {
  Representation rep;
  const FeatureVector full = extract_features(features, image);
  if (mode == RepresentationMode::kFull) {
    rep.vector = full;
    return rep;
  }
  const auto box = foreground_region(segmenter, image, opt);
  rep.fg_fallback = !box.has_value();
  const FeatureVector fg = box ? extract_features(features, image, box) : full;
  if (mode == RepresentationMode::kFg) {
    rep.vector = fg;
    return rep;
  }
  std::vector<float> both = full.values;
  both.insert(both.end(), fg.values.begin(), fg.values.end());
  rep.vector = l2_normalized(std::move(both));
  return rep;
}

void RetrievalIndex::add(IndexEntry entry) {
  if (static_cast<int>(entry.vector.values.size()) != dimension_) {
    throw ContractViolation("RetrievalIndex::add: vector length " + std::to_string(entry.vector.values.size()) +
                            " != index dimension " + std::to_string(dimension_));
  }
  entries_.push_back(std::move(entry));
}

std::vector<RankedItem> RetrievalIndex::rank(const FeatureVector& query, const std::string& exclude) const {
  if (static_cast<int>(query.values.size()) != dimension_) {
    throw ContractViolation("rank: query length " + std::to_string(query.values.size()) + " does not match " +
                            to_string(mode_) + " index dimension " + std::to_string(dimension_));
  }
  std::vector<RankedItem> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!exclude.empty() && e.id == exclude) continue;
    out.push_back({e.id, cosine(query, e.vector)});
  }
  std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw TruncatedBlobError("index entries truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 20)) throw CorruptManifestError("index entry string too long");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw TruncatedBlobError("index entries truncated");
  return s;
}

}  // namespace

void RetrievalIndex::save(const fs::path& dir) const {
  static_assert(std::endian::native == std::endian::little);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create index directory '" + dir.string() + "': " + ec.message());
  {
    std::ofstream m(dir / "manifest.txt", std::ios::binary);
    m << "pixobj-index 1\nmode " << to_string(mode_) << "\ndimension " << dimension_ << "\ncount " << entries_.size()
      << '\n';
    if (!m) throw IoError("failed writing index manifest in '" + dir.string() + "'");
  }
  std::ofstream out(dir / "entries.bin", std::ios::binary);
  for (const auto& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.id.size()));
    out.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
    put_u32(out, static_cast<std::uint32_t>(e.class_name.size()));
    out.write(e.class_name.data(), static_cast<std::streamsize>(e.class_name.size()));
    out.write(reinterpret_cast<const char*>(e.vector.values.data()),
              static_cast<std::streamsize>(e.vector.values.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing index entries in '" + dir.string() + "'");
}

RetrievalIndex RetrievalIndex::load(const fs::path& dir) {
  std::ifstream m(dir / "manifest.txt");
  if (!m) throw IoError("cannot open index manifest in '" + dir.string() + "'");
  std::string magic, key, mode;
  int version = 0;
  int dim = 0;
  std::size_t count = 0;
  if (!(m >> magic >> version) || magic != "pixobj-index" || version != 1) {
    throw CorruptManifestError("'" + dir.string() + "' is not a retrieval index");
  }
  if (!(m >> key >> mode) || key != "mode" || !(m >> key >> dim) || key != "dimension" || !(m >> key >> count) ||
      key != "count" || dim < 1) {
    throw CorruptManifestError("malformed index manifest in '" + dir.string() + "'");
  }
  RetrievalIndex idx(parse_representation_mode(mode), dim);
  std::ifstream in(dir / "entries.bin", std::ios::binary);
  if (!in) throw IoError("cannot open index entries in '" + dir.string() + "'");
  for (std::size_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.id = get_str(in);
    e.class_name = get_str(in);
    e.vector.values.resize(static_cast<std::size_t>(dim));
    in.read(reinterpret_cast<char*>(e.vector.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw TruncatedBlobError("index entries truncated at entry " + std::to_string(i));
    idx.entries_.push_back(std::move(e));
  }
  return idx;
}

IndexBuild build_index(const Network& segmenter, const FeatureProvider& features, std::span<const LabeledSample> samples,
                       RepresentationMode mode, const RetrievalOptions& opt, int threads) {
  std::vector<Representation> reps(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  auto work = [&](std::size_t i) noexcept {
    try {
      reps[i] = represent(segmenter, features, samples[i].image, mode, opt);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < samples.size(); i += workers) work(i);
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  const int dim = features.dimension() * (mode == RepresentationMode::kFf ? 2 : 1);
  IndexBuild out{RetrievalIndex(mode, dim), 0};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.fg_fallbacks += reps[i].fg_fallback ? 1 : 0;
    out.index.add({samples[i].id, samples[i].class_name, std::move(reps[i].vector)});
  }
  return out;
}

RetrievalEvaluation evaluate_index(const RetrievalIndex& index) {
  RetrievalEvaluation ev;
  ev.images = static_cast<int>(index.entries().size());
  std::map<std::string, int> class_size;
  std::map<std::string, std::string> class_of;
  for (const auto& e : index.entries()) {
    ++class_size[e.class_name];
    class_of[e.id] = e.class_name;
  }
  std::map<std::string, std::vector<double>> by_class;
  std::vector<double> aps;
  for (const auto& q : index.entries()) {
    if (class_size[q.class_name] < 2) {
      ++ev.skipped_queries;
      continue;
    }
    const auto ranking = index.rank(q.vector, q.id);
    std::vector<bool> rel(ranking.size());
    for (std::size_t k = 0; k < ranking.size(); ++k) rel[k] = class_of.at(ranking[k].id) == q.class_name;
    const double ap = average_precision(rel);
    aps.push_back(ap);
    by_class[q.class_name].push_back(ap);
    ev.per_query.push_back({q.id, ap, q.class_name});
  }
  if (!aps.empty()) ev.map = mean_ap(aps);
  for (const auto& [cls, v] : by_class) ev.per_class_ap[cls] = mean_ap(v);
  return ev;
}

RetrievalEvaluation evaluate_retrieval(const Network& segmenter, const FeatureProvider& features,
                                       std::span<const LabeledSample> samples, RepresentationMode mode,
                                       const RetrievalOptions& opt, int threads) {
  const IndexBuild built = build_index(segmenter, features, samples, mode, opt, threads);
  RetrievalEvaluation ev = evaluate_index(built.index);
  ev.fg_fallbacks = built.fg_fallbacks;
  return ev;
}

EvalReport RetrievalEvaluation::to_report(RepresentationMode mode) const {
  EvalReport rep;
  rep.mode = "retrieval-" + to_string(mode);
  for (const auto& [cls, ap] : per_class_ap) rep.records.push_back({cls, ap, "class"});
  rep.aggregates.emplace_back("mAP", map);
  rep.aggregates.emplace_back("images", images);
  rep.aggregates.emplace_back("skipped_queries", skipped_queries);
  rep.aggregates.emplace_back("fg_fallbacks", fg_fallbacks);
  if (images > 0) rep.aggregates.emplace_back("fg_fallback_rate", static_cast<double>(fg_fallbacks) / images);
  return rep;
}

}  // namespace pixobj
