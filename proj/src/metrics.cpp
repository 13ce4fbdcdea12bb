#include "pixobj/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pixobj {

namespace {

void require_same_dims(int r1, int c1, int r2, int c2, const char* what) {
  if (r1 != r2 || c1 != c2) {
    throw ContractViolation(std::string(what) + ": dims " + std::to_string(r1) + "x" + std::to_string(c1) + " vs " +
                            std::to_string(r2) + "x" + std::to_string(c2));
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Shortest text that parses back to the same double.
std::string exact(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

double jaccard(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred.rows(), pred.cols(), gt.rows(), gt.cols(), "jaccard");
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] != 0;
    const bool g = gt.data()[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard(const BinaryMask& pred, const LabelMap& gt) {
  require_same_dims(pred.rows(), pred.cols(), gt.rows(), gt.cols(), "jaccard");
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t l = gt.data()[i];
    if (l == kIgnore) continue;
    const bool p = pred.data()[i] != 0;
    const bool g = l == kObject;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double box_iou(const BBox& a, const BBox& b) {
  const int ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min) + 1;
  const int iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min) + 1;
  const std::int64_t inter = (ix > 0 && iy > 0) ? static_cast<std::int64_t>(ix) * iy : 0;
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool corloc(const BBox& pred, std::span<const BBox> gt_boxes, double threshold) {
  return std::any_of(gt_boxes.begin(), gt_boxes.end(), [&](const BBox& g) { return box_iou(pred, g) > threshold; });
}

double average_precision(const std::vector<bool>& ranked_relevance) {
  double sum = 0.0;
  std::int64_t hits = 0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) throw ContractViolation("average_precision: ranking has no relevant items");
  return sum / static_cast<double>(hits);
}

double mean_ap(std::span<const double> aps) {
  if (aps.empty()) throw ContractViolation("mean_ap: no queries");
  double s = 0.0;
  for (double v : aps) s += v;
  return s / static_cast<double>(aps.size());
}

ColorHistogram color_histogram(const RgbImage& image, const BinaryMask& mask, bool foreground) {
  require_same_dims(image.rows(), image.cols(), mask.rows(), mask.cols(), "color_histogram");
  ColorHistogram h{};
  std::int64_t n = 0;
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c < image.cols(); ++c) {
      if (mask.test(r, c) != foreground) continue;
      ++n;
      for (int ch = 0; ch < 3; ++ch) {
        const float v = std::clamp(image(ch, r, c), 0.0f, 1.0f);
        const int bin = std::min(kBinsPerChannel - 1, static_cast<int>(v * kBinsPerChannel));
        h[static_cast<std::size_t>(ch * kBinsPerChannel + bin)] += 1.0;
      }
    }
  }
  if (n > 0) {
    const double total = 3.0 * static_cast<double>(n);
    for (auto& v : h) v /= total;
  }
  return h;
}

double separability(const RgbImage& image, const BinaryMask& gt) {
  const std::int64_t fg = gt.count();
  if (fg == 0 || fg == static_cast<std::int64_t>(gt.size())) {
    throw ContractViolation("separability: mask needs at least one foreground and one background pixel");
  }
  const ColorHistogram a = color_histogram(image, gt, true);
  const ColorHistogram b = color_histogram(image, gt, false);
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 1.0);
}

SeparabilityReport separability_report(std::span<const SeparabilityEntry> entries, const std::string& reference,
                                       double bucket_width) {
  if (!(bucket_width > 0.0 && bucket_width <= 1.0)) throw ContractViolation("separability_report: bad bucket width");
  SeparabilityReport rep;
  rep.reference = reference;
  const int nb = static_cast<int>(std::ceil(1.0 / bucket_width - 1e-9));
  std::vector<std::vector<const SeparabilityEntry*>> buckets(static_cast<std::size_t>(nb));
  for (const auto& e : entries) {
    if (!e.score) {
      ++rep.skipped;
      rep.notes.push_back("skipped " + e.id + ": degenerate mask");
      continue;
    }
    if (!e.jaccard.count(reference)) throw ContractViolation("separability_report: '" + e.id + "' lacks reference score");
    const int b = std::clamp(static_cast<int>(*e.score / bucket_width), 0, nb - 1);
    buckets[static_cast<std::size_t>(b)].push_back(&e);
  }
  for (int b = 0; b < nb; ++b) {
    const auto& items = buckets[static_cast<std::size_t>(b)];
    const double lo = b * bucket_width;
    const double hi = std::min(1.0, (b + 1) * bucket_width);
    if (items.empty()) {
      rep.notes.push_back("empty bucket [" + fmt(lo) + ", " + fmt(hi) + ")");
      continue;
    }
    SeparabilityBucket row;
    row.lo = lo;
    row.hi = hi;
    row.count = static_cast<int>(items.size());
    std::map<std::string, double> sums;
    for (const auto* e : items) {
      for (const auto& [method, j] : e->jaccard) sums[method] += j;
    }
    for (const auto* e : items) {
      if (e->jaccard.size() != items.front()->jaccard.size()) {
        throw ContractViolation("separability_report: methods must be scored on the same images");
      }
    }
    row.reference_mean = sums.at(reference) / row.count;
    bool first = true;
    for (const auto& [method, s] : sums) {
      if (method == reference) continue;
      const double mean = s / row.count;
      row.baseline_means[method] = mean;
      const double gain = row.reference_mean - mean;
      row.min_gain = first ? gain : std::min(row.min_gain, gain);
      row.max_gain = first ? gain : std::max(row.max_gain, gain);
      first = false;
    }
    rep.buckets.push_back(std::move(row));
  }
  return rep;
}

std::optional<double> EvalReport::aggregate(const std::string& key) const {
  for (const auto& [k, v] : aggregates)
    if (k == key) return v;
  return std::nullopt;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "# pixobj evaluation report\n";
  os << "mode\t" << mode << '\n';
  for (const auto& r : records) os << "record\t" << r.id << '\t' << exact(r.score) << '\t' << r.group << '\n';
  for (const auto& [k, v] : aggregates) os << "aggregate\t" << k << '\t' << exact(v) << '\n';
  for (const auto& n : notes) os << "note\t" << n << '\n';
  return os.str();
}

EvalReport EvalReport::parse(const std::string& text) {
  EvalReport rep;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cols.push_back(cell);
    const std::string where = "report line " + std::to_string(lineno);
    try {
      if (cols[0] == "mode" && cols.size() == 2) {
        rep.mode = cols[1];
      } else if (cols[0] == "record" && cols.size() >= 3) {
        rep.records.push_back({cols[1], std::stod(cols[2]), cols.size() > 3 ? cols[3] : ""});
      } else if (cols[0] == "aggregate" && cols.size() == 3) {
        rep.aggregates.emplace_back(cols[1], std::stod(cols[2]));
      } else if (cols[0] == "note") {
        rep.notes.push_back(cols.size() > 1 ? line.substr(5) : "");
      } else {
        throw IoError(where + ": unrecognized line");
      }
    } catch (const std::invalid_argument&) {
      throw IoError(where + ": bad number");
    }
  }
  return rep;
}

void EvalReport::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  out << to_text();
  if (!out) throw IoError("failed writing report '" + path.string() + "'");
}

EvalReport EvalReport::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

EvalReport to_eval_report(const SeparabilityReport& report) {
  EvalReport rep;
  rep.mode = "separability";
  for (const auto& b : report.buckets) {
    const std::string bucket = "[" + fmt(b.lo) + "," + fmt(b.hi) + ")";
    rep.aggregates.emplace_back("bucket" + bucket + ".count", b.count);
    rep.aggregates.emplace_back("bucket" + bucket + "." + report.reference, b.reference_mean);
    for (const auto& [m, v] : b.baseline_means) rep.aggregates.emplace_back("bucket" + bucket + "." + m, v);
    rep.aggregates.emplace_back("bucket" + bucket + ".min_gain", b.min_gain);
    rep.aggregates.emplace_back("bucket" + bucket + ".max_gain", b.max_gain);
  }
  rep.notes = report.notes;
  return rep;
}

EvalReport diff_reports(const EvalReport& a, const EvalReport& b) {
  EvalReport out;
  out.mode = "diff:" + a.mode + "-" + b.mode;
  std::map<std::string, const EvalRecord*> by_id;
  for (const auto& r : b.records) by_id[r.id] = &r;
  for (const auto& r : a.records) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      out.notes.push_back("only in first report: " + r.id);
      continue;
    }
    out.records.push_back({r.id, r.score - it->second->score, r.group});
  }
  for (const auto& [k, v] : a.aggregates) {
    if (const auto w = b.aggregate(k)) out.aggregates.emplace_back(k, v - *w);
  }
  return out;
}

}  // namespace pixobj
