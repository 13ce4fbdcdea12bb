#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pixobj/errors.hpp"
#include "pixobj/image.hpp"
#include "pixobj/metrics.hpp"
#include "pixobj/network.hpp"
#include "pixobj/pipeline.hpp"
#include "pixobj/postprocess.hpp"
#include "pixobj/retarget.hpp"
#include "pixobj/retrieval.hpp"
#include "pixobj/training.hpp"
#include "pixobj/weights.hpp"

#ifndef PIXOBJ_VERSION
#define PIXOBJ_VERSION "0.0.0"
#endif

namespace pixobj::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 1;
  int threads = 1;
  int verbosity = 0;
};

struct SynthArgs {
  fs::path out;
  SyntheticSpec spec;
  std::vector<std::string> families;
  std::vector<std::string> textures;
  bool retrieval = false;
  RetrievalSetSpec retrieval_spec;
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  std::string preset = "toy";
  std::optional<fs::path> resume;
  TrainConfig cfg;
  std::string reduction = "mean";
  int checkpoint_every = 0;
};

struct SegmentArgs {
  fs::path weights;
  fs::path image;
  fs::path out;
  std::optional<fs::path> gt;
  bool prob = false;
  bool activation = false;
  bool largest = false;
  int input_size = 0;
};

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  std::string mode = "seg";
  fs::path out;
  std::optional<fs::path> images;
  std::optional<fs::path> boxes;
  std::vector<std::string> baselines;
  double bucket_width = 0.1;
};

struct RetargetArgs {
  fs::path image;
  std::optional<fs::path> weights;
  std::optional<fs::path> mask;
  fs::path out;
  std::string fraction = "2/3";
  std::optional<int> rows;
  std::optional<int> cols;
  bool baseline = false;
  bool compare = false;
  int input_size = 0;
};

struct IndexArgs {
  fs::path weights;
  fs::path data;
  fs::path out;
  std::string mode = "FULL";
  int input_size = 64;
};

struct RetrieveArgs {
  fs::path weights;
  fs::path index;
  fs::path query;
  std::optional<fs::path> out;
  std::optional<std::string> mode;
  int k = 10;
  int input_size = 64;
};

struct DiffArgs {
  fs::path a;
  fs::path b;
  std::optional<fs::path> out;
};

int threads_from_env() {
  const char* env = std::getenv("PIXOBJ_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 256) throw ContractViolation(std::string("PIXOBJ_THREADS must be 1..256, got '") + env + "'");
  return static_cast<int>(v);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void set_resolved(CLI::Option* opt, const std::string& value) {
  opt->clear();
  opt->add_result(value);
}

// Resolved config of the subcommand that ran (deterministic) plus run facts
// that are not.
void record_run(const fs::path& dir, CLI::App& app, const Common& common, double wall_seconds) {
  ensure_dir(dir);
  set_resolved(app.get_option("--threads"), std::to_string(common.threads));
  for (CLI::App* sub : app.get_subcommands({})) {
    if (!sub->parsed()) app.remove_subcommand(sub);
  }
  // Unset optional values are left out so the file can be fed back via --config.
  std::istringstream all(app.config_to_str(true, false));
  std::string config;
  for (std::string line; std::getline(all, line);) {
    if (line.size() < 3 || line.compare(line.size() - 3, 3, "=\"\"") != 0) config += line + '\n';
  }
  write_text(dir / "config.ini", config);
  std::ostringstream info;
  info << "tool pixobj\nversion " << PIXOBJ_VERSION << "\nseed " << common.seed << "\nthreads " << common.threads
       << "\nwall_time_seconds " << std::fixed << std::setprecision(3) << wall_seconds << '\n';
  write_text(dir / "run.txt", info.str());
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// ---------------------------------------------------------------- synth

int cmd_synth(SynthArgs& a, const Common& common) {
  std::vector<LabeledSample> samples;
  if (a.retrieval) {
    a.retrieval_spec.seed = common.seed;
    samples = generate_retrieval_set(a.retrieval_spec);
  } else {
    if (!a.families.empty()) {
      a.spec.families.clear();
      for (const auto& f : a.families) a.spec.families.push_back(parse_shape_family(f));
    }
    if (!a.textures.empty()) {
      a.spec.textures.clear();
      for (const auto& t : a.textures) a.spec.textures.push_back(parse_texture(t));
    }
    a.spec.seed = common.seed;
    samples = generate_synthetic_dataset(a.spec);
  }
  write_dataset(a.out, samples);
  std::cout << "wrote " << samples.size() << " samples to " << a.out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

int cmd_train(TrainArgs& a, const Common& common, CLI::App& sub) {
  const auto dataset = load_dataset(a.data);
  Network net;
  if (a.resume) {
    net = load_weights(*a.resume);
    if (sub.count("--preset") > 0 && net.config().preset != a.preset) {
      throw ContractViolation("--preset " + a.preset + " conflicts with resumed archive preset " + net.config().preset);
    }
  } else {
    net = Network::random(NetworkConfig::from_preset(a.preset), common.seed);
  }
  if (a.cfg.input_size == 0) a.cfg.input_size = net.config().preset == "paper" ? 321 : 64;
  set_resolved(sub.get_option("--input-size"), std::to_string(a.cfg.input_size));
  if (a.reduction == "mean") {
    a.cfg.reduction = Reduction::kMean;
  } else if (a.reduction == "sum") {
    a.cfg.reduction = Reduction::kSum;
  } else {
    throw ContractViolation("--reduction must be mean or sum");
  }
  a.cfg.seed = common.seed;
  a.cfg.threads = common.threads;

  ensure_dir(a.out);
  const fs::path log_path = a.out / "loss.log";
  std::ofstream log(log_path, a.resume ? std::ios::binary | std::ios::app : std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot open '" + log_path.string() + "'");
  const fs::path archive = a.out / "weights";
  train(net, dataset, a.cfg, [&](const LossRecord& r) {
    char line[96];
    std::snprintf(line, sizeof line, "%lld\t%.9g\t%.9g\n", static_cast<long long>(r.iteration), r.lr, r.loss);
    log << line;
    if (common.verbosity > 0) std::cerr << line;
    if (a.checkpoint_every > 0 && (r.iteration + 1) % a.checkpoint_every == 0) {
      log.flush();
      save_weights(net, archive);
    }
  });
  log.flush();
  if (!log) throw IoError("failed writing '" + log_path.string() + "'");
  save_weights(net, archive);
  std::cout << "trained to iteration " << net.iteration() << "; archive " << archive.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- segment

int cmd_segment(const SegmentArgs& a) {
  const Network net = load_weights(a.weights);
  const RgbImage image = read_png_rgb(a.image);
  SegmentOptions opt;
  opt.input_size = a.input_size;
  opt.largest_only = a.largest;
  const ObjectnessMap probs = objectness(net, image, opt);
  BinaryMask mask = threshold_map(probs);
  if (a.largest) {
    auto region = largest_foreground(mask, opt.min_area_frac);
    mask = region ? std::move(*region) : BinaryMask(mask.rows(), mask.cols(), 0);
  }
  ensure_dir(a.out);
  write_mask_png(a.out / "mask.png", mask);
  if (a.prob) write_png_gray(a.out / "prob.png", to_gray8(probs));
  if (a.activation) {
    const RgbImage input = a.input_size > 0 ? resize_bilinear(image, a.input_size, a.input_size) : image;
    Grid<float> heat = activation_map(net, image_to_tensor(input));
    if (a.input_size > 0) {
      Tensor t(Shape{1, 1, heat.rows(), heat.cols()});
      std::copy(heat.data().begin(), heat.data().end(), t.data().begin());
      const Tensor big = bilinear_resize(t, image.rows(), image.cols());
      heat = Grid<float>(image.rows(), image.cols());
      std::copy(big.data().begin(), big.data().end(), heat.data().begin());
    }
    // Red overlay, alpha proportional to activation.
    RgbImage overlay = image;
    for (int r = 0; r < image.rows(); ++r) {
      for (int c = 0; c < image.cols(); ++c) {
        const float h = std::clamp(heat(r, c), 0.0f, 1.0f);
        auto px = image.pixel(r, c);
        px[0] = px[0] * (1 - h) + h;
        px[1] *= (1 - h);
        px[2] *= (1 - h);
        overlay.set_pixel(r, c, px);
      }
    }
    write_png_rgb(a.out / "heatmap.png", overlay);
  }
  std::cout << "foreground pixels " << mask.count() << " of " << mask.size() << '\n';
  if (a.gt) {
    const LabelMap gt = read_label_png(*a.gt);
    if (!gt.same_dims(mask)) throw ContractViolation("--gt dims differ from image dims");
    std::cout << "iou " << fmt(jaccard(mask, gt)) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.emplace(e.path().stem().string(), e.path());
  }
  return out;
}

BinaryMask to_binary(const LabelMap& l) {
  BinaryMask m(l.rows(), l.cols(), 0);
  for (std::size_t i = 0; i < l.size(); ++i) m.data()[i] = l.data()[i] == kObject ? 1 : 0;
  return m;
}

std::map<std::string, std::vector<BBox>> read_box_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open box manifest '" + path.string() + "'");
  std::map<std::string, std::vector<BBox>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id;
    BBox b;
    if (!(ls >> id >> b.x_min >> b.y_min >> b.x_max >> b.y_max) || b.x_max < b.x_min || b.y_max < b.y_min) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 'id x_min y_min x_max y_max'");
    }
    out[id].push_back(b);
  }
  return out;
}

int cmd_eval(const EvalArgs& a) {
  if (a.mode != "seg" && a.mode != "corloc" && a.mode != "separability") {
    throw ContractViolation("--mode must be seg, corloc or separability");
  }
  const auto gt_files = png_files(a.gt);
  const auto pred_files = png_files(a.pred);
  std::vector<std::string> missing;
  for (const auto& [id, p] : gt_files)
    if (!pred_files.contains(id)) missing.push_back("missing prediction for " + id);
  for (const auto& [id, p] : pred_files)
    if (!gt_files.contains(id)) missing.push_back("missing ground truth for " + id);

  EvalReport report;
  report.mode = a.mode;
  if (a.mode == "seg") {
    std::vector<double> scores;
    for (const auto& [id, gpath] : gt_files) {
      if (!pred_files.contains(id)) continue;
      const LabelMap gt = read_label_png(gpath);
      const BinaryMask pred = read_mask_png(pred_files.at(id));
      if (!pred.same_dims(gt)) throw ContractViolation("dims of prediction and ground truth differ for " + id);
      scores.push_back(jaccard(pred, gt));
      report.records.push_back({id, scores.back(), ""});
    }
    if (!scores.empty()) report.aggregates.emplace_back("mean_jaccard", mean(scores));
    report.aggregates.emplace_back("images", static_cast<double>(scores.size()));
  } else if (a.mode == "corloc") {
    std::map<std::string, std::vector<BBox>> manifest;
    if (a.boxes) manifest = read_box_manifest(*a.boxes);
    int hits = 0;
    int n = 0;
    for (const auto& [id, gpath] : gt_files) {
      if (!pred_files.contains(id)) continue;
      const BinaryMask pred = read_mask_png(pred_files.at(id));
      std::vector<BBox> gt_boxes;
      if (a.boxes) {
        if (!manifest.contains(id)) {
          missing.push_back("no ground-truth box for " + id);
          continue;
        }
        gt_boxes = manifest.at(id);
      } else {
        const auto b = tight_bbox(to_binary(read_label_png(gpath)));
        if (!b) {
          report.notes.push_back("empty ground truth for " + id + ", skipped");
          continue;
        }
        gt_boxes.push_back(*b);
      }
      const auto pb = tight_bbox(pred);
      const bool hit = pb && corloc(*pb, gt_boxes);
      hits += hit ? 1 : 0;
      ++n;
      report.records.push_back({id, hit ? 1.0 : 0.0, ""});
    }
    if (n > 0) report.aggregates.emplace_back("corloc", static_cast<double>(hits) / n);
    report.aggregates.emplace_back("images", n);
  } else {
    if (!a.images) throw ContractViolation("separability mode needs --images");
    const auto image_files = png_files(*a.images);
    std::vector<std::pair<std::string, std::map<std::string, fs::path>>> baselines;
    for (const auto& spec : a.baselines) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw ContractViolation("--baseline expects name=dir, got '" + spec + "'");
      baselines.emplace_back(spec.substr(0, eq), png_files(spec.substr(eq + 1)));
    }
    if (baselines.empty()) throw ContractViolation("separability mode needs at least one --baseline name=dir");
    std::vector<SeparabilityEntry> entries;
    for (const auto& [id, gpath] : gt_files) {
      if (!pred_files.contains(id)) continue;
      if (!image_files.contains(id)) {
        missing.push_back("missing image for " + id);
        continue;
      }
      const LabelMap gt = read_label_png(gpath);
      const RgbImage img = read_png_rgb(image_files.at(id));
      SeparabilityEntry e;
      e.id = id;
      try {
        e.score = separability(img, to_binary(gt));
      } catch (const ContractViolation&) {
        e.score.reset();
      }
      e.jaccard["ours"] = jaccard(read_mask_png(pred_files.at(id)), gt);
      bool complete = true;
      for (const auto& [name, files] : baselines) {
        if (!files.contains(id)) {
          missing.push_back("missing " + name + " prediction for " + id);
          complete = false;
          continue;
        }
        e.jaccard[name] = jaccard(read_mask_png(files.at(id)), gt);
      }
      if (complete) entries.push_back(std::move(e));
    }
    const SeparabilityReport sep = separability_report(entries, "ours", a.bucket_width);
    report = to_eval_report(sep);
    std::cout << "bucket\tcount\tours";
    for (const auto& [name, files] : baselines) std::cout << '\t' << name;
    std::cout << "\tmin_gain\tmax_gain\n";
    for (const auto& b : sep.buckets) {
      std::cout << '[' << fmt(b.lo) << ',' << fmt(b.hi) << ")\t" << b.count << '\t' << fmt(b.reference_mean);
      for (const auto& [name, files] : baselines) std::cout << '\t' << fmt(b.baseline_means.at(name));
      std::cout << '\t' << fmt(b.min_gain) << '\t' << fmt(b.max_gain) << '\n';
    }
  }
  for (const auto& m : missing) report.notes.push_back(m);
  report.aggregates.emplace_back("missing", static_cast<double>(missing.size()));
  ensure_dir(a.out);
  report.write(a.out / "report.tsv");
  for (const auto& [k, v] : report.aggregates) std::cout << k << ' ' << fmt(v) << '\n';
  for (const auto& m : missing) std::cerr << "warning: " << m << '\n';
  return missing.empty() ? kExitOk : kExitIncomplete;
}

// ---------------------------------------------------------------- retarget

RgbImage side_by_side(const RgbImage& left, const RgbImage& right) {
  const int rows = std::max(left.rows(), right.rows());
  const int gap = 4;
  RgbImage out(rows, left.cols() + gap + right.cols(), 1.0f);
  for (int r = 0; r < left.rows(); ++r)
    for (int c = 0; c < left.cols(); ++c) out.set_pixel(r, c, left.pixel(r, c));
  for (int r = 0; r < right.rows(); ++r)
    for (int c = 0; c < right.cols(); ++c) out.set_pixel(r, left.cols() + gap + c, right.pixel(r, c));
  return out;
}

int cmd_retarget(const RetargetArgs& a) {
  const RgbImage image = read_png_rgb(a.image);
  if (a.weights && a.mask) throw ContractViolation("give either --weights or --mask, not both");
  std::optional<BinaryMask> fg;
  if (a.mask) {
    fg = to_binary(read_label_png(*a.mask));
    if (!fg->same_dims(Grid<std::uint8_t>(image.rows(), image.cols()))) {
      throw ContractViolation("--mask dims differ from image dims");
    }
  } else if (a.weights) {
    const Network net = load_weights(*a.weights);
    SegmentOptions opt;
    opt.input_size = a.input_size;
    opt.largest_only = true;
    fg = segment(net, image, opt);
  } else if (!a.baseline) {
    throw ContractViolation("foreground-boosted retargeting needs --weights or --mask (or pass --baseline)");
  }
  const int rows = a.rows ? *a.rows : scaled_dimension(image.rows(), a.fraction);
  const int cols = a.cols ? *a.cols : scaled_dimension(image.cols(), a.fraction);
  RetargetOptions opt;
  opt.boost = !a.baseline;
  const RetargetResult res = retarget(image, fg, rows, cols, opt);
  ensure_dir(a.out);
  write_png_rgb(a.out / "retargeted.png", res.image);
  if (fg) write_mask_png(a.out / "foreground.png", *fg);
  if (a.compare) write_png_rgb(a.out / "compare.png", side_by_side(image, res.image));
  std::cout << image.cols() << 'x' << image.rows() << " -> " << res.image.cols() << 'x' << res.image.rows() << " ("
            << res.seams.size() << " seams" << (a.baseline ? ", plain energy" : ", foreground boost") << ")\n";
  if (fg && res.mask) std::cout << "foreground pixels removed " << fg->count() - res.mask->count() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- retrieval

int cmd_build_index(const IndexArgs& a, const Common& common) {
  const Network net = load_weights(a.weights);
  const auto samples = load_dataset(a.data);
  const NetworkFeatures features(net, a.input_size);
  RetrievalOptions opt;
  opt.segment_input_size = a.input_size;
  const IndexBuild built = build_index(net, features, samples, parse_representation_mode(a.mode), opt, common.threads);
  built.index.save(a.out);
  std::cout << "indexed " << built.index.entries().size() << " images (" << to_string(built.index.mode()) << ", dim "
            << built.index.dimension() << ", fg fallbacks " << built.fg_fallbacks << ")\n";
  return kExitOk;
}

int cmd_retrieve(const RetrieveArgs& a) {
  const RetrievalIndex index = RetrievalIndex::load(a.index);
  if (a.mode && parse_representation_mode(*a.mode) != index.mode()) {
    throw ContractViolation("query mode " + *a.mode + " does not match index mode " + to_string(index.mode()));
  }
  if (a.k < 1) throw ContractViolation("-k must be >= 1");
  const Network net = load_weights(a.weights);
  const NetworkFeatures features(net, a.input_size);
  RetrievalOptions opt;
  opt.segment_input_size = a.input_size;
  const Representation rep = represent(net, features, read_png_rgb(a.query), index.mode(), opt);
  auto ranking = index.rank(rep.vector);
  if (static_cast<std::size_t>(a.k) > ranking.size()) {
    std::cerr << "warning: k=" << a.k << " exceeds index size " << ranking.size() << "; returning full ranking\n";
  } else {
    ranking.resize(static_cast<std::size_t>(a.k));
  }
  std::ostringstream os;
  os << "rank\tid\tsimilarity\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    char sim[32];
    std::snprintf(sim, sizeof sim, "%.6f", ranking[i].similarity);
    os << i + 1 << '\t' << ranking[i].id << '\t' << sim << '\n';
  }
  std::cout << os.str();
  if (rep.fg_fallback) std::cerr << "note: no foreground found in query; used whole image\n";
  if (a.out) {
    ensure_dir(*a.out);
    write_text(*a.out / "ranking.tsv", os.str());
  }
  return kExitOk;
}

int cmd_retrieve_eval(const IndexArgs& a, const Common& common) {
  const Network net = load_weights(a.weights);
  const auto samples = load_dataset(a.data);
  const NetworkFeatures features(net, a.input_size);
  RetrievalOptions opt;
  opt.segment_input_size = a.input_size;
  const auto mode = parse_representation_mode(a.mode);
  const RetrievalEvaluation ev = evaluate_retrieval(net, features, samples, mode, opt, common.threads);
  EvalReport rep = ev.to_report(mode);
  ensure_dir(a.out);
  rep.write(a.out / "report.tsv");
  std::cout << "class\tAP\n";
  for (const auto& [cls, ap] : ev.per_class_ap) std::cout << cls << '\t' << fmt(ap) << '\n';
  std::cout << "mAP " << fmt(ev.map) << "\nfg_fallbacks " << ev.fg_fallbacks << '\n';
  if (ev.skipped_queries > 0) std::cerr << "warning: " << ev.skipped_queries << " queries had no relevant items\n";
  return kExitOk;
}

int cmd_diff(const DiffArgs& a) {
  const EvalReport d = diff_reports(EvalReport::read(a.a), EvalReport::read(a.b));
  if (a.out) {
    if (a.out->has_parent_path()) ensure_dir(a.out->parent_path());
    d.write(*a.out);
  }
  std::cout << d.to_text();
  return kExitOk;
}

}  // namespace

int scaled_dimension(int dim, const std::string& fraction) {
  if (dim < 1) throw ContractViolation("scaled_dimension: dimension must be >= 1");
  std::int64_t out = 0;
  const auto slash = fraction.find('/');
  try {
    if (slash != std::string::npos) {
      std::size_t used_n = 0;
      std::size_t used_d = 0;
      const long long num = std::stoll(fraction.substr(0, slash), &used_n);
      const long long den = std::stoll(fraction.substr(slash + 1), &used_d);
      if (used_n != slash || used_d != fraction.size() - slash - 1 || num < 0 || den <= 0) throw std::invalid_argument("");
      out = static_cast<std::int64_t>(dim) * num / den;
    } else {
      std::size_t used = 0;
      const double f = std::stod(fraction, &used);
      if (used != fraction.size() || !(f >= 0.0)) throw std::invalid_argument("");
      out = static_cast<std::int64_t>(std::floor(dim * f + 1e-9));
    }
  } catch (const std::logic_error&) {
    throw ContractViolation("invalid fraction '" + fraction + "' (expected a/b or a decimal)");
  }
  if (out < 1 || out > dim) {
    throw ContractViolation("fraction '" + fraction + "' maps " + std::to_string(dim) + " to " + std::to_string(out) +
                            ", outside [1, " + std::to_string(dim) + "]");
  }
  return static_cast<int>(out);
}

int run(int argc, char** argv) {
  CLI::App app{"pixobj: pixel objectness segmentation, retargeting and retrieval"};
  app.set_version_flag("--version", PIXOBJ_VERSION);
  app.set_config("--config", "", "INI/TOML config file; command-line flags take precedence");
  app.require_subcommand(1);

  Common common;
  std::optional<int> threads_flag;
  app.add_option("--seed", common.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", threads_flag, "Worker threads (default: $PIXOBJ_THREADS or 1)")->check(CLI::Range(1, 256));
  app.add_flag("-v,--verbose", common.verbosity, "More logging");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--count", synth.spec.count)->capture_default_str();
  s->add_option("--size", synth.spec.size)->capture_default_str();
  s->add_option("--min-shapes", synth.spec.min_shapes)->capture_default_str();
  s->add_option("--max-shapes", synth.spec.max_shapes)->capture_default_str();
  s->add_option("--families", synth.families, "rectangle, ellipse, triangle, ring (default all)");
  s->add_option("--textures", synth.textures, "flat, gradient, noise, stripes (default all)");
  s->add_option("--separation-min", synth.spec.separation_min)->capture_default_str();
  s->add_option("--separation-max", synth.spec.separation_max)->capture_default_str();
  s->add_option("--min-extent", synth.spec.min_extent)->capture_default_str();
  s->add_option("--max-extent", synth.spec.max_extent)->capture_default_str();
  s->add_flag("--retrieval", synth.retrieval, "Generate the class-structured retrieval benchmark instead");
  s->add_option("--classes", synth.retrieval_spec.classes)->capture_default_str();
  s->add_option("--per-class", synth.retrieval_spec.per_class)->capture_default_str();

  TrainArgs tr;
  tr.cfg.input_size = 0;
  auto* t = app.add_subcommand("train", "Train a network; writes weights/ and loss.log");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--preset", tr.preset, "toy or paper")->capture_default_str();
  t->add_option("--resume", tr.resume, "Continue from a weight archive");
  t->add_option("--iterations", tr.cfg.total_iterations, "Total iterations (including resumed ones)")->capture_default_str();
  t->add_option("--batch", tr.cfg.batch_size)->capture_default_str();
  t->add_option("--lr", tr.cfg.base_lr)->capture_default_str();
  t->add_option("--lr-decay", tr.cfg.lr_decay_factor)->capture_default_str();
  t->add_option("--lr-step", tr.cfg.lr_decay_every)->capture_default_str();
  t->add_option("--momentum", tr.cfg.momentum)->capture_default_str();
  t->add_option("--weight-decay", tr.cfg.weight_decay)->capture_default_str();
  t->add_option("--mirror-prob", tr.cfg.mirror_prob)->capture_default_str();
  t->add_option("--input-size", tr.cfg.input_size, "Training resolution (0: 321 for paper, 64 otherwise)")
      ->capture_default_str();
  t->add_option("--reduction", tr.reduction, "mean or sum")->capture_default_str();
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Save the archive every N iterations")->capture_default_str();

  SegmentArgs seg;
  auto* sg = app.add_subcommand("segment", "Segment one image");
  sg->add_option("--weights", seg.weights)->required();
  sg->add_option("--image", seg.image)->required();
  sg->add_option("--out", seg.out, "Output directory")->required();
  sg->add_option("--gt", seg.gt, "Ground-truth mask; prints IoU");
  sg->add_flag("--prob", seg.prob, "Also write prob.png");
  sg->add_flag("--activation", seg.activation, "Also write heatmap.png");
  sg->add_flag("--largest", seg.largest, "Keep only the largest region above 6% of the image");
  sg->add_option("--input-size", seg.input_size, "Inference resolution (0: native)")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predicted masks against ground truth");
  e->add_option("--pred", ev.pred, "Directory of predicted 0/255 masks")->required();
  e->add_option("--gt", ev.gt, "Directory of ground-truth masks")->required();
  e->add_option("--mode", ev.mode, "seg, corloc or separability")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--images", ev.images, "Image directory (separability)");
  e->add_option("--boxes", ev.boxes, "Ground-truth box manifest (corloc)");
  e->add_option("--baseline", ev.baselines, "name=dir of baseline masks (separability)");
  e->add_option("--bucket-width", ev.bucket_width)->capture_default_str();

  RetargetArgs rt;
  auto* r = app.add_subcommand("retarget", "Content-aware resize");
  r->add_option("--image", rt.image)->required();
  auto* rw = r->add_option("--weights", rt.weights, "Segment with this network");
  auto* rm = r->add_option("--mask", rt.mask, "Use this foreground mask; no network is loaded");
  rw->excludes(rm);
  r->add_option("--out", rt.out, "Output directory")->required();
  r->add_option("--fraction", rt.fraction, "Scale for both dimensions, a/b or decimal")->capture_default_str();
  r->add_option("--rows", rt.rows, "Absolute target height");
  r->add_option("--cols", rt.cols, "Absolute target width");
  r->add_flag("--baseline", rt.baseline, "Plain gradient energy (no foreground boost)");
  r->add_flag("--compare", rt.compare, "Also write compare.png");
  r->add_option("--input-size", rt.input_size, "Inference resolution (0: native)")->capture_default_str();

  IndexArgs ix;
  auto* bi = app.add_subcommand("build-index", "Index a dataset for retrieval");
  bi->add_option("--weights", ix.weights)->required();
  bi->add_option("--data", ix.data)->required();
  bi->add_option("--out", ix.out, "Index directory")->required();
  bi->add_option("--mode", ix.mode, "FULL, FG or FF")->capture_default_str();
  bi->add_option("--input-size", ix.input_size)->capture_default_str();

  RetrieveArgs rq;
  auto* q = app.add_subcommand("retrieve", "Query an index with one image");
  q->add_option("--weights", rq.weights)->required();
  q->add_option("--index", rq.index)->required();
  q->add_option("--query", rq.query)->required();
  q->add_option("-k", rq.k)->capture_default_str();
  q->add_option("--mode", rq.mode, "Expected index mode");
  q->add_option("--out", rq.out, "Directory for ranking.tsv");
  q->add_option("--input-size", rq.input_size)->capture_default_str();

  IndexArgs re;
  auto* qe = app.add_subcommand("retrieve-eval", "Leave-one-out retrieval mAP over a labelled dataset");
  qe->add_option("--weights", re.weights)->required();
  qe->add_option("--data", re.data)->required();
  qe->add_option("--out", re.out, "Output directory")->required();
  qe->add_option("--mode", re.mode, "FULL, FG or FF")->capture_default_str();
  qe->add_option("--input-size", re.input_size)->capture_default_str();

  DiffArgs df;
  auto* d = app.add_subcommand("diff-reports", "Record-wise difference a - b of two reports");
  d->add_option("a", df.a)->required();
  d->add_option("b", df.b)->required();
  d->add_option("--out", df.out, "Write the difference report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitContract;
  }

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  try {
    common.threads = threads_flag ? *threads_flag : threads_from_env();
    int rc = kExitOk;
    std::optional<fs::path> run_dir;
    if (s->parsed()) {
      rc = cmd_synth(synth, common);
      run_dir = synth.out;
    } else if (t->parsed()) {
      rc = cmd_train(tr, common, *t);
      run_dir = tr.out;
    } else if (sg->parsed()) {
      rc = cmd_segment(seg);
      run_dir = seg.out;
    } else if (e->parsed()) {
      rc = cmd_eval(ev);
      run_dir = ev.out;
    } else if (r->parsed()) {
      rc = cmd_retarget(rt);
      run_dir = rt.out;
    } else if (bi->parsed()) {
      rc = cmd_build_index(ix, common);
      run_dir = ix.out;
    } else if (q->parsed()) {
      rc = cmd_retrieve(rq);
      run_dir = rq.out;
    } else if (qe->parsed()) {
      rc = cmd_retrieve_eval(re, common);
      run_dir = re.out;
    } else if (d->parsed()) {
      rc = cmd_diff(df);
    }
    if (run_dir) record_run(*run_dir, app, common, elapsed());
    return rc;
  } catch (const ContractViolation& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitContract;
  } catch (const IoError& ex) {
    std::cerr << "I/O error: " << ex.what() << '\n';
    return kExitIo;
  } catch (const NonFiniteLossError& ex) {
    std::cerr << "training diverged: " << ex.what() << '\n';
    return kExitContract;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitContract;
  }
}

}  // namespace pixobj::cli
