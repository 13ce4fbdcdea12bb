#include "pixobj/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "pixobj/rng.hpp"

namespace pixobj {

namespace fs = std::filesystem;

LabelMap interpret_mask(const Grid<std::uint8_t>& mask) {
  const bool binary = std::all_of(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v == 0 || v == 255; });
  if (!binary) return binarize_mask(mask);
  LabelMap out(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) out.data()[i] = mask.data()[i] ? kObject : kBackground;
  return out;
}

LabelMap read_label_png(const fs::path& path) { return interpret_mask(read_png_gray(path)); }

LabelMap binarize_mask(const Grid<std::uint8_t>& class_mask) {
  LabelMap out(class_mask.rows(), class_mask.cols());
  for (std::size_t i = 0; i < class_mask.size(); ++i) {
    const std::uint8_t v = class_mask.data()[i];
    if (v == 0) {
      out.data()[i] = kBackground;
    } else if (v <= 20) {
      out.data()[i] = kObject;
    } else if (v == 255) {
      out.data()[i] = kIgnore;
    } else {
      throw ContractViolation("binarize_mask: value " + std::to_string(v) + " outside {0..20, 255}");
    }
  }
  return out;
}

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kRectangle:
      return "rectangle";
    case ShapeFamily::kEllipse:
      return "ellipse";
    case ShapeFamily::kTriangle:
      return "triangle";
    case ShapeFamily::kRing:
      return "ring";
  }
  return "?";
}

std::string to_string(Texture t) {
  switch (t) {
    case Texture::kFlat:
      return "flat";
    case Texture::kGradient:
      return "gradient";
    case Texture::kNoise:
      return "noise";
    case Texture::kStripes:
      return "stripes";
  }
  return "?";
}

ShapeFamily parse_shape_family(const std::string& s) {
  for (auto f : all_shape_families())
    if (to_string(f) == s) return f;
  throw ContractViolation("unknown shape family '" + s + "'");
}

Texture parse_texture(const std::string& s) {
  for (auto t : all_textures())
    if (to_string(t) == s) return t;
  throw ContractViolation("unknown texture '" + s + "'");
}

std::vector<ShapeFamily> all_shape_families() {
  return {ShapeFamily::kRectangle, ShapeFamily::kEllipse, ShapeFamily::kTriangle, ShapeFamily::kRing};
}

std::vector<Texture> all_textures() { return {Texture::kFlat, Texture::kGradient, Texture::kNoise, Texture::kStripes}; }

namespace {

using Color = std::array<float, 3>;

Color random_color(std::mt19937_64& rng) {
  return {static_cast<float>(uniform01(rng)), static_cast<float>(uniform01(rng)), static_cast<float>(uniform01(rng))};
}

Color lerp(const Color& a, const Color& b, double t) {
  Color c;
  for (int i = 0; i < 3; ++i) c[i] = static_cast<float>(a[i] + (b[i] - a[i]) * t);
  return c;
}

double dist(const Color& a, const Color& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Best of several random draws, maximizing distance to the palette.
Color distinct_color(std::mt19937_64& rng, const Color& c1, const Color& c2) {
  Color best = random_color(rng);
  double best_d = std::min(dist(best, c1), dist(best, c2));
  for (int i = 0; i < 7; ++i) {
    const Color c = random_color(rng);
    const double d = std::min(dist(c, c1), dist(c, c2));
    if (d > best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

void paint_background(RgbImage& img, Texture tex, const Color& c1, const Color& c2, std::mt19937_64& rng) {
  const int n = img.rows();
  const int m = img.cols();
  switch (tex) {
    case Texture::kFlat:
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) img.set_pixel(r, c, c1);
      break;
    case Texture::kGradient: {
      const double theta = uniform01(rng) * 2.0 * std::numbers::pi;
      const double dx = std::cos(theta);
      const double dy = std::sin(theta);
      double lo = 1e300;
      double hi = -1e300;
      for (int r : {0, n - 1})
        for (int c : {0, m - 1}) {
          lo = std::min(lo, c * dx + r * dy);
          hi = std::max(hi, c * dx + r * dy);
        }
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) img.set_pixel(r, c, lerp(c1, c2, (c * dx + r * dy - lo) / (hi - lo)));
      break;
    }
    case Texture::kNoise: {
      // Value noise on a coarse lattice, bilinearly interpolated.
      const int cell = 1 << uniform_int(rng, 1, 3);
      const int gr = n / cell + 2;
      const int gc = m / cell + 2;
      std::vector<double> lattice(static_cast<std::size_t>(gr) * gc);
      for (auto& v : lattice) v = uniform01(rng);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < m; ++c) {
          const double fy = static_cast<double>(r) / cell;
          const double fx = static_cast<double>(c) / cell;
          const int y0 = static_cast<int>(fy);
          const int x0 = static_cast<int>(fx);
          const double ty = fy - y0;
          const double tx = fx - x0;
          auto at = [&](int y, int x) { return lattice[static_cast<std::size_t>(y) * gc + x]; };
          const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
          img.set_pixel(r, c, lerp(c1, c2, v));
        }
      }
      break;
    }
    case Texture::kStripes: {
      const double period = 4.0 + uniform01(rng) * 8.0;
      const double theta = uniform01(rng) * std::numbers::pi;
      const double dx = std::cos(theta);
      const double dy = std::sin(theta);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < m; ++c) {
          const double t = (c * dx + r * dy) / (period / 2.0);
          const long band = static_cast<long>(std::floor(t));
          img.set_pixel(r, c, (band % 2 == 0) ? c1 : c2);
        }
      }
      break;
    }
  }
}

struct ShapeGeom {
  ShapeFamily family;
  double cx, cy, hw, hh;  // center and half extents
  double apex;            // triangle apex x offset in [-1, 1]
};

bool inside(const ShapeGeom& s, double x, double y) {
  const double u = (x - s.cx) / s.hw;
  const double v = (y - s.cy) / s.hh;
  switch (s.family) {
    case ShapeFamily::kRectangle:
      return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    case ShapeFamily::kEllipse:
      return u * u + v * v <= 1.0;
    case ShapeFamily::kRing: {
      const double d = u * u + v * v;
      return d <= 1.0 && d > 0.3;
    }
    case ShapeFamily::kTriangle: {
      // Base along v = 1, apex at (apex, -1).
      if (v < -1.0 || v > 1.0) return false;
      const double t = (v + 1.0) / 2.0;  // 0 at apex, 1 at base
      const double left = s.apex + (-1.0 - s.apex) * t;
      const double right = s.apex + (1.0 - s.apex) * t;
      return u >= left && u <= right;
    }
  }
  return false;
}

ShapeGeom random_shape(std::mt19937_64& rng, ShapeFamily family, int size, double min_extent, double max_extent) {
  ShapeGeom g{};
  g.family = family;
  const double w = size * (min_extent + uniform01(rng) * (max_extent - min_extent));
  const double h = size * (min_extent + uniform01(rng) * (max_extent - min_extent));
  g.hw = w / 2.0;
  g.hh = h / 2.0;
  g.cx = g.hw + uniform01(rng) * (size - w);
  g.cy = g.hh + uniform01(rng) * (size - h);
  g.apex = uniform01(rng) * 2.0 - 1.0;
  return g;
}

void add_pixel_noise(RgbImage& img, std::mt19937_64& rng, double amplitude) {
  for (auto& v : img.storage()) {
    v = std::clamp(static_cast<float>(v + (uniform01(rng) * 2.0 - 1.0) * amplitude), 0.0f, 1.0f);
  }
}

SyntheticSample make_sample(const SyntheticSpec& spec, int index) {
  auto rng = stream_rng(spec.seed, "synth", static_cast<std::uint64_t>(index));
  const int size = spec.size;
  for (int attempt = 0;; ++attempt) {
    SyntheticSample out;
    const Color c1 = random_color(rng);
    Color c2 = random_color(rng);
    out.texture = spec.textures[static_cast<std::size_t>(uniform01(rng) * spec.textures.size())];
    out.separation = spec.separation_min + uniform01(rng) * (spec.separation_max - spec.separation_min);
    RgbImage img(size, size);
    paint_background(img, out.texture, c1, c2, rng);
    LabelMap label(size, size, kBackground);
    const int shapes = uniform_int(rng, spec.min_shapes, spec.max_shapes);
    for (int s = 0; s < shapes; ++s) {
      const ShapeFamily fam = spec.families[static_cast<std::size_t>(uniform01(rng) * spec.families.size())];
      if (s == 0) out.family = fam;
      const ShapeGeom g = random_shape(rng, fam, size, spec.min_extent, spec.max_extent);
      const Color base = uniform01(rng) < 0.5 ? c1 : c2;
      const Color own = distinct_color(rng, c1, c2);
      const Color fg = lerp(base, own, out.separation);
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          if (inside(g, c + 0.5, r + 0.5)) {
            img.set_pixel(r, c, fg);
            label(r, c) = kObject;
          }
        }
      }
    }
    add_pixel_noise(img, rng, 0.02);
    const auto fg_count = std::count(label.data().begin(), label.data().end(), kObject);
    const auto total = static_cast<std::int64_t>(label.size());
    if ((fg_count >= 1 && fg_count < total * 9 / 10) || attempt > 100) {
      if (fg_count < 1) throw ContractViolation("generate_synthetic: could not place a foreground shape");
      char id[32];
      std::snprintf(id, sizeof id, "synth_%05d", index);
      out.sample.id = id;
      out.sample.image = std::move(img);
      out.sample.label = std::move(label);
      out.sample.class_name = to_string(out.family);
      return out;
    }
  }
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.size < 8 || spec.count < 0 || spec.min_shapes < 1 || spec.max_shapes < spec.min_shapes ||
      spec.families.empty() || spec.textures.empty() || spec.separation_min < 0.0 ||
      spec.separation_max > 1.0 || spec.separation_min > spec.separation_max || spec.min_extent <= 0.0 ||
      spec.max_extent > 1.0 || spec.min_extent > spec.max_extent) {
    throw ContractViolation("generate_synthetic: invalid spec");
  }
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) out.push_back(make_sample(spec, i));
  return out;
}

std::vector<LabeledSample> generate_synthetic_dataset(const SyntheticSpec& spec) {
  std::vector<LabeledSample> out;
  for (auto& s : generate_synthetic(spec)) out.push_back(std::move(s.sample));
  return out;
}

std::vector<LabeledSample> generate_retrieval_set(const RetrievalSetSpec& spec) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.size < 8) throw ContractViolation("generate_retrieval_set: invalid spec");
  const auto families = all_shape_families();
  std::vector<LabeledSample> out;
  for (int k = 0; k < spec.classes; ++k) {
    const ShapeFamily fam = families[static_cast<std::size_t>(k) % families.size()];
    // Evenly spaced hues, full saturation.
    const double hue = static_cast<double>(k) / spec.classes * 6.0;
    const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
    Color cls{};
    switch (static_cast<int>(hue)) {
      case 0: cls = {1.0f, static_cast<float>(x), 0.0f}; break;
      case 1: cls = {static_cast<float>(x), 1.0f, 0.0f}; break;
      case 2: cls = {0.0f, 1.0f, static_cast<float>(x)}; break;
      case 3: cls = {0.0f, static_cast<float>(x), 1.0f}; break;
      case 4: cls = {static_cast<float>(x), 0.0f, 1.0f}; break;
      default: cls = {1.0f, 0.0f, static_cast<float>(x)}; break;
    }
    char cname[48];
    std::snprintf(cname, sizeof cname, "class%02d_%s", k, to_string(fam).c_str());
    for (int j = 0; j < spec.per_class; ++j) {
      auto rng = stream_rng(spec.seed, "retrieval-set", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
      RgbImage img(spec.size, spec.size);
      const Color c1 = random_color(rng);
      const Color c2 = random_color(rng);
      const auto textures = all_textures();
      paint_background(img, textures[static_cast<std::size_t>(uniform01(rng) * textures.size())], c1, c2, rng);
      const ShapeGeom g = random_shape(rng, fam, spec.size, spec.min_extent, spec.max_extent);
      Color fg = cls;
      for (auto& v : fg) v = std::clamp(static_cast<float>(v * 0.85 + 0.1 * uniform01(rng)), 0.0f, 1.0f);
      LabelMap label(spec.size, spec.size, kBackground);
      for (int r = 0; r < spec.size; ++r)
        for (int c = 0; c < spec.size; ++c)
          if (inside(g, c + 0.5, r + 0.5)) {
            img.set_pixel(r, c, fg);
            label(r, c) = kObject;
          }
      add_pixel_noise(img, rng, 0.02);
      LabeledSample s;
      char id[48];
      std::snprintf(id, sizeof id, "ret_%02d_%03d", k, j);
      s.id = id;
      s.image = std::move(img);
      s.label = std::move(label);
      s.class_name = cname;
      out.push_back(std::move(s));
    }
  }
  return out;
}

void write_dataset(const fs::path& dir, std::span<const LabeledSample> samples) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (!ec) fs::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());
  std::ostringstream manifest;
  manifest << "image\tmask\tclass\n";
  for (const auto& s : samples) {
    const std::string img_rel = "images/" + s.id + ".png";
    const std::string mask_rel = "masks/" + s.id + ".png";
    write_png_rgb(dir / img_rel, s.image);
    write_png_gray(dir / mask_rel, s.label);
    manifest << img_rel << '\t' << mask_rel << '\t' << (s.class_name.empty() ? "-" : s.class_name) << '\n';
  }
  std::ofstream out(dir / "manifest.tsv", std::ios::binary);
  out << manifest.str();
  if (!out) throw IoError("failed writing '" + (dir / "manifest.tsv").string() + "'");
}

std::vector<LabeledSample> load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.tsv";
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot open dataset manifest '" + mpath.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("image\tmask", 0) != 0) throw IoError("'" + mpath.string() + "': missing header line");
  std::vector<LabeledSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cols.push_back(cell);
    if (cols.size() < 2) throw IoError(mpath.string() + ":" + std::to_string(lineno) + ": expected image and mask");
    LabeledSample s;
    s.id = fs::path(cols[0]).stem().string();
    s.image = read_png_rgb(dir / cols[0]);
    s.label = read_label_png(dir / cols[1]);
    if (s.label.rows() != s.image.rows() || s.label.cols() != s.image.cols()) {
      throw ContractViolation("dataset sample '" + s.id + "': mask dims differ from image dims");
    }
    if (cols.size() > 2 && cols[2] != "-") s.class_name = cols[2];
    out.push_back(std::move(s));
  }
  return out;
}

LabeledSample mirror(const LabeledSample& s) {
  LabeledSample out = s;
  out.image = flip_horizontal(s.image);
  out.label = flip_horizontal_grid(s.label);
  return out;
}

LabeledSample augment_mirror(const LabeledSample& s, std::mt19937_64& rng, double mirror_prob) {
  return uniform01(rng) < mirror_prob ? mirror(s) : s;
}

double lr_schedule(const TrainConfig& cfg, std::int64_t iteration) {
  if (iteration < 0) throw ContractViolation("lr_schedule: negative iteration");
  const auto steps = cfg.lr_decay_every > 0 ? iteration / cfg.lr_decay_every : 0;
  return cfg.base_lr * std::pow(cfg.lr_decay_factor, static_cast<double>(steps));
}

LabelMap downsample_labels(const LabelMap& label, int rows, int cols) { return resize_nearest(label, rows, cols); }

namespace {

struct Prepared {
  RgbImage image;
  LabelMap label;
};

struct SlotResult {
  NetworkGrads<float> grads;
  double loss = 0.0;
};

void accumulate(NetworkGrads<float>& acc, NetworkGrads<float>&& g) {
  if (acc.empty()) {
    acc = std::move(g);
    return;
  }
  for (auto& [idx, lg] : g) {
    auto& a = acc.at(idx);
    auto dst = a.weights.data();
    auto src = lg.weights.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += lg.bias[i];
  }
}

}  // namespace

std::vector<LossRecord> train(Network& net, std::span<const LabeledSample> dataset, const TrainConfig& cfg,
                              const TrainCallback& on_step) {
  if (dataset.empty()) throw ContractViolation("train: empty dataset");
  if (cfg.batch_size < 1 || cfg.input_size < 1) throw ContractViolation("train: batch_size and input_size must be >= 1");
  const Shape in_shape{1, net.config().input_channels, cfg.input_size, cfg.input_size};
  const Shape out_shape = net.config().output_shape(in_shape);

  std::vector<Prepared> prepared;
  prepared.reserve(dataset.size());
  for (const auto& s : dataset) {
    prepared.push_back({resize_bilinear(s.image, cfg.input_size, cfg.input_size),
                        resize_nearest(s.label, cfg.input_size, cfg.input_size)});
  }

  const int threads = std::max(1, cfg.threads);
  std::vector<LossRecord> log;
  for (std::int64_t it = net.iteration(); it < cfg.total_iterations; ++it) {
    const double lr = lr_schedule(cfg, it);
    auto sampler = stream_rng(cfg.seed, "sampling", static_cast<std::uint64_t>(it));
    std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
    for (auto& b : batch) b = static_cast<std::size_t>(uniform01(sampler) * prepared.size());

    std::vector<Tensor> inputs(batch.size());
    std::vector<LabelMap> labels(batch.size());
    std::int64_t contributing = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      auto aug = stream_rng(cfg.seed, "augment", static_cast<std::uint64_t>(it), j);
      const Prepared& p = prepared[batch[j]];
      const bool flip = uniform01(aug) < cfg.mirror_prob;
      inputs[j] = image_to_tensor(flip ? flip_horizontal(p.image) : p.image, cfg.means);
      labels[j] = downsample_labels(flip ? flip_horizontal_grid(p.label) : p.label, out_shape.h, out_shape.w);
      contributing += std::count_if(labels[j].data().begin(), labels[j].data().end(),
                                    [](std::uint8_t v) { return v != kIgnore; });
    }
    const double scale = (cfg.reduction == Reduction::kMean && contributing > 0) ? 1.0 / contributing : 1.0;

    std::vector<SlotResult> slots(batch.size());
    std::vector<std::exception_ptr> errors(batch.size());
    auto run_slot = [&](std::size_t j) noexcept {
      try {
        const auto trace = net.forward_trace(inputs[j], true, derive_seed(cfg.seed, "dropout", it, j));
        auto xent = softmax_xent(trace.output, std::span<const LabelMap>(&labels[j], 1), Reduction::kSum);
        for (auto& g : xent.logit_grad.data()) g = static_cast<float>(g * scale);
        slots[j].loss = xent.loss;
        slots[j].grads = net.backward(trace, xent.logit_grad);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    };
    if (threads == 1 || batch.size() == 1) {
      for (std::size_t j = 0; j < batch.size(); ++j) run_slot(j);
    } else {
      std::vector<std::jthread> pool;
      for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          for (std::size_t j = static_cast<std::size_t>(t); j < batch.size(); j += static_cast<std::size_t>(threads)) run_slot(j);
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    NetworkGrads<float> grads;
    double loss = 0.0;
    for (auto& s : slots) {
      loss += s.loss;
      accumulate(grads, std::move(s.grads));
    }
    loss *= scale;
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "non-finite loss at iteration " << it << " (lr " << lr << ", batch ids";
      for (auto b : batch) os << ' ' << dataset[b].id;
      os << ')';
      throw NonFiniteLossError(os.str());
    }
    net.apply_sgd(grads, SgdOptions{lr, cfg.momentum, cfg.weight_decay});
    const LossRecord rec{it, lr, loss};
    log.push_back(rec);
    if (on_step) on_step(rec);
  }
  return log;
}

}  // namespace pixobj
