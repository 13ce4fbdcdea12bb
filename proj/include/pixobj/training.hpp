#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pixobj/grid.hpp"
#include "pixobj/image.hpp"
#include "pixobj/network.hpp"

namespace pixobj {

struct LabeledSample {
  std::string id;
  RgbImage image;        // [0, 1]; normalized when batched
  LabelMap label;        // {0, 1, 255}, same dims as image
  std::string class_name;  // optional grouping (retrieval classes)
};

// Collapses a class mask {0..20, 255} to {background, object, ignore}.
LabelMap binarize_mask(const Grid<std::uint8_t>& class_mask);

// Ground-truth PNG contents: a mask using only {0, 255} is read as a binary
// 0/255 mask, anything else as a class mask (see binarize_mask).
LabelMap interpret_mask(const Grid<std::uint8_t>& mask);
LabelMap read_label_png(const std::filesystem::path& path);

enum class ShapeFamily { kRectangle, kEllipse, kTriangle, kRing };
enum class Texture { kFlat, kGradient, kNoise, kStripes };

std::string to_string(ShapeFamily f);
std::string to_string(Texture t);
ShapeFamily parse_shape_family(const std::string& s);
Texture parse_texture(const std::string& s);
std::vector<ShapeFamily> all_shape_families();
std::vector<Texture> all_textures();

struct SyntheticSpec {
  int size = 64;
  int min_shapes = 1;
  int max_shapes = 2;
  std::vector<ShapeFamily> families = all_shape_families();
  std::vector<Texture> textures = all_textures();
  // Foreground color = lerp(background palette color, distinct color, s),
  // with s drawn uniformly from [separation_min, separation_max]. At s = 0
  // the object is painted in a background palette color.
  double separation_min = 0.5;
  double separation_max = 1.0;
  // Shape bounding-box side as a fraction of the image side.
  double min_extent = 0.25;
  double max_extent = 0.55;
  int count = 200;
  std::uint64_t seed = 1;
};

struct SyntheticSample {
  LabeledSample sample;
  ShapeFamily family = ShapeFamily::kRectangle;  // first shape drawn
  Texture texture = Texture::kFlat;
  double separation = 0.0;
};

// Sample i depends only on (seed, i).
std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec);
std::vector<LabeledSample> generate_synthetic_dataset(const SyntheticSpec& spec);

// Retrieval benchmark: one object per image, class k fixes the shape family
// and object color, backgrounds are randomized per image.
struct RetrievalSetSpec {
  int classes = 10;
  int per_class = 20;
  int size = 64;
  double min_extent = 0.25;
  double max_extent = 0.45;
  std::uint64_t seed = 1;
};
std::vector<LabeledSample> generate_retrieval_set(const RetrievalSetSpec& spec);

// On-disk layout: images/<id>.png, masks/<id>.png (8-bit gray labels) and a
// tab-separated manifest.tsv with header "image\tmask\tclass".
void write_dataset(const std::filesystem::path& dir, std::span<const LabeledSample> samples);
std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir);

LabeledSample mirror(const LabeledSample& s);
LabeledSample augment_mirror(const LabeledSample& s, std::mt19937_64& rng, double mirror_prob = 0.5);

struct TrainConfig {
  int batch_size = 10;
  double base_lr = 0.001;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 2000;
  int total_iterations = 10000;
  double mirror_prob = 0.5;
  std::uint64_t seed = 1;
  int input_size = 321;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Reduction reduction = Reduction::kMean;
  std::array<float, 3> means = kDefaultMeans;
  int threads = 1;
};

double lr_schedule(const TrainConfig& cfg, std::int64_t iteration);

struct LossRecord {
  std::int64_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
};

using TrainCallback = std::function<void(const LossRecord&)>;

// Runs iterations [net.iteration(), cfg.total_iterations). Every random draw
// comes from (seed, stream, iteration, slot), so a run resumed from a saved
// archive replays exactly what an uninterrupted run would have done.
std::vector<LossRecord> train(Network& net, std::span<const LabeledSample> dataset, const TrainConfig& cfg,
                              const TrainCallback& on_step = {});

// Label map resampled to the logit grid (nearest, corner-aligned).
LabelMap downsample_labels(const LabelMap& label, int rows, int cols);

}  // namespace pixobj
