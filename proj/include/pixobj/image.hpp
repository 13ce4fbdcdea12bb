#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <vector>

#include "pixobj/grid.hpp"
#include "pixobj/tensor.hpp"

namespace pixobj {

// Planar RGB image with channel values in [0, 1].
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int rows, int cols, float fill = 0.0f);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  float& operator()(int ch, int r, int c) { return data_[index(ch, r, c)]; }
  float operator()(int ch, int r, int c) const { return data_[index(ch, r, c)]; }
  std::array<float, 3> pixel(int r, int c) const { return {(*this)(0, r, c), (*this)(1, r, c), (*this)(2, r, c)}; }
  void set_pixel(int r, int c, const std::array<float, 3>& rgb);

  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t index(int ch, int r, int c) const {
    return (static_cast<std::size_t>(ch) * rows_ + r) * cols_ + c;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

inline constexpr std::array<float, 3> kDefaultMeans{0.5f, 0.5f, 0.5f};

// (1, 3, h, w) tensor with per-channel mean subtracted.
Tensor image_to_tensor(const RgbImage& img, const std::array<float, 3>& means = kDefaultMeans);

RgbImage resize_bilinear(const RgbImage& img, int rows, int cols);
RgbImage crop(const RgbImage& img, int y0, int x0, int rows, int cols);
RgbImage flip_horizontal(const RgbImage& img);
RgbImage transpose(const RgbImage& img);

// Nearest-neighbour resampling on the corner-aligned grid used by the
// bilinear resize, so resized labels line up with resized images.
template <typename G>
G resize_nearest(const G& src, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ContractViolation("resize_nearest: output size must be >= 1");
  G out(rows, cols);
  auto pick = [](int i, int in, int o) {
    if (o == 1) return 0;
    const double src_pos = static_cast<double>(i) * (in - 1) / (o - 1);
    return std::min(in - 1, static_cast<int>(src_pos + 0.5));
  };
  for (int r = 0; r < rows; ++r) {
    const int sr = pick(r, src.rows(), rows);
    for (int c = 0; c < cols; ++c) out(r, c) = src(sr, pick(c, src.cols(), cols));
  }
  return out;
}
template <typename G>
G flip_horizontal_grid(const G& src) {
  G out(src.rows(), src.cols());
  for (int r = 0; r < src.rows(); ++r)
    for (int c = 0; c < src.cols(); ++c) out(r, c) = src(r, src.cols() - 1 - c);
  return out;
}
template <typename G>
G transpose_grid(const G& src) {
  G out(src.cols(), src.rows());
  for (int r = 0; r < src.rows(); ++r)
    for (int c = 0; c < src.cols(); ++c) out(c, r) = src(r, c);
  return out;
}

// 8-bit PNG I/O. Gray inputs are replicated to RGB; alpha is dropped.
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);
Grid<std::uint8_t> read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Grid<std::uint8_t>& img);

// Mask as 0/255 PNG, probability map as 8-bit gray.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::filesystem::path& path);
Grid<std::uint8_t> to_gray8(const Grid<float>& map);

std::uint8_t to_byte(float v);

}  // namespace pixobj
