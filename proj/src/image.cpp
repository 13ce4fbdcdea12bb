#include "pixobj/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace pixobj {

RgbImage::RgbImage(int rows, int cols, float fill) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw ContractViolation("RgbImage: negative dimensions");
  data_.assign(static_cast<std::size_t>(3) * rows * cols, fill);
}

void RgbImage::set_pixel(int r, int c, const std::array<float, 3>& rgb) {
  for (int ch = 0; ch < 3; ++ch) (*this)(ch, r, c) = rgb[ch];
}

Tensor image_to_tensor(const RgbImage& img, const std::array<float, 3>& means) {
  Tensor t(Shape{1, 3, img.rows(), img.cols()});
  const std::size_t plane = static_cast<std::size_t>(img.rows()) * img.cols();
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) t.data()[ch * plane + i] = img.storage()[ch * plane + i] - means[ch];
  }
  return t;
}

RgbImage resize_bilinear(const RgbImage& img, int rows, int cols) {
  if (rows == img.rows() && cols == img.cols()) return img;
  Tensor t(Shape{1, 3, img.rows(), img.cols()}, img.storage());
  Tensor r = bilinear_resize(t, rows, cols);
  RgbImage out(rows, cols);
  out.storage() = r.storage();
  return out;
}

RgbImage crop(const RgbImage& img, int y0, int x0, int rows, int cols) {
  if (y0 < 0 || x0 < 0 || rows < 1 || cols < 1 || y0 + rows > img.rows() || x0 + cols > img.cols()) {
    throw ContractViolation("crop: region outside image");
  }
  RgbImage out(rows, cols);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) out(ch, r, c) = img(ch, y0 + r, x0 + c);
  return out;
}

RgbImage flip_horizontal(const RgbImage& img) {
  RgbImage out(img.rows(), img.cols());
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < img.rows(); ++r)
      for (int c = 0; c < img.cols(); ++c) out(ch, r, c) = img(ch, r, img.cols() - 1 - c);
  return out;
}

RgbImage transpose(const RgbImage& img) {
  RgbImage out(img.cols(), img.rows());
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < img.rows(); ++r)
      for (int c = 0; c < img.cols(); ++c) out(ch, c, r) = img(ch, r, c);
  return out;
}

std::uint8_t to_byte(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  int rows = 0;
  int cols = 0;
  int channels = 0;  // 1 or 3 after normalization
  std::vector<std::uint8_t> pixels;  // interleaved
};

Decoded decode_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for reading");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Decoded d;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  d.rows = static_cast<int>(png_get_image_height(png, info));
  d.cols = static_cast<int>(png_get_image_width(png, info));
  d.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  d.pixels.resize(stride * d.rows);
  rows.resize(d.rows);
  for (int r = 0; r < d.rows; ++r) rows[r] = d.pixels.data() + stride * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (d.channels != 1 && d.channels != 3) throw IoError("unsupported PNG channel layout in '" + path.string() + "'");
  return d;
}

void encode_png(const std::filesystem::path& path, int rows, int cols, int channels,
                const std::vector<std::uint8_t>& pixels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  std::vector<png_bytep> row_ptrs(rows);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, cols, rows, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(cols) * channels;
  for (int r = 0; r < rows; ++r) row_ptrs[r] = const_cast<png_bytep>(pixels.data() + stride * r);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  const Decoded d = decode_png(path);
  RgbImage img(d.rows, d.cols);
  for (int r = 0; r < d.rows; ++r) {
    for (int c = 0; c < d.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const int src_ch = d.channels == 3 ? ch : 0;
        img(ch, r, c) = d.pixels[(static_cast<std::size_t>(r) * d.cols + c) * d.channels + src_ch] / 255.0f;
      }
    }
  }
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(img.rows()) * img.cols() * 3);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c)
      for (int ch = 0; ch < 3; ++ch) px[(static_cast<std::size_t>(r) * img.cols() + c) * 3 + ch] = to_byte(img(ch, r, c));
  encode_png(path, img.rows(), img.cols(), 3, px);
}

Grid<std::uint8_t> read_png_gray(const std::filesystem::path& path) {
  const Decoded d = decode_png(path);
  if (d.channels != 1) throw IoError("expected single-channel PNG: '" + path.string() + "'");
  return Grid<std::uint8_t>(d.rows, d.cols, d.pixels);
}

void write_png_gray(const std::filesystem::path& path, const Grid<std::uint8_t>& img) {
  encode_png(path, img.rows(), img.cols(), 1, img.storage());
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  Grid<std::uint8_t> g(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) g.data()[i] = mask.data()[i] ? 255 : 0;
  write_png_gray(path, g);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  const Grid<std::uint8_t> g = read_png_gray(path);
  BinaryMask m(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) m.data()[i] = g.data()[i] >= 128 ? 1 : 0;
  return m;
}

Grid<std::uint8_t> to_gray8(const Grid<float>& map) {
  Grid<std::uint8_t> g(map.rows(), map.cols());
  for (std::size_t i = 0; i < map.size(); ++i) g.data()[i] = to_byte(map.data()[i]);
  return g;
}

}  // namespace pixobj
