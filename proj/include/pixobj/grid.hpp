#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pixobj/errors.hpp"

namespace pixobj {

// Dense row-major 2-D map. Base for masks, label maps, energy and
// probability maps.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) {
      throw ContractViolation("Grid: negative dimensions " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }
  Grid(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
      throw ContractViolation("Grid: data length does not match " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename U>
  bool same_dims(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// Hard foreground mask, one byte per pixel: 0 background, 1 foreground.
class BinaryMask : public Grid<std::uint8_t> {
 public:
  using Grid::Grid;
  explicit BinaryMask(Grid<std::uint8_t> g) : Grid(std::move(g)) {}

  std::int64_t count() const {
    return std::count_if(data().begin(), data().end(), [](std::uint8_t v) { return v != 0; });
  }
  bool test(int r, int c) const { return (*this)(r, c) != 0; }
};

// Training label alphabet.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kObject = 1;
inline constexpr std::uint8_t kIgnore = 255;

// Per-pixel training labels over {0, 1, 255}.
class LabelMap : public Grid<std::uint8_t> {
 public:
  using Grid::Grid;
  explicit LabelMap(Grid<std::uint8_t> g) : Grid(std::move(g)) {}
};

// Per-pixel foreground probability in [0, 1].
class ObjectnessMap : public Grid<float> {
 public:
  using Grid::Grid;
  explicit ObjectnessMap(Grid<float> g) : Grid(std::move(g)) {}
};

}  // namespace pixobj
