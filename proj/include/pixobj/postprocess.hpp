#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pixobj/grid.hpp"

namespace pixobj {

// Inclusive pixel coordinates.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }
  std::int64_t area() const { return static_cast<std::int64_t>(width()) * height(); }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Foreground iff probability > 0.5; exactly 0.5 is background.
BinaryMask threshold_map(const ObjectnessMap& map);

enum class Connectivity { kFour = 4, kEight = 8 };

struct Components {
  Grid<int> labels;                 // 0 = background, regions numbered 1..k in raster order of first pixel
  std::vector<std::int64_t> areas;  // areas[k - 1] is the area of region k
  int count() const { return static_cast<int>(areas.size()); }
};

Components connected_components(const BinaryMask& mask, Connectivity connectivity = Connectivity::kEight);

// Largest region (ties go to the smaller label) if its area is strictly
// greater than min_area_frac of the image, else nothing.
std::optional<BinaryMask> largest_foreground(const BinaryMask& mask, double min_area_frac = 0.06,
                                             Connectivity connectivity = Connectivity::kEight);

std::optional<BBox> tight_bbox(const BinaryMask& mask);

BinaryMask rasterize(const BBox& box, int rows, int cols);

}  // namespace pixobj
