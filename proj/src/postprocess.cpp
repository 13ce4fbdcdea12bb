#include "pixobj/postprocess.hpp"

#include <algorithm>

namespace pixobj {

BinaryMask threshold_map(const ObjectnessMap& map) {
  BinaryMask m(map.rows(), map.cols());
  for (std::size_t i = 0; i < map.size(); ++i) m.data()[i] = map.data()[i] > 0.5f ? 1 : 0;
  return m;
}

Components connected_components(const BinaryMask& mask, Connectivity connectivity) {
  Components out{Grid<int>(mask.rows(), mask.cols(), 0), {}};
  const int rows = mask.rows();
  const int cols = mask.cols();
  const bool eight = connectivity == Connectivity::kEight;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask.test(r, c) || out.labels(r, c) != 0) continue;
      const int label = out.count() + 1;
      std::int64_t area = 0;
      out.labels(r, c) = label;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0)) continue;
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || ny >= rows || nx < 0 || nx >= cols) continue;
            if (mask.test(ny, nx) && out.labels(ny, nx) == 0) {
              out.labels(ny, nx) = label;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
      out.areas.push_back(area);
    }
  }
  return out;
}

std::optional<BinaryMask> largest_foreground(const BinaryMask& mask, double min_area_frac, Connectivity connectivity) {
  const Components cc = connected_components(mask, connectivity);
  if (cc.count() == 0) return std::nullopt;
  // max_element returns the first maximum, i.e. the smallest label.
  const auto best = std::max_element(cc.areas.begin(), cc.areas.end());
  const double total = static_cast<double>(mask.rows()) * mask.cols();
  if (!(static_cast<double>(*best) > min_area_frac * total)) return std::nullopt;
  const int label = static_cast<int>(best - cc.areas.begin()) + 1;
  BinaryMask out(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = cc.labels.data()[i] == label ? 1 : 0;
  return out;
}

std::optional<BBox> tight_bbox(const BinaryMask& mask) {
  std::optional<BBox> box;
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      if (!mask.test(r, c)) continue;
      if (!box) {
        box = BBox{c, r, c, r};
      } else {
        box->x_min = std::min(box->x_min, c);
        box->x_max = std::max(box->x_max, c);
        box->y_min = std::min(box->y_min, r);
        box->y_max = std::max(box->y_max, r);
      }
    }
  }
  return box;
}

BinaryMask rasterize(const BBox& box, int rows, int cols) {
  BinaryMask m(rows, cols);
  for (int r = std::max(0, box.y_min); r <= std::min(rows - 1, box.y_max); ++r)
    for (int c = std::max(0, box.x_min); c <= std::min(cols - 1, box.x_max); ++c) m(r, c) = 1;
  return m;
}

}  // namespace pixobj
