#pragma once

#include <optional>
#include <vector>

#include "pixobj/grid.hpp"
#include "pixobj/image.hpp"

namespace pixobj {

// Non-negative per-pixel carving cost.
class EnergyMap : public Grid<double> {
 public:
  using Grid::Grid;
  explicit EnergyMap(Grid<double> g) : Grid(std::move(g)) {}
};

enum class SeamOrientation { kVertical, kHorizontal };

// Vertical: index[r] is the column removed in row r. Horizontal: index[c] is
// the row removed in column c.
struct Seam {
  SeamOrientation orientation = SeamOrientation::kVertical;
  std::vector<int> index;
};

double luminance(const RgbImage& img, int r, int c);

// |d/dx| + |d/dy| of luminance, central differences, replicated borders.
EnergyMap gradient_energy(const RgbImage& image);

// (e + 1) * 2 inside the foreground, e elsewhere.
EnergyMap boost_foreground(const EnergyMap& e, const BinaryMask& fg);

// Minimum-cost 8-connected monotone seam by dynamic programming. Ties go to
// the smaller index at every choice.
Seam min_seam(const EnergyMap& e, SeamOrientation orientation);
double seam_cost(const EnergyMap& e, const Seam& seam);
bool seam_is_connected(const Seam& seam);

RgbImage remove_seam(const RgbImage& image, const Seam& seam);
BinaryMask remove_seam(const BinaryMask& mask, const Seam& seam);

struct RetargetOptions {
  // Apply the foreground boost; when false the mask is only carried along.
  bool boost = true;
};

struct RetargetResult {
  RgbImage image;
  std::optional<BinaryMask> mask;  // input mask carved alongside
  std::vector<Seam> seams;         // in removal order
};

// Removes vertical seams until the width reaches target_cols, then
// horizontal seams until the height reaches target_rows. Energy is
// recomputed from the current image after every removal.
RetargetResult retarget(const RgbImage& image, const std::optional<BinaryMask>& fg, int target_rows, int target_cols,
                        const RetargetOptions& opt = {});

}  // namespace pixobj
