#include "pixobj/retarget.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pixobj {

double luminance(const RgbImage& img, int r, int c) {
  return 0.299 * img(0, r, c) + 0.587 * img(1, r, c) + 0.114 * img(2, r, c);
}

EnergyMap gradient_energy(const RgbImage& image) {
  const int rows = image.rows();
  const int cols = image.cols();
  Grid<double> lum(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) lum(r, c) = luminance(image, r, c);
  EnergyMap e(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int up = std::max(r - 1, 0);
    const int down = std::min(r + 1, rows - 1);
    for (int c = 0; c < cols; ++c) {
      const int left = std::max(c - 1, 0);
      const int right = std::min(c + 1, cols - 1);
      const double dx = (lum(r, right) - lum(r, left)) / 2.0;
      const double dy = (lum(down, c) - lum(up, c)) / 2.0;
      e(r, c) = std::abs(dx) + std::abs(dy);
    }
  }
  return e;
}

EnergyMap boost_foreground(const EnergyMap& e, const BinaryMask& fg) {
  if (!e.same_dims(fg)) {
    throw ContractViolation("boost_foreground: energy " + std::to_string(e.rows()) + "x" + std::to_string(e.cols()) +
                            " vs mask " + std::to_string(fg.rows()) + "x" + std::to_string(fg.cols()));
  }
  EnergyMap out = e;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (fg.data()[i]) out.data()[i] = (e.data()[i] + 1.0) * 2.0;
  }
  return out;
}

namespace {

std::vector<int> vertical_seam(const Grid<double>& e) {
  const int rows = e.rows();
  const int cols = e.cols();
  Grid<double> m(rows, cols);
  for (int c = 0; c < cols; ++c) m(0, c) = e(0, c);
  for (int r = 1; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double best = m(r - 1, c);
      if (c > 0) best = std::min(best, m(r - 1, c - 1));
      if (c + 1 < cols) best = std::min(best, m(r - 1, c + 1));
      m(r, c) = e(r, c) + best;
    }
  }
  std::vector<int> seam(static_cast<std::size_t>(rows));
  int col = 0;
  for (int c = 1; c < cols; ++c)
    if (m(rows - 1, c) < m(rows - 1, col)) col = c;
  seam[static_cast<std::size_t>(rows - 1)] = col;
  for (int r = rows - 1; r > 0; --r) {
    int pick = -1;
    for (int c = std::max(col - 1, 0); c <= std::min(col + 1, cols - 1); ++c) {
      if (pick < 0 || m(r - 1, c) < m(r - 1, pick)) pick = c;
    }
    col = pick;
    seam[static_cast<std::size_t>(r - 1)] = col;
  }
  return seam;
}

template <typename G>
void check_seam(const G& g, const Seam& seam) {
  const bool vertical = seam.orientation == SeamOrientation::kVertical;
  const int along = vertical ? g.rows() : g.cols();
  const int across = vertical ? g.cols() : g.rows();
  if (static_cast<int>(seam.index.size()) != along) {
    throw ContractViolation("remove_seam: seam length " + std::to_string(seam.index.size()) + " != " +
                            std::to_string(along));
  }
  if (across <= 1) throw ContractViolation("remove_seam: dimension would drop below 1");
  for (int i : seam.index)
    if (i < 0 || i >= across) throw ContractViolation("remove_seam: seam index out of range");
  if (!seam_is_connected(seam)) throw ContractViolation("remove_seam: seam is not 8-connected");
}

}  // namespace

Seam min_seam(const EnergyMap& e, SeamOrientation orientation) {
  const bool vertical = orientation == SeamOrientation::kVertical;
  const int across = vertical ? e.cols() : e.rows();
  if (across < 2 || e.empty()) throw ContractViolation("min_seam: map must be at least 2 pixels across the seam");
  Seam s;
  s.orientation = orientation;
  s.index = vertical ? vertical_seam(e) : vertical_seam(transpose_grid(static_cast<const Grid<double>&>(e)));
  return s;
}

double seam_cost(const EnergyMap& e, const Seam& seam) {
  double cost = 0.0;
  for (std::size_t i = 0; i < seam.index.size(); ++i) {
    const int k = static_cast<int>(i);
    cost += seam.orientation == SeamOrientation::kVertical ? e(k, seam.index[i]) : e(seam.index[i], k);
  }
  return cost;
}

bool seam_is_connected(const Seam& seam) {
  for (std::size_t i = 1; i < seam.index.size(); ++i)
    if (std::abs(seam.index[i] - seam.index[i - 1]) > 1) return false;
  return true;
}

RgbImage remove_seam(const RgbImage& image, const Seam& seam) {
  check_seam(Grid<float>(image.rows(), image.cols()), seam);
  const bool vertical = seam.orientation == SeamOrientation::kVertical;
  RgbImage out(vertical ? image.rows() : image.rows() - 1, vertical ? image.cols() - 1 : image.cols());
  for (int ch = 0; ch < 3; ++ch) {
    if (vertical) {
      for (int r = 0; r < image.rows(); ++r) {
        const int skip = seam.index[static_cast<std::size_t>(r)];
        for (int c = 0, o = 0; c < image.cols(); ++c)
          if (c != skip) out(ch, r, o++) = image(ch, r, c);
      }
    } else {
      for (int c = 0; c < image.cols(); ++c) {
        const int skip = seam.index[static_cast<std::size_t>(c)];
        for (int r = 0, o = 0; r < image.rows(); ++r)
          if (r != skip) out(ch, o++, c) = image(ch, r, c);
      }
    }
  }
  return out;
}

BinaryMask remove_seam(const BinaryMask& mask, const Seam& seam) {
  check_seam(mask, seam);
  const bool vertical = seam.orientation == SeamOrientation::kVertical;
  BinaryMask out(vertical ? mask.rows() : mask.rows() - 1, vertical ? mask.cols() - 1 : mask.cols());
  if (vertical) {
    for (int r = 0; r < mask.rows(); ++r) {
      const int skip = seam.index[static_cast<std::size_t>(r)];
      for (int c = 0, o = 0; c < mask.cols(); ++c)
        if (c != skip) out(r, o++) = mask(r, c);
    }
  } else {
    for (int c = 0; c < mask.cols(); ++c) {
      const int skip = seam.index[static_cast<std::size_t>(c)];
      for (int r = 0, o = 0; r < mask.rows(); ++r)
        if (r != skip) out(o++, c) = mask(r, c);
    }
  }
  return out;
}

RetargetResult retarget(const RgbImage& image, const std::optional<BinaryMask>& fg, int target_rows, int target_cols,
                        const RetargetOptions& opt) {
  if (target_rows < 1 || target_cols < 1 || target_rows > image.rows() || target_cols > image.cols()) {
    throw ContractViolation("retarget: targets " + std::to_string(target_rows) + "x" + std::to_string(target_cols) +
                            " must lie in [1, " + std::to_string(image.rows()) + "]x[1, " +
                            std::to_string(image.cols()) + "]");
  }
  if (fg && (fg->rows() != image.rows() || fg->cols() != image.cols())) {
    throw ContractViolation("retarget: mask dims differ from image dims");
  }
  RetargetResult res{image, fg, {}};
  auto step = [&](SeamOrientation o) {
    EnergyMap e = gradient_energy(res.image);
    if (res.mask && opt.boost) e = boost_foreground(e, *res.mask);
    Seam s = min_seam(e, o);
    res.image = remove_seam(res.image, s);
    if (res.mask) res.mask = remove_seam(*res.mask, s);
    res.seams.push_back(std::move(s));
  };
  while (res.image.cols() > target_cols) step(SeamOrientation::kVertical);
  while (res.image.rows() > target_rows) step(SeamOrientation::kHorizontal);
  return res;
}

}  // namespace pixobj
