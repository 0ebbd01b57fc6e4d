// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mixdet {

/// @brief Axis-aligned box in normalized corner form [x0, y0, x1, y1].
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double w() const { return x1 - x0; }
  double h() const { return y1 - y0; }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  double area() const { return (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0; }

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
};

/// @brief Intersection over union. Degenerate (zero-area) boxes give 0.
inline double iou(const Box& a, const Box& b) {
  const double ix0 = std::max(a.x0, b.x0);
  const double iy0 = std::max(a.y0, b.y0);
  const double ix1 = std::min(a.x1, b.x1);
  const double iy1 = std::min(a.y1, b.y1);
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  const double inter = (ix1 - ix0) * (iy1 - iy0);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

/// @brief One pyramid level of the anchor grid.
struct AnchorLevelSpec {
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  double scale = 0.0;                  ///< base box side, normalized
  std::vector<double> aspect_ratios;   ///< one box per ratio: w = s*sqrt(ar), h = s/sqrt(ar)
};

/// @brief The fixed anchor geometry, indexed by k = (level, row, col, box).
///
/// Flat index k enumerates (p, r, c, d) in row-major order:
/// k = level_offset(p) + (r * W_p + c) * D_p + d.
struct DefaultBoxSet {
  struct Level {
    std::size_t grid_height = 0;
    std::size_t grid_width = 0;
    std::size_t boxes_per_cell = 0;
    std::size_t offset = 0;  ///< flat index of (r=0, c=0, d=0)
  };
  struct Index {
    std::size_t level = 0, row = 0, col = 0, box = 0;
  };

  std::vector<Level> levels;
  std::vector<Box> boxes;  ///< size K, corner form

  std::size_t size() const { return boxes.size(); }

  std::size_t flat(const Index& i) const {
    const Level& l = levels[i.level];
    return l.offset + (i.row * l.grid_width + i.col) * l.boxes_per_cell + i.box;
  }

  Index unflat(std::size_t k) const {
    std::size_t p = levels.size() - 1;
    while (levels[p].offset > k) --p;
    const Level& l = levels[p];
    std::size_t rem = k - l.offset;
    Index idx;
    idx.level = p;
    idx.box = rem % l.boxes_per_cell;
    rem /= l.boxes_per_cell;
    idx.col = rem % l.grid_width;
    idx.row = rem / l.grid_width;
    return idx;
  }
};

/// @brief Build the anchor set for a list of pyramid levels.
///
/// Centers sit at cell midpoints: cx = (c + 0.5)/W, cy = (r + 0.5)/H. Box
/// sides are scale*sqrt(ar) by scale/sqrt(ar); boxes may extend past the
/// image edge and are not clipped (decoding clips instead).
inline DefaultBoxSet build_default_boxes(const std::vector<AnchorLevelSpec>& spec) {
  if (spec.empty()) throw std::invalid_argument("build_default_boxes: no levels");
  DefaultBoxSet out;
  std::size_t offset = 0;
  for (const AnchorLevelSpec& ls : spec) {
    if (ls.scale <= 0.0 || ls.scale > 1.0)
      throw std::invalid_argument("build_default_boxes: scale must be in (0,1]");
    if (ls.grid_height == 0 || ls.grid_width == 0 || ls.aspect_ratios.empty())
      throw std::invalid_argument("build_default_boxes: empty level");
    DefaultBoxSet::Level lvl;
    lvl.grid_height = ls.grid_height;
    lvl.grid_width = ls.grid_width;
    lvl.boxes_per_cell = ls.aspect_ratios.size();
    lvl.offset = offset;
    out.levels.push_back(lvl);
    for (std::size_t r = 0; r < ls.grid_height; ++r) {
      for (std::size_t c = 0; c < ls.grid_width; ++c) {
        const double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(ls.grid_width);
        const double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(ls.grid_height);
        for (double ar : ls.aspect_ratios) {
          if (ar <= 0.0) throw std::invalid_argument("build_default_boxes: aspect ratio <= 0");
          const double w = ls.scale * std::sqrt(ar);
          const double h = ls.scale / std::sqrt(ar);
          out.boxes.push_back(Box::from_center(cx, cy, w, h));
        }
      }
    }
    offset += ls.grid_height * ls.grid_width * ls.aspect_ratios.size();
  }
  return out;
}

}  // namespace mixdet
