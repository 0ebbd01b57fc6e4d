// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mixdet/boxes.hpp"

namespace mixdet {

/// Probability floor used inside every log() in this library.
inline constexpr double kProbEps = 1e-7;

/// @brief Full detector output: a class-probability vector and 4 offsets at
/// every anchor location.
///
/// cls is K x (C+1) row-major, each row a softmax output with column 0 the
/// background class. loc is K x 4 row-major with offsets
/// [dcx, dcy, dw, dh] relative to the matching default box.
struct PredictionGrid {
  std::size_t K = 0;  ///< anchor locations
  std::size_t C = 0;  ///< foreground classes (cls rows have C+1 entries)
  std::vector<double> cls;
  std::vector<double> loc;

  PredictionGrid() = default;
  PredictionGrid(std::size_t k, std::size_t c)
      : K(k), C(c), cls(k * (c + 1), 0.0), loc(k * 4, 0.0) {}

  double* cls_row(std::size_t k) { return cls.data() + k * (C + 1); }
  const double* cls_row(std::size_t k) const { return cls.data() + k * (C + 1); }
  double* loc_row(std::size_t k) { return loc.data() + k * 4; }
  const double* loc_row(std::size_t k) const { return loc.data() + k * 4; }
};

/// @brief Gradient of a scalar loss w.r.t. a PredictionGrid, same layout.
struct GridGrad {
  std::size_t K = 0;
  std::size_t C = 0;
  std::vector<double> cls;
  std::vector<double> loc;

  GridGrad() = default;
  GridGrad(std::size_t k, std::size_t c)
      : K(k), C(c), cls(k * (c + 1), 0.0), loc(k * 4, 0.0) {}

  static GridGrad zeros_like(const PredictionGrid& g) { return GridGrad(g.K, g.C); }

  double* cls_row(std::size_t k) { return cls.data() + k * (C + 1); }
  double* loc_row(std::size_t k) { return loc.data() + k * 4; }

  void add_scaled(const GridGrad& o, double s) {
    for (std::size_t i = 0; i < cls.size(); ++i) cls[i] += s * o.cls[i];
    for (std::size_t i = 0; i < loc.size(); ++i) loc[i] += s * o.loc[i];
  }
};

/// @brief Ground-truth objects of one image. class_id is 1-based; 0 is background.
struct GtObject {
  int class_id = 1;
  Box box;
};

struct Annotation {
  std::vector<GtObject> objects;
};

/// @brief One decoded detection.
struct Detection {
  int class_id = 0;  ///< foreground class in [1, C]
  double score = 0.0;
  Box box;
};

/// @brief SSD offset encoding of a ground-truth box against an anchor.
inline std::array<double, 4> encode_box(const Box& gt, const Box& anchor) {
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h())};
}

/// @brief Inverse of encode_box. Not clipped; see decode_predictions.
inline Box decode_box(const double* off, const Box& anchor) {
  const double cx = off[0] * anchor.w() + anchor.cx();
  const double cy = off[1] * anchor.h() + anchor.cy();
  const double w = std::exp(off[2]) * anchor.w();
  const double h = std::exp(off[3]) * anchor.h();
  return Box::from_center(cx, cy, w, h);
}

/// @brief Per-anchor training targets produced by encode_gt.
struct EncodedTargets {
  std::vector<int> cls;             ///< K class ids, 0 = background
  std::vector<double> loc;          ///< K x 4 encoded offsets (zero for background)
  std::vector<std::uint8_t> positive;  ///< K bits
  std::size_t num_positive = 0;
};

/// @brief SSD-style matching: IoU >= threshold, plus each ground-truth box
/// claims its best-IoU anchor even below threshold.
inline EncodedTargets encode_gt(const Annotation& ann, const DefaultBoxSet& boxes,
                                double iou_threshold = 0.5) {
  if (iou_threshold <= 0.0 || iou_threshold >= 1.0)
    throw std::invalid_argument("encode_gt: iou_threshold must be in (0,1)");
  const std::size_t K = boxes.size();
  EncodedTargets t;
  t.cls.assign(K, 0);
  t.loc.assign(K * 4, 0.0);
  t.positive.assign(K, 0);

  const std::size_t n = ann.objects.size();
  if (n == 0) return t;

  // Assign each anchor to its best-IoU ground truth when above threshold.
  std::vector<int> assigned(K, -1);
  for (std::size_t k = 0; k < K; ++k) {
    double best = 0.0;
    int best_g = -1;
    for (std::size_t g = 0; g < n; ++g) {
      const double v = iou(boxes.boxes[k], ann.objects[g].box);
      if (v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best >= iou_threshold) assigned[k] = best_g;
  }
  // Force-match each ground truth to its single best anchor (ties: lower k).
  for (std::size_t g = 0; g < n; ++g) {
    double best = -1.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double v = iou(boxes.boxes[k], ann.objects[g].box);
      if (v > best) {
        best = v;
        best_k = k;
      }
    }
    assigned[best_k] = static_cast<int>(g);
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (assigned[k] < 0) continue;
    const GtObject& obj = ann.objects[static_cast<std::size_t>(assigned[k])];
    t.cls[k] = obj.class_id;
    t.positive[k] = 1;
    ++t.num_positive;
    const std::array<double, 4> off = encode_box(obj.box, boxes.boxes[k]);
    std::copy(off.begin(), off.end(), t.loc.begin() + static_cast<std::ptrdiff_t>(k * 4));
  }
  return t;
}

/// @brief Decode every foreground class at every location. Boxes are clipped
/// to [0,1]; background is excluded. Thresholding/NMS happen downstream.
inline std::vector<Detection> decode_predictions(const PredictionGrid& grid,
                                                 const DefaultBoxSet& boxes) {
  if (grid.K != boxes.size()) throw std::invalid_argument("decode_predictions: K mismatch");
  std::vector<Detection> out;
  out.reserve(grid.K * grid.C);
  for (std::size_t k = 0; k < grid.K; ++k) {
    Box b = decode_box(grid.loc_row(k), boxes.boxes[k]);
    b.x0 = std::clamp(b.x0, 0.0, 1.0);
    b.y0 = std::clamp(b.y0, 0.0, 1.0);
    b.x1 = std::clamp(b.x1, 0.0, 1.0);
    b.y1 = std::clamp(b.y1, 0.0, 1.0);
    const double* row = grid.cls_row(k);
    for (std::size_t c = 1; c <= grid.C; ++c)
      out.push_back({static_cast<int>(c), row[c], b});
  }
  return out;
}

/// @brief Pick the hardest negatives: the non-positive locations with the
/// largest background cross-entropy, count = ratio x positives (at least 1
/// when there are no positives). Ties break toward the lower index.
inline std::vector<std::size_t> mine_negatives(const PredictionGrid& grid,
                                               const EncodedTargets& t,
                                               double neg_pos_ratio = 3.0) {
  std::vector<std::size_t> cand;
  cand.reserve(grid.K);
  for (std::size_t k = 0; k < grid.K; ++k)
    if (!t.positive[k]) cand.push_back(k);
  std::size_t want = t.num_positive == 0
                         ? 1
                         : static_cast<std::size_t>(neg_pos_ratio * static_cast<double>(t.num_positive));
  want = std::min(want, cand.size());
  std::vector<double> loss(grid.K, 0.0);
  for (std::size_t k : cand) loss[k] = -std::log(std::max(grid.cls_row(k)[0], kProbEps));
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    if (loss[a] != loss[b]) return loss[a] > loss[b];
    return a < b;
  });
  cand.resize(want);
  std::sort(cand.begin(), cand.end());
  return cand;
}

namespace detail {

inline double smooth_l1(double x) {
  const double ax = std::fabs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

inline double smooth_l1_grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

}  // namespace detail

/// @brief Supervised multibox loss with a caller-fixed negative selection.
///
/// cls term: cross-entropy at positives and the given negatives; loc term:
/// smooth-L1 over positives only; both normalized by max(1, #positives).
/// If grad is non-null the gradient w.r.t. the grid entries is accumulated
/// into it (the negative selection is treated as a constant).
inline double multibox_loss_with_grad(const PredictionGrid& grid, const EncodedTargets& t,
                                      const std::vector<std::size_t>& negatives,
                                      GridGrad* grad = nullptr) {
  const double norm = static_cast<double>(std::max<std::size_t>(1, t.num_positive));
  double cls_sum = 0.0, loc_sum = 0.0;
  auto cross_entropy = [&](std::size_t k, std::size_t target) {
    const double p = grid.cls_row(k)[target];
    cls_sum += -std::log(std::max(p, kProbEps));
    if (grad && p >= kProbEps) grad->cls_row(k)[target] += -1.0 / p / norm;
  };
  for (std::size_t k = 0; k < grid.K; ++k) {
    if (!t.positive[k]) continue;
    cross_entropy(k, static_cast<std::size_t>(t.cls[k]));
    const double* pl = grid.loc_row(k);
    const double* tl = t.loc.data() + k * 4;
    for (int j = 0; j < 4; ++j) {
      const double x = pl[j] - tl[j];
      loc_sum += detail::smooth_l1(x);
      if (grad) grad->loc_row(k)[j] += detail::smooth_l1_grad(x) / norm;
    }
  }
  for (std::size_t k : negatives) cross_entropy(k, 0);
  return (cls_sum + loc_sum) / norm;
}

/// @brief Supervised multibox loss, mining negatives internally.
inline double multibox_loss(const PredictionGrid& grid, const EncodedTargets& t,
                            double neg_pos_ratio = 3.0) {
  return multibox_loss_with_grad(grid, t, mine_negatives(grid, t, neg_pos_ratio), nullptr);
}

}  // namespace mixdet
