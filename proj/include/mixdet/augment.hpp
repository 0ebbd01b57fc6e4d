// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mixdet/boxes.hpp"
#include "mixdet/detector.hpp"
#include "mixdet/random.hpp"
#include "mixdet/tensor.hpp"

namespace mixdet {

/// @brief Horizontal flip: column j -> W-1-j. Involution.
inline Tensor flip_image(const Tensor& img) {
  Tensor out(img.shape);
  const std::size_t C = img.channels(), H = img.height(), W = img.width();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = img.at(c, y, W - 1 - x);
  return out;
}

/// @brief Elementwise blend lam*A + (1-lam)*B.
///
/// lam = 1 returns A bitwise and lam = 0 returns B bitwise: for non-negative
/// pixel values, 1*a + 0*b == a exactly in IEEE arithmetic.
inline Tensor mix_images(const Tensor& a, const Tensor& b, double lam) {
  if (!a.same_shape(b)) throw std::invalid_argument("mix_images: shape mismatch");
  if (lam < 0.0 || lam > 1.0) throw std::invalid_argument("mix_images: lam outside [0,1]");
  Tensor out(a.shape);
  const double one_minus = 1.0 - lam;
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = lam * a.data[i] + one_minus * b.data[i];
  return out;
}

/// @brief Draw the mixing coefficient from Beta(alpha, alpha).
inline double sample_lambda(double alpha, RandomEngine& rng) {
  if (alpha <= 0.0) throw std::invalid_argument("sample_lambda: alpha must be > 0");
  double lam;
  do {
    lam = rng.beta(alpha, alpha);
  } while (lam <= 0.0 || lam >= 1.0);  // open interval; rejection fires ~never
  return lam;
}

/// @brief Precomputed location mapping for the horizontal-flip correspondence.
///
/// to[k] is the location that location k lands on under a horizontal flip:
/// same level and row, mirrored column, and the box template with identical
/// (w, h) in the mirrored cell. With centered same-shape templates this is the
/// same box index. Involution: to[to[k]] == k.
struct FlipMap {
  std::vector<std::size_t> to;
};

inline FlipMap build_flip_map(const DefaultBoxSet& boxes) {
  FlipMap m;
  m.to.resize(boxes.size());
  for (std::size_t p = 0; p < boxes.levels.size(); ++p) {
    const auto& lvl = boxes.levels[p];
    const std::size_t D = lvl.boxes_per_cell;
    for (std::size_t r = 0; r < lvl.grid_height; ++r) {
      for (std::size_t c = 0; c < lvl.grid_width; ++c) {
        const std::size_t mc = lvl.grid_width - 1 - c;
        for (std::size_t d = 0; d < D; ++d) {
          const std::size_t k = boxes.flat({p, r, c, d});
          const Box& src = boxes.boxes[k];
          // Find the unique mirror partner: same (w, h), mirrored center.
          std::size_t partner = D;
          for (std::size_t d2 = 0; d2 < D; ++d2) {
            const std::size_t k2 = boxes.flat({p, r, mc, d2});
            const Box& cand = boxes.boxes[k2];
            if (std::fabs(cand.w() - src.w()) < 1e-12 && std::fabs(cand.h() - src.h()) < 1e-12 &&
                std::fabs(cand.cx() - (1.0 - src.cx())) < 1e-12 &&
                std::fabs(cand.cy() - src.cy()) < 1e-12) {
              if (partner != D)
                throw std::invalid_argument("build_flip_map: ambiguous mirror partner");
              partner = d2;
            }
          }
          if (partner == D)
            throw std::invalid_argument("build_flip_map: anchor layout is not mirror-symmetric");
          m.to[k] = boxes.flat({p, r, mc, partner});
        }
      }
    }
  }
  return m;
}

/// @brief Re-index a prediction grid of a flipped image back onto the
/// original image's locations; dcx changes sign, everything else is copied.
inline PredictionGrid flip_grid_correspondence(const PredictionGrid& grid, const FlipMap& map) {
  if (map.to.size() != grid.K)
    throw std::invalid_argument("flip_grid_correspondence: K mismatch");
  PredictionGrid out(grid.K, grid.C);
  for (std::size_t k = 0; k < grid.K; ++k) {
    const std::size_t k2 = map.to[k];
    const double* crow = grid.cls_row(k2);
    double* orow = out.cls_row(k);
    for (std::size_t c = 0; c <= grid.C; ++c) orow[c] = crow[c];
    const double* lrow = grid.loc_row(k2);
    double* olrow = out.loc_row(k);
    olrow[0] = -lrow[0];
    olrow[1] = lrow[1];
    olrow[2] = lrow[2];
    olrow[3] = lrow[3];
  }
  return out;
}

inline PredictionGrid flip_grid_correspondence(const PredictionGrid& grid,
                                               const DefaultBoxSet& boxes) {
  return flip_grid_correspondence(grid, build_flip_map(boxes));
}

/// @brief Adjoint of flip_grid_correspondence for gradients. The map is an
/// involution composed with a sign flip on dcx, so the transform is its own
/// adjoint and the same re-indexing applies.
inline GridGrad flip_grid_correspondence(const GridGrad& grad, const FlipMap& map) {
  if (map.to.size() != grad.K) throw std::invalid_argument("flip_grid_correspondence: K mismatch");
  GridGrad out(grad.K, grad.C);
  for (std::size_t k = 0; k < grad.K; ++k) {
    const std::size_t k2 = map.to[k];
    const double* crow = grad.cls.data() + k2 * (grad.C + 1);
    double* orow = out.cls_row(k);
    for (std::size_t c = 0; c <= grad.C; ++c) orow[c] = crow[c];
    const double* lrow = grad.loc.data() + k2 * 4;
    double* olrow = out.loc_row(k);
    olrow[0] = -lrow[0];
    olrow[1] = lrow[1];
    olrow[2] = lrow[2];
    olrow[3] = lrow[3];
  }
  return out;
}

enum class ShuffleKind {
  kHalfRotation,  ///< i -> (i + ceil(n/2)) mod n; deterministic derangement
  kRandomDerangement,
};

/// @brief Build the batch permutation used for the mixing partner.
inline std::vector<std::size_t> make_shuffle_perm(std::size_t n, ShuffleKind kind,
                                                  RandomEngine& rng) {
  if (n < 2) throw std::invalid_argument("make_shuffle_perm: batch size must be >= 2");
  std::vector<std::size_t> perm(n);
  if (kind == ShuffleKind::kHalfRotation) {
    const std::size_t shift = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) perm[i] = (i + shift) % n;
    return perm;
  }
  for (;;) {  // rejection-sample a derangement; success probability ~ 1/e
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) ok = ok && perm[i] != i;
    if (ok) return perm;
  }
}

/// @brief The quadruple of image batches used by one training step.
struct MixBatch {
  std::vector<Tensor> A;       ///< originals, labeled first
  std::vector<Tensor> A_flip;  ///< h(A)
  std::vector<Tensor> B;       ///< B[i] = A_flip[perm[i]]
  std::vector<Tensor> M;       ///< lam*A + (1-lam)*B
  double lam = 0.0;
  std::vector<std::size_t> perm;
  std::vector<std::uint8_t> labeled_flags;
};

/// @brief Assemble the mixing batch: A = labeled + unlabeled, flip, permute,
/// blend with one lambda for the whole batch.
///
/// lambda_override >= 0 bypasses sampling (testing hook; also drives the
/// degeneracy checks). The rng is consumed identically either way is NOT
/// guaranteed; callers that need stream stability must not toggle the
/// override between runs.
inline MixBatch assemble_mix_batch(const std::vector<Tensor>& labeled,
                                   const std::vector<Tensor>& unlabeled, double alpha,
                                   RandomEngine& rng,
                                   ShuffleKind shuffle = ShuffleKind::kHalfRotation,
                                   double lambda_override = -1.0) {
  MixBatch out;
  const std::size_t n = labeled.size() + unlabeled.size();
  if (n < 2) throw std::invalid_argument("assemble_mix_batch: batch size must be >= 2");
  out.A.reserve(n);
  for (const Tensor& t : labeled) out.A.push_back(t);
  for (const Tensor& t : unlabeled) out.A.push_back(t);
  out.labeled_flags.assign(n, 0);
  for (std::size_t i = 0; i < labeled.size(); ++i) out.labeled_flags[i] = 1;
  out.A_flip.reserve(n);
  for (const Tensor& t : out.A) out.A_flip.push_back(flip_image(t));
  out.perm = make_shuffle_perm(n, shuffle, rng);
  out.lam = lambda_override >= 0.0 ? lambda_override : sample_lambda(alpha, rng);
  out.B.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.B.push_back(out.A_flip[out.perm[i]]);
  out.M.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.M.push_back(mix_images(out.A[i], out.B[i], out.lam));
  return out;
}

}  // namespace mixdet
