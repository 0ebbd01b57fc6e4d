// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mixdet/detector.hpp"

namespace mixdet {

/// @brief Binary per-location objectness: 1 iff the argmax class is foreground.
struct ObjectnessMask {
  std::vector<std::uint8_t> bits;

  std::size_t count() const {
    return static_cast<std::size_t>(std::accumulate(bits.begin(), bits.end(), std::size_t{0}));
  }
};

/// @brief The three disjoint mix-consistency categories per location.
struct TypeMasks {
  std::vector<std::uint8_t> m_I;    ///< both sources foreground
  std::vector<std::uint8_t> m_IIA;  ///< only source A foreground
  std::vector<std::uint8_t> m_IIB;  ///< only source B foreground
};

/// @brief Background elimination: mask out locations whose argmax is the
/// background class. Ties with background resolve to background.
inline ObjectnessMask objectness_mask(const PredictionGrid& grid) {
  ObjectnessMask m;
  m.bits.resize(grid.K);
  for (std::size_t k = 0; k < grid.K; ++k) {
    const double* row = grid.cls_row(k);
    std::size_t best = 0;
    for (std::size_t c = 1; c <= grid.C; ++c)
      if (row[c] > row[best]) best = c;  // strict: ties keep background
    m.bits[k] = best != 0 ? 1 : 0;
  }
  return m;
}

/// @brief Combine two objectness masks into the Type-I / Type-II partition.
inline TypeMasks type_masks(const ObjectnessMask& mA, const ObjectnessMask& mB) {
  if (mA.bits.size() != mB.bits.size())
    throw std::invalid_argument("type_masks: length mismatch");
  const std::size_t K = mA.bits.size();
  TypeMasks t;
  t.m_I.resize(K);
  t.m_IIA.resize(K);
  t.m_IIB.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const bool a = mA.bits[k] != 0, b = mB.bits[k] != 0;
    t.m_I[k] = (a && b) ? 1 : 0;
    t.m_IIA[k] = (a && !b) ? 1 : 0;
    t.m_IIB[k] = (!a && b) ? 1 : 0;
  }
  return t;
}

inline std::size_t mask_count(const std::vector<std::uint8_t>& bits) {
  return static_cast<std::size_t>(std::accumulate(bits.begin(), bits.end(), std::size_t{0}));
}

}  // namespace mixdet
