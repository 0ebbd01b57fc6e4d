// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#include <mixdet/masks.hpp>

#include <gtest/gtest.h>

#include <mixdet/random.hpp>

namespace {

using mixdet::ObjectnessMask;
using mixdet::PredictionGrid;
using mixdet::RandomEngine;
using mixdet::TypeMasks;

PredictionGrid grid_with_rows(const std::vector<std::vector<double>>& rows) {
  PredictionGrid g(rows.size(), rows[0].size() - 1);
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t c = 0; c < rows[k].size(); ++c) g.cls_row(k)[c] = rows[k][c];
  return g;
}

TEST(ObjectnessMask, ArgmaxRuleWithBackgroundTies) {
  PredictionGrid g = grid_with_rows({
      {0.6, 0.3, 0.1},  // background wins -> 0
      {0.2, 0.7, 0.1},  // foreground wins -> 1
      {0.2, 0.1, 0.7},  // other foreground -> 1
  });
  ObjectnessMask m = mixdet::objectness_mask(g);
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_EQ(m.count(), 2u);

  // Exact tie between background and a foreground class resolves to background.
  PredictionGrid tie = grid_with_rows({{0.5, 0.5}});
  EXPECT_EQ(mixdet::objectness_mask(tie).bits[0], 0);
}

TEST(TypeMasks, TruthTable) {
  ObjectnessMask a{{1, 1, 0, 0}};
  ObjectnessMask b{{1, 0, 1, 0}};
  TypeMasks t = mixdet::type_masks(a, b);
  EXPECT_EQ(t.m_I, (std::vector<std::uint8_t>{1, 0, 0, 0}));
  EXPECT_EQ(t.m_IIA, (std::vector<std::uint8_t>{0, 1, 0, 0}));
  EXPECT_EQ(t.m_IIB, (std::vector<std::uint8_t>{0, 0, 1, 0}));
}

TEST(TypeMasks, LengthMismatchThrows) {
  ObjectnessMask a{{1, 0}};
  ObjectnessMask b{{1}};
  EXPECT_THROW(mixdet::type_masks(a, b), std::invalid_argument);
}

TEST(TypeMasks, PartitionOnRandomGrids) {
  RandomEngine rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 64;
    ObjectnessMask a, b;
    a.bits.resize(K);
    b.bits.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      a.bits[k] = rng.uniform() < 0.5;
      b.bits[k] = rng.uniform() < 0.5;
    }
    TypeMasks t = mixdet::type_masks(a, b);
    for (std::size_t k = 0; k < K; ++k) {
      const int sum = t.m_I[k] + t.m_IIA[k] + t.m_IIB[k];
      EXPECT_LE(sum, 1);
      // Exactly one category, or both-background.
      EXPECT_EQ(sum == 0, a.bits[k] == 0 && b.bits[k] == 0);
    }
  }
}

TEST(TypeMasks, SwapSymmetry) {
  RandomEngine rng(5);
  ObjectnessMask a, b;
  for (int k = 0; k < 128; ++k) {
    a.bits.push_back(rng.uniform() < 0.5);
    b.bits.push_back(rng.uniform() < 0.5);
  }
  TypeMasks t1 = mixdet::type_masks(a, b);
  TypeMasks t2 = mixdet::type_masks(b, a);
  EXPECT_EQ(t1.m_I, t2.m_I);
  EXPECT_EQ(t1.m_IIA, t2.m_IIB);
  EXPECT_EQ(t1.m_IIB, t2.m_IIA);
}

}  // namespace
