// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#include <mixdet/detector.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include <mixdet/random.hpp>

namespace {

using mixdet::Annotation;
using mixdet::Box;
using mixdet::DefaultBoxSet;
using mixdet::EncodedTargets;
using mixdet::GridGrad;
using mixdet::PredictionGrid;
using mixdet::RandomEngine;

DefaultBoxSet small_box_set() {
  return mixdet::build_default_boxes({{4, 4, 0.3, {1.0, 2.0}}, {2, 2, 0.6, {1.0, 2.0}}});
}

// Fill a grid with softmax-like rows (positive, summing to 1) and random offsets.
PredictionGrid random_grid(std::size_t K, std::size_t C, RandomEngine& rng) {
  PredictionGrid g(K, C);
  for (std::size_t k = 0; k < K; ++k) {
    double* row = g.cls_row(k);
    double sum = 0.0;
    for (std::size_t c = 0; c <= C; ++c) {
      row[c] = std::exp(rng.uniform(-2.0, 2.0));
      sum += row[c];
    }
    for (std::size_t c = 0; c <= C; ++c) row[c] /= sum;
    for (int j = 0; j < 4; ++j) g.loc_row(k)[j] = rng.normal(0.0, 0.5);
  }
  return g;
}

TEST(EncodeBox, IdentityAndWorkedExample) {
  Box anchor = Box::from_center(0.5, 0.5, 0.2, 0.2);
  auto off = mixdet::encode_box(anchor, anchor);
  for (double v : off) EXPECT_NEAR(v, 0.0, 1e-15);

  Box gt = Box::from_center(0.5, 0.5, 0.4, 0.4);
  off = mixdet::encode_box(gt, anchor);
  EXPECT_NEAR(off[0], 0.0, 1e-15);
  EXPECT_NEAR(off[1], 0.0, 1e-15);
  EXPECT_NEAR(off[2], std::log(2.0), 1e-12);
  EXPECT_NEAR(off[3], std::log(2.0), 1e-12);
}

TEST(DecodeBox, FormulaInversion) {
  Box anchor = Box::from_center(0.5, 0.5, 0.2, 0.2);
  const double off[4] = {0.0, 0.0, std::log(2.0), 0.0};
  Box b = mixdet::decode_box(off, anchor);
  EXPECT_NEAR(b.w(), 0.4, 1e-12);
  EXPECT_NEAR(b.h(), 0.2, 1e-12);
}

TEST(EncodeDecode, RoundTrip) {
  RandomEngine rng(11);
  for (int i = 0; i < 10000; ++i) {
    Box anchor = Box::from_center(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                  rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5));
    Box gt = Box::from_center(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                              rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5));
    auto off = mixdet::encode_box(gt, anchor);
    Box back = mixdet::decode_box(off.data(), anchor);
    EXPECT_NEAR(back.x0, gt.x0, 1e-9);
    EXPECT_NEAR(back.y0, gt.y0, 1e-9);
    EXPECT_NEAR(back.x1, gt.x1, 1e-9);
    EXPECT_NEAR(back.y1, gt.y1, 1e-9);
  }
}

TEST(EncodeGt, AnchorIdenticalToGtIsPositiveWithZeroOffsets) {
  DefaultBoxSet s = small_box_set();
  Annotation ann;
  ann.objects.push_back({2, s.boxes[5]});
  EncodedTargets t = mixdet::encode_gt(ann, s);
  EXPECT_GE(t.num_positive, 1u);
  EXPECT_EQ(t.cls[5], 2);
  EXPECT_TRUE(t.positive[5]);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(t.loc[5 * 4 + j], 0.0, 1e-12);
}

TEST(EncodeGt, EmptyAnnotationAllBackground) {
  DefaultBoxSet s = small_box_set();
  EncodedTargets t = mixdet::encode_gt(Annotation{}, s);
  EXPECT_EQ(t.num_positive, 0u);
  for (std::size_t k = 0; k < s.size(); ++k) {
    EXPECT_EQ(t.cls[k], 0);
    EXPECT_FALSE(t.positive[k]);
  }
}

TEST(EncodeGt, BestAnchorForcedEvenBelowThreshold) {
  DefaultBoxSet s = small_box_set();
  // A tiny box overlaps every anchor with IoU well below 0.5 but must still
  // claim its best-IoU anchor.
  Annotation ann;
  ann.objects.push_back({1, Box::from_center(0.3, 0.3, 0.04, 0.04)});
  EncodedTargets t = mixdet::encode_gt(ann, s);
  EXPECT_EQ(t.num_positive, 1u);
}

TEST(DecodePredictions, ZeroOffsetsGiveClippedDefaultBoxes) {
  DefaultBoxSet s = small_box_set();
  PredictionGrid g(s.size(), 2);
  for (std::size_t k = 0; k < g.K; ++k) {
    g.cls_row(k)[0] = 0.8;
    g.cls_row(k)[1] = 0.15;
    g.cls_row(k)[2] = 0.05;
  }
  auto dets = mixdet::decode_predictions(g, s);
  ASSERT_EQ(dets.size(), g.K * 2);
  for (std::size_t k = 0; k < g.K; ++k) {
    const Box want{std::clamp(s.boxes[k].x0, 0.0, 1.0), std::clamp(s.boxes[k].y0, 0.0, 1.0),
                   std::clamp(s.boxes[k].x1, 0.0, 1.0), std::clamp(s.boxes[k].y1, 0.0, 1.0)};
    for (std::size_t c = 0; c < 2; ++c) {
      const mixdet::Detection& d = dets[k * 2 + c];
      EXPECT_EQ(d.class_id, static_cast<int>(c) + 1);
      EXPECT_DOUBLE_EQ(d.score, g.cls_row(k)[c + 1]);
      EXPECT_NEAR(d.box.x0, want.x0, 1e-12);
      EXPECT_NEAR(d.box.x1, want.x1, 1e-12);
    }
  }
}

TEST(MultiboxLoss, PerfectPredictionsGiveZero) {
  DefaultBoxSet s = small_box_set();
  Annotation ann;
  ann.objects.push_back({1, s.boxes[3]});
  EncodedTargets t = mixdet::encode_gt(ann, s);
  PredictionGrid g(s.size(), 2);
  for (std::size_t k = 0; k < g.K; ++k) {
    g.cls_row(k)[t.cls[k]] = 1.0;
    for (int j = 0; j < 4; ++j) g.loc_row(k)[j] = t.loc[k * 4 + j];
  }
  EXPECT_DOUBLE_EQ(mixdet::multibox_loss(g, t), 0.0);
}

TEST(MultiboxLoss, NoPositivesMinesOneNegativeAndNoLocTerm) {
  DefaultBoxSet s = small_box_set();
  EncodedTargets t = mixdet::encode_gt(Annotation{}, s);
  PredictionGrid g(s.size(), 2);
  for (std::size_t k = 0; k < g.K; ++k) {
    g.cls_row(k)[0] = 1.0;          // perfectly confident background
    g.loc_row(k)[0] = 123.0;        // loc must not contribute without positives
  }
  auto negs = mixdet::mine_negatives(g, t);
  EXPECT_EQ(negs.size(), 1u);
  EXPECT_DOUBLE_EQ(mixdet::multibox_loss(g, t), 0.0);
}

TEST(MultiboxLoss, SinglePositiveHalfProbability) {
  // Single-aspect set so the ground truth overlaps exactly one anchor >= 0.5.
  DefaultBoxSet s = mixdet::build_default_boxes({{4, 4, 0.3, {1.0}}});
  Annotation ann;
  ann.objects.push_back({2, s.boxes[7]});
  EncodedTargets t = mixdet::encode_gt(ann, s);
  ASSERT_EQ(t.num_positive, 1u);
  PredictionGrid g(s.size(), 2);
  for (std::size_t k = 0; k < g.K; ++k) {
    if (t.positive[k]) {
      g.cls_row(k)[2] = 0.5;  // true class prob 0.5
      g.cls_row(k)[0] = 0.5;
      for (int j = 0; j < 4; ++j) g.loc_row(k)[j] = t.loc[k * 4 + j];
    } else {
      g.cls_row(k)[0] = 1.0;  // mined negatives contribute zero
    }
  }
  EXPECT_NEAR(mixdet::multibox_loss(g, t), std::log(2.0), 1e-12);
}

TEST(MultiboxLoss, HardNegativeCountAndOrder) {
  DefaultBoxSet s = small_box_set();
  Annotation ann;
  ann.objects.push_back({1, s.boxes[0]});
  EncodedTargets t = mixdet::encode_gt(ann, s);
  const std::size_t npos = t.num_positive;
  RandomEngine rng(3);
  PredictionGrid g = random_grid(s.size(), 2, rng);
  auto negs = mixdet::mine_negatives(g, t, 3.0);
  EXPECT_EQ(negs.size(), 3 * npos);
  // Every selected negative's background CE is >= every unselected negative's.
  double min_sel = 1e300;
  for (std::size_t k : negs) min_sel = std::min(min_sel, -std::log(g.cls_row(k)[0]));
  for (std::size_t k = 0; k < g.K; ++k) {
    if (t.positive[k] || std::count(negs.begin(), negs.end(), k)) continue;
    EXPECT_LE(-std::log(g.cls_row(k)[0]), min_sel + 1e-12);
  }
}

TEST(MultiboxLoss, GradientMatchesFiniteDifferences) {
  DefaultBoxSet s = small_box_set();
  Annotation ann;
  ann.objects.push_back({1, s.boxes[10]});
  ann.objects.push_back({2, Box::from_center(0.7, 0.7, 0.25, 0.25)});
  EncodedTargets t = mixdet::encode_gt(ann, s);
  RandomEngine rng(17);
  PredictionGrid g = random_grid(s.size(), 2, rng);
  auto negs = mixdet::mine_negatives(g, t, 3.0);

  GridGrad grad = GridGrad::zeros_like(g);
  mixdet::multibox_loss_with_grad(g, t, negs, &grad);

  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const bool probe_cls = rng.uniform() < 0.5;
    PredictionGrid gp = g, gm = g;
    std::size_t i;
    if (probe_cls) {
      i = static_cast<std::size_t>(rng.uniform_int(g.cls.size()));
      gp.cls[i] += h;
      gm.cls[i] -= h;
    } else {
      i = static_cast<std::size_t>(rng.uniform_int(g.loc.size()));
      gp.loc[i] += h;
      gm.loc[i] -= h;
    }
    const double fd = (mixdet::multibox_loss_with_grad(gp, t, negs, nullptr) -
                       mixdet::multibox_loss_with_grad(gm, t, negs, nullptr)) /
                      (2.0 * h);
    const double an = probe_cls ? grad.cls[i] : grad.loc[i];
    EXPECT_NEAR(fd, an, 1e-5 * std::max(1.0, std::fabs(an)));
  }
}

}  // namespace
