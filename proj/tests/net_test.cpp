// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#include <mixdet/net.hpp>

#include <gtest/gtest.h>

#include <cmath>

namespace {

using mixdet::ArchConfig;
using mixdet::ForwardCache;
using mixdet::GridGrad;
using mixdet::PredictionGrid;
using mixdet::RandomEngine;
using mixdet::Tensor;
using mixdet::ToyDetector;

ArchConfig tiny_arch() {
  ArchConfig a;
  a.input_size = 8;
  a.channels = {2, 3};
  a.num_classes = 1;
  a.aspect_ratios = {1.0};
  a.anchor_scales = {0.3, 0.6};
  return a;
}

Tensor random_image(int size, RandomEngine& rng) {
  Tensor t({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  for (double& v : t.data) v = rng.uniform();
  return t;
}

// Naive 3x3 pad-1 convolution, the oracle for conv3_forward.
void naive_conv3(const double* x, int in_ch, int h, int w, int stride, const double* weight,
                 const double* bias, int out_ch, double* y) {
  const int oh = (h - 1) / stride + 1;
  const int ow = (w - 1) / stride + 1;
  for (int co = 0; co < out_ch; ++co) {
    for (int yo = 0; yo < oh; ++yo) {
      for (int xo = 0; xo < ow; ++xo) {
        double acc = bias[co];
        for (int ci = 0; ci < in_ch; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int yi = yo * stride - 1 + ky;
              const int xi = xo * stride - 1 + kx;
              if (yi < 0 || yi >= h || xi < 0 || xi >= w) continue;
              acc += weight[((co * in_ch + ci) * 3 + ky) * 3 + kx] *
                     x[(ci * h + yi) * w + xi];
            }
          }
        }
        y[(co * oh + yo) * ow + xo] = acc;
      }
    }
  }
}

TEST(Conv, MatchesNaiveOracle) {
  RandomEngine rng(21);
  for (int stride : {1, 2}) {
    const int in_ch = 3, out_ch = 5, h = 10, w = 8;
    std::vector<double> x(in_ch * h * w), weight(out_ch * in_ch * 9), bias(out_ch);
    for (double& v : x) v = rng.normal();
    for (double& v : weight) v = rng.normal();
    for (double& v : bias) v = rng.normal();
    const int oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
    std::vector<double> got(out_ch * oh * ow), want(out_ch * oh * ow), cols;
    mixdet::detail::conv3_forward(x.data(), in_ch, h, w, stride, weight.data(), bias.data(),
                                  out_ch, got.data(), cols);
    naive_conv3(x.data(), in_ch, h, w, stride, weight.data(), bias.data(), out_ch, want.data());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
  }
}

TEST(Net, ForwardRowsAreProbabilities) {
  ArchConfig a;
  a.input_size = 32;
  a.channels = {4, 6};
  a.num_classes = 2;
  a.aspect_ratios = {1.0, 2.0};
  a.anchor_scales = {0.3, 0.6};
  ToyDetector model(a);
  RandomEngine rng(1);
  model.init_params(rng);
  Tensor img = random_image(32, rng);
  PredictionGrid g = model.forward(img);
  EXPECT_EQ(g.K, model.default_boxes().size());
  EXPECT_EQ(g.K, 16u * 16u * 2u + 8u * 8u * 2u);
  for (std::size_t k = 0; k < g.K; ++k) {
    double sum = 0.0;
    for (std::size_t c = 0; c <= g.C; ++c) {
      EXPECT_GE(g.cls_row(k)[c], 0.0);
      sum += g.cls_row(k)[c];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Net, ForwardIsDeterministic) {
  ToyDetector model(tiny_arch());
  RandomEngine rng(2);
  model.init_params(rng);
  Tensor img = random_image(8, rng);
  PredictionGrid g1 = model.forward(img);
  PredictionGrid g2 = model.forward(img);
  EXPECT_EQ(g1.cls, g2.cls);
  EXPECT_EQ(g1.loc, g2.loc);
}

TEST(Net, InitIsDeterministicAndBackgroundBiased) {
  ToyDetector m1(tiny_arch()), m2(tiny_arch());
  RandomEngine r1(7), r2(7);
  m1.init_params(r1);
  m2.init_params(r2);
  EXPECT_EQ(m1.params(), m2.params());

  RandomEngine rng(8);
  Tensor img = random_image(8, rng);
  PredictionGrid g = m1.forward(img);
  double bg = 0.0;
  for (std::size_t k = 0; k < g.K; ++k) bg += g.cls_row(k)[0];
  bg /= static_cast<double>(g.K);
  EXPECT_GT(bg, 0.6);  // the prior keeps the fresh model quiet
}

TEST(Net, TinyModelFitsGradCheckBudget) {
  ToyDetector model(tiny_arch());
  EXPECT_LE(model.num_params(), 500u);
  EXPECT_EQ(model.default_boxes().size(), 20u);
}

// Full-chain gradient check: L = <g_cls, cls> + <g_loc, loc> for a fixed
// random g, differentiated through softmax, heads, ReLUs and convs.
TEST(Net, BackwardMatchesFiniteDifferences) {
  ToyDetector model(tiny_arch());
  RandomEngine rng(33);
  model.init_params(rng);
  Tensor img = random_image(8, rng);

  GridGrad g(model.default_boxes().size(), 1);
  for (double& v : g.cls) v = rng.normal();
  for (double& v : g.loc) v = rng.normal();

  auto loss_at = [&](const std::vector<double>& theta) {
    ToyDetector m(tiny_arch());
    m.params() = theta;
    PredictionGrid out = m.forward(img);
    double L = 0.0;
    for (std::size_t i = 0; i < out.cls.size(); ++i) L += g.cls[i] * out.cls[i];
    for (std::size_t i = 0; i < out.loc.size(); ++i) L += g.loc[i] * out.loc[i];
    return L;
  };

  ForwardCache cache;
  model.forward(img, &cache);
  std::vector<double> dtheta(model.num_params(), 0.0);
  model.backward(cache, g, dtheta);

  const double h = 1e-6;
  const std::vector<double>& theta = model.params();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> dir(theta.size());
    for (double& v : dir) v = rng.normal();
    std::vector<double> tp = theta, tm = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      tp[i] += h * dir[i];
      tm[i] -= h * dir[i];
    }
    const double fd = (loss_at(tp) - loss_at(tm)) / (2.0 * h);
    double an = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) an += dtheta[i] * dir[i];
    const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
    EXPECT_LT(std::fabs(fd - an) / denom, 1e-5) << "fd=" << fd << " an=" << an;
  }
}

}  // namespace
