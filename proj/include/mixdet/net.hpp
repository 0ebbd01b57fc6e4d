// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/boxes.hpp"
#include "mixdet/detector.hpp"
#include "mixdet/random.hpp"
#include "mixdet/tensor.hpp"

namespace mixdet {

/// @brief Architecture descriptor for the toy detector.
///
/// The backbone is a chain of 3x3 stride-2 pad-1 conv+ReLU blocks; the last
/// two block outputs form the prediction pyramid. Each pyramid level gets its
/// own 3x3 stride-1 classification and localization head.
struct ArchConfig {
  int input_size = 96;
  std::vector<int> channels = {8, 16, 32, 32};
  int num_classes = 3;                              ///< foreground classes C
  std::vector<double> aspect_ratios = {1.0, 2.0, 0.5};  ///< D boxes per cell
  std::vector<double> anchor_scales = {0.22, 0.42};     ///< one per pyramid level

  int boxes_per_cell() const { return static_cast<int>(aspect_ratios.size()); }

  void validate() const {
    if (channels.size() < 2) throw std::invalid_argument("arch: need >= 2 conv blocks");
    if (num_classes < 1) throw std::invalid_argument("arch: need >= 1 class");
    if (aspect_ratios.empty()) throw std::invalid_argument("arch: need >= 1 aspect ratio");
    if (anchor_scales.size() != 2) throw std::invalid_argument("arch: need 2 anchor scales");
    int s = input_size;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (s % 2 != 0) throw std::invalid_argument("arch: input size not divisible by strides");
      s /= 2;
    }
    if (s < 1) throw std::invalid_argument("arch: too many blocks for input size");
  }

  /// Grid side of block i's output.
  int grid_size(std::size_t block) const { return input_size >> (block + 1); }

  std::vector<AnchorLevelSpec> anchor_levels() const {
    const std::size_t n = channels.size();
    std::vector<AnchorLevelSpec> out(2);
    for (int l = 0; l < 2; ++l) {
      const int g = grid_size(n - 2 + static_cast<std::size_t>(l));
      out[l] = {static_cast<std::size_t>(g), static_cast<std::size_t>(g), anchor_scales[l],
                aspect_ratios};
    }
    return out;
  }
};

namespace detail {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// 3x3 pad-1 im2col: cols is (in_ch*9) x (out_h*out_w), row-major.
inline void im2col3(const double* x, int in_ch, int h, int w, int stride, double* cols) {
  const int oh = (h - 1) / stride + 1;
  const int ow = (w - 1) / stride + 1;
  const int n = oh * ow;
  for (int ci = 0; ci < in_ch; ++ci) {
    const double* xc = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + static_cast<std::size_t>((ci * 3 + ky) * 3 + kx) * n;
        for (int yo = 0; yo < oh; ++yo) {
          const int yi = yo * stride - 1 + ky;
          double* dst = row + yo * ow;
          if (yi < 0 || yi >= h) {
            for (int xo = 0; xo < ow; ++xo) dst[xo] = 0.0;
            continue;
          }
          const double* src = xc + yi * w;
          for (int xo = 0; xo < ow; ++xo) {
            const int xi = xo * stride - 1 + kx;
            dst[xo] = (xi >= 0 && xi < w) ? src[xi] : 0.0;
          }
        }
      }
    }
  }
}

/// Scatter-add inverse of im2col3.
inline void col2im3(const double* cols, int in_ch, int h, int w, int stride, double* dx) {
  const int oh = (h - 1) / stride + 1;
  const int ow = (w - 1) / stride + 1;
  const int n = oh * ow;
  for (int ci = 0; ci < in_ch; ++ci) {
    double* xc = dx + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols + static_cast<std::size_t>((ci * 3 + ky) * 3 + kx) * n;
        for (int yo = 0; yo < oh; ++yo) {
          const int yi = yo * stride - 1 + ky;
          if (yi < 0 || yi >= h) continue;
          double* dst = xc + yi * w;
          const double* src = row + yo * ow;
          for (int xo = 0; xo < ow; ++xo) {
            const int xi = xo * stride - 1 + kx;
            if (xi >= 0 && xi < w) dst[xi] += src[xo];
          }
        }
      }
    }
  }
}

/// y = W x_cols + b for a 3x3 conv. y is (out_ch) x (oh*ow) row-major = CHW.
inline void conv3_forward(const double* x, int in_ch, int h, int w, int stride,
                          const double* weight, const double* bias, int out_ch, double* y,
                          std::vector<double>& cols_buf) {
  const int oh = (h - 1) / stride + 1;
  const int ow = (w - 1) / stride + 1;
  const int n = oh * ow;
  cols_buf.resize(static_cast<std::size_t>(in_ch) * 9 * n);
  im2col3(x, in_ch, h, w, stride, cols_buf.data());
  ConstMatMap wm(weight, out_ch, in_ch * 9);
  ConstMatMap cm(cols_buf.data(), in_ch * 9, n);
  MatMap ym(y, out_ch, n);
  ym.noalias() = wm * cm;
  for (int co = 0; co < out_ch; ++co) ym.row(co).array() += bias[co];
}

/// Accumulates dweight/dbias and (when dx != nullptr) the input gradient.
inline void conv3_backward(const double* x, int in_ch, int h, int w, int stride,
                           const double* weight, int out_ch, const double* dy, double* dweight,
                           double* dbias, double* dx, std::vector<double>& cols_buf) {
  const int oh = (h - 1) / stride + 1;
  const int ow = (w - 1) / stride + 1;
  const int n = oh * ow;
  cols_buf.resize(static_cast<std::size_t>(in_ch) * 9 * n);
  im2col3(x, in_ch, h, w, stride, cols_buf.data());
  ConstMatMap cm(cols_buf.data(), in_ch * 9, n);
  ConstMatMap dym(dy, out_ch, n);
  MatMap dwm(dweight, out_ch, in_ch * 9);
  dwm.noalias() += dym * cm.transpose();
  Eigen::Map<Eigen::VectorXd> dbm(dbias, out_ch);
  dbm.noalias() += dym.rowwise().sum();
  if (dx) {
    std::vector<double> dcols(static_cast<std::size_t>(in_ch) * 9 * n);
    ConstMatMap wm(weight, out_ch, in_ch * 9);
    MatMap dcm(dcols.data(), in_ch * 9, n);
    dcm.noalias() = wm.transpose() * dym;
    col2im3(dcols.data(), in_ch, h, w, stride, dx);
  }
}

}  // namespace detail

/// @brief Activations saved by forward() for use in backward().
struct ForwardCache {
  Tensor input;
  std::vector<Tensor> block_out;  ///< post-ReLU backbone outputs
  PredictionGrid grid;            ///< softmax probabilities + raw offsets
};

/// @brief The toy single-stage detector with a flat parameter vector and
/// hand-written backward pass.
class ToyDetector {
 public:
  explicit ToyDetector(ArchConfig arch) : arch_(std::move(arch)) {
    arch_.validate();
    layout_params();
    boxes_ = build_default_boxes(arch_.anchor_levels());
    theta_.assign(num_params_, 0.0);
  }

  const ArchConfig& arch() const { return arch_; }
  const DefaultBoxSet& default_boxes() const { return boxes_; }
  std::size_t num_params() const { return num_params_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

  /// He-normal weights, zero biases, except the classification heads'
  /// background channels, whose bias makes the initial background probability
  /// roughly bg_prior (keeps the untrained detector from hallucinating).
  void init_params(RandomEngine& rng, double bg_prior = 0.9) {
    const int cp1 = arch_.num_classes + 1;
    for (const Layer& l : layers_) {
      const double std = std::sqrt(2.0 / static_cast<double>(l.in_ch * 9));
      for (std::size_t i = 0; i < l.weight_count; ++i)
        theta_[l.weight_off + i] = rng.normal(0.0, std);
      for (std::size_t i = 0; i < static_cast<std::size_t>(l.out_ch); ++i)
        theta_[l.bias_off + i] = 0.0;
      if (l.kind == Layer::kClsHead) {
        const double b =
            std::log(bg_prior / (1.0 - bg_prior) * static_cast<double>(arch_.num_classes));
        for (int d = 0; d < arch_.boxes_per_cell(); ++d) theta_[l.bias_off + d * cp1] = b;
      }
    }
  }

  /// @brief Forward one image (3 x S x S, values in [0,1]).
  PredictionGrid forward(const Tensor& image, ForwardCache* cache = nullptr) const {
    const std::size_t nblocks = arch_.channels.size();
    if (image.shape != std::vector<std::size_t>{3, static_cast<std::size_t>(arch_.input_size),
                                                static_cast<std::size_t>(arch_.input_size)})
      throw std::invalid_argument("forward: image shape mismatch");

    std::vector<double> cols;
    std::vector<Tensor> outs(nblocks);
    const Tensor* x = &image;
    for (std::size_t i = 0; i < nblocks; ++i) {
      const Layer& l = layers_[i];
      const int g = arch_.grid_size(i);
      outs[i] = Tensor({static_cast<std::size_t>(l.out_ch), static_cast<std::size_t>(g),
                        static_cast<std::size_t>(g)});
      detail::conv3_forward(x->ptr(), l.in_ch, static_cast<int>(x->height()),
                            static_cast<int>(x->width()), 2, theta_.data() + l.weight_off,
                            theta_.data() + l.bias_off, l.out_ch, outs[i].ptr(), cols);
      for (double& v : outs[i].data) v = v > 0.0 ? v : 0.0;
      x = &outs[i];
    }

    PredictionGrid grid(boxes_.size(), static_cast<std::size_t>(arch_.num_classes));
    const int cp1 = arch_.num_classes + 1;
    const int D = arch_.boxes_per_cell();
    for (int lvl = 0; lvl < 2; ++lvl) {
      const Tensor& feat = outs[nblocks - 2 + static_cast<std::size_t>(lvl)];
      const Layer& cls_l = layers_[nblocks + static_cast<std::size_t>(2 * lvl)];
      const Layer& loc_l = layers_[nblocks + static_cast<std::size_t>(2 * lvl) + 1];
      const int g = static_cast<int>(feat.height());
      const int n = g * g;
      std::vector<double> cls_out(static_cast<std::size_t>(cls_l.out_ch) * n);
      std::vector<double> loc_out(static_cast<std::size_t>(loc_l.out_ch) * n);
      detail::conv3_forward(feat.ptr(), cls_l.in_ch, g, g, 1, theta_.data() + cls_l.weight_off,
                            theta_.data() + cls_l.bias_off, cls_l.out_ch, cls_out.data(), cols);
      detail::conv3_forward(feat.ptr(), loc_l.in_ch, g, g, 1, theta_.data() + loc_l.weight_off,
                            theta_.data() + loc_l.bias_off, loc_l.out_ch, loc_out.data(), cols);
      const std::size_t level_off = boxes_.levels[static_cast<std::size_t>(lvl)].offset;
      for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
          for (int d = 0; d < D; ++d) {
            const std::size_t k =
                level_off + (static_cast<std::size_t>(r) * g + c) * D + static_cast<std::size_t>(d);
            // softmax over the (C+1) logits of this cell/box
            double mx = -1e300;
            for (int j = 0; j < cp1; ++j)
              mx = std::max(mx, cls_out[static_cast<std::size_t>(d * cp1 + j) * n + r * g + c]);
            double sum = 0.0;
            double* row = grid.cls_row(k);
            for (int j = 0; j < cp1; ++j) {
              row[j] =
                  std::exp(cls_out[static_cast<std::size_t>(d * cp1 + j) * n + r * g + c] - mx);
              sum += row[j];
            }
            for (int j = 0; j < cp1; ++j) row[j] /= sum;
            double* lrow = grid.loc_row(k);
            for (int j = 0; j < 4; ++j)
              lrow[j] = loc_out[static_cast<std::size_t>(d * 4 + j) * n + r * g + c];
          }
        }
      }
    }

    if (cache) {
      cache->input = image;
      cache->block_out = std::move(outs);
      cache->grid = grid;
    }
    return grid;
  }

  /// @brief Accumulate dL/dtheta given dL/dgrid.
  ///
  /// ggrad.cls holds the gradient w.r.t. the softmax *probabilities*; the
  /// softmax Jacobian is applied here. dtheta must have num_params() entries.
  void backward(const ForwardCache& cache, const GridGrad& ggrad,
                std::vector<double>& dtheta) const {
    const std::size_t nblocks = arch_.channels.size();
    const int cp1 = arch_.num_classes + 1;
    const int D = arch_.boxes_per_cell();
    if (dtheta.size() != num_params_) throw std::invalid_argument("backward: dtheta size");

    std::vector<double> cols;
    std::vector<Tensor> feat_grad(nblocks);
    for (std::size_t i = 0; i < nblocks; ++i) {
      feat_grad[i] = Tensor(cache.block_out[i].shape);
    }

    for (int lvl = 0; lvl < 2; ++lvl) {
      const std::size_t bi = nblocks - 2 + static_cast<std::size_t>(lvl);
      const Tensor& feat = cache.block_out[bi];
      const Layer& cls_l = layers_[nblocks + static_cast<std::size_t>(2 * lvl)];
      const Layer& loc_l = layers_[nblocks + static_cast<std::size_t>(2 * lvl) + 1];
      const int g = static_cast<int>(feat.height());
      const int n = g * g;
      std::vector<double> dcls(static_cast<std::size_t>(cls_l.out_ch) * n, 0.0);
      std::vector<double> dloc(static_cast<std::size_t>(loc_l.out_ch) * n, 0.0);
      const std::size_t level_off = boxes_.levels[static_cast<std::size_t>(lvl)].offset;
      for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
          for (int d = 0; d < D; ++d) {
            const std::size_t k =
                level_off + (static_cast<std::size_t>(r) * g + c) * D + static_cast<std::size_t>(d);
            const double* p = cache.grid.cls_row(k);
            const double* gp = ggrad.cls.data() + k * static_cast<std::size_t>(cp1);
            // dL/dlogit_j = p_j * (g_j - sum_i g_i p_i)
            double dot = 0.0;
            for (int j = 0; j < cp1; ++j) dot += gp[j] * p[j];
            for (int j = 0; j < cp1; ++j)
              dcls[static_cast<std::size_t>(d * cp1 + j) * n + r * g + c] = p[j] * (gp[j] - dot);
            const double* gl = ggrad.loc.data() + k * 4;
            for (int j = 0; j < 4; ++j)
              dloc[static_cast<std::size_t>(d * 4 + j) * n + r * g + c] = gl[j];
          }
        }
      }
      detail::conv3_backward(feat.ptr(), cls_l.in_ch, g, g, 1, theta_.data() + cls_l.weight_off,
                             cls_l.out_ch, dcls.data(), dtheta.data() + cls_l.weight_off,
                             dtheta.data() + cls_l.bias_off, feat_grad[bi].ptr(), cols);
      detail::conv3_backward(feat.ptr(), loc_l.in_ch, g, g, 1, theta_.data() + loc_l.weight_off,
                             loc_l.out_ch, dloc.data(), dtheta.data() + loc_l.weight_off,
                             dtheta.data() + loc_l.bias_off, feat_grad[bi].ptr(), cols);
    }

    for (std::size_t i = nblocks; i-- > 0;) {
      const Layer& l = layers_[i];
      Tensor& dy = feat_grad[i];
      const Tensor& y = cache.block_out[i];
      for (std::size_t j = 0; j < dy.size(); ++j)
        if (y.data[j] <= 0.0) dy.data[j] = 0.0;  // ReLU gate
      const Tensor& x = (i == 0) ? cache.input : cache.block_out[i - 1];
      double* dx = (i == 0) ? nullptr : feat_grad[i - 1].ptr();
      detail::conv3_backward(x.ptr(), l.in_ch, static_cast<int>(x.height()),
                             static_cast<int>(x.width()), 2, theta_.data() + l.weight_off,
                             l.out_ch, dy.ptr(), dtheta.data() + l.weight_off,
                             dtheta.data() + l.bias_off, dx, cols);
    }
  }

 private:
  struct Layer {
    enum Kind { kBlock, kClsHead, kLocHead } kind = kBlock;
    int in_ch = 0, out_ch = 0;
    std::size_t weight_off = 0, weight_count = 0, bias_off = 0;
  };

  void layout_params() {
    layers_.clear();
    std::size_t off = 0;
    auto push = [&](Layer::Kind kind, int in_ch, int out_ch) {
      Layer l;
      l.kind = kind;
      l.in_ch = in_ch;
      l.out_ch = out_ch;
      l.weight_off = off;
      l.weight_count = static_cast<std::size_t>(out_ch) * in_ch * 9;
      off += l.weight_count;
      l.bias_off = off;
      off += static_cast<std::size_t>(out_ch);
      layers_.push_back(l);
    };
    int in_ch = 3;
    for (int ch : arch_.channels) {
      push(Layer::kBlock, in_ch, ch);
      in_ch = ch;
    }
    const int cp1 = arch_.num_classes + 1;
    const int D = arch_.boxes_per_cell();
    const std::size_t n = arch_.channels.size();
    for (int lvl = 0; lvl < 2; ++lvl) {
      const int feat_ch = arch_.channels[n - 2 + static_cast<std::size_t>(lvl)];
      push(Layer::kClsHead, feat_ch, D * cp1);
      push(Layer::kLocHead, feat_ch, D * 4);
    }
    num_params_ = off;
  }

  ArchConfig arch_;
  std::vector<Layer> layers_;
  DefaultBoxSet boxes_;
  std::vector<double> theta_;
  std::size_t num_params_ = 0;
};

}  // namespace mixdet
