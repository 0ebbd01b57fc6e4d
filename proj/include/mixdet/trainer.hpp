// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mixdet/augment.hpp"
#include "mixdet/checkpoint.hpp"
#include "mixdet/eval.hpp"
#include "mixdet/losses.hpp"
#include "mixdet/masks.hpp"
#include "mixdet/net.hpp"
#include "mixdet/random.hpp"

namespace mixdet {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// @brief Which consistency objectives a run optimizes.
enum class TrainMode { kSupervised, kCsd, kIsd, kCsdIsd };

/// @brief Which interpolation-consistency terms are active (ablation axis).
enum class IsdTypes { kType1, kType2, kBoth };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kSupervised: return "supervised";
    case TrainMode::kCsd: return "csd";
    case TrainMode::kIsd: return "isd";
    case TrainMode::kCsdIsd: return "csd+isd";
  }
  return "?";
}

inline const char* to_string(IsdTypes t) {
  switch (t) {
    case IsdTypes::kType1: return "type1";
    case IsdTypes::kType2: return "type2";
    case IsdTypes::kBoth: return "both";
  }
  return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "supervised") return TrainMode::kSupervised;
  if (s == "csd") return TrainMode::kCsd;
  if (s == "isd") return TrainMode::kIsd;
  if (s == "csd+isd") return TrainMode::kCsdIsd;
  throw std::invalid_argument("unknown mode \"" + s +
                              "\" (expected supervised|csd|isd|csd+isd)");
}

inline IsdTypes isd_types_from_string(const std::string& s) {
  if (s == "type1") return IsdTypes::kType1;
  if (s == "type2") return IsdTypes::kType2;
  if (s == "both") return IsdTypes::kBoth;
  throw std::invalid_argument("unknown types \"" + s + "\" (expected type1|type2|both)");
}

/// @brief Everything one training run needs besides the data.
struct TrainConfig {
  TrainMode mode = TrainMode::kCsdIsd;
  IsdTypes types = IsdTypes::kBoth;

  double alpha = 100.0;   ///< Beta(alpha, alpha) concentration for the mix ratio
  double gamma1 = 0.1;    ///< weight of the Type-I (jointly foreground) term
  double gamma2 = 1.0;    ///< weight of the Type-II (single foreground) terms

  std::size_t batch_size = 8;
  double labeled_fraction = 0.5;  ///< labeled share of each batch, in (0, 1]

  // At learning rate 0.02 with a 1000-step ramp the interpolation term can
  // tip the model into a confidently-all-background state it never leaves;
  // the gentler defaults below keep every mode stable across seeds.
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  std::size_t max_iterations = 4000;
  std::size_t ramp_up = 2000;  ///< consistency-weight ramp lengths (0 = none)
  std::size_t ramp_down = 0;

  std::size_t eval_every = 500;
  std::size_t checkpoint_every = 2000;
  std::uint64_t seed = 1;

  /// Interpolation consistency covers the whole batch by default (the
  /// training procedure applies its masks without a labeled/unlabeled
  /// distinction); set to restrict it to unlabeled items like the flip term.
  bool isd_unlabeled_only = false;

  double match_iou = 0.5;      ///< gt-to-anchor assignment threshold
  double neg_pos_ratio = 3.0;  ///< hard-negative mining ratio

  bool uses_csd() const { return mode == TrainMode::kCsd || mode == TrainMode::kCsdIsd; }
  bool uses_isd() const { return mode == TrainMode::kIsd || mode == TrainMode::kCsdIsd; }

  double effective_gamma1() const { return types == IsdTypes::kType2 ? 0.0 : gamma1; }
  double effective_gamma2() const { return types == IsdTypes::kType1 ? 0.0 : gamma2; }

  /// Labeled items per batch: the whole batch in supervised mode, otherwise
  /// the rounded labeled fraction clamped to [1, batch_size].
  std::size_t labeled_per_batch() const {
    if (mode == TrainMode::kSupervised) return batch_size;
    const double want = labeled_fraction * static_cast<double>(batch_size);
    const auto n = static_cast<std::size_t>(std::llround(want));
    return std::min(std::max<std::size_t>(n, 1), batch_size);
  }

  void validate() const {
    if (alpha <= 0.0) throw std::invalid_argument("train config: alpha must be > 0");
    if (gamma1 < 0.0 || gamma2 < 0.0)
      throw std::invalid_argument("train config: gammas must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
    if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0)
      throw std::invalid_argument("train config: labeled_fraction must be in (0, 1]");
    if (learning_rate <= 0.0)
      throw std::invalid_argument("train config: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("train config: momentum must be in [0, 1)");
    if (weight_decay < 0.0)
      throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (ramp_up + ramp_down > max_iterations)
      throw std::invalid_argument("train config: ramps exceed max_iterations");
    if (match_iou <= 0.0 || match_iou >= 1.0)
      throw std::invalid_argument("train config: match_iou must be in (0, 1)");
    if (neg_pos_ratio <= 0.0)
      throw std::invalid_argument("train config: neg_pos_ratio must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Mutable training state
// ---------------------------------------------------------------------------

/// @brief Everything that evolves across steps. Checkpointing this struct and
/// resuming reproduces the uninterrupted run bit for bit: parameters, the
/// momentum buffer, the iteration counter, every rng stream, and the
/// epoch-shuffle cursors all round-trip.
struct TrainState {
  explicit TrainState(ToyDetector m)
      : model(std::move(m)), velocity(model.num_params(), 0.0) {}

  ToyDetector model;
  std::vector<double> velocity;  ///< SGD momentum buffer, one entry per parameter
  std::size_t iteration = 0;     ///< completed steps

  RandomEngine labeled_rng{0};    ///< labeled epoch shuffles
  RandomEngine unlabeled_rng{0};  ///< unlabeled epoch shuffles
  RandomEngine mix_rng{0};        ///< per-step mix-ratio draws

  std::vector<std::size_t> labeled_order;  ///< current epoch order + cursor
  std::size_t labeled_cursor = 0;
  std::vector<std::size_t> unlabeled_order;
  std::size_t unlabeled_cursor = 0;
};

/// @brief Fresh state: He-initialized parameters, zero momentum, iteration 0,
/// one independent rng stream per consumer so config toggles that silence one
/// consumer never shift the draws of another.
inline TrainState init_train_state(const ArchConfig& arch, const TrainConfig& cfg) {
  cfg.validate();
  RandomEngine init_rng(derive_seed(cfg.seed, stream_tag("param-init")));
  ToyDetector model(arch);
  model.init_params(init_rng);
  TrainState st(std::move(model));
  st.labeled_rng = RandomEngine(derive_seed(cfg.seed, stream_tag("labeled-order")));
  st.unlabeled_rng = RandomEngine(derive_seed(cfg.seed, stream_tag("unlabeled-order")));
  st.mix_rng = RandomEngine(derive_seed(cfg.seed, stream_tag("mix-lambda")));
  return st;
}

namespace detail {

/// Next index of an epoch-shuffled stream; reshuffles on wraparound.
inline std::size_t next_index(std::vector<std::size_t>& order, std::size_t& cursor,
                              std::size_t n, RandomEngine& rng) {
  if (n == 0) throw std::logic_error("trainer: drawing from an empty dataset");
  if (order.size() != n || cursor >= order.size()) {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    cursor = 0;
  }
  return order[cursor++];
}

/// Write grid `item` of a concatenation (all grids share K rows).
inline void place_grid(const PredictionGrid& src, std::size_t item, PredictionGrid& dst) {
  std::copy(src.cls.begin(), src.cls.end(), dst.cls.begin() + item * src.cls.size());
  std::copy(src.loc.begin(), src.loc.end(), dst.loc.begin() + item * src.loc.size());
}

/// Copy grad slice `item` out of a concatenated GridGrad.
inline GridGrad grad_slice(const GridGrad& big, std::size_t item, std::size_t K,
                           std::size_t C) {
  GridGrad g(K, C);
  const std::size_t cs = g.cls.size(), ls = g.loc.size();
  std::copy(big.cls.begin() + item * cs, big.cls.begin() + (item + 1) * cs, g.cls.begin());
  std::copy(big.loc.begin() + item * ls, big.loc.begin() + (item + 1) * ls, g.loc.begin());
  return g;
}

/// Accumulate grad slice `item` of a concatenated GridGrad into `into`.
inline void add_grad_slice(const GridGrad& big, std::size_t item, GridGrad& into) {
  const std::size_t cs = into.cls.size(), ls = into.loc.size();
  for (std::size_t i = 0; i < cs; ++i) into.cls[i] += big.cls[item * cs + i];
  for (std::size_t i = 0; i < ls; ++i) into.loc[i] += big.loc[item * ls + i];
}

/// Does mask slice `item` (K bits per item) contain any set bit?
inline bool slice_any(const std::vector<std::uint8_t>& bits, std::size_t item,
                      std::size_t K) {
  for (std::size_t k = 0; k < K; ++k)
    if (bits[item * K + k]) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One optimization step
// ---------------------------------------------------------------------------

/// @brief Execute one training step on an already-drawn batch and apply one
/// SGD-with-momentum update.
///
/// Supervised mode forwards each labeled image once and minimizes the mean
/// multibox loss. The semi-supervised modes assemble the mix batch
/// (A = labeled + unlabeled, flipped twin, half-rotation pairing, one shared
/// mix ratio), run exactly three forward passes per item (A, its flip, the
/// blend) — the pairing side f(B) is the permuted flipped grid, never a
/// fourth pass — then route:
///   - supervised multibox on the labeled items of A,
///   - flip consistency on the unlabeled items (on every item when the batch
///     has none, where it acts as a pure self-consistency regularizer),
///   - interpolation consistency over the whole batch (config can restrict it
///     to unlabeled items), with f(B) gradients scattered back through the
///     pairing permutation.
/// The consistency weight w(t) multiplies every consistency gradient;
/// breakdown loss values stay unweighted. Terms disabled by `types` report
/// exactly 0 in the breakdown.
///
/// `lambda_override` >= 0 forces the mix ratio (degeneracy testing); note the
/// rng stream is only stable when the override usage itself is unchanged.
inline LossBreakdown train_step(TrainState& state, const std::vector<Tensor>& labeled_images,
                                const std::vector<Annotation>& labeled_annotations,
                                const std::vector<Tensor>& unlabeled_images,
                                const TrainConfig& cfg, double* out_lambda = nullptr,
                                double lambda_override = -1.0) {
  if (labeled_images.size() != labeled_annotations.size())
    throw std::invalid_argument("train_step: labeled images/annotations size mismatch");
  const std::size_t t = state.iteration + 1;
  if (t > cfg.max_iterations)
    throw std::invalid_argument("train_step: iteration past max_iterations");
  const double w_t = weight_schedule(t, cfg.ramp_up, cfg.max_iterations, cfg.ramp_down);
  const DefaultBoxSet& boxes = state.model.default_boxes();

  std::vector<double> dtheta(state.model.num_params(), 0.0);
  LossBreakdown bd;
  double lam = 0.0;

  if (cfg.mode == TrainMode::kSupervised) {
    const std::size_t n = labeled_images.size();
    if (n == 0) throw std::invalid_argument("train_step: empty labeled batch");
    const double inv = 1.0 / static_cast<double>(n);
    double sup_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ForwardCache cache;
      const PredictionGrid g = state.model.forward(labeled_images[i], &cache);
      const EncodedTargets targets = encode_gt(labeled_annotations[i], boxes, cfg.match_iou);
      const std::vector<std::size_t> negs = mine_negatives(g, targets, cfg.neg_pos_ratio);
      GridGrad gg(g.K, g.C);
      sup_sum += multibox_loss_with_grad(g, targets, negs, &gg);
      for (double& v : gg.cls) v *= inv;
      for (double& v : gg.loc) v *= inv;
      state.model.backward(cache, gg, dtheta);
    }
    bd.l_sup = sup_sum * inv;
    bd.l_total = bd.l_sup;
  } else {
    const std::size_t nl = labeled_images.size();
    if (nl == 0)
      throw std::invalid_argument("train_step: empty labeled batch in semi-supervised mode");
    const MixBatch mb = assemble_mix_batch(labeled_images, unlabeled_images, cfg.alpha,
                                           state.mix_rng, ShuffleKind::kHalfRotation,
                                           lambda_override);
    const std::size_t n = mb.A.size();
    lam = mb.lam;

    std::vector<ForwardCache> cache_a(n), cache_f(n), cache_m(n);
    std::vector<PredictionGrid> ga(n), gf(n), gm(n);
    for (std::size_t i = 0; i < n; ++i) {
      ga[i] = state.model.forward(mb.A[i], &cache_a[i]);
      gf[i] = state.model.forward(mb.A_flip[i], &cache_f[i]);
      gm[i] = state.model.forward(mb.M[i], &cache_m[i]);
    }
    const std::size_t K = ga[0].K, C = ga[0].C;

    std::vector<GridGrad> da(n), df(n), dm(n);
    std::vector<std::uint8_t> use_a(n, 0), use_f(n, 0), use_m(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      da[i] = GridGrad(K, C);
      df[i] = GridGrad(K, C);
      dm[i] = GridGrad(K, C);
    }

    // Supervised multibox on the labeled prefix of A.
    {
      const double inv = 1.0 / static_cast<double>(nl);
      double sup_sum = 0.0;
      for (std::size_t i = 0; i < nl; ++i) {
        const EncodedTargets targets =
            encode_gt(labeled_annotations[i], boxes, cfg.match_iou);
        const std::vector<std::size_t> negs = mine_negatives(ga[i], targets, cfg.neg_pos_ratio);
        GridGrad gg(K, C);
        sup_sum += multibox_loss_with_grad(ga[i], targets, negs, &gg);
        da[i].add_scaled(gg, inv);
        use_a[i] = 1;
      }
      bd.l_sup = sup_sum * inv;
    }

    // Batch-wide objectness diagnostic on f(A).
    {
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < n; ++i) cnt += objectness_mask(ga[i]).count();
      bd.n_objectness_a = cnt;
    }

    const FlipMap fmap = build_flip_map(boxes);

    // Flip consistency: concatenate the unlabeled grids so the masked means
    // span the whole subset, then scatter gradients back per item.
    if (cfg.uses_csd()) {
      std::vector<std::size_t> items;
      for (std::size_t i = nl; i < n; ++i) items.push_back(i);
      if (items.empty())
        for (std::size_t i = 0; i < n; ++i) items.push_back(i);
      const std::size_t m = items.size();

      PredictionGrid a_cat(m * K, C), f_cat(m * K, C);
      for (std::size_t j = 0; j < m; ++j) {
        detail::place_grid(ga[items[j]], j, a_cat);
        detail::place_grid(flip_grid_correspondence(gf[items[j]], fmap), j, f_cat);
      }
      const ObjectnessMask mask_a = objectness_mask(a_cat);
      GridGrad da_cat(a_cat.K, C), df_cat(a_cat.K, C);
      const auto [csd_cls, csd_loc] = csd_loss(a_cat, f_cat, mask_a, &da_cat, &df_cat, w_t);
      bd.l_csd_cls = csd_cls;
      bd.l_csd_loc = csd_loc;

      for (std::size_t j = 0; j < m; ++j) {
        if (!detail::slice_any(mask_a.bits, j, K)) continue;
        const std::size_t i = items[j];
        detail::add_grad_slice(da_cat, j, da[i]);
        use_a[i] = 1;
        const GridGrad back =
            flip_grid_correspondence(detail::grad_slice(df_cat, j, K, C), fmap);
        df[i].add_scaled(back, 1.0);
        use_f[i] = 1;
      }
    }

    // Interpolation consistency: f(B)[i] is the flipped grid of the paired
    // item, so its gradient flows to that item's flip pass.
    if (cfg.uses_isd()) {
      const double g1 = cfg.effective_gamma1();
      const double g2 = cfg.effective_gamma2();
      std::vector<std::size_t> items;
      if (cfg.isd_unlabeled_only && nl < n)
        for (std::size_t i = nl; i < n; ++i) items.push_back(i);
      else
        for (std::size_t i = 0; i < n; ++i) items.push_back(i);
      const std::size_t m = items.size();

      PredictionGrid a_cat(m * K, C), b_cat(m * K, C), m_cat(m * K, C);
      for (std::size_t j = 0; j < m; ++j) {
        detail::place_grid(ga[items[j]], j, a_cat);
        detail::place_grid(gf[mb.perm[items[j]]], j, b_cat);
        detail::place_grid(gm[items[j]], j, m_cat);
      }
      const ObjectnessMask mask_a = objectness_mask(a_cat);
      const ObjectnessMask mask_b = objectness_mask(b_cat);
      const TypeMasks tm = type_masks(mask_a, mask_b);
      GridGrad da_cat(a_cat.K, C), db_cat(a_cat.K, C), dm_cat(a_cat.K, C);
      isd_loss(a_cat, b_cat, m_cat, lam, tm, g1, g2, bd, &da_cat, &db_cat, &dm_cat, w_t);

      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = items[j];
        const bool type1_here = g1 > 0.0 && detail::slice_any(tm.m_I, j, K);
        const bool type2_here =
            g2 > 0.0 && (detail::slice_any(tm.m_IIA, j, K) || detail::slice_any(tm.m_IIB, j, K));
        if (type1_here) {
          detail::add_grad_slice(da_cat, j, da[i]);
          use_a[i] = 1;
          detail::add_grad_slice(db_cat, j, df[mb.perm[i]]);
          use_f[mb.perm[i]] = 1;
        }
        if (type1_here || type2_here) {
          detail::add_grad_slice(dm_cat, j, dm[i]);
          use_m[i] = 1;
        }
      }

      // Terms switched off by `types` must report exactly zero.
      if (cfg.types == IsdTypes::kType2) bd.l_type1 = 0.0;
      if (cfg.types == IsdTypes::kType1) {
        bd.l_type2_cls = 0.0;
        bd.l_type2_loc = 0.0;
      }
    }

    bd.l_total = total_loss(bd.l_sup, bd.l_csd_cls + bd.l_csd_loc, bd.l_isd, w_t);

    for (std::size_t i = 0; i < n; ++i) {
      if (use_a[i]) state.model.backward(cache_a[i], da[i], dtheta);
      if (use_f[i]) state.model.backward(cache_f[i], df[i], dtheta);
      if (use_m[i]) state.model.backward(cache_m[i], dm[i], dtheta);
    }
  }

  // SGD with momentum; L2 weight decay folds into the gradient.
  {
    std::vector<double>& theta = state.model.params();
    std::vector<double>& vel = state.velocity;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      const double g =
          cfg.weight_decay > 0.0 ? dtheta[p] + cfg.weight_decay * theta[p] : dtheta[p];
      vel[p] = cfg.momentum * vel[p] + g;
      theta[p] -= cfg.learning_rate * vel[p];
    }
  }

  state.iteration = t;
  if (out_lambda) *out_lambda = lam;
  return bd;
}

// ---------------------------------------------------------------------------
// Dataset plumbing for the loop
// ---------------------------------------------------------------------------

/// @brief In-memory splits a run trains and evaluates on. Unlabeled
/// annotations are deliberately absent: the trainer never sees them.
struct TrainDatasets {
  std::vector<Tensor> labeled_images;
  std::vector<Annotation> labeled_annotations;
  std::vector<Tensor> unlabeled_images;
  std::vector<ImageU8> eval_images;  ///< empty disables evaluation rows
  std::vector<Annotation> eval_annotations;
  std::vector<std::string> class_names;  ///< eval csv header (optional)

  void validate(const TrainConfig& cfg) const {
    if (labeled_images.size() != labeled_annotations.size())
      throw std::invalid_argument("trainer: labeled images/annotations size mismatch");
    if (labeled_images.empty()) throw std::invalid_argument("trainer: labeled split is empty");
    const bool needs_unlabeled = cfg.mode != TrainMode::kSupervised &&
                                 cfg.labeled_per_batch() < cfg.batch_size;
    if (needs_unlabeled && unlabeled_images.empty())
      throw std::invalid_argument(
          "trainer: unlabeled split is empty but the batch layout requires it");
    if (eval_images.size() != eval_annotations.size())
      throw std::invalid_argument("trainer: eval images/annotations size mismatch");
  }
};

/// @brief One drawn batch: labeled prefix plus unlabeled remainder.
struct Batch {
  std::vector<Tensor> labeled_images;
  std::vector<Annotation> labeled_annotations;
  std::vector<Tensor> unlabeled_images;
};

/// @brief Draw the next batch, advancing the epoch-shuffle cursors.
inline Batch draw_batch(TrainState& state, const TrainDatasets& data, const TrainConfig& cfg) {
  Batch b;
  const std::size_t nl = cfg.labeled_per_batch();
  for (std::size_t i = 0; i < nl; ++i) {
    const std::size_t idx = detail::next_index(state.labeled_order, state.labeled_cursor,
                                               data.labeled_images.size(), state.labeled_rng);
    b.labeled_images.push_back(data.labeled_images[idx]);
    b.labeled_annotations.push_back(data.labeled_annotations[idx]);
  }
  if (cfg.mode != TrainMode::kSupervised) {
    for (std::size_t i = nl; i < cfg.batch_size; ++i) {
      const std::size_t idx =
          detail::next_index(state.unlabeled_order, state.unlabeled_cursor,
                             data.unlabeled_images.size(), state.unlabeled_rng);
      b.unlabeled_images.push_back(data.unlabeled_images[idx]);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Metric logs
// ---------------------------------------------------------------------------

/// @brief One held-out evaluation: iteration, per-class AP, mAP.
struct EvalRow {
  std::size_t t = 0;
  std::vector<double> per_class_ap;
  double map = 0.0;
};

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_csv_header() {
  return "t,w,lambda,l_sup,l_csd_cls,l_csd_loc,l_type1,l_type2_cls,l_type2_loc,l_isd,"
         "l_total,n_type1,n_type2a,n_type2b,n_objectness_a";
}

inline std::string metrics_csv_row(std::size_t t, double w, double lam,
                                   const LossBreakdown& bd) {
  using detail::format_g17;
  std::string row = std::to_string(t);
  for (double v : {w, lam, bd.l_sup, bd.l_csd_cls, bd.l_csd_loc, bd.l_type1, bd.l_type2_cls,
                   bd.l_type2_loc, bd.l_isd, bd.l_total}) {
    row += ',';
    row += format_g17(v);
  }
  for (std::size_t v : {bd.n_type1, bd.n_type2a, bd.n_type2b, bd.n_objectness_a}) {
    row += ',';
    row += std::to_string(v);
  }
  return row;
}

inline std::string eval_csv_header(std::size_t num_classes,
                                   const std::vector<std::string>& class_names) {
  std::string h = "t";
  for (std::size_t c = 0; c < num_classes; ++c) {
    h += ",ap_";
    h += c < class_names.size() ? class_names[c] : "class_" + std::to_string(c + 1);
  }
  h += ",map";
  return h;
}

inline std::string eval_csv_row(const EvalRow& row) {
  std::string s = std::to_string(row.t);
  for (double ap : row.per_class_ap) {
    s += ',';
    s += detail::format_g17(ap);
  }
  s += ',';
  s += detail::format_g17(row.map);
  return s;
}

// ---------------------------------------------------------------------------
// Training checkpoints (full state, not just the model)
// ---------------------------------------------------------------------------

inline constexpr int kTrainCheckpointVersion = 1;

inline nlohmann::json train_state_to_json(const TrainState& st) {
  return {{"version", kTrainCheckpointVersion},
          {"model", model_to_json(st.model)},
          {"velocity", st.velocity},
          {"iteration", st.iteration},
          {"labeled_rng", st.labeled_rng.state()},
          {"unlabeled_rng", st.unlabeled_rng.state()},
          {"mix_rng", st.mix_rng.state()},
          {"labeled_order", st.labeled_order},
          {"labeled_cursor", st.labeled_cursor},
          {"unlabeled_order", st.unlabeled_order},
          {"unlabeled_cursor", st.unlabeled_cursor}};
}

inline TrainState train_state_from_json(const nlohmann::json& j) {
  const int v = j.at("version").get<int>();
  if (v != kTrainCheckpointVersion)
    throw std::runtime_error("train checkpoint: format version " + std::to_string(v) +
                             " does not match expected " +
                             std::to_string(kTrainCheckpointVersion));
  TrainState st(model_from_json(j.at("model")));
  st.velocity = j.at("velocity").get<std::vector<double>>();
  if (st.velocity.size() != st.model.num_params())
    throw std::runtime_error("train checkpoint: momentum buffer size mismatch");
  st.iteration = j.at("iteration").get<std::size_t>();
  st.labeled_rng.set_state(j.at("labeled_rng").get<std::string>());
  st.unlabeled_rng.set_state(j.at("unlabeled_rng").get<std::string>());
  st.mix_rng.set_state(j.at("mix_rng").get<std::string>());
  st.labeled_order = j.at("labeled_order").get<std::vector<std::size_t>>();
  st.labeled_cursor = j.at("labeled_cursor").get<std::size_t>();
  st.unlabeled_order = j.at("unlabeled_order").get<std::vector<std::size_t>>();
  st.unlabeled_cursor = j.at("unlabeled_cursor").get<std::size_t>();
  return st;
}

inline void save_train_checkpoint(const std::string& path, const TrainState& st) {
  write_json_file(path, train_state_to_json(st));
}

inline TrainState load_train_checkpoint(const std::string& path) {
  return train_state_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Full training loop
// ---------------------------------------------------------------------------

/// @brief Output locations; empty strings disable the corresponding writer.
struct TrainOutputs {
  std::string metrics_csv;     ///< one row per step
  std::string eval_csv;        ///< one row per held-out evaluation
  std::string checkpoint_dir;  ///< periodic + final train checkpoints, final model
  std::function<void(const EvalRow&)> on_eval;  ///< progress hook, fires per evaluation
};

struct TrainResult {
  TrainState state;
  std::vector<EvalRow> eval_rows;
};

/// @brief Run the loop from an existing state up to cfg.max_iterations.
///
/// Writes one metrics row per step, evaluates every `eval_every` steps and at
/// the end, checkpoints every `checkpoint_every` steps, and always writes a
/// final train checkpoint plus a plain model checkpoint when a checkpoint
/// directory is given. Output files are truncated, never appended, so a
/// resumed run's logs cover exactly the steps it executed.
inline TrainResult continue_train(TrainState state, const TrainConfig& cfg,
                                  const TrainDatasets& data, const TrainOutputs& out = {},
                                  const EvalParams& eval_params = {}) {
  cfg.validate();
  data.validate(cfg);
  eval_params.validate();

  std::ofstream metrics;
  if (!out.metrics_csv.empty()) {
    metrics.open(out.metrics_csv, std::ios::binary | std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open for writing: " + out.metrics_csv);
    metrics << metrics_csv_header() << '\n';
  }
  std::ofstream evalf;
  const auto num_classes = static_cast<std::size_t>(state.model.arch().num_classes);
  if (!out.eval_csv.empty()) {
    evalf.open(out.eval_csv, std::ios::binary | std::ios::trunc);
    if (!evalf) throw std::runtime_error("cannot open for writing: " + out.eval_csv);
    evalf << eval_csv_header(num_classes, data.class_names) << '\n';
  }
  if (!out.checkpoint_dir.empty())
    std::filesystem::create_directories(out.checkpoint_dir);

  std::vector<EvalRow> eval_rows;
  auto run_eval = [&](std::size_t t) {
    if (data.eval_images.empty()) return;
    const ApResult ap =
        evaluate_model(state.model, data.eval_images, data.eval_annotations, eval_params);
    EvalRow row{t, ap.per_class_ap, ap.map};
    if (evalf.is_open()) evalf << eval_csv_row(row) << '\n' << std::flush;
    if (out.on_eval) out.on_eval(row);
    eval_rows.push_back(std::move(row));
  };
  auto checkpoint_path = [&](std::size_t t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06zu.json", t);
    return out.checkpoint_dir + "/" + buf;
  };

  std::size_t last_eval = state.iteration;  // suppresses a duplicate final eval
  while (state.iteration < cfg.max_iterations) {
    const Batch b = draw_batch(state, data, cfg);
    const std::size_t t = state.iteration + 1;
    const double w_t = weight_schedule(t, cfg.ramp_up, cfg.max_iterations, cfg.ramp_down);
    double lam = 0.0;
    const LossBreakdown bd =
        train_step(state, b.labeled_images, b.labeled_annotations, b.unlabeled_images, cfg, &lam);
    if (metrics.is_open()) metrics << metrics_csv_row(t, w_t, lam, bd) << '\n';
    if (cfg.eval_every > 0 && t % cfg.eval_every == 0) {
      run_eval(t);
      last_eval = t;
    }
    if (!out.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        t % cfg.checkpoint_every == 0 && t < cfg.max_iterations)
      save_train_checkpoint(checkpoint_path(t), state);
  }

  if (cfg.max_iterations > 0 && last_eval != cfg.max_iterations) run_eval(cfg.max_iterations);
  if (!out.checkpoint_dir.empty()) {
    save_train_checkpoint(checkpoint_path(state.iteration), state);
    save_model_checkpoint(out.checkpoint_dir + "/model_final.json", state.model);
  }
  if (metrics.is_open()) metrics.flush();
  return TrainResult{std::move(state), std::move(eval_rows)};
}

/// @brief Fresh run: initialize from the config seed, then loop.
inline TrainResult train(const TrainConfig& cfg, const ArchConfig& arch,
                         const TrainDatasets& data, const TrainOutputs& out = {},
                         const EvalParams& eval_params = {}) {
  return continue_train(init_train_state(arch, cfg), cfg, data, out, eval_params);
}

}  // namespace mixdet
