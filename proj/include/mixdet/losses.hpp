// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mixdet/detector.hpp"
#include "mixdet/masks.hpp"

namespace mixdet {

/// @brief KL(p || q) in nats with 0*ln 0 = 0 and both arguments floored at
/// kProbEps inside the logs.
///
/// The floor makes the raw sum capable of dipping a hair below zero when p
/// carries sub-eps mass, so the result is clamped at 0 to keep the KL >= 0
/// contract; p == q (bitwise) yields exactly 0 because each log difference
/// cancels exactly.
inline double kl_divergence(const double* p, const double* q, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0)
      s += p[i] * (std::log(std::max(p[i], kProbEps)) - std::log(std::max(q[i], kProbEps)));
  }
  return s > 0.0 ? s : 0.0;
}

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  return kl_divergence(p.data(), q.data(), p.size());
}

namespace detail {

/// Accumulate scale * dKL(p||q)/dq into gq, faithful to the clamped
/// implementation above (zero where the floor or the clamp is active).
inline void kl_grad_q(const double* p, const double* q, std::size_t n, double scale, double* gq) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0)
      s += p[i] * (std::log(std::max(p[i], kProbEps)) - std::log(std::max(q[i], kProbEps)));
  if (s <= 0.0) return;  // clamped region is flat
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > 0.0 && q[i] >= kProbEps) gq[i] -= scale * p[i] / q[i];
}

/// Jensen-Shannon divergence, optionally accumulating scale * dJS/dp and
/// scale * dJS/dq. Gradients are exact for the clamped function (away from
/// the measure-zero clamp boundaries).
inline double js_with_grad(const double* p, const double* q, std::size_t n, double scale,
                           double* gp, double* gq) {
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double lm = std::log(std::max(m, kProbEps));
    if (p[i] > 0.0) s1 += p[i] * (std::log(std::max(p[i], kProbEps)) - lm);
    if (q[i] > 0.0) s2 += q[i] * (std::log(std::max(q[i], kProbEps)) - lm);
  }
  const bool live1 = s1 > 0.0, live2 = s2 > 0.0;
  const double value = 0.5 * (live1 ? s1 : 0.0) + 0.5 * (live2 ? s2 : 0.0);
  if (!gp && !gq) return value;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double lm = std::log(std::max(m, kProbEps));
    const double inv2m = m >= kProbEps ? 0.5 / m : 0.0;
    double dp = 0.0, dq = 0.0;
    if (live1 && p[i] > 0.0) {
      const double lp = std::log(std::max(p[i], kProbEps));
      dp += 0.5 * ((lp - lm) + (p[i] >= kProbEps ? 1.0 : 0.0) - p[i] * inv2m);
      dq += 0.5 * (-p[i] * inv2m);
    }
    if (live2 && q[i] > 0.0) {
      const double lq = std::log(std::max(q[i], kProbEps));
      dq += 0.5 * ((lq - lm) + (q[i] >= kProbEps ? 1.0 : 0.0) - q[i] * inv2m);
      dp += 0.5 * (-q[i] * inv2m);
    }
    if (gp) gp[i] += scale * dp;
    if (gq) gq[i] += scale * dq;
  }
  return value;
}

}  // namespace detail

/// @brief JS(p, q) = KL(p||m)/2 + KL(q||m)/2 with m = (p+q)/2. Symmetric,
/// bounded by ln 2.
inline double js_divergence(const double* p, const double* q, std::size_t n) {
  return detail::js_with_grad(p, q, n, 0.0, nullptr, nullptr);
}

inline double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("js_divergence: length mismatch");
  return js_divergence(p.data(), q.data(), p.size());
}

/// @brief Every loss component of one training step plus the active-location
/// counts that explain them.
struct LossBreakdown {
  double l_sup = 0.0;
  double l_csd_cls = 0.0;
  double l_csd_loc = 0.0;
  double l_type1 = 0.0;
  double l_type2_cls = 0.0;
  double l_type2_loc = 0.0;
  double l_isd = 0.0;
  double l_total = 0.0;
  std::size_t n_type1 = 0;
  std::size_t n_type2a = 0;
  std::size_t n_type2b = 0;
  std::size_t n_objectness_a = 0;
};

/// @brief Interpolation consistency on jointly-foreground locations: mean JSD
/// between lam*f(A)+(1-lam)*f(B) and f(M). Classification only; both mix
/// sources and the mixed prediction are live (all three receive gradient).
///
/// grad_scale multiplies the gradients (not the returned loss), letting the
/// caller fold in gamma and schedule weights in one pass.
inline double type1_loss(const PredictionGrid& gA, const PredictionGrid& gB,
                         const PredictionGrid& gM, double lam,
                         const std::vector<std::uint8_t>& m_I, GridGrad* dA = nullptr,
                         GridGrad* dB = nullptr, GridGrad* dM = nullptr,
                         double grad_scale = 1.0) {
  if (gA.K != gB.K || gA.K != gM.K || gA.C != gB.C || gA.C != gM.C || m_I.size() != gA.K)
    throw std::invalid_argument("type1_loss: shape mismatch");
  const std::size_t cnt = mask_count(m_I);
  if (cnt == 0) return 0.0;
  const std::size_t n = gA.C + 1;
  const double inv = 1.0 / static_cast<double>(cnt);
  std::vector<double> pmix(n), gmix(n);
  double sum = 0.0;
  for (std::size_t k = 0; k < gA.K; ++k) {
    if (!m_I[k]) continue;
    const double* pa = gA.cls_row(k);
    const double* pb = gB.cls_row(k);
    for (std::size_t i = 0; i < n; ++i) pmix[i] = lam * pa[i] + (1.0 - lam) * pb[i];
    if (dA || dB || dM) {
      std::fill(gmix.begin(), gmix.end(), 0.0);
      double* gm = dM ? dM->cls_row(k) : nullptr;
      sum += detail::js_with_grad(pmix.data(), gM.cls_row(k), n, grad_scale * inv, gmix.data(),
                                  gm);
      if (dA) {
        double* ga = dA->cls_row(k);
        for (std::size_t i = 0; i < n; ++i) ga[i] += lam * gmix[i];
      }
      if (dB) {
        double* gb = dB->cls_row(k);
        for (std::size_t i = 0; i < n; ++i) gb[i] += (1.0 - lam) * gmix[i];
      }
    } else {
      sum += js_divergence(pmix.data(), gM.cls_row(k), n);
    }
  }
  return sum * inv;
}

/// @brief Fixed-target consistency on singly-foreground locations: mean KL
/// from the foreground source's class distribution to the mixed prediction,
/// plus a quarter-scaled squared-L2 offset term. Only the mixed prediction
/// receives gradient; the foreground grid is a constant target.
inline std::pair<double, double> type2_loss(const PredictionGrid& gFg, const PredictionGrid& gM,
                                            const std::vector<std::uint8_t>& mask,
                                            GridGrad* dM = nullptr, double grad_scale = 1.0) {
  if (gFg.K != gM.K || gFg.C != gM.C || mask.size() != gFg.K)
    throw std::invalid_argument("type2_loss: shape mismatch");
  const std::size_t cnt = mask_count(mask);
  if (cnt == 0) return {0.0, 0.0};
  const std::size_t n = gFg.C + 1;
  const double inv = 1.0 / static_cast<double>(cnt);
  double cls = 0.0, loc = 0.0;
  for (std::size_t k = 0; k < gFg.K; ++k) {
    if (!mask[k]) continue;
    cls += kl_divergence(gFg.cls_row(k), gM.cls_row(k), n);
    if (dM) detail::kl_grad_q(gFg.cls_row(k), gM.cls_row(k), n, grad_scale * inv, dM->cls_row(k));
    const double* f = gFg.loc_row(k);
    const double* m = gM.loc_row(k);
    for (int j = 0; j < 4; ++j) {
      const double d = f[j] - m[j];
      loc += 0.25 * d * d;
      if (dM) dM->loc_row(k)[j] += grad_scale * inv * 0.5 * (m[j] - f[j]);
    }
  }
  return {cls * inv, loc * inv};
}

/// @brief Flip consistency with background elimination: mean JSD plus
/// quarter-scaled squared-L2 between an image's grid and its flipped twin's
/// grid (already re-indexed by the flip correspondence). Both grids are live.
inline std::pair<double, double> csd_loss(const PredictionGrid& gA, const PredictionGrid& gF,
                                          const ObjectnessMask& mA, GridGrad* dA = nullptr,
                                          GridGrad* dF = nullptr, double grad_scale = 1.0) {
  if (gA.K != gF.K || gA.C != gF.C || mA.bits.size() != gA.K)
    throw std::invalid_argument("csd_loss: shape mismatch");
  const std::size_t cnt = mA.count();
  if (cnt == 0) return {0.0, 0.0};
  const std::size_t n = gA.C + 1;
  const double inv = 1.0 / static_cast<double>(cnt);
  double cls = 0.0, loc = 0.0;
  for (std::size_t k = 0; k < gA.K; ++k) {
    if (!mA.bits[k]) continue;
    cls += detail::js_with_grad(gA.cls_row(k), gF.cls_row(k), n, grad_scale * inv,
                                dA ? dA->cls_row(k) : nullptr, dF ? dF->cls_row(k) : nullptr);
    const double* a = gA.loc_row(k);
    const double* f = gF.loc_row(k);
    for (int j = 0; j < 4; ++j) {
      const double d = a[j] - f[j];
      loc += 0.25 * d * d;
      if (dA) dA->loc_row(k)[j] += grad_scale * inv * 0.5 * d;
      if (dF) dF->loc_row(k)[j] -= grad_scale * inv * 0.5 * d;
    }
  }
  return {cls * inv, loc * inv};
}

/// @brief The full interpolation-consistency objective:
/// gamma1 * L_I + gamma2 * (L_II^A + L_II^B).
///
/// Fills the type1/type2/isd fields and counts of `out`. Gradients (when the
/// GridGrad pointers are given) are scaled by the gammas times grad_scale, so
/// they are gradients of gamma-weighted L_ISD itself.
inline void isd_loss(const PredictionGrid& gA, const PredictionGrid& gB, const PredictionGrid& gM,
                     double lam, const TypeMasks& tm, double gamma1, double gamma2,
                     LossBreakdown& out, GridGrad* dA = nullptr, GridGrad* dB = nullptr,
                     GridGrad* dM = nullptr, double grad_scale = 1.0) {
  if (gamma1 < 0.0 || gamma2 < 0.0) throw std::invalid_argument("isd_loss: negative gamma");
  out.n_type1 = mask_count(tm.m_I);
  out.n_type2a = mask_count(tm.m_IIA);
  out.n_type2b = mask_count(tm.m_IIB);
  out.l_type1 = type1_loss(gA, gB, gM, lam, tm.m_I, gamma1 == 0.0 ? nullptr : dA,
                           gamma1 == 0.0 ? nullptr : dB, gamma1 == 0.0 ? nullptr : dM,
                           grad_scale * gamma1);
  const auto [cls_a, loc_a] =
      type2_loss(gA, gM, tm.m_IIA, gamma2 == 0.0 ? nullptr : dM, grad_scale * gamma2);
  const auto [cls_b, loc_b] =
      type2_loss(gB, gM, tm.m_IIB, gamma2 == 0.0 ? nullptr : dM, grad_scale * gamma2);
  out.l_type2_cls = cls_a + cls_b;
  out.l_type2_loc = loc_a + loc_b;
  out.l_isd = gamma1 * out.l_type1 + gamma2 * (out.l_type2_cls + out.l_type2_loc);
}

/// @brief Ramp-up / plateau / ramp-down schedule for the unsupervised weight.
inline double weight_schedule(std::size_t t, std::size_t ramp_up, std::size_t total,
                              std::size_t ramp_down) {
  if (ramp_up + ramp_down > total)
    throw std::invalid_argument("weight_schedule: ramps exceed total");
  if (t > total) throw std::invalid_argument("weight_schedule: t > total");
  if (t < ramp_up) {
    const double x = 1.0 - static_cast<double>(t) / static_cast<double>(ramp_up);
    return std::exp(-5.0 * x * x);
  }
  if (t <= total - ramp_down) return 1.0;
  const double x =
      1.0 - static_cast<double>(total - t) / static_cast<double>(ramp_down);
  return std::exp(-12.5 * x * x);
}

/// @brief L_total = L_S + w * (L_CSD + L_ISD).
inline double total_loss(double l_sup, double l_csd, double l_isd, double w) {
  return l_sup + w * (l_csd + l_isd);
}

}  // namespace mixdet
