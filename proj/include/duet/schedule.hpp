// SPDX-License-Identifier: Apache-2.0
//
// Flow-matching paths, per-modality sigma-shift schedules, decoupled
// timestep draws, and the weighted velocity-regression loss.
#pragma once

#include <cmath>
#include <stdexcept>

#include "duet/rng.hpp"
#include "duet/tensor.hpp"

namespace duet {

enum class SigmaVariant { normalized, paper_verbatim };

// sigma(t) for one modality. The normalized variant maps [0,1] onto [0,1]
// (usable as a mixing coefficient); the verbatim variant reaches
// sigma(1) = shift and is kept selectable for fidelity.
struct SigmaShiftSchedule {
  double shift = 1.0;
  SigmaVariant variant = SigmaVariant::normalized;

  SigmaShiftSchedule() = default;
  SigmaShiftSchedule(double shift_, SigmaVariant variant_ = SigmaVariant::normalized)
      : shift(shift_), variant(variant_) {
    if (!(shift > 0.0)) throw std::invalid_argument("sigma schedule: shift must be positive");
  }

  double sigma(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("sigma: t outside [0,1]");
    if (variant == SigmaVariant::paper_verbatim) return shift * t / (shift + t * (1.0 - shift));
    return shift * t / (1.0 + (shift - 1.0) * t);
  }

  /// Inverse of the normalized variant.
  double sigma_inverse(double s) const {
    if (variant != SigmaVariant::normalized)
      throw std::invalid_argument("sigma_inverse: normalized variant only");
    if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("sigma_inverse: value outside [0,1]");
    return s / (shift - (shift - 1.0) * s);
  }
};

enum class TimestepMode { decoupled, shared };

struct TimestepDraw {
  double t_v = 0.0;
  double t_a = 0.0;
  std::uint64_t rng_seed = 0;
};

/// decoupled: two independent U(0,1) draws; shared: t_a == t_v.
inline TimestepDraw draw_timesteps(Rng& rng, TimestepMode mode) {
  TimestepDraw d;
  d.rng_seed = rng.seed();
  d.t_v = rng.uniform();
  d.t_a = mode == TimestepMode::decoupled ? rng.uniform() : d.t_v;
  return d;
}

struct FlowSample {
  Tensor x0;
  Tensor eps;
  double t = 0.0;
  Tensor x_t;       // (1 - sigma(t)) x0 + sigma(t) eps
  Tensor target_v;  // eps - x0, independent of t
};

inline FlowSample corrupt(const Tensor& x0, const Tensor& eps, double t,
                          const SigmaShiftSchedule& schedule) {
  if (!same_shape(x0, eps)) throw std::invalid_argument("corrupt: shape mismatch");
  if (schedule.variant != SigmaVariant::normalized)
    throw std::invalid_argument("corrupt: requires the normalized sigma variant");
  const double s = schedule.sigma(t);
  FlowSample out;
  out.x0 = x0;
  out.eps = eps;
  out.t = t;
  out.x_t = Tensor(x0.shape);
  out.target_v = Tensor(x0.shape);
  for (int i = 0; i < x0.numel(); ++i) {
    out.x_t.data[std::size_t(i)] = (1.0 - s) * x0.data[std::size_t(i)] + s * eps.data[std::size_t(i)];
    out.target_v.data[std::size_t(i)] = eps.data[std::size_t(i)] - x0.data[std::size_t(i)];
  }
  return out;
}

struct LossWeights {
  double lambda_v = 1.0;
  double lambda_a = 0.2;

  LossWeights() = default;
  LossWeights(double lv, double la) : lambda_v(lv), lambda_a(la) {
    if (!(lambda_v > 0.0) || !(lambda_a > 0.0))
      throw std::invalid_argument("loss weights must be positive");
  }
};

/// lambda_v * mean|pred_v - tgt_v|^2 + lambda_a * mean|pred_a - tgt_a|^2.
inline Tensor fm_loss(Tape* tp, const Tensor& pred_v, const Tensor& pred_a, const Tensor& tgt_v,
                      const Tensor& tgt_a, const LossWeights& w) {
  detail::check_same_shape(pred_v, tgt_v, "fm_loss(video)");
  detail::check_same_shape(pred_a, tgt_a, "fm_loss(audio)");
  Tensor dv = sub(tp, pred_v, tgt_v);
  Tensor da = sub(tp, pred_a, tgt_a);
  Tensor mv = mean(tp, mul(tp, dv, dv));
  Tensor ma = mean(tp, mul(tp, da, da));
  return add(tp, scale(tp, mv, w.lambda_v), scale(tp, ma, w.lambda_a));
}

}  // namespace duet
