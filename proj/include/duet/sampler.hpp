// SPDX-License-Identifier: Apache-2.0
//
// Euler sampler for the guided velocity field. The step grid is uniform in
// nominal time t and mapped through each modality's sigma schedule, so
// shift=1 integrates on a uniform tau grid and larger shifts concentrate
// steps toward high noise; schedules are free to differ per modality and can
// be changed at inference without retraining.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "duet/guidance.hpp"
#include "duet/model.hpp"
#include "duet/rng.hpp"
#include "duet/schedule.hpp"
#include "duet/tensor.hpp"

namespace duet {

enum class GuidanceMode { dual, text_only, text_modality, swapped };

struct SampleConfig {
  int n_steps = 24;
  GuidanceScales scales{3.0, 5.0};
  GuidanceMode mode = GuidanceMode::dual;
  SigmaShiftSchedule sched_v{5.0};
  SigmaShiftSchedule sched_a{1.0};
};

struct SampleStats {
  int branch_evals = 0;
};

namespace detail {

inline GuidanceScales effective_scales(GuidanceMode mode, GuidanceScales s) {
  switch (mode) {
    case GuidanceMode::text_only:
      return {1.0, s.s_t};
    case GuidanceMode::text_modality:
      return {s.s_b, s.s_b};
    default:
      return s;
  }
}

}  // namespace detail

/// ModelT must provide config() and forward(Tape*, z_v, z_a, tau_v, tau_a,
/// cond, expert). Deterministic given the rng seed.
template <typename ModelT>
std::pair<Tensor, Tensor> sample(ModelT& model, const ConditionSet& cond, const SampleConfig& cfg,
                                 Rng& rng, SampleStats* stats = nullptr) {
  if (cfg.n_steps < 1) throw std::invalid_argument("sample: n_steps must be at least 1");
  if (cfg.sched_v.variant != SigmaVariant::normalized || cfg.sched_a.variant != SigmaVariant::normalized)
    throw std::invalid_argument("sample: integration requires normalized schedules");
  const ModelConfig& mc = model.config();
  Tensor z_v = randn({mc.video.seq_len, mc.d_v}, rng);
  Tensor z_a = randn({mc.audio.seq_len, mc.d_a}, rng);

  const GuidanceScales eff = detail::effective_scales(cfg.mode, cfg.scales);

  for (int k = 0; k < cfg.n_steps; ++k) {
    const double t_hi = double(cfg.n_steps - k) / double(cfg.n_steps);
    const double t_lo = double(cfg.n_steps - k - 1) / double(cfg.n_steps);
    const double tau_v = cfg.sched_v.sigma(t_hi);
    const double tau_a = cfg.sched_a.sigma(t_hi);
    const double dtau_v = tau_v - cfg.sched_v.sigma(t_lo);
    const double dtau_a = tau_a - cfg.sched_a.sigma(t_lo);
    VideoExpert expert = VideoExpert::single;
    if constexpr (requires { model.pick_expert(t_hi); }) {
      if (mc.experts.enabled) expert = model.pick_expert(t_hi);
    }

    auto eval = [&](bool with_text, bool with_bridge) -> VelocityPair {
      ConditionSet c = cond;
      if (!with_text) c.text_tokens.reset();
      // a condition that disables the bridge pins it off in every branch
      c.bridge_enabled = cond.bridge_enabled && with_bridge;
      auto [v, a] = model.forward(nullptr, z_v, z_a, tau_v, tau_a, c, expert);
      if (stats) ++stats->branch_evals;
      return {std::move(v), std::move(a)};
    };

    VelocityPair vel;
    if (cfg.mode == GuidanceMode::swapped) {
      const SwappedBranchPlan plan = plan_branches_swapped(eff);
      SwappedBranchOutputs b;
      if (plan.need_uu) b.uu = eval(false, false);
      if (plan.need_tu) b.tu = eval(true, false);
      b.tb = eval(true, true);
      vel = combine_swapped(b, eff);
    } else {
      const BranchPlan plan = plan_branches(eff);
      BranchOutputs b;
      if (plan.need_uu) b.uu = eval(false, false);
      if (plan.need_ub) b.ub = eval(false, true);
      b.tb = eval(true, true);
      vel = combine(b, eff);
    }
    if (!vel.v.all_finite() || !vel.a.all_finite())
      throw std::runtime_error("sample: non-finite velocity at step " + std::to_string(k));

    for (int i = 0; i < z_v.numel(); ++i) z_v.data[std::size_t(i)] -= dtau_v * vel.v.data[std::size_t(i)];
    for (int i = 0; i < z_a.numel(); ++i) z_a.data[std::size_t(i)] -= dtau_a * vel.a.data[std::size_t(i)];
  }
  return {std::move(z_v), std::move(z_a)};
}

}  // namespace duet
