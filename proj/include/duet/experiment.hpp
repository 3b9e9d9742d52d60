// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synchronization experiment: train the toy dual-tower model on
// synthetic scenes, then compare cross-modal onset agreement of generated
// pairs with the bridge active versus disabled, and sweep the cross-modal
// guidance scale. Evaluation noise and prompts are paired across arms and
// sweep points so differences come from the guidance configuration alone.
#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "duet/dataset.hpp"
#include "duet/model.hpp"
#include "duet/optim.hpp"
#include "duet/sampler.hpp"
#include "duet/sync.hpp"
#include "duet/train.hpp"

namespace duet {

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  OptimizerGroups opt;
  SynthConfig synth;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int eval_scenes = 16;
  int eval_min_events = 1;
  int eval_max_events = 2;
  int sample_steps = 24;
  double s_t = 5.0;
  double bridge_arm_s_b = 3.0;
  std::vector<double> s_b_sweep{1.0, 2.0, 3.0, 3.5};
  double failure_offset_s = 8.0;  // detection failures score as the invariant maximum
};

struct SweepRow {
  double s_b = 0.0;
  double median_offset_s = 0.0;
  double mean_f1 = 0.0;
  int failures = 0;
  int scenes = 0;
};

struct ExperimentResult {
  double bridge_median_offset_s = 0.0;
  double nobridge_median_offset_s = 0.0;
  int bridge_failures = 0;
  int nobridge_failures = 0;
  std::vector<SweepRow> sweep;
  double sweep_spearman = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> ranks_with_ties(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * (double(i) + double(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

/// Spearman rank correlation with tie-averaged ranks.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need matched samples");
  const std::vector<double> rx = detail::ranks_with_ties(x);
  const std::vector<double> ry = detail::ranks_with_ties(y);
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= double(n);
  my /= double(n);
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;
  return num / std::sqrt(dx * dy);
}

inline ExperimentResult run_sync_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  ExperimentResult result;
  std::vector<double> bridge_offsets, nobridge_offsets;
  std::vector<std::vector<double>> sweep_offsets(cfg.s_b_sweep.size());
  std::vector<std::vector<double>> sweep_f1(cfg.s_b_sweep.size());
  std::vector<int> sweep_failures(cfg.s_b_sweep.size(), 0);

  for (const std::uint64_t seed : cfg.seeds) {
    ModelConfig mc = cfg.model;
    DualTowerModel model(mc, seed);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, "train");
    GroupedAdamW opt(cfg.opt);
    SynthConfig synth = cfg.synth;
    train_loop(model, tc, synth, opt);
    if (log) (*log) << "seed " << seed << ": trained " << tc.steps << " steps\n";

    synth.d_v = mc.d_v;
    synth.d_a = mc.d_a;

    auto eval_arm = [&](bool bridge_on, const GuidanceScales& scales, std::vector<double>& offsets,
                        std::vector<double>* f1s, int& failures) {
      for (int e = 0; e < cfg.eval_scenes; ++e) {
        Rng scene_rng(derive_seed(seed, "eval-scene-" + std::to_string(e)));
        EventScene scene = EventScene::random(scene_rng, synth, cfg.eval_min_events, cfg.eval_max_events);
        ConditionSet cond;
        cond.text_tokens = scene.prompt_ids;
        cond.bridge_enabled = bridge_on;
        cond.first_frame = tc.use_frame_token ? std::optional<Tensor>(ConditionSet::white_frame(mc.d_v))
                                              : std::nullopt;
        SampleConfig sc;
        sc.n_steps = cfg.sample_steps;
        sc.scales = scales;
        sc.mode = GuidanceMode::dual;
        sc.sched_v = SigmaShiftSchedule(tc.shift_v);
        sc.sched_a = SigmaShiftSchedule(tc.shift_a);
        Rng noise_rng(derive_seed(seed, "eval-noise-" + std::to_string(e)));
        auto [x_v, x_a] = sample(model, cond, sc, noise_rng);
        const SyncOutcome out = sync_score(x_v, x_a, mc.grid, synth);
        if (out.ok()) {
          offsets.push_back(out.report->offset_error_s);
          if (f1s) f1s->push_back(out.report->event_f1);
        } else {
          offsets.push_back(cfg.failure_offset_s);
          if (f1s) f1s->push_back(0.0);
          ++failures;
        }
      }
    };

    eval_arm(true, {cfg.bridge_arm_s_b, cfg.s_t}, bridge_offsets, nullptr, result.bridge_failures);
    eval_arm(false, {1.0, cfg.s_t}, nobridge_offsets, nullptr, result.nobridge_failures);
    for (std::size_t i = 0; i < cfg.s_b_sweep.size(); ++i)
      eval_arm(true, {cfg.s_b_sweep[i], cfg.s_t}, sweep_offsets[i], &sweep_f1[i], sweep_failures[i]);

    if (log)
      (*log) << "seed " << seed << ": bridge median so far " << detail::median_of(bridge_offsets)
             << " vs no-bridge " << detail::median_of(nobridge_offsets) << "\n";
  }

  result.bridge_median_offset_s = detail::median_of(bridge_offsets);
  result.nobridge_median_offset_s = detail::median_of(nobridge_offsets);
  std::vector<double> medians;
  for (std::size_t i = 0; i < cfg.s_b_sweep.size(); ++i) {
    SweepRow row;
    row.s_b = cfg.s_b_sweep[i];
    row.median_offset_s = detail::median_of(sweep_offsets[i]);
    double f1 = 0.0;
    for (double v : sweep_f1[i]) f1 += v;
    row.mean_f1 = sweep_f1[i].empty() ? 0.0 : f1 / double(sweep_f1[i].size());
    row.failures = sweep_failures[i];
    row.scenes = int(sweep_offsets[i].size());
    result.sweep.push_back(row);
    medians.push_back(row.median_offset_s);
  }
  if (cfg.s_b_sweep.size() >= 2) result.sweep_spearman = spearman_rho(cfg.s_b_sweep, medians);
  return result;
}

}  // namespace duet
