// SPDX-License-Identifier: Apache-2.0
//
// Synthetic bimodal scenes: each event deposits a Gaussian bump (in time) on
// both streams at its onset, on a class-specific channel, plus i.i.d. noise.
// Prompt ids encode the event classes in onset order but carry no timing, so
// cross-modal agreement on onsets must come from the latents themselves.
#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "duet/rng.hpp"
#include "duet/rope.hpp"
#include "duet/tensor.hpp"

namespace duet {

struct SynthConfig {
  double duration = 8.0;
  double sigma_time = 0.25;
  double noise_std = 0.05;
  int n_classes = 4;
  int d_v = 6;
  int d_a = 6;
  double min_onset_margin = 0.4;
  double min_gap = 1.2;
};

inline double class_amplitude(int c) { return 1.0 + 0.25 * c; }
inline int class_channel(int c, int d) { return c % d; }

inline constexpr int kPromptBos = 1;
inline constexpr int kPromptClassBase = 2;

struct EventScene {
  std::vector<double> onsets;   // strictly increasing, in [0, duration)
  std::vector<int> classes;     // one label per event
  std::vector<int> prompt_ids;  // BOS then class tokens in onset order

  static std::vector<int> encode_prompt(const std::vector<int>& classes) {
    std::vector<int> ids{kPromptBos};
    for (int c : classes) ids.push_back(kPromptClassBase + c);
    return ids;
  }

  void validate(const SynthConfig& cfg) const {
    if (onsets.empty() || onsets.size() > 4) throw std::invalid_argument("scene: event count outside [1,4]");
    if (onsets.size() != classes.size()) throw std::invalid_argument("scene: onsets/classes length mismatch");
    for (std::size_t i = 0; i < onsets.size(); ++i) {
      if (!(onsets[i] >= 0.0 && onsets[i] < cfg.duration))
        throw std::invalid_argument("scene: onset outside [0, duration)");
      if (i > 0 && !(onsets[i] > onsets[i - 1]))
        throw std::invalid_argument("scene: onsets must be strictly increasing");
      if (classes[i] < 0 || classes[i] >= cfg.n_classes)
        throw std::invalid_argument("scene: class out of range");
    }
  }

  static EventScene random(Rng& rng, const SynthConfig& cfg, int min_events = 1, int max_events = 4) {
    EventScene s;
    const int want = int(rng.uniform_int(min_events, max_events));
    const double lo = cfg.min_onset_margin;
    const double hi = cfg.duration - cfg.min_onset_margin;
    for (int k = 0; k < want; ++k) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        const double cand = rng.uniform(lo, hi);
        bool ok = true;
        for (double o : s.onsets)
          if (std::abs(o - cand) < cfg.min_gap) ok = false;
        if (ok) {
          s.onsets.push_back(cand);
          break;
        }
      }
    }
    if (s.onsets.empty()) s.onsets.push_back(rng.uniform(lo, hi));
    std::sort(s.onsets.begin(), s.onsets.end());
    for (std::size_t i = 0; i < s.onsets.size(); ++i)
      s.classes.push_back(int(rng.uniform_int(0, cfg.n_classes - 1)));
    s.prompt_ids = encode_prompt(s.classes);
    s.validate(cfg);
    return s;
  }
};

namespace detail {

// One stream: bump values normalized so the discrete time integral of each
// event's channel equals its class amplitude.
inline void deposit_events(Tensor& x, const EventScene& scene, double rate, const SynthConfig& cfg) {
  const int tokens = x.rows();
  const double dt = 1.0 / rate;
  for (std::size_t e = 0; e < scene.onsets.size(); ++e) {
    const double onset = scene.onsets[e];
    const int ch = class_channel(scene.classes[e], x.cols());
    const double amp = class_amplitude(scene.classes[e]);
    std::vector<double> w(std::size_t(tokens), 0.0);
    double mass = 0.0;
    for (int i = 0; i < tokens; ++i) {
      const double t = i / rate;
      w[std::size_t(i)] = std::exp(-(t - onset) * (t - onset) / (2.0 * cfg.sigma_time * cfg.sigma_time));
      mass += w[std::size_t(i)] * dt;
    }
    for (int i = 0; i < tokens; ++i) x.at(i, ch) += amp * w[std::size_t(i)] / mass;
  }
}

}  // namespace detail

inline std::pair<Tensor, Tensor> synth_pair(const EventScene& scene, const TimeGrid& grid, Rng& rng,
                                            const SynthConfig& cfg = {}) {
  scene.validate(cfg);
  const int t_v = int(std::lround(grid.f_v * cfg.duration));
  const int t_a = int(std::lround(grid.f_a * cfg.duration));
  Tensor x_v({t_v, cfg.d_v});
  Tensor x_a({t_a, cfg.d_a});
  detail::deposit_events(x_v, scene, grid.f_v, cfg);
  detail::deposit_events(x_a, scene, grid.f_a, cfg);
  if (cfg.noise_std > 0.0) {
    for (double& v : x_v.data) v += cfg.noise_std * rng.normal();
    for (double& v : x_a.data) v += cfg.noise_std * rng.normal();
  }
  return {std::move(x_v), std::move(x_a)};
}

}  // namespace duet
