// SPDX-License-Identifier: Apache-2.0
//
// Clip-metadata curation: speech window generation over VAD segments and
// scene splits, threshold gates over per-clip quality records, and retention
// accounting. Window generation follows the published pseudocode verbatim,
// including the index-advance rule and the keep conditions.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "duet/rng.hpp"

namespace duet::curation {

inline constexpr double kSegmentDuration = 8.05;

struct SpeechSegment {
  double start = 0.0;
  double end = 0.0;
};

using SceneSplits = std::vector<double>;

enum class WindowKind { multi_shot, single_shot };

struct ClipWindow {
  double start = 0.0;
  double end = 0.0;  // start + kSegmentDuration
  WindowKind kind = WindowKind::multi_shot;
};

namespace detail {

inline void validate_inputs(const std::vector<SpeechSegment>& segments, const SceneSplits& splits) {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!(segments[i].start >= 0.0) || !(segments[i].start < segments[i].end))
      throw std::invalid_argument("windows: malformed speech segment");
    if (i > 0 && segments[i].start < segments[i - 1].end)
      throw std::invalid_argument("windows: speech segments overlap or are unsorted");
  }
  for (std::size_t i = 1; i < splits.size(); ++i)
    if (!(splits[i] > splits[i - 1])) throw std::invalid_argument("windows: scene splits not strictly increasing");
}

inline std::optional<double> last_split_before(const SceneSplits& splits, double t) {
  auto it = std::lower_bound(splits.begin(), splits.end(), t);
  if (it == splits.begin()) return std::nullopt;
  return *std::prev(it);
}

inline bool any_split_within(const SceneSplits& splits, double lo, double hi) {
  auto it = std::lower_bound(splits.begin(), splits.end(), lo);
  return it != splits.end() && *it <= hi;
}

inline std::size_t advance_past(const std::vector<SpeechSegment>& segments, std::size_t idx,
                                double window_end) {
  while (idx < segments.size() && segments[idx].start <= window_end) ++idx;
  return idx;
}

}  // namespace detail

/// Fixed-length windows anchored on speech segments, kept only when they span
/// at least one scene split.
inline std::vector<ClipWindow> multi_shot_windows(const std::vector<SpeechSegment>& segments,
                                                  const SceneSplits& splits, Rng& rng) {
  detail::validate_inputs(segments, splits);
  std::vector<ClipWindow> out;
  std::size_t idx = 0;
  while (idx < segments.size()) {
    const double upper = segments[idx].start;
    double window_start;
    if (idx == 0) {
      window_start = upper;
    } else {
      double lower = segments[idx - 1].end;
      if (auto p = detail::last_split_before(splits, segments[idx].start)) lower = std::max(lower, *p);
      lower = std::max(lower, segments[idx].start - kSegmentDuration / 2.0);
      if (lower > upper) {  // only reachable on malformed data
        std::fprintf(stderr, "multi_shot_windows: skipping segment %zu (empty draw range)\n", idx);
        ++idx;
        continue;
      }
      window_start = rng.uniform(lower, upper);
    }
    const double window_end = window_start + kSegmentDuration;
    if (detail::any_split_within(splits, window_start, window_end))
      out.push_back({window_start, window_end, WindowKind::multi_shot});
    idx = detail::advance_past(segments, idx, window_end);
  }
  return out;
}

/// Fixed-length windows fully contained in one scene interval (consecutive
/// split pair); the eligibility test requires the anchor segment to start
/// inside the scene with room for a whole window.
inline std::vector<ClipWindow> single_shot_windows(const std::vector<SpeechSegment>& segments,
                                                   const SceneSplits& splits, Rng& rng) {
  detail::validate_inputs(segments, splits);
  std::vector<ClipWindow> out;
  for (std::size_t i = 0; i + 1 < splits.size(); ++i) {
    const double scene_start = splits[i];
    const double scene_end = splits[i + 1];
    std::size_t idx = 0;
    bool found = false;
    for (; idx < segments.size(); ++idx)
      if (segments[idx].start > scene_start && segments[idx].start + kSegmentDuration < scene_end) {
        found = true;
        break;
      }
    if (!found) continue;
    while (idx < segments.size()) {
      const double upper = segments[idx].start;
      double window_start;
      if (idx == 0) {
        window_start = upper;
      } else {
        const double lower = std::max({segments[idx - 1].end, scene_start,
                                       segments[idx].start - kSegmentDuration / 2.0});
        if (lower > upper) {
          std::fprintf(stderr, "single_shot_windows: skipping segment %zu (empty draw range)\n", idx);
          ++idx;
          continue;
        }
        window_start = rng.uniform(lower, upper);
      }
      const double window_end = window_start + kSegmentDuration;
      if (window_end >= scene_end) break;
      out.push_back({window_start, window_end, WindowKind::single_shot});
      idx = detail::advance_past(segments, idx, window_end);
    }
  }
  return out;
}

/// Frame count for the fixed window: the initial frame plus 8 seconds.
inline long long frames_for_window(long long fps) {
  if (fps <= 0) throw std::invalid_argument("frames_for_window: fps must be positive");
  return 1 + 8 * fps;
}

// ------------------------------------------------------------------- gates

struct MetricRecord {
  std::string clip_id;
  std::optional<double> silence_ratio;
  std::optional<double> bandwidth_hz;
  std::optional<double> audiobox_pq;
  std::optional<double> audiobox_cu;
  std::optional<double> audiobox_ce;
  std::optional<double> dover_aesthetic;
  std::optional<double> dover_technical;
  std::optional<double> ib_score;
  std::optional<double> desync;
  std::optional<bool> eat_speech;
  std::optional<bool> eat_singing;
  std::optional<double> lse_d;
  std::optional<double> lse_c;
};

enum class GateProfile { stage2, speech, phase2 };

struct GateConfig {
  GateProfile profile = GateProfile::stage2;
  double max_silence_ratio = 0.8;        // strict <
  double min_bandwidth_hz = 1000.0;      // strict >
  double min_audiobox_pq = 5.0;          // strict >
  double min_audiobox_cu = 4.5;          // strict >
  double min_audiobox_ce = 2.5;          // strict >
  double min_dover_aesthetic = 0.85;     // strict >
  double min_dover_technical = 0.05;     // strict >
  double min_ib_score = 0.2;             // >=
  double max_desync = 0.5;               // <=
  double max_lse_d = 9.5;                // <= (phase2)
  double min_lse_c = 4.5;                // >= (phase2)
  double phase2_min_dover_technical = 0.15;  // strict > (phase2)
};

struct GateDecision {
  bool pass = false;
  std::vector<std::string> reasons;  // failed rules, empty when passing
};

inline GateDecision apply_gates(const MetricRecord& r, const GateConfig& cfg) {
  GateDecision d;
  auto need_d = [&](const std::optional<double>& f, const char* name) -> const double* {
    if (!f) {
      d.reasons.push_back(std::string("missing:") + name);
      return nullptr;
    }
    return &*f;
  };
  auto need_b = [&](const std::optional<bool>& f, const char* name) -> const bool* {
    if (!f) {
      d.reasons.push_back(std::string("missing:") + name);
      return nullptr;
    }
    return &*f;
  };
  auto rule = [&](bool ok, const char* name) {
    if (!ok) d.reasons.push_back(name);
  };

  if (const double* v = need_d(r.silence_ratio, "silence_ratio")) rule(*v < cfg.max_silence_ratio, "silence_ratio");
  if (const double* v = need_d(r.bandwidth_hz, "bandwidth_hz")) rule(*v > cfg.min_bandwidth_hz, "bandwidth_hz");
  if (const double* v = need_d(r.audiobox_pq, "audiobox_pq")) rule(*v > cfg.min_audiobox_pq, "audiobox_pq");
  if (const double* v = need_d(r.audiobox_cu, "audiobox_cu")) rule(*v > cfg.min_audiobox_cu, "audiobox_cu");
  if (const double* v = need_d(r.audiobox_ce, "audiobox_ce")) rule(*v > cfg.min_audiobox_ce, "audiobox_ce");
  if (const double* v = need_d(r.dover_aesthetic, "dover_aesthetic"))
    rule(*v > cfg.min_dover_aesthetic, "dover_aesthetic");
  if (const double* v = need_d(r.dover_technical, "dover_technical")) {
    rule(*v > cfg.min_dover_technical, "dover_technical");
    if (cfg.profile == GateProfile::phase2)
      rule(*v > cfg.phase2_min_dover_technical, "dover_technical_phase2");
  }
  {
    const double* ib = need_d(r.ib_score, "ib_score");
    const double* ds = need_d(r.desync, "desync");
    if (ib && ds) rule(*ib >= cfg.min_ib_score || *ds <= cfg.max_desync, "alignment");
  }
  if (cfg.profile == GateProfile::speech) {
    const bool* sp = need_b(r.eat_speech, "eat_speech");
    const bool* si = need_b(r.eat_singing, "eat_singing");
    if (sp) rule(*sp, "eat_speech");
    if (si) rule(*si, "eat_singing");
  }
  if (cfg.profile == GateProfile::phase2) {
    if (const double* v = need_d(r.lse_d, "lse_d")) rule(*v <= cfg.max_lse_d, "lse_d");
    if (const double* v = need_d(r.lse_c, "lse_c")) rule(*v >= cfg.min_lse_c, "lse_c");
  }
  d.pass = d.reasons.empty();
  return d;
}

// --------------------------------------------------------------- retention

struct RetentionReport {
  struct Stage {
    std::string name;
    long long count = 0;
    double percent = 0.0;  // 100 * count / raw, rounded to 2 decimals
  };
  long long raw = 0;
  std::vector<Stage> stages;
};

inline RetentionReport retention_report(long long raw,
                                        const std::vector<std::pair<std::string, long long>>& stages) {
  if (raw <= 0) throw std::domain_error("retention_report: raw count must be positive");
  RetentionReport rep;
  rep.raw = raw;
  double prev = 101.0;
  for (const auto& [name, count] : stages) {
    if (count < 0) throw std::domain_error("retention_report: negative stage count");
    const double pct = std::round(100.0 * double(count) / double(raw) * 100.0) / 100.0;
    if (pct > prev) throw std::domain_error("retention_report: stage percentages must be non-increasing");
    prev = pct;
    rep.stages.push_back({name, count, pct});
  }
  return rep;
}

}  // namespace duet::curation
