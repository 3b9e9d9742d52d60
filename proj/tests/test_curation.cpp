// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "duet/curation.hpp"

using namespace duet;
using namespace duet::curation;

TEST_CASE("multi-shot windows: hand-traced fixtures") {
  // anchor at the first segment, kept because it spans the split at 4.0;
  // the second draw range is [7.975, 12.0] and can never reach the only split
  std::vector<SpeechSegment> segs{{2.0, 5.0}, {12.0, 15.0}};
  SceneSplits splits{4.0};
  for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
    Rng rng(seed);
    auto w = multi_shot_windows(segs, splits, rng);
    REQUIRE(w.size() == 1);
    REQUIRE(w[0].start == 2.0);
    REQUIRE(w[0].end == Catch::Approx(10.05).margin(1e-12));
    REQUIRE(w[0].kind == WindowKind::multi_shot);
  }

  // no scene splits: the keep condition is unsatisfiable
  Rng rng2(3);
  REQUIRE(multi_shot_windows(segs, {}, rng2).empty());

  // single segment at zero with one split inside the window
  Rng rng3(4);
  auto w3 = multi_shot_windows({{0.0, 1.5}}, {3.0}, rng3);
  REQUIRE(w3.size() == 1);
  REQUIRE(w3[0].start == 0.0);
  REQUIRE(w3[0].end == Catch::Approx(8.05).margin(1e-12));
}

TEST_CASE("multi-shot windows: second draw range matches the hand trace") {
  // lower bound = max(5.0, 4.0, 12 - 4.025) = 7.975
  std::vector<SpeechSegment> segs{{2.0, 5.0}, {12.0, 15.0}};
  SceneSplits splits{4.0, 13.0};  // extra split lets second windows be kept
  double lo = 1e9, hi = -1e9;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    Rng rng(seed);
    auto w = multi_shot_windows(segs, splits, rng);
    REQUIRE(w.size() == 2);  // second window always spans the 13.0 split
    lo = std::min(lo, w[1].start);
    hi = std::max(hi, w[1].start);
    REQUIRE(w[1].start >= 7.975);
    REQUIRE(w[1].start <= 12.0);
  }
  REQUIRE(lo < 8.4);   // draws cover the range
  REQUIRE(hi > 11.5);
}

TEST_CASE("single-shot windows: hand-traced fixtures") {
  // eligible: 3 > 0 and 3 + 8.05 < 20; idx == 0 starts at the segment start
  Rng rng(5);
  auto w = single_shot_windows({{3.0, 6.0}}, {0.0, 20.0}, rng);
  REQUIRE(w.size() == 1);
  REQUIRE(w[0].start == 3.0);
  REQUIRE(w[0].end == Catch::Approx(11.05).margin(1e-12));
  REQUIRE(w[0].kind == WindowKind::single_shot);

  // scene shorter than the window: eligibility fails
  Rng rng2(6);
  REQUIRE(single_shot_windows({{1.0, 2.0}}, {0.0, 5.0}, rng2).empty());

  // second window would always cross scene_end: dropped by the break
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng3(seed);
    auto w3 = single_shot_windows({{1.0, 2.0}, {9.5, 10.0}}, {0.0, 13.0}, rng3);
    REQUIRE(w3.size() == 1);
    REQUIRE(w3[0].start == 1.0);
  }
}

TEST_CASE("windowing: determinism and contract errors") {
  std::vector<SpeechSegment> segs{{1.0, 2.0}, {6.0, 7.5}, {14.0, 16.0}};
  SceneSplits splits{3.0, 9.0, 15.0};
  Rng a(7), b(7);
  auto wa = multi_shot_windows(segs, splits, a);
  auto wb = multi_shot_windows(segs, splits, b);
  REQUIRE(wa.size() == wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) REQUIRE(wa[i].start == wb[i].start);

  Rng c(8);
  REQUIRE_THROWS_AS(multi_shot_windows({{2.0, 1.0}}, splits, c), std::invalid_argument);
  REQUIRE_THROWS_AS(multi_shot_windows({{0.0, 3.0}, {2.0, 4.0}}, splits, c), std::invalid_argument);
  REQUIRE_THROWS_AS(single_shot_windows(segs, {3.0, 2.0}, c), std::invalid_argument);
}

TEST_CASE("window length is pinned and frames follow 1 + 8 fps") {
  REQUIRE(frames_for_window(24) == 193);
  REQUIRE(frames_for_window(1) == 9);
  REQUIRE(frames_for_window(30) == 241);
  REQUIRE_THROWS_AS(frames_for_window(0), std::invalid_argument);

  Rng rng(9);
  auto w = multi_shot_windows({{0.0, 1.0}}, {4.0}, rng);
  REQUIRE(w.size() == 1);
  REQUIRE(w[0].end - w[0].start == kSegmentDuration);
}

namespace {

MetricRecord passing_record() {
  MetricRecord r;
  r.clip_id = "clip";
  r.silence_ratio = 0.5;
  r.bandwidth_hz = 8000.0;
  r.audiobox_pq = 6.0;
  r.audiobox_cu = 5.0;
  r.audiobox_ce = 3.0;
  r.dover_aesthetic = 0.9;
  r.dover_technical = 0.1;
  r.ib_score = 0.25;
  r.desync = 0.6;
  r.eat_speech = true;
  r.eat_singing = true;
  r.lse_d = 9.0;
  r.lse_c = 5.0;
  return r;
}

}  // namespace

TEST_CASE("gates: pass/fail fixtures and boundary strictness") {
  GateConfig cfg;
  REQUIRE(apply_gates(passing_record(), cfg).pass);  // alignment passes via the ib arm

  MetricRecord sil = passing_record();
  sil.silence_ratio = 0.8;  // strict <
  auto d = apply_gates(sil, cfg);
  REQUIRE_FALSE(d.pass);
  REQUIRE(d.reasons == std::vector<std::string>{"silence_ratio"});

  MetricRecord desync_arm = passing_record();
  desync_arm.ib_score = 0.1;
  desync_arm.desync = 0.4;  // alignment passes via the desync arm
  REQUIRE(apply_gates(desync_arm, cfg).pass);

  MetricRecord both_bad = passing_record();
  both_bad.ib_score = 0.19;
  both_bad.desync = 0.51;
  auto d2 = apply_gates(both_bad, cfg);
  REQUIRE_FALSE(d2.pass);
  REQUIRE(d2.reasons == std::vector<std::string>{"alignment"});

  // boundary semantics, one rule at a time
  auto flip = [&](auto setter, bool expect_pass) {
    MetricRecord r = passing_record();
    setter(r);
    return apply_gates(r, cfg).pass == expect_pass;
  };
  REQUIRE(flip([](MetricRecord& r) { r.bandwidth_hz = 1000.0; }, false));   // strict >
  REQUIRE(flip([](MetricRecord& r) { r.audiobox_pq = 5.0; }, false));       // strict >
  REQUIRE(flip([](MetricRecord& r) { r.audiobox_cu = 4.5; }, false));       // strict >
  REQUIRE(flip([](MetricRecord& r) { r.audiobox_ce = 2.5; }, false));       // strict >
  REQUIRE(flip([](MetricRecord& r) { r.dover_aesthetic = 0.85; }, false));  // strict >
  REQUIRE(flip([](MetricRecord& r) { r.dover_technical = 0.05; }, false));  // strict >
  REQUIRE(flip([](MetricRecord& r) { r.ib_score = 0.2; r.desync = 2.0; }, true));    // >=
  REQUIRE(flip([](MetricRecord& r) { r.ib_score = -1.0; r.desync = 0.5; }, true));   // <=
}

TEST_CASE("gates: profiles add their extra rules") {
  GateConfig speech;
  speech.profile = GateProfile::speech;
  REQUIRE(apply_gates(passing_record(), speech).pass);
  MetricRecord no_sing = passing_record();
  no_sing.eat_singing = false;
  auto d = apply_gates(no_sing, speech);
  REQUIRE_FALSE(d.pass);
  REQUIRE(d.reasons == std::vector<std::string>{"eat_singing"});

  GateConfig phase2;
  phase2.profile = GateProfile::phase2;
  MetricRecord ok2 = passing_record();
  ok2.dover_technical = 0.2;
  REQUIRE(apply_gates(ok2, phase2).pass);
  MetricRecord weak_tech = passing_record();  // 0.1 passes stage2 but not phase2
  auto d2 = apply_gates(weak_tech, phase2);
  REQUIRE_FALSE(d2.pass);
  REQUIRE(d2.reasons == std::vector<std::string>{"dover_technical_phase2"});
  MetricRecord lse = ok2;
  lse.lse_d = 9.5;  // <= passes at the boundary
  lse.lse_c = 4.5;  // >= passes at the boundary
  REQUIRE(apply_gates(lse, phase2).pass);
  lse.lse_d = 9.51;
  REQUIRE_FALSE(apply_gates(lse, phase2).pass);
}

TEST_CASE("gates: missing fields fail with a reason") {
  GateConfig cfg;
  MetricRecord r = passing_record();
  r.audiobox_cu.reset();
  auto d = apply_gates(r, cfg);
  REQUIRE_FALSE(d.pass);
  REQUIRE(d.reasons == std::vector<std::string>{"missing:audiobox_cu"});

  GateConfig phase2;
  phase2.profile = GateProfile::phase2;
  MetricRecord r2 = passing_record();
  r2.dover_technical = 0.2;
  r2.lse_d.reset();
  auto d2 = apply_gates(r2, phase2);
  REQUIRE_FALSE(d2.pass);
  REQUIRE(d2.reasons == std::vector<std::string>{"missing:lse_d"});
}

TEST_CASE("gates are monotone: improving one score never flips pass to fail") {
  GateConfig cfg;
  cfg.profile = GateProfile::stage2;
  Rng rng(10);
  int passes = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    MetricRecord r;
    r.silence_ratio = rng.uniform(0.0, 1.0);
    r.bandwidth_hz = rng.uniform(0.0, 20000.0);
    r.audiobox_pq = rng.uniform(0.0, 10.0);
    r.audiobox_cu = rng.uniform(0.0, 10.0);
    r.audiobox_ce = rng.uniform(0.0, 10.0);
    r.dover_aesthetic = rng.uniform(0.0, 1.0);
    r.dover_technical = rng.uniform(0.0, 1.0);
    r.ib_score = rng.uniform(-0.5, 0.5);
    r.desync = rng.uniform(0.0, 1.5);
    const bool before = apply_gates(r, cfg).pass;
    if (before) ++passes;

    MetricRecord improved = r;
    switch (trial % 9) {
      case 0: improved.silence_ratio = *r.silence_ratio - 0.2; break;
      case 1: improved.bandwidth_hz = *r.bandwidth_hz + 500.0; break;
      case 2: improved.audiobox_pq = *r.audiobox_pq + 1.0; break;
      case 3: improved.audiobox_cu = *r.audiobox_cu + 1.0; break;
      case 4: improved.audiobox_ce = *r.audiobox_ce + 1.0; break;
      case 5: improved.dover_aesthetic = *r.dover_aesthetic + 0.1; break;
      case 6: improved.dover_technical = *r.dover_technical + 0.1; break;
      case 7: improved.ib_score = *r.ib_score + 0.2; break;
      case 8: improved.desync = *r.desync - 0.3; break;
    }
    if (before) REQUIRE(apply_gates(improved, cfg).pass);
  }
  REQUIRE(passes > 0);
}

TEST_CASE("retention report reproduces the pinned ratios") {
  auto rep = retention_report(
      10000, {{"stage1_all", 8457}, {"stage1_speech", 5875}, {"stage2", 2639}});
  REQUIRE(rep.stages[0].percent == 84.57);
  REQUIRE(rep.stages[1].percent == 58.75);
  REQUIRE(rep.stages[2].percent == 26.39);

  auto full = retention_report(500, {{"all", 500}});
  REQUIRE(full.stages[0].percent == 100.0);

  REQUIRE_THROWS_AS(retention_report(0, {{"x", 0}}), std::domain_error);
  REQUIRE_THROWS_AS(retention_report(100, {{"a", 10}, {"b", 20}}), std::domain_error);
}
