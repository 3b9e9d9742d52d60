// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "duet/dataset.hpp"
#include "duet/sync.hpp"

using namespace duet;

TEST_CASE("random scenes satisfy their invariants") {
  SynthConfig cfg;
  Rng rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    EventScene s = EventScene::random(rng, cfg);
    REQUIRE(s.onsets.size() >= 1);
    REQUIRE(s.onsets.size() <= 4);
    for (std::size_t i = 0; i < s.onsets.size(); ++i) {
      REQUIRE(s.onsets[i] >= 0.0);
      REQUIRE(s.onsets[i] < cfg.duration);
      if (i > 0) REQUIRE(s.onsets[i] > s.onsets[i - 1]);
    }
    REQUIRE(s.prompt_ids.size() == s.onsets.size() + 1);
    REQUIRE(s.prompt_ids[0] == kPromptBos);
  }

  Rng a(42), b(42);
  EventScene sa = EventScene::random(a, cfg), sb = EventScene::random(b, cfg);
  REQUIRE(sa.onsets == sb.onsets);
  REQUIRE(sa.classes == sb.classes);
}

TEST_CASE("bumps land at the expected tokens") {
  SynthConfig cfg;
  cfg.noise_std = 0.0;
  TimeGrid grid(1.5, 6.0);
  EventScene scene;
  scene.onsets = {4.0};
  scene.classes = {0};
  scene.prompt_ids = EventScene::encode_prompt(scene.classes);

  Rng rng(43);
  auto [x_v, x_a] = synth_pair(scene, grid, rng, cfg);
  REQUIRE(x_v.shape == Shape{12, 6});
  REQUIRE(x_a.shape == Shape{48, 6});

  const int ch = class_channel(0, cfg.d_v);
  int argmax_v = 0, argmax_a = 0;
  for (int i = 0; i < 12; ++i)
    if (x_v.at(i, ch) > x_v.at(argmax_v, ch)) argmax_v = i;
  for (int j = 0; j < 48; ++j)
    if (x_a.at(j, ch) > x_a.at(argmax_a, ch)) argmax_a = j;
  REQUIRE(argmax_v == 6);   // round(1.5 * 4)
  REQUIRE(argmax_a == 24);  // round(6 * 4)
}

TEST_CASE("generator is deterministic and bump energy integrates to the class amplitude") {
  SynthConfig cfg;
  TimeGrid grid(1.5, 6.0);
  EventScene scene;
  scene.onsets = {2.3, 5.9};
  scene.classes = {1, 3};
  scene.prompt_ids = EventScene::encode_prompt(scene.classes);

  Rng r1(44), r2(44);
  auto [v1, a1] = synth_pair(scene, grid, r1, cfg);
  auto [v2, a2] = synth_pair(scene, grid, r2, cfg);
  REQUIRE(v1.data == v2.data);
  REQUIRE(a1.data == a2.data);

  SynthConfig clean = cfg;
  clean.noise_std = 0.0;
  Rng r3(45);
  EventScene one;
  one.onsets = {3.7};
  one.classes = {2};
  one.prompt_ids = EventScene::encode_prompt(one.classes);
  auto [xv, xa] = synth_pair(one, grid, r3, clean);
  const int ch = class_channel(2, clean.d_a);
  double integral = 0.0;
  for (int j = 0; j < xa.rows(); ++j) integral += xa.at(j, ch) / grid.f_a;
  REQUIRE(integral == Catch::Approx(class_amplitude(2)).margin(1e-6));

  EventScene bad;
  bad.onsets = {9.0};
  bad.classes = {0};
  Rng r4(46);
  REQUIRE_THROWS_AS(synth_pair(bad, grid, r4, cfg), std::invalid_argument);
}

TEST_CASE("sync_score round trip on generator output") {
  SynthConfig cfg;
  TimeGrid grid(1.5, 6.0);
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    EventScene scene = EventScene::random(rng, cfg);
    auto [x_v, x_a] = synth_pair(scene, grid, rng, cfg);
    SyncOutcome out = sync_score(x_v, x_a, grid, cfg);
    REQUIRE(out.ok());
    REQUIRE(out.report->offset_error_s <= 1.0 / 6.0);
    REQUIRE(out.report->event_f1 >= 0.7);
  }
}

TEST_CASE("a one-second audio shift reads as a one-second offset") {
  SynthConfig cfg;
  TimeGrid grid(1.5, 6.0);
  EventScene scene;
  scene.onsets = {2.5, 5.0};
  scene.classes = {0, 1};
  scene.prompt_ids = EventScene::encode_prompt(scene.classes);
  EventScene shifted = scene;
  shifted.onsets = {3.5, 6.0};

  Rng rng(48);
  auto [x_v, unused_a] = synth_pair(scene, grid, rng, cfg);
  auto [unused_v, x_a] = synth_pair(shifted, grid, rng, cfg);
  SyncOutcome out = sync_score(x_v, x_a, grid, cfg);
  REQUIRE(out.ok());
  REQUIRE(out.report->offset_error_s == Catch::Approx(1.0).margin(1.0 / 6.0));
}

TEST_CASE("pure noise yields the error variant") {
  SynthConfig cfg;
  TimeGrid grid(1.5, 6.0);
  Rng rng(49);
  Tensor x_v = randn({12, 6}, rng, 0.05);
  Tensor x_a = randn({48, 6}, rng, 0.05);
  SyncOutcome out = sync_score(x_v, x_a, grid, cfg);
  REQUIRE_FALSE(out.ok());
  REQUIRE_FALSE(out.error.empty());
}
