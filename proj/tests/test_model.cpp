// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "duet/model.hpp"
#include "duet/schedule.hpp"
#include "duet/gradcheck_suite.hpp"

using namespace duet;

namespace {

ConditionSet basic_cond() {
  ConditionSet c;
  c.text_tokens = std::vector<int>{1, 3, 2};
  return c;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config();
  REQUIRE_NOTHROW(cfg.validate());

  ModelConfig bad_depth = cfg;
  bad_depth.audio.depth = 3;
  REQUIRE_THROWS_AS(bad_depth.validate(), std::invalid_argument);

  ModelConfig bad_grid = cfg;
  bad_grid.audio.seq_len = 20;
  REQUIRE_THROWS_AS(bad_grid.validate(), std::invalid_argument);

  ModelConfig bad_layer = cfg;
  bad_layer.bridge.interaction_layers = {5};
  REQUIRE_THROWS_AS(bad_layer.validate(), std::invalid_argument);
}

TEST_CASE("default toy model stays under the parameter budget") {
  ModelConfig cfg;  // library defaults
  DualTowerModel m(cfg, 1);
  std::size_t total = 0;
  for (const Param* p : m.parameters()) total += std::size_t(p->value.numel());
  REQUIRE(m.parameter_count() == total);
  REQUIRE(m.parameter_count() > 0);
  REQUIRE(m.parameter_count() <= 2000000);
}

TEST_CASE("seeded init is deterministic") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config(1, 16);
  DualTowerModel a(cfg, 5), b(cfg, 5), c(cfg, 6);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    if (a.parameters()[i]->value.data != b.parameters()[i]->value.data) all_equal = false;
    if (a.parameters()[i]->value.data != c.parameters()[i]->value.data) any_diff = true;
  }
  REQUIRE(all_equal);
  REQUIRE(any_diff);
}

TEST_CASE("forward output shapes equal input latent shapes") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config();
  DualTowerModel m(cfg, 2);
  Rng rng(3);
  Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);

  ConditionSet cond = basic_cond();
  auto [vv, va] = m.forward(nullptr, z_v, z_a, 0.8, 0.4, cond);
  REQUIRE(vv.shape == z_v.shape);
  REQUIRE(va.shape == z_a.shape);

  cond.first_frame = ConditionSet::white_frame(cfg.d_v);
  auto [fv, fa] = m.forward(nullptr, z_v, z_a, 0.8, 0.4, cond);
  REQUIRE(fv.shape == z_v.shape);
  REQUIRE(fa.shape == z_a.shape);

  Tensor wrong({cfg.video.seq_len + 1, cfg.d_v});
  REQUIRE_THROWS_AS(m.forward(nullptr, wrong, z_a, 0.8, 0.4, cond), std::invalid_argument);
  Tensor nf = z_v;
  nf.data[0] = std::nan("");
  REQUIRE_THROWS_AS(m.forward(nullptr, nf, z_a, 0.8, 0.4, cond), std::domain_error);
}

TEST_CASE("no-bridge mode severs the cross-modal path") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config();
  DualTowerModel m(cfg, 4);
  Rng rng(5);
  Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);
  Tensor z_a2 = z_a;
  z_a2.data[0] += 1.0;

  ConditionSet off = basic_cond();
  off.bridge_enabled = false;
  auto [v1, a1] = m.forward(nullptr, z_v, z_a, 0.8, 0.4, off);
  auto [v2, a2] = m.forward(nullptr, z_v, z_a2, 0.8, 0.4, off);
  REQUIRE(v1.data == v2.data);  // bit-identical: audio cannot reach video
  REQUIRE(a1.data != a2.data);

  // bridge on (random-initialized projections): sensitivity appears
  ConditionSet on = basic_cond();
  auto [v3, a3] = m.forward(nullptr, z_v, z_a, 0.8, 0.4, on);
  auto [v4, a4] = m.forward(nullptr, z_v, z_a2, 0.8, 0.4, on);
  REQUIRE(v3.data != v4.data);
}

TEST_CASE("zero-initialized bridge is the identity, and no-bridge mode matches skipping") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config();
  cfg.bridge_init = BridgeInit::zero;
  DualTowerModel m(cfg, 6);
  Rng rng(7);

  Tensor h_v = randn({cfg.video.seq_len, cfg.video.width}, rng);
  Tensor h_a = randn({cfg.audio.seq_len, cfg.audio.width}, rng);
  auto [hv2, ha2] = m.bridge_block(nullptr, 0, h_v, h_a);
  REQUIRE(hv2.data == h_v.data);
  REQUIRE(ha2.data == h_a.data);

  Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);
  ConditionSet on = basic_cond();
  ConditionSet off = basic_cond();
  off.bridge_enabled = false;
  auto [v1, a1] = m.forward(nullptr, z_v, z_a, 0.8, 0.4, on);
  auto [v2, a2] = m.forward(nullptr, z_v, z_a, 0.8, 0.4, off);
  REQUIRE(v1.data == v2.data);
  REQUIRE(a1.data == a2.data);
}

TEST_CASE("gradient flows across the bridge when it is active") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config();
  DualTowerModel m(cfg, 8);
  Rng rng(9);
  Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);

  auto audio_loss_grad_wrt_zv = [&](bool bridge_on) {
    Tape t;
    Tensor x = t.leaf(z_v);
    ConditionSet cond = basic_cond();
    cond.bridge_enabled = bridge_on;
    auto [vv, va] = m.forward(&t, x, z_a, 0.8, 0.4, cond);
    t.backward(mean(&t, mul(&t, va, va)));
    return t.grad_or_zeros(x.node, z_v.numel());
  };

  auto g_on = audio_loss_grad_wrt_zv(true);
  double norm_on = 0.0;
  for (double v : g_on) norm_on += v * v;
  REQUIRE(norm_on > 0.0);

  auto g_off = audio_loss_grad_wrt_zv(false);
  for (double v : g_off) REQUIRE(v == 0.0);
}

TEST_CASE("null text substitutes the learned null embedding by construction") {
  ModelConfig cfg = duet::gradsuite::tiny_model_config();
  DualTowerModel m(cfg, 10);

  ConditionSet null_cond;
  null_cond.text_tokens.reset();
  Tensor ctx = m.text_context(nullptr, null_cond);
  Param* null_param = nullptr;
  Param* embed_param = nullptr;
  for (Param* p : m.parameters()) {
    if (p->name == "text.null_embedding") null_param = p;
    if (p->name == "text.embed") embed_param = p;
  }
  REQUIRE(null_param != nullptr);
  REQUIRE(ctx.data == null_param->value.data);

  // copy the null row into vocab row 0: forward(null) == forward({0}) bitwise
  for (int j = 0; j < cfg.text_dim; ++j) embed_param->value.data[std::size_t(j)] = null_param->value.data[std::size_t(j)];
  Rng rng(11);
  Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);
  ConditionSet tok_cond;
  tok_cond.text_tokens = std::vector<int>{0};
  auto [v1, a1] = m.forward(nullptr, z_v, z_a, 0.6, 0.6, null_cond);
  auto [v2, a2] = m.forward(nullptr, z_v, z_a, 0.6, 0.6, tok_cond);
  REQUIRE(v1.data == v2.data);
  REQUIRE(a1.data == a2.data);
}

TEST_CASE("expert selection and dual-expert forward") {
  ExpertsConfig e{true, 0.5};
  REQUIRE(select_expert(e, 0.9) == VideoExpert::high);
  REQUIRE(select_expert(e, 0.1) == VideoExpert::low);
  REQUIRE(select_expert(e, 0.5) == VideoExpert::high);  // boundary goes high
  ExpertsConfig off{false, 0.5};
  REQUIRE_THROWS_AS(select_expert(off, 0.5), std::invalid_argument);

  ModelConfig cfg = duet::gradsuite::tiny_model_config(1, 16);
  cfg.experts = {true, 0.5};
  DualTowerModel m(cfg, 12);
  Rng rng(13);
  Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);
  ConditionSet cond = basic_cond();
  cond.bridge_enabled = false;  // isolate the towers for the comparison
  auto [lv, la] = m.forward(nullptr, z_v, z_a, 0.2, 0.2, cond, VideoExpert::low);
  auto [hv, ha] = m.forward(nullptr, z_v, z_a, 0.2, 0.2, cond, VideoExpert::high);
  REQUIRE(lv.data != hv.data);
  REQUIRE(la.data == ha.data);  // audio tower is shared
  REQUIRE_THROWS_AS(m.forward(nullptr, z_v, z_a, 0.2, 0.2, cond, VideoExpert::single),
                    std::invalid_argument);

  bool has_low = false, has_high = false;
  for (Param* p : m.parameters()) {
    if (p->name.rfind("video_low.", 0) == 0) has_low = true;
    if (p->name.rfind("video_high.", 0) == 0) has_high = true;
  }
  REQUIRE((has_low && has_high));
}

TEST_CASE("composed gradient check on a tiny model") {
  REQUIRE(duet::gradsuite::composed_model_grad_err() <= 1e-4);
}
