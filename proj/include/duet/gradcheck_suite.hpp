// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient oracles shared by the unit tests, the gradcheck
// subcommand, and the acceptance suite. The numeric side only ever calls
// forward evaluations, so it stays independent of the tape it checks.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "duet/model.hpp"
#include "duet/rng.hpp"
#include "duet/rope.hpp"
#include "duet/schedule.hpp"
#include "duet/tensor.hpp"

namespace duet::gradsuite {

struct GradCase {
  std::string name;
  double err;
};

inline std::vector<GradCase> primitive_grad_cases(std::uint64_t seed = 7) {
  using namespace duet;
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto run = [&](const std::string& name, auto&& f, const Tensor& point) {
    cases.push_back({name, grad_check(f, point)});
  };

  const Tensor a = randn({3, 4}, rng);
  const Tensor b = randn({3, 4}, rng);
  const Tensor m = randn({4, 5}, rng);
  const Tensor proj34 = randn({3, 4}, rng);
  const Tensor proj45 = randn({4, 5}, rng);
  const Tensor proj35 = randn({3, 5}, rng);
  const Tensor vec4 = randn({4}, rng);

  run("add", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, add(&t, x, b), proj34)); }, a);
  run("sub", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, sub(&t, x, b), proj34)); }, a);
  run("mul", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, mul(&t, x, b), proj34)); }, a);
  run("scale", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, scale(&t, x, -1.7), proj34)); }, a);
  run("add_scalar", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, add_scalar(&t, x, 0.3), proj34)); }, a);
  run("silu", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, silu(&t, x), proj34)); }, a);
  run("matmul_lhs", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, matmul(&t, x, m), proj35)); }, a);
  run("matmul_rhs", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, matmul(&t, a, x), proj35)); }, m);
  run("transpose", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, transpose(&t, x), transpose(nullptr, proj34))); }, a);
  run("reshape", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, reshape(&t, x, {4, 3}), transpose(nullptr, proj34))); }, a);
  run("slice_rows", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, slice_rows(&t, x, 1, 3), slice_rows(nullptr, proj34, 0, 2))); }, a);
  run("concat_rows", [&](Tape& t, const Tensor& x) {
    Tensor both = concat_rows(&t, {x, b});
    return sum(&t, mul(&t, both, concat_rows(nullptr, {proj34, proj34})));
  }, a);
  run("slice_cols", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, slice_cols(&t, x, 1, 4), slice_cols(nullptr, proj34, 0, 3))); }, a);
  run("concat_cols", [&](Tape& t, const Tensor& x) {
    Tensor both = concat_cols(&t, {x, b});
    return sum(&t, mul(&t, both, concat_cols(nullptr, {proj34, proj34})));
  }, a);
  run("softmax_rows", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, softmax_rows(&t, x), proj34)); }, a);
  run("rms_norm_x", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, rms_norm(&t, x, vec4), proj34)); }, a);
  run("rms_norm_gain", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, rms_norm(&t, a, x), proj34)); }, vec4);
  run("add_rowvec_x", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, add_rowvec(&t, x, vec4), proj34)); }, a);
  run("add_rowvec_b", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, add_rowvec(&t, a, x), proj34)); }, vec4);
  run("mul_rowvec_x", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, mul_rowvec(&t, x, vec4), proj34)); }, a);
  run("mul_rowvec_s", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, mul_rowvec(&t, a, x), proj34)); }, vec4);
  run("sum", [&](Tape& t, const Tensor& x) { return sum(&t, x); }, a);
  run("mean", [&](Tape& t, const Tensor& x) { return mean(&t, x); }, a);
  {
    const std::vector<int> ids{2, 0, 2, 1};
    const Tensor table = randn({3, 4}, rng);
    const Tensor proj44 = randn({4, 4}, rng);
    run("embedding", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, embedding(&t, x, ids), proj44)); }, table);
  }
  {
    const RotaryBasis basis(4, 100.0);
    const std::vector<double> pos{0.0, 1.0, 2.5};
    run("apply_rotary", [&](Tape& t, const Tensor& x) { return sum(&t, mul(&t, apply_rotary(&t, x, pos, basis), proj34)); }, a);
  }
  run("fm_loss", [&](Tape& t, const Tensor& x) { return fm_loss(&t, x, b, proj34, proj34, LossWeights{1.0, 0.2}); }, a);
  return cases;
}

inline duet::ModelConfig tiny_model_config(int depth = 2, int width = 32) {
  duet::ModelConfig cfg;
  cfg.video = {depth, width, 4, 6, duet::Modality::video};
  cfg.audio = {depth, width, 4, 24, duet::Modality::audio};
  cfg.bridge = {{}, width, 4};
  cfg.d_v = 4;
  cfg.d_a = 4;
  cfg.grid = duet::TimeGrid(0.75, 3.0);  // 6 and 24 tokens over 8 s, s = 4
  cfg.text_vocab = 6;
  cfg.text_dim = 16;
  cfg.cond_dim = width;
  cfg.bridge_init = duet::BridgeInit::random;
  return cfg;
}

/// Composed check: fm_loss of a full forward, differentiated through the
/// whole graph w.r.t. the video latent.
inline double composed_model_grad_err(std::uint64_t seed = 11) {
  using namespace duet;
  ModelConfig cfg = tiny_model_config();
  DualTowerModel model(cfg, seed);
  Rng rng(seed + 1);
  const Tensor z_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  const Tensor z_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);
  const Tensor tgt_v = randn({cfg.video.seq_len, cfg.d_v}, rng);
  const Tensor tgt_a = randn({cfg.audio.seq_len, cfg.d_a}, rng);
  ConditionSet cond;
  cond.text_tokens = std::vector<int>{1, 2, 3};
  cond.first_frame = ConditionSet::white_frame(cfg.d_v);
  auto f = [&](Tape& t, const Tensor& x) {
    auto [pv, pa] = model.forward(&t, x, z_a, 0.7, 0.35, cond);
    return fm_loss(&t, pv, pa, tgt_v, tgt_a, LossWeights{1.0, 0.2});
  };
  return grad_check(f, z_v, 1e-5);
}

/// Spot finite-difference check of the loss gradient w.r.t. one parameter.
/// `max_coords` coordinates are probed, evenly spaced through the tensor.
inline double param_grad_err(duet::DualTowerModel& model, duet::Param& p,
                             const std::function<duet::Tensor(duet::Tape*)>& loss_fn,
                             int max_coords = 48, double eps = 1e-5) {
  using namespace duet;
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn(&tape);
    tape.backward(loss);
    analytic = tape.grad_of(p);
  }
  const int n = p.value.numel();
  const int step = std::max(1, n / max_coords);
  double worst = 0.0;
  for (int i = 0; i < n; i += step) {
    const double orig = p.value.data[std::size_t(i)];
    p.value.data[std::size_t(i)] = orig + eps;
    const double fp = loss_fn(nullptr).item();
    p.value.data[std::size_t(i)] = orig - eps;
    const double fm = loss_fn(nullptr).item();
    p.value.data[std::size_t(i)] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[std::size_t(i)] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace duet::gradsuite
