// SPDX-License-Identifier: Apache-2.0
//
// Training loop: decoupled per-modality timestep draws through the sigma
// schedules, text and bridge dropout, optional alternating high-/low-noise
// video experts, grouped learning rates, and a JSONL metrics stream.
#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "duet/dataset.hpp"
#include "duet/model.hpp"
#include "duet/optim.hpp"
#include "duet/schedule.hpp"
#include "duet/tensor.hpp"

namespace duet {

struct TrainConfig {
  double p_drop_text = 0.5;
  double p_drop_bridge = 0.1;
  double shift_v = 5.0;
  double shift_a = 1.0;
  SigmaVariant sigma_variant = SigmaVariant::normalized;
  TimestepMode timestep_mode = TimestepMode::decoupled;
  double lambda_a = 0.2;  // lambda_v is fixed to 1
  int steps = 2000;
  int batch = 4;
  std::uint64_t seed = 1;
  bool alternate_experts = false;
  double t_split = 0.5;
  bool use_frame_token = true;

  void validate() const {
    if (!(p_drop_text >= 0.0 && p_drop_text <= 1.0) || !(p_drop_bridge >= 0.0 && p_drop_bridge <= 1.0))
      throw std::invalid_argument("train: dropout probabilities must lie in [0,1]");
    if (steps < 0 || batch < 1) throw std::invalid_argument("train: bad steps/batch");
    if (!(lambda_a > 0.0)) throw std::invalid_argument("train: lambda_a must be positive");
  }
};

struct TrainExample {
  Tensor x_v;
  Tensor x_a;
  std::vector<int> prompt_ids;
};

struct StepStats {
  double loss = 0.0;
  double t_v_mean = 0.0;
  double t_a_mean = 0.0;
  int null_text = 0;
  int no_bridge = 0;
};

inline StepStats train_step(DualTowerModel& model, const std::vector<TrainExample>& batch,
                            const TrainConfig& cfg, GroupedAdamW& opt, long long step_index, Rng& rng) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const SigmaShiftSchedule sched_v(cfg.shift_v, cfg.sigma_variant);
  const SigmaShiftSchedule sched_a(cfg.shift_a, cfg.sigma_variant);
  const LossWeights weights{1.0, cfg.lambda_a};
  const bool odd = step_index % 2 == 1;

  Tape tape;
  Tensor total;
  StepStats stats;
  const double inv_b = 1.0 / double(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double t_v, t_a;
    if (cfg.alternate_experts) {
      // odd steps train the high-noise video expert, even steps the low one
      t_v = odd ? rng.uniform(cfg.t_split, 1.0) : rng.uniform(0.0, cfg.t_split);
      t_a = rng.uniform();
    } else {
      const TimestepDraw d = draw_timesteps(rng, cfg.timestep_mode);
      t_v = d.t_v;
      t_a = d.t_a;
    }
    const bool drop_text = rng.uniform() < cfg.p_drop_text;
    const bool drop_bridge = rng.uniform() < cfg.p_drop_bridge;
    Tensor eps_v = randn(batch[i].x_v.shape, rng);
    Tensor eps_a = randn(batch[i].x_a.shape, rng);
    const FlowSample fv = corrupt(batch[i].x_v, eps_v, t_v, sched_v);
    const FlowSample fa = corrupt(batch[i].x_a, eps_a, t_a, sched_a);

    ConditionSet cond;
    if (!drop_text) cond.text_tokens = batch[i].prompt_ids;
    cond.bridge_enabled = !drop_bridge;
    if (cfg.use_frame_token) cond.first_frame = ConditionSet::white_frame(model.config().d_v);

    const VideoExpert expert =
        model.config().experts.enabled ? model.pick_expert(t_v) : VideoExpert::single;
    auto [pv, pa] = model.forward(&tape, fv.x_t, fa.x_t, sched_v.sigma(t_v), sched_a.sigma(t_a), cond, expert);
    Tensor piece = scale(&tape, fm_loss(&tape, pv, pa, fv.target_v, fa.target_v, weights), inv_b);
    total = i == 0 ? piece : add(&tape, total, piece);

    stats.t_v_mean += t_v * inv_b;
    stats.t_a_mean += t_a * inv_b;
    stats.null_text += drop_text ? 1 : 0;
    stats.no_bridge += drop_bridge ? 1 : 0;
  }
  stats.loss = total.item();
  if (!std::isfinite(stats.loss))
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step_index));
  tape.backward(total);

  GroupedAdamW::SkipFn skip;
  if (cfg.alternate_experts) {
    const std::string inactive = odd ? "video_low." : "video_high.";
    skip = [inactive](const Param& p) { return p.name.rfind(inactive, 0) == 0; };
  }
  opt.step(model.parameters(), [&tape](const Param& p) { return tape.grad_of(p); }, skip);
  return stats;
}

struct TrainResult {
  std::vector<double> losses;
};

/// Full loop over freshly generated synthetic batches. Writes one JSONL line
/// per step to `metrics` when given.
inline TrainResult train_loop(DualTowerModel& model, const TrainConfig& cfg, const SynthConfig& synth_in,
                              GroupedAdamW& opt, std::ostream* metrics = nullptr) {
  cfg.validate();
  SynthConfig synth = synth_in;
  synth.d_v = model.config().d_v;
  synth.d_a = model.config().d_a;
  Rng data_rng = Rng(cfg.seed).split("data");
  Rng step_rng = Rng(cfg.seed).split("train");
  TrainResult result;
  result.losses.reserve(std::size_t(cfg.steps));
  for (long long step = 0; step < cfg.steps; ++step) {
    std::vector<TrainExample> batch;
    batch.reserve(std::size_t(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      EventScene scene = EventScene::random(data_rng, synth);
      auto [x_v, x_a] = synth_pair(scene, model.config().grid, data_rng, synth);
      batch.push_back({std::move(x_v), std::move(x_a), scene.prompt_ids});
    }
    const StepStats s = train_step(model, batch, cfg, opt, step, step_rng);
    result.losses.push_back(s.loss);
    if (metrics) {
      nlohmann::json line;
      line["step"] = step;
      line["loss"] = s.loss;
      line["lr_backbone"] = opt.groups().backbone_lr;
      line["lr_bridge"] = opt.groups().bridge_lr;
      line["t_v_mean"] = s.t_v_mean;
      line["t_a_mean"] = s.t_a_mean;
      (*metrics) << line.dump() << "\n";
    }
  }
  return result;
}

}  // namespace duet
