// SPDX-License-Identifier: Apache-2.0
//
// Toy dual-tower diffusion transformer. Two per-modality DiT stacks run in
// lockstep and exchange hidden states through bidirectional bridge
// cross-attention at configured interaction layers. Conditioning: synthetic
// prompt token ids via one cross-attention per layer, a per-modality
// sinusoidal embedding of the effective time tau = sigma(t) as adaLN-style
// modulation, and an optional clean first-frame token prepended to the video
// sequence (all-ones "white" token for the text-only mode).
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "duet/checkpoint.hpp"
#include "duet/rng.hpp"
#include "duet/rope.hpp"
#include "duet/tensor.hpp"

namespace duet {

enum class Modality { video, audio };

struct TowerConfig {
  int depth = 2;
  int width = 48;
  int heads = 4;
  int seq_len = 12;
  Modality modality = Modality::video;
};

struct BridgeConfig {
  std::vector<int> interaction_layers;  // empty = every other layer (odd indices)
  int width = 48;
  int heads = 4;
};

enum class BridgeInit { zero, random };

struct ExpertsConfig {
  bool enabled = false;
  double t_split = 0.5;
};

enum class VideoExpert { single, low, high };

/// High-noise expert handles t_v >= t_split (boundary goes high).
inline VideoExpert select_expert(const ExpertsConfig& e, double t_v) {
  if (!e.enabled) throw std::invalid_argument("select_expert: experts not enabled");
  if (!(e.t_split > 0.0 && e.t_split < 1.0)) throw std::invalid_argument("select_expert: t_split outside (0,1)");
  return t_v >= e.t_split ? VideoExpert::high : VideoExpert::low;
}

struct ConditionSet {
  // nullopt = NULL sentinel; the learned null embedding is substituted.
  std::optional<std::vector<int>> text_tokens;
  bool bridge_enabled = true;
  // [1 x d_v] clean frame token; nullopt = no frame conditioning.
  std::optional<Tensor> first_frame;

  static Tensor white_frame(int d_v) { return Tensor({1, d_v}, 1.0); }
};

struct ModelConfig {
  TowerConfig video{2, 48, 4, 12, Modality::video};
  TowerConfig audio{2, 48, 4, 48, Modality::audio};
  BridgeConfig bridge{};
  int d_v = 6;
  int d_a = 6;
  TimeGrid grid{1.5, 6.0};
  double rope_base = 10000.0;
  int text_vocab = 8;
  int text_dim = 32;
  int cond_dim = 48;
  ExpertsConfig experts{};
  BridgeInit bridge_init = BridgeInit::zero;
  double init_std = 0.05;

  std::vector<int> interaction_layers() const {
    if (!bridge.interaction_layers.empty()) return bridge.interaction_layers;
    std::vector<int> layers;
    for (int l = 1; l < video.depth; l += 2) layers.push_back(l);
    if (layers.empty()) layers.push_back(video.depth - 1);
    return layers;
  }

  void validate() const {
    if (video.depth != audio.depth) throw std::invalid_argument("model: towers must share depth");
    if (video.width % video.heads || audio.width % audio.heads || bridge.width % bridge.heads)
      throw std::invalid_argument("model: width must divide by heads");
    if ((video.width / video.heads) % 2 || (audio.width / audio.heads) % 2 || (bridge.width / bridge.heads) % 2)
      throw std::invalid_argument("model: head_dim must be even for rotary pairs");
    const double dur_v = video.seq_len / grid.f_v, dur_a = audio.seq_len / grid.f_a;
    if (std::abs(dur_v - dur_a) > 1e-9)
      throw std::invalid_argument("model: seq lengths disagree with the time grid");
    for (int l : interaction_layers())
      if (l < 0 || l >= video.depth) throw std::invalid_argument("model: interaction layer out of range");
    if (cond_dim % 2) throw std::invalid_argument("model: cond_dim must be even");
  }
};

class DualTowerModel {
 public:
  DualTowerModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int n_video_towers = cfg_.experts.enabled ? 2 : 1;
    video_.resize(std::size_t(n_video_towers));
    build_tower(video_[0], cfg_.video, cfg_.d_v, n_video_towers == 2 ? "video_low." : "video.");
    if (n_video_towers == 2) build_tower(video_[1], cfg_.video, cfg_.d_v, "video_high.");
    build_tower(audio_, cfg_.audio, cfg_.d_a, "audio.");
    text_embed_ = {"text.embed", Tensor({cfg_.text_vocab, cfg_.text_dim})};
    text_null_ = {"text.null_embedding", Tensor({1, cfg_.text_dim})};
    const auto layers = cfg_.interaction_layers();
    bridge_.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i)
      build_bridge(bridge_[i], "bridge.layer" + std::to_string(layers[i]) + ".");
    build_registry();
    init_params(seed);
  }

  DualTowerModel(const DualTowerModel&) = delete;
  DualTowerModel& operator=(const DualTowerModel&) = delete;

  const ModelConfig& config() const { return cfg_; }

  const std::vector<Param*>& parameters() const { return registry_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Param* p : registry_) n += std::size_t(p->value.numel());
    return n;
  }

  VideoExpert pick_expert(double t_v) const { return select_expert(cfg_.experts, t_v); }

  /// Embedded text context. NULL tokens substitute the learned null row.
  Tensor text_context(Tape* tp, const ConditionSet& cond) {
    if (!cond.text_tokens) return tp ? tp->use(text_null_) : text_null_.value;
    if (cond.text_tokens->empty()) throw std::invalid_argument("model: empty (non-null) text prompt");
    Tensor table = tp ? tp->use(text_embed_) : text_embed_.value;
    return embedding(tp, table, *cond.text_tokens);
  }

  std::pair<Tensor, Tensor> forward(Tape* tp, const Tensor& z_v, const Tensor& z_a, double tau_v,
                                    double tau_a, const ConditionSet& cond,
                                    VideoExpert expert = VideoExpert::single) {
    check_latent(z_v, cfg_.video.seq_len, cfg_.d_v, "z_v");
    check_latent(z_a, cfg_.audio.seq_len, cfg_.d_a, "z_a");
    if (!(tau_v >= 0.0) || !(tau_a >= 0.0) || !std::isfinite(tau_v) || !std::isfinite(tau_a))
      throw std::domain_error("forward: tau must be finite and nonnegative");
    Tower& vid = video_tower(expert);

    Tensor txt = text_context(tp, cond);
    Tensor cv = cond_vector(tp, vid, tau_v);
    Tensor ca = cond_vector(tp, audio_, tau_a);

    Tensor hv = matmul(tp, z_v, tp ? tp->use(vid.in_proj) : vid.in_proj.value);
    const bool frame = cond.first_frame.has_value();
    if (frame) {
      if (cond.first_frame->shape != Shape{1, cfg_.d_v})
        throw std::invalid_argument("forward: first_frame must be [1 x d_v]");
      Tensor ft = matmul(tp, *cond.first_frame, tp ? tp->use(vid.in_proj) : vid.in_proj.value);
      hv = concat_rows(tp, {ft, hv});
    }
    Tensor ha = matmul(tp, z_a, tp ? tp->use(audio_.in_proj) : audio_.in_proj.value);

    const auto pos = positions(frame);
    const RotaryBasis rope_v(cfg_.video.width / cfg_.video.heads, cfg_.rope_base);
    const RotaryBasis rope_a(cfg_.audio.width / cfg_.audio.heads, cfg_.rope_base);
    const auto layers = cfg_.interaction_layers();

    for (int l = 0; l < cfg_.video.depth; ++l) {
      hv = block_forward(tp, vid.blocks[std::size_t(l)], hv, cv, txt, pos.video_self, rope_v, cfg_.video.heads);
      ha = block_forward(tp, audio_.blocks[std::size_t(l)], ha, ca, txt, pos.audio_self, rope_a, cfg_.audio.heads);
      if (cond.bridge_enabled) {
        for (std::size_t bi = 0; bi < layers.size(); ++bi)
          if (layers[bi] == l) {
            auto [nv, na] = bridge_forward(tp, bridge_[bi], hv, ha, pos.video_shared, pos.audio_shared);
            hv = std::move(nv);
            ha = std::move(na);
          }
      }
    }

    Tensor vv = matmul(tp, rms_norm(tp, hv, tp ? tp->use(vid.out_norm_g) : vid.out_norm_g.value),
                       tp ? tp->use(vid.out_proj) : vid.out_proj.value);
    if (frame) vv = slice_rows(tp, vv, 1, cfg_.video.seq_len + 1);
    Tensor va = matmul(tp, rms_norm(tp, ha, tp ? tp->use(audio_.out_norm_g) : audio_.out_norm_g.value),
                       tp ? tp->use(audio_.out_proj) : audio_.out_proj.value);
    return {std::move(vv), std::move(va)};
  }

  /// One bridge exchange on externally supplied hidden states (frame token
  /// excluded). Residual form; identity at zero-initialized output projections.
  std::pair<Tensor, Tensor> bridge_block(Tape* tp, int interaction_index, const Tensor& h_v,
                                         const Tensor& h_a) {
    if (interaction_index < 0 || interaction_index >= int(bridge_.size()))
      throw std::invalid_argument("bridge_block: bad interaction index");
    const auto pos = positions(false);
    return bridge_forward(tp, bridge_[std::size_t(interaction_index)], h_v, h_a, pos.video_shared,
                          pos.audio_shared);
  }

  int bridge_count() const { return int(bridge_.size()); }

  void save(const std::string& path, CkptDtype dtype = CkptDtype::f64) const {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    tensors.reserve(registry_.size());
    for (const Param* p : registry_) tensors.emplace_back(p->name, &p->value);
    save_tensors(path, tensors, dtype);
  }

  void load(const std::string& path) {
    LoadedCheckpoint ck = load_tensors(path);
    if (ck.tensors.size() != registry_.size())
      throw std::runtime_error("model load: parameter count mismatch");
    for (Param* p : registry_) {
      const Tensor* t = ck.find(p->name);
      if (!t) throw std::runtime_error("model load: missing parameter " + p->name);
      if (t->shape != p->value.shape) throw std::runtime_error("model load: shape mismatch for " + p->name);
      p->value.data = t->data;
    }
  }

 private:
  struct Block {
    Param ln1_g, lnx_g, ln2_g;
    Param wq, wk, wv, wo;      // self-attention
    Param xq, xk, xv, xo;      // text cross-attention
    Param ff1, ff2;
    Param mod_w, mod_b;        // adaLN-style modulation from the cond vector
  };

  struct Tower {
    Param in_proj;
    std::vector<Block> blocks;
    Param out_norm_g, out_proj;
    Param t1_w, t1_b, t2_w, t2_b;  // timestep-embedding MLP
  };

  struct Bridge {
    Param v_norm_g, a_norm_g;
    Param vq, vk, vv, vo;  // video queries audio
    Param aq, ak, av, ao;  // audio queries video
  };

  struct PositionSets {
    std::vector<double> video_self, audio_self;      // per-modality indices
    std::vector<double> video_shared, audio_shared;  // shared physical grid
  };

  void check_latent(const Tensor& z, int seq, int dim, const char* name) const {
    if (z.shape != Shape{seq, dim})
      throw std::invalid_argument(std::string("forward: bad shape for ") + name);
    if (!z.all_finite()) throw std::domain_error(std::string("forward: non-finite values in ") + name);
  }

  Tower& video_tower(VideoExpert e) {
    if (cfg_.experts.enabled) {
      if (e == VideoExpert::single) throw std::invalid_argument("forward: expert choice required");
      return video_[e == VideoExpert::high ? 1 : 0];
    }
    if (e != VideoExpert::single) throw std::invalid_argument("forward: experts not enabled");
    return video_[0];
  }

  void build_tower(Tower& t, const TowerConfig& tc, int d_in, const std::string& prefix) {
    const int w = tc.width;
    t.in_proj = {prefix + "in_proj", Tensor({d_in, w})};
    t.blocks.resize(std::size_t(tc.depth));
    for (int l = 0; l < tc.depth; ++l) {
      Block& b = t.blocks[std::size_t(l)];
      const std::string bp = prefix + "block" + std::to_string(l) + ".";
      b.ln1_g = {bp + "ln1_g", Tensor({w}, 1.0)};
      b.lnx_g = {bp + "lnx_g", Tensor({w}, 1.0)};
      b.ln2_g = {bp + "ln2_g", Tensor({w}, 1.0)};
      b.wq = {bp + "wq", Tensor({w, w})};
      b.wk = {bp + "wk", Tensor({w, w})};
      b.wv = {bp + "wv", Tensor({w, w})};
      b.wo = {bp + "wo", Tensor({w, w})};
      b.xq = {bp + "xq", Tensor({w, w})};
      b.xk = {bp + "xk", Tensor({cfg_.text_dim, w})};
      b.xv = {bp + "xv", Tensor({cfg_.text_dim, w})};
      b.xo = {bp + "xo", Tensor({w, w})};
      b.ff1 = {bp + "ff1", Tensor({w, 4 * w})};
      b.ff2 = {bp + "ff2", Tensor({4 * w, w})};
      b.mod_w = {bp + "mod_w", Tensor({cfg_.cond_dim, 6 * w})};
      b.mod_b = {bp + "mod_b", Tensor({6 * w})};
    }
    t.out_norm_g = {prefix + "out_norm_g", Tensor({w}, 1.0)};
    t.out_proj = {prefix + "out_proj", Tensor({w, d_in})};
    t.t1_w = {prefix + "t1_w", Tensor({cfg_.cond_dim, cfg_.cond_dim})};
    t.t1_b = {prefix + "t1_b", Tensor({cfg_.cond_dim})};
    t.t2_w = {prefix + "t2_w", Tensor({cfg_.cond_dim, cfg_.cond_dim})};
    t.t2_b = {prefix + "t2_b", Tensor({cfg_.cond_dim})};
  }

  void build_bridge(Bridge& b, const std::string& prefix) {
    const int wv = cfg_.video.width, wa = cfg_.audio.width, wb = cfg_.bridge.width;
    b.v_norm_g = {prefix + "v_norm_g", Tensor({wv}, 1.0)};
    b.a_norm_g = {prefix + "a_norm_g", Tensor({wa}, 1.0)};
    b.vq = {prefix + "vq", Tensor({wv, wb})};
    b.vk = {prefix + "vk", Tensor({wa, wb})};
    b.vv = {prefix + "vv", Tensor({wa, wb})};
    b.vo = {prefix + "vo", Tensor({wb, wv})};
    b.aq = {prefix + "aq", Tensor({wa, wb})};
    b.ak = {prefix + "ak", Tensor({wv, wb})};
    b.av = {prefix + "av", Tensor({wv, wb})};
    b.ao = {prefix + "ao", Tensor({wb, wa})};
  }

  void register_tower(Tower& t) {
    registry_.push_back(&t.in_proj);
    for (Block& b : t.blocks)
      for (Param* p : {&b.ln1_g, &b.lnx_g, &b.ln2_g, &b.wq, &b.wk, &b.wv, &b.wo, &b.xq, &b.xk, &b.xv,
                       &b.xo, &b.ff1, &b.ff2, &b.mod_w, &b.mod_b})
        registry_.push_back(p);
    for (Param* p : {&t.out_norm_g, &t.out_proj, &t.t1_w, &t.t1_b, &t.t2_w, &t.t2_b})
      registry_.push_back(p);
  }

  void build_registry() {
    for (Tower& t : video_) register_tower(t);
    register_tower(audio_);
    registry_.push_back(&text_embed_);
    registry_.push_back(&text_null_);
    for (Bridge& b : bridge_)
      for (Param* p : {&b.v_norm_g, &b.a_norm_g, &b.vq, &b.vk, &b.vv, &b.vo, &b.aq, &b.ak, &b.av, &b.ao})
        registry_.push_back(p);
  }

  static bool is_gain(const std::string& name) {
    const auto pos = name.rfind('.');
    const std::string leaf = pos == std::string::npos ? name : name.substr(pos + 1);
    return leaf.size() > 2 && leaf.compare(leaf.size() - 2, 2, "_g") == 0;
  }

  static bool is_bridge_out(const std::string& name) {
    if (name.compare(0, 7, "bridge.") != 0) return false;
    return name.size() > 3 && (name.compare(name.size() - 3, 3, ".vo") == 0 ||
                               name.compare(name.size() - 3, 3, ".ao") == 0);
  }

  static bool is_bias(const std::string& name) {
    const auto pos = name.rfind('.');
    const std::string leaf = pos == std::string::npos ? name : name.substr(pos + 1);
    return leaf.size() > 2 && leaf.compare(leaf.size() - 2, 2, "_b") == 0;
  }

  void init_params(std::uint64_t seed) {
    Rng rng = Rng(seed).split("init");
    for (Param* p : registry_) {
      if (is_gain(p->name)) continue;  // gains stay at 1
      if (is_bias(p->name)) {
        for (double& v : p->value.data) v = 0.0;
        continue;
      }
      if (cfg_.bridge_init == BridgeInit::zero && is_bridge_out(p->name)) {
        for (double& v : p->value.data) v = 0.0;
        continue;
      }
      for (double& v : p->value.data) v = cfg_.init_std * rng.normal();
    }
  }

  PositionSets positions(bool frame) const {
    PositionSets p;
    const double s = cfg_.grid.ratio();
    if (frame) {
      p.video_self.push_back(-1.0);  // conditioning token sits one video step before the clip
      p.video_shared.push_back(-s);
    }
    for (int i = 0; i < cfg_.video.seq_len; ++i) {
      p.video_self.push_back(double(i));
      p.video_shared.push_back(position_video(cfg_.grid, i));
    }
    for (int j = 0; j < cfg_.audio.seq_len; ++j) {
      p.audio_self.push_back(double(j));
      p.audio_shared.push_back(position_audio(cfg_.grid, j));
    }
    return p;
  }

  Tensor P(Tape* tp, Param& p) { return tp ? tp->use(p) : p.value; }

  Tensor cond_vector(Tape* tp, Tower& t, double tau) {
    Tensor emb = sin_time_embed(tau * 1000.0, cfg_.cond_dim);
    Tensor h = add_rowvec(tp, matmul(tp, emb, P(tp, t.t1_w)), P(tp, t.t1_b));
    h = silu(tp, h);
    return add_rowvec(tp, matmul(tp, h, P(tp, t.t2_w)), P(tp, t.t2_b));
  }

  // Multi-head attention. Rotary phases are applied to q and k when a basis
  // is given; text cross-attention passes none.
  Tensor attention(Tape* tp, const Tensor& q_in, const Tensor& kv_in, Param& wq, Param& wk, Param& wv,
                   Param& wo, int heads, const std::vector<double>* q_pos,
                   const std::vector<double>* k_pos, const RotaryBasis* basis) {
    Tensor q = matmul(tp, q_in, P(tp, wq));
    Tensor k = matmul(tp, kv_in, P(tp, wk));
    Tensor v = matmul(tp, kv_in, P(tp, wv));
    const int w = q.cols();
    const int hd = w / heads;
    const double inv_sqrt = 1.0 / std::sqrt(double(hd));
    std::vector<Tensor> outs;
    outs.reserve(std::size_t(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(tp, q, h * hd, (h + 1) * hd);
      Tensor kh = slice_cols(tp, k, h * hd, (h + 1) * hd);
      Tensor vh = slice_cols(tp, v, h * hd, (h + 1) * hd);
      if (basis) {
        qh = apply_rotary(tp, qh, *q_pos, *basis);
        kh = apply_rotary(tp, kh, *k_pos, *basis);
      }
      Tensor att = softmax_rows(tp, scale(tp, matmul(tp, qh, transpose(tp, kh)), inv_sqrt));
      outs.push_back(matmul(tp, att, vh));
    }
    return matmul(tp, concat_cols(tp, outs), P(tp, wo));
  }

  Tensor modulate(Tape* tp, const Tensor& x, const Tensor& sc, const Tensor& sh) {
    return add_rowvec(tp, mul_rowvec(tp, x, add_scalar(tp, sc, 1.0)), sh);
  }

  Tensor block_forward(Tape* tp, Block& b, Tensor h, const Tensor& cond_vec, const Tensor& txt,
                       const std::vector<double>& pos, const RotaryBasis& rope, int heads) {
    const int w = h.cols();
    Tensor mod = add_rowvec(tp, matmul(tp, silu(tp, cond_vec), P(tp, b.mod_w)), P(tp, b.mod_b));
    auto piece = [&](int i) { return reshape(tp, slice_cols(tp, mod, i * w, (i + 1) * w), {w}); };
    Tensor sh1 = piece(0), sc1 = piece(1), g1 = piece(2);
    Tensor sh2 = piece(3), sc2 = piece(4), g2 = piece(5);

    Tensor n1 = modulate(tp, rms_norm(tp, h, P(tp, b.ln1_g)), sc1, sh1);
    Tensor sa = attention(tp, n1, n1, b.wq, b.wk, b.wv, b.wo, heads, &pos, &pos, &rope);
    h = add(tp, h, mul_rowvec(tp, sa, g1));

    Tensor nx = rms_norm(tp, h, P(tp, b.lnx_g));
    Tensor xa = attention(tp, nx, txt, b.xq, b.xk, b.xv, b.xo, heads, nullptr, nullptr, nullptr);
    h = add(tp, h, xa);

    Tensor n2 = modulate(tp, rms_norm(tp, h, P(tp, b.ln2_g)), sc2, sh2);
    Tensor ff = matmul(tp, silu(tp, matmul(tp, n2, P(tp, b.ff1))), P(tp, b.ff2));
    h = add(tp, h, mul_rowvec(tp, ff, g2));
    return h;
  }

  std::pair<Tensor, Tensor> bridge_forward(Tape* tp, Bridge& b, const Tensor& h_v, const Tensor& h_a,
                                           const std::vector<double>& pos_v,
                                           const std::vector<double>& pos_a) {
    if (h_v.rows() != int(pos_v.size()) || h_a.rows() != int(pos_a.size()))
      throw std::invalid_argument("bridge: hidden rows disagree with positions");
    const RotaryBasis rope(cfg_.bridge.width / cfg_.bridge.heads, cfg_.rope_base);
    Tensor nv = rms_norm(tp, h_v, P(tp, b.v_norm_g));
    Tensor na = rms_norm(tp, h_a, P(tp, b.a_norm_g));
    // both deltas read the pre-exchange state of the other tower
    Tensor dv = attention(tp, nv, na, b.vq, b.vk, b.vv, b.vo, cfg_.bridge.heads, &pos_v, &pos_a, &rope);
    Tensor da = attention(tp, na, nv, b.aq, b.ak, b.av, b.ao, cfg_.bridge.heads, &pos_a, &pos_v, &rope);
    return {add(tp, h_v, dv), add(tp, h_a, da)};
  }

  ModelConfig cfg_;
  std::vector<Tower> video_;
  Tower audio_;
  Param text_embed_, text_null_;
  std::vector<Bridge> bridge_;
  std::vector<Param*> registry_;
};

}  // namespace duet
