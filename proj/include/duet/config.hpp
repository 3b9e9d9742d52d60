// SPDX-License-Identifier: Apache-2.0
//
// JSON config schema for the CLI, training presets, config hashing, and run
// manifests. A manifest records the fully resolved config plus the seed, so
// re-running it reproduces every output byte for byte.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "duet/experiment.hpp"
#include "duet/model.hpp"
#include "duet/optim.hpp"
#include "duet/sampler.hpp"
#include "duet/train.hpp"

namespace duet::config {

using nlohmann::json;

inline constexpr const char* kToolVersion = "duet 0.1.0";
inline constexpr int kManifestVersion = 1;

// ----------------------------------------------------------------- helpers

inline void deep_merge(json& base, const json& override_with) {
  if (!override_with.is_object() || !base.is_object()) {
    base = override_with;
    return;
  }
  for (auto it = override_with.begin(); it != override_with.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  return json::parse(in);
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

/// FNV-1a over the canonical (sorted-key) dump, rendered as hex.
inline std::string config_hash(const json& j) {
  const std::uint64_t h = fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

// ------------------------------------------------------------------ schema

inline json default_config() {
  json j;
  j["model"] = {
      {"video", {{"depth", 2}, {"width", 48}, {"heads", 4}, {"tokens", 12}}},
      {"audio", {{"depth", 2}, {"width", 48}, {"heads", 4}, {"tokens", 48}}},
      {"bridge", {{"layers", json::array({0, 1})}, {"width", 48}, {"heads", 4}}},
      {"d_v", 6},
      {"d_a", 6},
      {"f_v", 1.5},
      {"f_a", 6.0},
      {"rope_base", 10000.0},
      {"text_vocab", 8},
      {"text_dim", 32},
      {"cond_dim", 48},
      {"experts", false},
      {"t_split", 0.5},
      {"bridge_init", "zero"},
      {"init_std", 0.05},
  };
  j["train"] = {
      {"p_drop_text", 0.5},  {"p_drop_bridge", 0.1},
      {"shift_v", 5.0},      {"shift_a", 1.0},
      {"sigma_variant", "normalized"},
      {"timestep_mode", "decoupled"},
      {"lambda_a", 0.2},     {"steps", 2000},
      {"batch", 4},          {"alternate_experts", false},
      {"t_split", 0.5},      {"use_frame_token", true},
  };
  j["optimizer"] = {
      {"backbone_lr", 1e-3}, {"bridge_lr", 2e-3}, {"weight_decay", 0.001},
      {"beta1", 0.9},        {"beta2", 0.999},    {"eps", 1e-8},
      {"moments", true},
  };
  j["synth"] = {
      {"duration", 8.0}, {"sigma_time", 0.25}, {"noise_std", 0.05}, {"n_classes", 4},
  };
  j["sample"] = {
      {"n_steps", 24}, {"s_b", 3.0},     {"s_t", 5.0},
      {"guidance", "dual"},
      {"shift_v", 5.0}, {"shift_a", 1.0}, {"count", 1},
  };
  j["sweep"] = {
      {"s_b_values", json::array({1.0, 2.0, 3.0, 3.5})},
      {"s_t", 5.0},
      {"seeds", json::array({1, 2, 3})},
      {"eval_scenes", 16},
      {"sample_steps", 24},
      {"bridge_arm_s_b", 3.0},
  };
  return j;
}

/// Training-phase presets: staged curriculum expressed as config overlays.
inline json preset_overlay(const std::string& name) {
  if (name == "phase1") {
    return {{"train", {{"shift_v", 5.0}, {"shift_a", 1.0}, {"p_drop_text", 0.5}}}};
  }
  if (name == "phase2") {
    return {{"train", {{"shift_v", 5.0}, {"shift_a", 5.0}, {"p_drop_text", 0.2}}}};
  }
  if (name == "phase3") {
    // higher token rate at the same clip duration (resolution step)
    return {
        {"train", {{"shift_v", 5.0}, {"shift_a", 5.0}, {"p_drop_text", 0.2}}},
        {"model",
         {{"f_v", 3.0},
          {"f_a", 12.0},
          {"video", {{"tokens", 24}}},
          {"audio", {{"tokens", 96}}}}},
    };
  }
  if (name == "paper_lr") {
    return {{"optimizer", {{"backbone_lr", 1e-5}, {"bridge_lr", 2e-5}}}};
  }
  throw std::invalid_argument("unknown preset: " + name);
}

// ----------------------------------------------------------------- parsing

inline ModelConfig parse_model(const json& m) {
  ModelConfig c;
  const json& v = m.at("video");
  const json& a = m.at("audio");
  c.video = {v.at("depth").get<int>(), v.at("width").get<int>(), v.at("heads").get<int>(),
             v.at("tokens").get<int>(), Modality::video};
  c.audio = {a.at("depth").get<int>(), a.at("width").get<int>(), a.at("heads").get<int>(),
             a.at("tokens").get<int>(), Modality::audio};
  const json& b = m.at("bridge");
  c.bridge = {b.at("layers").get<std::vector<int>>(), b.at("width").get<int>(), b.at("heads").get<int>()};
  c.d_v = m.at("d_v").get<int>();
  c.d_a = m.at("d_a").get<int>();
  c.grid = TimeGrid(m.at("f_v").get<double>(), m.at("f_a").get<double>());
  c.rope_base = m.at("rope_base").get<double>();
  c.text_vocab = m.at("text_vocab").get<int>();
  c.text_dim = m.at("text_dim").get<int>();
  c.cond_dim = m.at("cond_dim").get<int>();
  c.experts.enabled = m.at("experts").get<bool>();
  c.experts.t_split = m.at("t_split").get<double>();
  const std::string bi = m.at("bridge_init").get<std::string>();
  if (bi == "zero")
    c.bridge_init = BridgeInit::zero;
  else if (bi == "random")
    c.bridge_init = BridgeInit::random;
  else
    throw std::invalid_argument("config: bridge_init must be zero or random");
  c.init_std = m.at("init_std").get<double>();
  c.validate();
  return c;
}

inline SigmaVariant parse_variant(const std::string& s) {
  if (s == "normalized") return SigmaVariant::normalized;
  if (s == "paper_verbatim") return SigmaVariant::paper_verbatim;
  throw std::invalid_argument("config: sigma_variant must be normalized or paper_verbatim");
}

inline TrainConfig parse_train(const json& t, std::uint64_t seed) {
  TrainConfig c;
  c.p_drop_text = t.at("p_drop_text").get<double>();
  c.p_drop_bridge = t.at("p_drop_bridge").get<double>();
  c.shift_v = t.at("shift_v").get<double>();
  c.shift_a = t.at("shift_a").get<double>();
  c.sigma_variant = parse_variant(t.at("sigma_variant").get<std::string>());
  const std::string tm = t.at("timestep_mode").get<std::string>();
  if (tm == "decoupled")
    c.timestep_mode = TimestepMode::decoupled;
  else if (tm == "shared")
    c.timestep_mode = TimestepMode::shared;
  else
    throw std::invalid_argument("config: timestep_mode must be decoupled or shared");
  c.lambda_a = t.at("lambda_a").get<double>();
  c.steps = t.at("steps").get<int>();
  c.batch = t.at("batch").get<int>();
  c.alternate_experts = t.at("alternate_experts").get<bool>();
  c.t_split = t.at("t_split").get<double>();
  c.use_frame_token = t.at("use_frame_token").get<bool>();
  c.seed = seed;
  c.validate();
  return c;
}

inline OptimizerGroups parse_optimizer(const json& o) {
  OptimizerGroups g;
  g.backbone_lr = o.at("backbone_lr").get<double>();
  g.bridge_lr = o.at("bridge_lr").get<double>();
  g.weight_decay = o.at("weight_decay").get<double>();
  g.beta1 = o.at("beta1").get<double>();
  g.beta2 = o.at("beta2").get<double>();
  g.eps = o.at("eps").get<double>();
  g.moments = o.at("moments").get<bool>();
  return g;
}

inline SynthConfig parse_synth(const json& s, const ModelConfig& mc) {
  SynthConfig c;
  c.duration = s.at("duration").get<double>();
  c.sigma_time = s.at("sigma_time").get<double>();
  c.noise_std = s.at("noise_std").get<double>();
  c.n_classes = s.at("n_classes").get<int>();
  c.d_v = mc.d_v;
  c.d_a = mc.d_a;
  return c;
}

inline GuidanceMode parse_guidance(const std::string& s) {
  if (s == "dual") return GuidanceMode::dual;
  if (s == "text_only") return GuidanceMode::text_only;
  if (s == "text_modality") return GuidanceMode::text_modality;
  if (s == "swapped") return GuidanceMode::swapped;
  throw std::invalid_argument("config: guidance must be dual, text_only, text_modality or swapped");
}

inline SampleConfig parse_sample(const json& s) {
  SampleConfig c;
  c.n_steps = s.at("n_steps").get<int>();
  c.scales = GuidanceScales(s.at("s_b").get<double>(), s.at("s_t").get<double>());
  c.mode = parse_guidance(s.at("guidance").get<std::string>());
  c.sched_v = SigmaShiftSchedule(s.at("shift_v").get<double>());
  c.sched_a = SigmaShiftSchedule(s.at("shift_a").get<double>());
  return c;
}

// ---------------------------------------------------------------- manifest

struct Manifest {
  int version = kManifestVersion;
  std::string tool = kToolVersion;
  std::string subcommand;
  std::uint64_t seed = 0;
  json config;
  std::vector<std::string> outputs;  // paths relative to the manifest's directory
};

inline void write_manifest(const std::filesystem::path& out_dir, const Manifest& m) {
  json j;
  j["manifest_version"] = m.version;
  j["tool"] = m.tool;
  j["subcommand"] = m.subcommand;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["config_hash"] = config_hash(m.config);
  j["outputs"] = m.outputs;
  write_json_file(out_dir / "manifest.json", j);
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  Manifest m;
  m.version = j.at("manifest_version").get<int>();
  if (m.version != kManifestVersion) throw std::runtime_error("manifest: unsupported version");
  m.tool = j.at("tool").get<std::string>();
  m.subcommand = j.at("subcommand").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config");
  if (config_hash(m.config) != j.at("config_hash").get<std::string>())
    throw std::runtime_error("manifest: config hash mismatch");
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

}  // namespace duet::config
