// SPDX-License-Identifier: Apache-2.0
//
// duet: desk-scale joint two-stream flow-matching sandbox.
//
// Subcommands: train, sample, gradcheck, synth, syncscore, window, gate,
// report, elo, cpcer, sweep. Every run writes a manifest (resolved config,
// seed, hash, output list) beside its outputs; re-running the manifest with
// --from-manifest reproduces the outputs byte for byte.
//
// Exit codes: 0 success, 1 contract/domain error, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "duet/config.hpp"
#include "duet/cpcer.hpp"
#include "duet/curation.hpp"
#include "duet/elo.hpp"
#include "duet/experiment.hpp"
#include "duet/gradcheck_suite.hpp"
#include "duet/sync.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunContext {
  fs::path out_dir;
  std::uint64_t seed = 1;
  json config;  // fully resolved
};

fs::path default_out_root() {
  if (const char* env = std::getenv("DUET_OUT_ROOT")) return fs::path(env);
  return fs::path("duet_out");
}

void finish(const RunContext& ctx, const std::string& subcommand, std::vector<std::string> outputs) {
  duet::config::Manifest m;
  m.subcommand = subcommand;
  m.seed = ctx.seed;
  m.config = ctx.config;
  m.outputs = std::move(outputs);
  duet::config::write_manifest(ctx.out_dir, m);
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

// ------------------------------------------------------------------- train

int cmd_train(const RunContext& ctx) {
  using namespace duet;
  const ModelConfig mc = config::parse_model(ctx.config.at("model"));
  const TrainConfig tc = config::parse_train(ctx.config.at("train"), ctx.seed);
  const SynthConfig synth = config::parse_synth(ctx.config.at("synth"), mc);
  GroupedAdamW opt(config::parse_optimizer(ctx.config.at("optimizer")));

  DualTowerModel model(mc, ctx.seed);
  std::ofstream metrics(ctx.out_dir / "metrics.jsonl", std::ios::trunc);
  const TrainResult r = train_loop(model, tc, synth, opt, &metrics);
  model.save((ctx.out_dir / "model.ckpt").string());
  if (!r.losses.empty())
    std::cout << "trained " << r.losses.size() << " steps, final loss " << r.losses.back() << "\n";
  finish(ctx, "train", {"metrics.jsonl", "model.ckpt"});
  return 0;
}

// ------------------------------------------------------------------ sample

int cmd_sample(const RunContext& ctx) {
  using namespace duet;
  const ModelConfig mc = config::parse_model(ctx.config.at("model"));
  SampleConfig sc = config::parse_sample(ctx.config.at("sample"));
  DualTowerModel model(mc, ctx.seed);
  const std::string ckpt = ctx.config.at("sample").value("model_checkpoint", std::string());
  if (!ckpt.empty()) model.load(ckpt);

  ConditionSet cond;
  const std::vector<int> classes = ctx.config.at("sample").value("prompt_classes", std::vector<int>{0});
  cond.text_tokens = EventScene::encode_prompt(classes);
  if (ctx.config.at("train").at("use_frame_token").get<bool>())
    cond.first_frame = ConditionSet::white_frame(mc.d_v);

  const int count = ctx.config.at("sample").at("count").get<int>();
  std::vector<std::string> outputs;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(ctx.seed, "sample-" + std::to_string(i)));
    auto [x_v, x_a] = sample(model, cond, sc, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03d.ckpt", i);
    save_tensors((ctx.out_dir / name).string(), {{"x_v", &x_v}, {"x_a", &x_a}});
    outputs.emplace_back(name);
  }
  std::cout << "wrote " << count << " latent pair(s)\n";
  finish(ctx, "sample", std::move(outputs));
  return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const RunContext& ctx) {
  using namespace duet;
  json report;
  double worst = 0.0;
  json prims = json::array();
  for (const auto& c : gradsuite::primitive_grad_cases(ctx.seed)) {
    prims.push_back({{"op", c.name}, {"max_rel_err", c.err}});
    worst = std::max(worst, c.err);
  }
  report["primitives"] = prims;
  const double composed = gradsuite::composed_model_grad_err(ctx.seed);
  report["composed_model"] = composed;
  worst = std::max(worst, composed);
  report["max_rel_err"] = worst;
  config::write_json_file(ctx.out_dir / "gradcheck.json", report);
  std::cout << "max rel err: primitives+composed " << worst << "\n";
  finish(ctx, "gradcheck", {"gradcheck.json"});
  return worst <= 1e-4 ? 0 : 1;
}

// ------------------------------------------------------------------- synth

int cmd_synth(const RunContext& ctx) {
  using namespace duet;
  const ModelConfig mc = config::parse_model(ctx.config.at("model"));
  SynthConfig synth = config::parse_synth(ctx.config.at("synth"), mc);
  Rng rng(derive_seed(ctx.seed, "synth"));

  EventScene scene;
  const std::string spec = ctx.config.value("events", std::string());
  if (spec.empty()) {
    scene = EventScene::random(rng, synth);
  } else {
    // "onset:class,onset:class"
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw std::invalid_argument("synth: events must be onset:class pairs");
      scene.onsets.push_back(std::stod(item.substr(0, colon)));
      scene.classes.push_back(std::stoi(item.substr(colon + 1)));
    }
    scene.prompt_ids = EventScene::encode_prompt(scene.classes);
    scene.validate(synth);
  }
  auto [x_v, x_a] = synth_pair(scene, mc.grid, rng, synth);
  save_tensors((ctx.out_dir / "pair.ckpt").string(), {{"x_v", &x_v}, {"x_a", &x_a}});
  json sj;
  sj["onsets"] = scene.onsets;
  sj["classes"] = scene.classes;
  sj["prompt_ids"] = scene.prompt_ids;
  config::write_json_file(ctx.out_dir / "scene.json", sj);
  std::cout << "synthesized scene with " << scene.onsets.size() << " event(s)\n";
  finish(ctx, "synth", {"pair.ckpt", "scene.json"});
  return 0;
}

// --------------------------------------------------------------- syncscore

int cmd_syncscore(const RunContext& ctx) {
  using namespace duet;
  const ModelConfig mc = config::parse_model(ctx.config.at("model"));
  const SynthConfig synth = config::parse_synth(ctx.config.at("synth"), mc);
  const std::string input = ctx.config.at("input").get<std::string>();
  const LoadedCheckpoint ck = load_tensors(input);
  const Tensor* x_v = ck.find("x_v");
  const Tensor* x_a = ck.find("x_a");
  if (!x_v || !x_a) throw std::runtime_error("syncscore: input lacks x_v/x_a tensors");
  const SyncOutcome out = sync_score(*x_v, *x_a, mc.grid, synth);
  json j;
  j["ok"] = out.ok();
  if (out.ok()) {
    j["offset_error_s"] = out.report->offset_error_s;
    j["event_f1"] = out.report->event_f1;
    j["matched_pairs"] = out.report->matched_pairs;
    std::cout << "offset_error_s " << out.report->offset_error_s << ", f1 " << out.report->event_f1
              << "\n";
  } else {
    j["error"] = out.error;
    std::cout << "no score: " << out.error << "\n";
  }
  config::write_json_file(ctx.out_dir / "sync.json", j);
  finish(ctx, "syncscore", {"sync.json"});
  return 0;
}

// ------------------------------------------------------------------ window

int cmd_window(const RunContext& ctx) {
  using namespace duet;
  using namespace duet::curation;
  const std::string input = ctx.config.at("input").get<std::string>();
  const std::string mode = ctx.config.at("mode").get<std::string>();
  if (mode != "multi" && mode != "single") throw std::invalid_argument("window: mode must be multi or single");

  std::ifstream in(input);
  if (!in) throw std::runtime_error("window: cannot open " + input);
  std::ofstream out(ctx.out_dir / "windows.jsonl", std::ios::trunc);
  std::string line;
  long long clips = 0, windows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const std::string clip_id = rec.at("clip_id").get<std::string>();
    std::vector<SpeechSegment> segments;
    for (const auto& s : rec.at("speech_segments"))
      segments.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    const SceneSplits splits = rec.at("scene_splits").get<SceneSplits>();
    Rng rng(derive_seed(ctx.seed, clip_id));  // per-clip stream, input-order independent
    const auto ws = mode == "multi" ? multi_shot_windows(segments, splits, rng)
                                    : single_shot_windows(segments, splits, rng);
    for (const auto& w : ws) {
      json wj;
      wj["clip_id"] = clip_id;
      wj["start"] = w.start;
      wj["end"] = w.end;
      wj["kind"] = w.kind == WindowKind::multi_shot ? "multi_shot" : "single_shot";
      out << wj.dump() << "\n";
      ++windows;
    }
    ++clips;
  }
  std::cout << "windowed " << clips << " clip(s) into " << windows << " window(s)\n";
  finish(ctx, "window", {"windows.jsonl"});
  return 0;
}

// -------------------------------------------------------------------- gate

int cmd_gate(const RunContext& ctx) {
  using namespace duet::curation;
  const std::string input = ctx.config.at("input").get<std::string>();
  const std::string profile = ctx.config.at("profile").get<std::string>();
  GateConfig cfg;
  if (profile == "stage2")
    cfg.profile = GateProfile::stage2;
  else if (profile == "speech")
    cfg.profile = GateProfile::speech;
  else if (profile == "phase2")
    cfg.profile = GateProfile::phase2;
  else
    throw std::invalid_argument("gate: profile must be stage2, speech or phase2");

  std::ifstream in(input);
  if (!in) throw std::runtime_error("gate: cannot open " + input);
  std::ofstream out(ctx.out_dir / "decisions.jsonl", std::ios::trunc);
  std::string line;
  long long total = 0, passed = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    MetricRecord r;
    r.clip_id = rec.at("clip_id").get<std::string>();
    auto opt_d = [&](const char* key) -> std::optional<double> {
      if (!rec.contains(key)) return std::nullopt;
      return rec.at(key).get<double>();
    };
    auto opt_b = [&](const char* key) -> std::optional<bool> {
      if (!rec.contains(key)) return std::nullopt;
      return rec.at(key).get<bool>();
    };
    r.silence_ratio = opt_d("silence_ratio");
    r.bandwidth_hz = opt_d("bandwidth_hz");
    r.audiobox_pq = opt_d("audiobox_pq");
    r.audiobox_cu = opt_d("audiobox_cu");
    r.audiobox_ce = opt_d("audiobox_ce");
    r.dover_aesthetic = opt_d("dover_aesthetic");
    r.dover_technical = opt_d("dover_technical");
    r.ib_score = opt_d("ib_score");
    r.desync = opt_d("desync");
    r.eat_speech = opt_b("eat_speech");
    r.eat_singing = opt_b("eat_singing");
    r.lse_d = opt_d("lse_d");
    r.lse_c = opt_d("lse_c");
    const GateDecision d = apply_gates(r, cfg);
    json dj;
    dj["clip_id"] = r.clip_id;
    dj["pass"] = d.pass;
    dj["reasons"] = d.reasons;
    out << dj.dump() << "\n";
    ++total;
    if (d.pass) ++passed;
  }
  json summary;
  summary["total"] = total;
  summary["passed"] = passed;
  summary["profile"] = profile;
  duet::config::write_json_file(ctx.out_dir / "summary.json", summary);
  std::cout << passed << "/" << total << " clips pass profile " << profile << "\n";
  finish(ctx, "gate", {"decisions.jsonl", "summary.json"});
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const RunContext& ctx) {
  using namespace duet::curation;
  const std::string input = ctx.config.at("input").get<std::string>();
  const json spec = duet::config::load_json_file(input);
  std::vector<std::pair<std::string, long long>> stages;
  for (const auto& s : spec.at("stages"))
    stages.emplace_back(s.at("name").get<std::string>(), s.at("count").get<long long>());
  const RetentionReport rep = retention_report(spec.at("raw").get<long long>(), stages);
  json j;
  j["raw"] = rep.raw;
  json out_stages = json::array();
  for (const auto& s : rep.stages)
    out_stages.push_back({{"name", s.name}, {"count", s.count}, {"percent", s.percent}});
  j["stages"] = out_stages;
  duet::config::write_json_file(ctx.out_dir / "retention.json", j);
  for (const auto& s : rep.stages) std::cout << s.name << ": " << s.percent << "%\n";
  finish(ctx, "report", {"retention.json"});
  return 0;
}

// --------------------------------------------------------------------- elo

int cmd_elo(const RunContext& ctx) {
  using namespace duet::arena;
  const std::string input = ctx.config.at("votes").get<std::string>();
  std::ifstream in(input);
  if (!in) throw std::runtime_error("elo: cannot open " + input);
  std::vector<Vote> votes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    Vote v;
    v.model_a = rec.at("model_a").get<std::string>();
    v.model_b = rec.at("model_b").get<std::string>();
    const std::string o = rec.at("outcome").get<std::string>();
    if (o == "a_wins")
      v.outcome = Outcome::a_wins;
    else if (o == "b_wins")
      v.outcome = Outcome::b_wins;
    else if (o == "tie")
      v.outcome = Outcome::tie;
    else
      throw std::invalid_argument("elo: outcome must be a_wins, b_wins or tie");
    votes.push_back(std::move(v));
  }
  EloConfig cfg;
  cfg.bootstrap_iters = ctx.config.value("bootstrap_iters", 1000);
  cfg.seed = ctx.seed;

  json j;
  const Ratings r = elo_ratings(votes, cfg);
  json ratings = json::object();
  for (const auto& [model, rating] : r) ratings[model] = rating;
  j["ratings"] = ratings;
  if (!votes.empty()) {
    json ci;
    for (const auto& [model, bounds] : bootstrap_ci(votes, cfg))
      ci[model] = {{"median", bounds.median}, {"p2_5", bounds.lo}, {"p97_5", bounds.hi}};
    j["bootstrap_ci"] = ci;
  }
  const WinRateMatrix w = win_rate_matrix(votes);
  json wins = json::object();
  for (std::size_t a = 0; a < w.models.size(); ++a)
    for (std::size_t b = 0; b < w.models.size(); ++b) {
      const auto cell = w.cells[a * w.models.size() + b];
      if (cell) wins[w.models[a]][w.models[b]] = *cell;
    }
  j["win_rates"] = wins;
  duet::config::write_json_file(ctx.out_dir / "ratings.json", j);
  for (const auto& [model, rating] : r) std::cout << model << ": " << rating << "\n";
  finish(ctx, "elo", {"ratings.json"});
  return 0;
}

// ------------------------------------------------------------------- cpcer

int cmd_cpcer(const RunContext& ctx) {
  using namespace duet::transcript;
  auto load = [](const std::string& path) {
    const json j = duet::config::load_json_file(path);
    SpeakerTranscript t;
    for (auto it = j.begin(); it != j.end(); ++it) t[it.key()] = it.value().get<std::string>();
    return t;
  };
  const double value = cpcer(load(ctx.config.at("ref").get<std::string>()),
                             load(ctx.config.at("hyp").get<std::string>()));
  json j;
  j["cpcer"] = value;
  duet::config::write_json_file(ctx.out_dir / "cpcer.json", j);
  std::cout << "cpcer " << value << "\n";
  finish(ctx, "cpcer", {"cpcer.json"});
  return 0;
}

// ------------------------------------------------------------------- sweep

int cmd_sweep(const RunContext& ctx) {
  using namespace duet;
  ExperimentConfig cfg;
  cfg.model = config::parse_model(ctx.config.at("model"));
  cfg.train = config::parse_train(ctx.config.at("train"), ctx.seed);
  cfg.opt = config::parse_optimizer(ctx.config.at("optimizer"));
  cfg.synth = config::parse_synth(ctx.config.at("synth"), cfg.model);
  const json& sw = ctx.config.at("sweep");
  cfg.s_b_sweep = sw.at("s_b_values").get<std::vector<double>>();
  cfg.s_t = sw.at("s_t").get<double>();
  cfg.eval_scenes = sw.at("eval_scenes").get<int>();
  cfg.sample_steps = sw.at("sample_steps").get<int>();
  cfg.bridge_arm_s_b = sw.at("bridge_arm_s_b").get<double>();
  cfg.seeds.clear();
  for (const auto& s : sw.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());

  const ExperimentResult r = run_sync_experiment(cfg, &std::cout);
  json j;
  j["bridge_median_offset_s"] = r.bridge_median_offset_s;
  j["nobridge_median_offset_s"] = r.nobridge_median_offset_s;
  j["bridge_failures"] = r.bridge_failures;
  j["nobridge_failures"] = r.nobridge_failures;
  json rows = json::array();
  std::cout << "  s_b   median_offset_s   mean_f1   failures\n";
  for (const auto& row : r.sweep) {
    rows.push_back({{"s_b", row.s_b},
                    {"median_offset_s", row.median_offset_s},
                    {"mean_f1", row.mean_f1},
                    {"failures", row.failures},
                    {"scenes", row.scenes}});
    std::printf("  %-5.2f %-17.4f %-9.3f %d\n", row.s_b, row.median_offset_s, row.mean_f1,
                row.failures);
  }
  j["sweep"] = rows;
  j["sweep_spearman"] = r.sweep_spearman;
  config::write_json_file(ctx.out_dir / "sweep.json", j);
  std::cout << "spearman(s_b, median offset) = " << r.sweep_spearman << "\n";
  finish(ctx, "sweep", {"sweep.json"});
  return 0;
}

int dispatch(const std::string& subcommand, const RunContext& ctx) {
  fs::create_directories(ctx.out_dir);
  if (subcommand == "train") return cmd_train(ctx);
  if (subcommand == "sample") return cmd_sample(ctx);
  if (subcommand == "gradcheck") return cmd_gradcheck(ctx);
  if (subcommand == "synth") return cmd_synth(ctx);
  if (subcommand == "syncscore") return cmd_syncscore(ctx);
  if (subcommand == "window") return cmd_window(ctx);
  if (subcommand == "gate") return cmd_gate(ctx);
  if (subcommand == "report") return cmd_report(ctx);
  if (subcommand == "elo") return cmd_elo(ctx);
  if (subcommand == "cpcer") return cmd_cpcer(ctx);
  if (subcommand == "sweep") return cmd_sweep(ctx);
  throw std::invalid_argument("unknown subcommand: " + subcommand);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"duet: desk-scale joint two-stream flow-matching sandbox"};
  app.require_subcommand(0, 1);

  std::string out_dir = default_out_root().string();
  std::uint64_t seed = 1;
  std::string config_file;
  std::string from_manifest;
  std::string preset;
  app.add_option("--out", out_dir, "output directory (env DUET_OUT_ROOT sets the default)");
  app.add_option("--seed", seed, "root seed for all stochastic behavior");
  app.add_option("--config", config_file, "JSON config file (flags override file values)");
  app.add_option("--from-manifest", from_manifest, "re-run a recorded manifest");
  app.add_option("--preset", preset, "training preset: phase1, phase2, phase3, paper_lr");

  auto* train = app.add_subcommand("train", "train the dual-tower model on synthetic scenes");
  int steps = -1, batch = -1;
  train->add_option("--steps", steps, "training steps");
  train->add_option("--batch", batch, "batch size");

  auto* sample_cmd = app.add_subcommand("sample", "generate latent pairs with dual guidance");
  double s_b = -1.0, s_t = -1.0;
  int n_steps = -1, count = -1;
  std::string guidance, model_ckpt, prompt_classes;
  sample_cmd->add_option("--s-b", s_b, "cross-modal guidance scale");
  sample_cmd->add_option("--s-t", s_t, "text guidance scale");
  sample_cmd->add_option("--guidance", guidance, "dual, text_only, text_modality or swapped");
  sample_cmd->add_option("--steps", n_steps, "sampler steps");
  sample_cmd->add_option("--count", count, "number of samples");
  sample_cmd->add_option("--model", model_ckpt, "model checkpoint to load");
  sample_cmd->add_option("--prompt", prompt_classes, "comma-separated class ids");

  app.add_subcommand("gradcheck", "finite-difference checks for every primitive and the model");

  auto* synth = app.add_subcommand("synth", "generate one synthetic scene pair");
  std::string events;
  synth->add_option("--events", events, "onset:class pairs, comma separated (default: random)");

  auto* syncscore = app.add_subcommand("syncscore", "score a generated latent pair");
  std::string sync_input;
  syncscore->add_option("--input", sync_input, "pair checkpoint (x_v, x_a)")->required();

  auto* window = app.add_subcommand("window", "speech window generation over clip metadata");
  std::string window_input, window_mode = "multi";
  window->add_option("--input", window_input, "JSONL of clip_id, speech_segments, scene_splits")
      ->required();
  window->add_option("--mode", window_mode, "multi or single");

  auto* gate = app.add_subcommand("gate", "apply quality threshold gates to metric records");
  std::string gate_input, gate_profile = "stage2";
  gate->add_option("--input", gate_input, "JSONL of per-clip metric records")->required();
  gate->add_option("--profile", gate_profile, "stage2, speech or phase2");

  auto* report = app.add_subcommand("report", "retention percentages from stage counts");
  std::string report_input;
  report->add_option("--input", report_input, "JSON with raw count and stages")->required();

  auto* elo = app.add_subcommand("elo", "arena ratings with bootstrap intervals");
  std::string votes_file;
  int bootstrap_iters = -1;
  elo->add_option("--votes", votes_file, "JSONL of pairwise votes")->required();
  elo->add_option("--bootstrap", bootstrap_iters, "bootstrap iterations");

  auto* cpcer_cmd = app.add_subcommand("cpcer", "speaker-permutation character error rate");
  std::string ref_file, hyp_file;
  cpcer_cmd->add_option("--ref", ref_file, "reference transcript JSON")->required();
  cpcer_cmd->add_option("--hyp", hyp_file, "hypothesis transcript JSON")->required();

  auto* sweep = app.add_subcommand("sweep", "train, then sweep the cross-modal guidance scale");
  std::string sweep_sb, sweep_seeds;
  int sweep_scenes = -1, sweep_sample_steps = -1, sweep_train_steps = -1;
  double sweep_st = -1.0;
  sweep->add_option("--s-b-list", sweep_sb, "comma-separated s_B values");
  sweep->add_option("--s-t", sweep_st, "fixed text scale");
  sweep->add_option("--scenes", sweep_scenes, "eval scenes per seed");
  sweep->add_option("--sample-steps", sweep_sample_steps, "sampler steps");
  sweep->add_option("--train-steps", sweep_train_steps, "training steps per seed");
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunContext ctx;
    ctx.out_dir = out_dir;

    if (!from_manifest.empty()) {
      const duet::config::Manifest m = duet::config::read_manifest(from_manifest);
      ctx.seed = m.seed;
      ctx.config = m.config;
      return dispatch(m.subcommand, ctx);
    }

    if (app.get_subcommands().empty()) {
      std::cerr << "error: a subcommand is required (see --help)\n";
      return 2;
    }
    const std::string subcommand = app.get_subcommands().front()->get_name();

    ctx.seed = seed;
    ctx.config = duet::config::default_config();
    if (!config_file.empty())
      duet::config::deep_merge(ctx.config, duet::config::load_json_file(config_file));
    if (!preset.empty()) duet::config::deep_merge(ctx.config, duet::config::preset_overlay(preset));

    // flag overrides on top of file values
    if (steps >= 0) ctx.config["train"]["steps"] = steps;
    if (batch >= 0) ctx.config["train"]["batch"] = batch;
    if (s_b >= 0.0) ctx.config["sample"]["s_b"] = s_b;
    if (s_t >= 0.0) ctx.config["sample"]["s_t"] = s_t;
    if (!guidance.empty()) ctx.config["sample"]["guidance"] = guidance;
    if (n_steps >= 0) ctx.config["sample"]["n_steps"] = n_steps;
    if (count >= 0) ctx.config["sample"]["count"] = count;
    if (!model_ckpt.empty()) ctx.config["sample"]["model_checkpoint"] = model_ckpt;
    if (!prompt_classes.empty()) ctx.config["sample"]["prompt_classes"] = parse_int_list(prompt_classes);
    if (!events.empty()) ctx.config["events"] = events;
    if (!sync_input.empty()) ctx.config["input"] = sync_input;
    if (!window_input.empty()) ctx.config["input"] = window_input;
    if (window->parsed()) ctx.config["mode"] = window_mode;
    if (!gate_input.empty()) ctx.config["input"] = gate_input;
    if (gate->parsed()) ctx.config["profile"] = gate_profile;
    if (!report_input.empty()) ctx.config["input"] = report_input;
    if (!votes_file.empty()) ctx.config["votes"] = votes_file;
    if (bootstrap_iters >= 0) ctx.config["bootstrap_iters"] = bootstrap_iters;
    if (!ref_file.empty()) ctx.config["ref"] = ref_file;
    if (!hyp_file.empty()) ctx.config["hyp"] = hyp_file;
    if (!sweep_sb.empty()) {
      std::vector<double> vals;
      std::stringstream ss(sweep_sb);
      std::string item;
      while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
      ctx.config["sweep"]["s_b_values"] = vals;
    }
    if (sweep_st >= 0.0) ctx.config["sweep"]["s_t"] = sweep_st;
    if (sweep_scenes >= 0) ctx.config["sweep"]["eval_scenes"] = sweep_scenes;
    if (sweep_sample_steps >= 0) ctx.config["sweep"]["sample_steps"] = sweep_sample_steps;
    if (sweep_train_steps >= 0) ctx.config["train"]["steps"] = sweep_train_steps;
    if (!sweep_seeds.empty()) {
      std::vector<std::uint64_t> vals;
      for (int v : parse_int_list(sweep_seeds)) vals.push_back(std::uint64_t(v));
      ctx.config["sweep"]["seeds"] = vals;
    }

    return dispatch(subcommand, ctx);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
