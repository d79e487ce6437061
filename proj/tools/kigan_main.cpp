#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kigan/checkpoint.hpp"
#include "kigan/evaluation.hpp"
#include "kigan/manifest.hpp"
#include "kigan/synth.hpp"
#include "kigan/training.hpp"
#include "kigan/verify.hpp"

namespace fs = std::filesystem;
using namespace kigan;

namespace {

constexpr std::int64_t kSampleStep = 15;  // 30 fps source -> 2 fps windows

int env_threads() {
  const char* v = std::getenv("KIGAN_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == nullptr || *end != '\0' || n < 1)
    throw_config("KIGAN_THREADS must be a positive integer, got '" + std::string(v) + "'");
  return static_cast<int>(n);
}

struct Dataset {
  std::string tracks_path, signals_path;
  std::string tracks_bytes, signals_bytes;
  std::vector<AgentTrack> tracks;
  SignalMap signals;
};

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.tracks_path = (fs::path(dir) / "tracks.csv").string();
  d.signals_path = (fs::path(dir) / "signals.csv").string();
  d.tracks_bytes = read_file(d.tracks_path);
  d.signals_bytes = read_file(d.signals_path);
  d.tracks = parse_tracks(d.tracks_bytes);
  d.signals = parse_signals(d.signals_bytes);
  return d;
}

std::vector<SceneWindow> build_windows(const Dataset& d, int obs_len, int pred_len, int stride,
                                       bool include_pedestrians) {
  WindowSpec spec;
  spec.obs_len = obs_len;
  spec.pred_len = pred_len;
  spec.stride = stride;
  spec.include_pedestrians = include_pedestrians;
  auto windows = make_windows(resample(d.tracks, kSampleStep), resample(d.signals, kSampleStep), spec);
  if (windows.empty()) throw_data("dataset yields no complete observation/prediction windows");
  return windows;
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw_config(what + ": " + e.what());
  }
}

std::string delta_cell(double value, double baseline) {
  if (baseline <= 0.0) return "-";
  const double pct = (value - baseline) / baseline * 100.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%s %.1f %%)", pct >= 0 ? "↑" : "↓", std::abs(pct));
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int run_gen_data(const GenDataArgs& args) {
  synth::ScenarioConfig cfg;
  std::string config_bytes;
  if (!args.config_path.empty()) {
    config_bytes = read_file(args.config_path);
    cfg = scenario_config_from_json(parse_json_text(config_bytes, args.config_path), "scenario config");
  }
  if (args.seed_set) cfg.seed = args.seed;
  cfg.validate();

  auto out = synth::simulate(cfg);
  fs::create_directories(args.out_dir);
  const std::string tracks_path = (fs::path(args.out_dir) / "tracks.csv").string();
  const std::string signals_path = (fs::path(args.out_dir) / "signals.csv").string();
  write_file(tracks_path, out.tracks_csv);
  write_file(signals_path, out.signals_csv);

  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.config_echo = scenario_config_to_json(cfg);
  manifest.seed = cfg.seed;
  if (!args.config_path.empty()) manifest.add_input(args.config_path, config_bytes);
  manifest.add_output(tracks_path, out.tracks_csv);
  manifest.add_output(signals_path, out.signals_csv);
  manifest.write(args.out_dir);

  std::cout << "wrote " << tracks_path << " and " << signals_path << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir, config_path, out_dir, resume_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string pooling;
  int pred_len = 0;
  int k = 0;
  int epochs = 0;
  int batch_size = 0;
  int stride = 12;
  bool mask_motion = false, mask_physical = false, mask_traffic = false;
  bool include_pedestrians = false;
};

int run_train(const TrainArgs& args) {
  TrainConfig cfg;
  std::string config_bytes;
  if (!args.config_path.empty()) {
    config_bytes = read_file(args.config_path);
    cfg = train_config_from_json(parse_json_text(config_bytes, args.config_path));
  }
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.pooling.empty()) cfg.model.pooling = pooling_from_name(args.pooling);
  if (args.pred_len > 0) cfg.model.pred_len = args.pred_len;
  if (args.k > 0) cfg.k_variety = args.k;
  if (args.epochs > 0) cfg.epochs = args.epochs;
  if (args.batch_size > 0) cfg.batch_size = args.batch_size;
  if (args.mask_motion) cfg.model.mask_motion = true;
  if (args.mask_physical) cfg.model.mask_physical = true;
  if (args.mask_traffic) cfg.model.mask_traffic = true;
  cfg.validate();

  Dataset data = load_dataset(args.data_dir);
  auto windows =
      build_windows(data, cfg.model.obs_len, cfg.model.pred_len, args.stride, args.include_pedestrians);
  std::cout << "training on " << windows.size() << " windows\n";

  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (!args.resume_path.empty()) {
    resume = checkpoint_load_expect(args.resume_path, cfg.model);
    resume_ptr = &resume;
  }

  TrainResult result = train(windows, cfg, nullptr, resume_ptr, [](const EpochRecord& r) {
    std::printf("epoch %d  d=%.4f g=%.4f variety=%.4f ade=%.4f fde=%.4f (%.1fs)\n", r.epoch,
                r.d_loss, r.g_loss, r.variety, r.ade, r.fde, r.seconds);
  });

  fs::create_directories(args.out_dir);
  const std::string ck_path = (fs::path(args.out_dir) / "checkpoint.bin").string();
  const std::string log_path = (fs::path(args.out_dir) / "train_log.csv").string();
  const std::string ck_bytes = checkpoint_serialize(result.checkpoint);
  const std::string log_bytes = result.log.to_csv();
  write_file(ck_path, ck_bytes);
  write_file(log_path, log_bytes);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config_echo = train_config_to_json(cfg);
  manifest.config_echo["stride"] = args.stride;
  manifest.config_echo["include_pedestrians"] = args.include_pedestrians;
  manifest.seed = cfg.seed;
  manifest.add_input(data.tracks_path, data.tracks_bytes);
  manifest.add_input(data.signals_path, data.signals_bytes);
  if (!args.config_path.empty()) manifest.add_input(args.config_path, config_bytes);
  if (!args.resume_path.empty()) manifest.add_input(args.resume_path, read_file(args.resume_path));
  manifest.add_output(ck_path, ck_bytes);
  manifest.add_output(log_path, log_bytes);
  manifest.write(args.out_dir);

  std::cout << "wrote " << ck_path << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint_path, data_dir, out_dir;
  int k = 12;
  std::string horizons = "";  // "12", "18" or "both"; empty = model default
  std::uint64_t seed = 1;
  int stride = 1;
  bool include_pedestrians = false;
};

int run_eval(const EvalArgs& args) {
  Checkpoint ck = checkpoint_load(args.checkpoint_path);

  std::vector<int> horizons;
  if (args.horizons.empty()) horizons = {ck.model.pred_len};
  else if (args.horizons == "both") horizons = {12, 18};
  else if (args.horizons == "12") horizons = {12};
  else if (args.horizons == "18") horizons = {18};
  else throw_usage("--horizons must be 12, 18 or both");
  int max_horizon = 0;
  for (int h : horizons) max_horizon = std::max(max_horizon, h);

  Dataset data = load_dataset(args.data_dir);
  auto windows =
      build_windows(data, ck.model.obs_len, max_horizon, args.stride, args.include_pedestrians);

  const int threads = env_threads();
  json reports = json::array();
  std::string csv = MetricReport::csv_header() + "\n";
  for (int h : horizons) {
    MetricReport report = evaluate(ck.gen, windows, args.k, args.seed, h, threads);
    reports.push_back(report.to_json());
    csv += report.to_csv_row() + "\n";
    std::printf("pred_len %d  k=%d  ADE %.4f m  FDE %.4f m  (%zu trajectories)\n", h, args.k,
                report.ade, report.fde, report.trajectories);
  }

  fs::create_directories(args.out_dir);
  const std::string json_path = (fs::path(args.out_dir) / "metrics.json").string();
  const std::string csv_path = (fs::path(args.out_dir) / "metrics.csv").string();
  const std::string json_bytes = reports.dump(2) + "\n";
  write_file(json_path, json_bytes);
  write_file(csv_path, csv);

  RunManifest manifest;
  manifest.command = "eval";
  manifest.config_echo = {{"model", model_config_to_json(ck.model)},
                          {"k", args.k},
                          {"horizons", args.horizons.empty() ? std::to_string(ck.model.pred_len)
                                                             : args.horizons},
                          {"stride", args.stride},
                          {"threads", threads}};
  manifest.seed = args.seed;
  manifest.add_input(args.checkpoint_path, read_file(args.checkpoint_path));
  manifest.add_input(data.tracks_path, data.tracks_bytes);
  manifest.add_input(data.signals_path, data.signals_bytes);
  manifest.add_output(json_path, json_bytes);
  manifest.add_output(csv_path, csv);
  manifest.write(args.out_dir);
  return 0;
}

struct AblateArgs {
  std::string data_dir, config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int stride = 12;
};

int run_ablate(const AblateArgs& args) {
  TrainConfig base;
  std::string config_bytes;
  if (!args.config_path.empty()) {
    config_bytes = read_file(args.config_path);
    base = train_config_from_json(parse_json_text(config_bytes, args.config_path));
  }
  if (args.seed_set) base.seed = args.seed;
  base.validate();

  Dataset data = load_dataset(args.data_dir);
  auto all = build_windows(data, base.model.obs_len, base.model.pred_len, args.stride, false);

  // Deterministic 3:1 train/validation split.
  std::vector<SceneWindow> train_set, val_set;
  for (std::size_t i = 0; i < all.size(); ++i)
    (i % 4 == 3 ? val_set : train_set).push_back(all[i]);
  if (train_set.empty() || val_set.empty())
    throw_data("ablate: dataset too small to split into train and validation");
  std::cout << "ablation over " << train_set.size() << " train / " << val_set.size()
            << " validation windows\n";

  struct Row {
    std::string name;
    TrainConfig cfg;
    MetricReport report;
  };
  auto run_one = [&](const std::string& name, TrainConfig cfg) {
    cfg.validate();
    TrainResult result = train(train_set, cfg, &val_set);
    MetricReport report =
        evaluate(result.checkpoint.gen, val_set, cfg.eval_k, mix_seed(cfg.seed, {0xAB}),
                 cfg.model.pred_len, env_threads());
    std::printf("%-16s ADE %.4f  FDE %.4f\n", name.c_str(), report.ade, report.fde);
    return Row{name, cfg, report};
  };

  std::vector<Row> rows;
  rows.push_back(run_one("full", base));
  const MetricReport& full = rows.front().report;

  TrainConfig no_traffic = base;
  no_traffic.model.mask_traffic = true;
  rows.push_back(run_one("no_traffic", no_traffic));
  TrainConfig no_physical = base;
  no_physical.model.mask_physical = true;
  rows.push_back(run_one("no_physical", no_physical));
  TrainConfig no_motion = base;
  no_motion.model.mask_motion = true;
  rows.push_back(run_one("no_motion", no_motion));

  for (PoolingKind kind : {PoolingKind::social, PoolingKind::hidden}) {
    TrainConfig alt = base;
    alt.model.pooling = kind;
    rows.push_back(run_one(std::string("pooling_") + pooling_name(kind), alt));
  }

  // Encoder table in the usual presentation order, then the pooling table.
  std::string csv =
      "experiment,pooling,mask_motion,mask_physical,mask_traffic,ade,fde,ade_vs_full,fde_vs_full\n";
  auto emit = [&](const Row& r) {
    const bool is_full = r.name == "full";
    csv += r.name;
    csv += ',';
    csv += pooling_name(r.cfg.model.pooling);
    csv += ',';
    csv += r.cfg.model.mask_motion ? "1" : "0";
    csv += ',';
    csv += r.cfg.model.mask_physical ? "1" : "0";
    csv += ',';
    csv += r.cfg.model.mask_traffic ? "1" : "0";
    csv += ',';
    csv += format_double(r.report.ade);
    csv += ',';
    csv += format_double(r.report.fde);
    csv += ',';
    csv += is_full ? "-" : delta_cell(r.report.ade, full.ade);
    csv += ',';
    csv += is_full ? "-" : delta_cell(r.report.fde, full.fde);
    csv += '\n';
  };
  for (const char* name : {"no_traffic", "no_physical", "no_motion", "full"})
    for (const Row& r : rows)
      if (r.name == name) emit(r);
  for (const char* name : {"pooling_social", "pooling_hidden", "full"})
    for (const Row& r : rows)
      if (r.name == name) emit(r);

  fs::create_directories(args.out_dir);
  const std::string csv_path = (fs::path(args.out_dir) / "ablation.csv").string();
  write_file(csv_path, csv);

  json report_json = json::array();
  for (const Row& r : rows) {
    json j = r.report.to_json();
    j["experiment"] = r.name;
    report_json.push_back(j);
  }
  const std::string json_path = (fs::path(args.out_dir) / "ablation.json").string();
  const std::string json_bytes = report_json.dump(2) + "\n";
  write_file(json_path, json_bytes);

  RunManifest manifest;
  manifest.command = "ablate";
  manifest.config_echo = train_config_to_json(base);
  manifest.config_echo["stride"] = args.stride;
  manifest.seed = base.seed;
  manifest.add_input(data.tracks_path, data.tracks_bytes);
  manifest.add_input(data.signals_path, data.signals_bytes);
  if (!args.config_path.empty()) manifest.add_input(args.config_path, config_bytes);
  manifest.add_output(csv_path, csv);
  manifest.add_output(json_path, json_bytes);
  manifest.write(args.out_dir);
  return 0;
}

struct PredictArgs {
  std::string checkpoint_path, data_dir, out_dir;
  int k = 12;
  std::uint64_t seed = 1;
  int stride = 12;
};

int run_predict(const PredictArgs& args) {
  Checkpoint ck = checkpoint_load(args.checkpoint_path);
  Dataset data = load_dataset(args.data_dir);
  auto windows = build_windows(data, ck.model.obs_len, ck.model.pred_len, args.stride, false);

  fs::create_directories(args.out_dir);
  RunManifest manifest;
  manifest.command = "predict";
  manifest.config_echo = {{"model", model_config_to_json(ck.model)}, {"k", args.k},
                          {"stride", args.stride}};
  manifest.seed = args.seed;
  manifest.add_input(args.checkpoint_path, read_file(args.checkpoint_path));
  manifest.add_input(data.tracks_path, data.tracks_bytes);
  manifest.add_input(data.signals_path, data.signals_bytes);

  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    auto pred = predict_window(ck.gen, windows[wi], wi, args.k, args.seed);
    std::string csv = "agent_id,step,x_true,y_true,x_pred,y_pred\n";
    for (std::size_t t = 0; t < pred.agent_indices.size(); ++t) {
      const WindowAgent& agent = windows[wi].agents[pred.agent_indices[t]];
      const auto& best = pred.samples[t][pred.best[t]];
      for (std::size_t step = 0; step < best.size(); ++step) {
        csv += agent.agent_id;
        csv += ',';
        csv += std::to_string(step + 1);
        for (double v : {agent.fut_pos[step].x, agent.fut_pos[step].y, best[step].x, best[step].y}) {
          csv += ',';
          csv += format_double(v);
        }
        csv += '\n';
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu.csv", wi);
    const std::string path = (fs::path(args.out_dir) / name).string();
    write_file(path, csv);
    manifest.add_output(path, csv);
  }
  manifest.write(args.out_dir);
  std::cout << "wrote " << windows.size() << " scene prediction files\n";
  return 0;
}

int run_gradcheck(const std::string& out_dir) {
  auto results = run_verification_suite();
  bool all_ok = true;
  json report = json::array();
  for (const auto& r : results) {
    all_ok &= r.ok();
    std::printf("[%s] %-24s max_rel_err=%.3e tol=%.0e\n", r.ok() ? "PASS" : "FAIL", r.name.c_str(),
                r.max_rel_err, r.tolerance);
    report.push_back({{"name", r.name},
                      {"max_rel_err", r.max_rel_err},
                      {"tolerance", r.tolerance},
                      {"pass", r.ok()}});
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "gradcheck.json").string();
    const std::string bytes = report.dump(2) + "\n";
    write_file(path, bytes);
    RunManifest manifest;
    manifest.command = "gradcheck";
    manifest.add_output(path, bytes);
    manifest.write(out_dir);
  }
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory forecasting for signalized intersections"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic intersection dataset");
  gen_cmd->add_option("--config", gen_args.config_path, "Scenario config JSON");
  gen_cmd->add_option("--out", gen_args.out_dir, "Output directory")->required();
  gen_cmd->add_option("--seed", gen_args.seed, "Scenario seed")->each([&](const std::string&) {
    gen_args.seed_set = true;
  });

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the adversarial model");
  train_cmd->add_option("--data", train_args.data_dir, "Dataset directory")->required();
  train_cmd->add_option("--config", train_args.config_path, "Training config JSON");
  train_cmd->add_option("--out", train_args.out_dir, "Output directory")->required();
  train_cmd->add_option("--seed", train_args.seed, "Training seed")->each([&](const std::string&) {
    train_args.seed_set = true;
  });
  train_cmd->add_option("--pooling", train_args.pooling, "vap, social or hidden");
  train_cmd->add_option("--pred-len", train_args.pred_len, "Prediction horizon (12 or 18)");
  train_cmd->add_option("--k", train_args.k, "Variety samples per generator step");
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", train_args.batch_size, "Windows per batch");
  train_cmd->add_option("--stride", train_args.stride, "Window stride (frames at 2 fps)");
  train_cmd->add_option("--resume", train_args.resume_path, "Checkpoint to resume from");
  train_cmd->add_flag("--mask-motion", train_args.mask_motion, "Zero out the motion encoder");
  train_cmd->add_flag("--mask-physical", train_args.mask_physical, "Zero out the physical encoder");
  train_cmd->add_flag("--mask-traffic", train_args.mask_traffic, "Zero out the traffic encoder");
  train_cmd->add_flag("--include-pedestrians", train_args.include_pedestrians,
                      "Treat pedestrians as prediction targets");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (best-of-k ADE/FDE)");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_args.data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--out", eval_args.out_dir, "Output directory")->required();
  eval_cmd->add_option("--k", eval_args.k, "Samples per agent");
  eval_cmd->add_option("--horizons", eval_args.horizons, "12, 18 or both");
  eval_cmd->add_option("--seed", eval_args.seed, "Evaluation noise seed");
  eval_cmd->add_option("--stride", eval_args.stride, "Window stride (default 1)");
  eval_cmd->add_flag("--include-pedestrians", eval_args.include_pedestrians,
                     "Treat pedestrians as prediction targets");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Encoder-mask and pooling sweeps");
  ablate_cmd->add_option("--data", ablate_args.data_dir, "Dataset directory")->required();
  ablate_cmd->add_option("--config", ablate_args.config_path, "Training config JSON");
  ablate_cmd->add_option("--out", ablate_args.out_dir, "Output directory")->required();
  ablate_cmd->add_option("--seed", ablate_args.seed, "Training seed")->each([&](const std::string&) {
    ablate_args.seed_set = true;
  });
  ablate_cmd->add_option("--stride", ablate_args.stride, "Window stride");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Dump best-of-k predictions per scene");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint_path, "Checkpoint file")->required();
  predict_cmd->add_option("--data", predict_args.data_dir, "Dataset directory")->required();
  predict_cmd->add_option("--out", predict_args.out_dir, "Output directory")->required();
  predict_cmd->add_option("--k", predict_args.k, "Samples per agent");
  predict_cmd->add_option("--seed", predict_args.seed, "Noise seed");
  predict_cmd->add_option("--stride", predict_args.stride, "Window stride");

  std::string gradcheck_out;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference verification suite");
  gradcheck_cmd->add_option("--out", gradcheck_out, "Optional report directory");

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) return run_gen_data(gen_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (ablate_cmd->parsed()) return run_ablate(ablate_args);
    if (predict_cmd->parsed()) return run_predict(predict_args);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck_out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const kigan::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
