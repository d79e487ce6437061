#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "kigan/checkpoint.hpp"
#include "kigan/evaluation.hpp"
#include "kigan/manifest.hpp"
#include "kigan/training.hpp"

#ifndef KIGAN_CLI_PATH
#error "KIGAN_CLI_PATH must point at the CLI binary"
#endif

namespace fs = std::filesystem;
using namespace kigan;

namespace {

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / ("kigan_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string p(const std::string& rel) const { return (dir / rel).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KIGAN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

json read_json(const std::string& path) { return json::parse(read_file(path)); }

}  // namespace

TEST_CASE("gen-data: happy path, determinism, config guard") {
  Workdir wd;
  write(wd.p("scenario.json"), R"({"seed": 5, "agents_per_approach": 2, "duration_s": 50.0})");

  CHECK(run_cli("gen-data --config " + wd.p("scenario.json") + " --out " + wd.p("d1")) == 0);
  CHECK(fs::exists(wd.p("d1/tracks.csv")));
  CHECK(fs::exists(wd.p("d1/signals.csv")));
  CHECK(fs::exists(wd.p("d1/manifest.json")));

  json manifest = read_json(wd.p("d1/manifest.json"));
  CHECK(manifest["command"] == "gen-data");
  CHECK(manifest["seed"] == 5);

  // Same seed twice: identical output digests.
  CHECK(run_cli("gen-data --config " + wd.p("scenario.json") + " --out " + wd.p("d2")) == 0);
  json m2 = read_json(wd.p("d2/manifest.json"));
  CHECK(manifest["outputs"][wd.p("d1/tracks.csv")] == m2["outputs"][wd.p("d2/tracks.csv")]);
  CHECK(manifest["outputs"][wd.p("d1/signals.csv")] == m2["outputs"][wd.p("d2/signals.csv")]);

  // Seed flag overrides the file.
  CHECK(run_cli("gen-data --config " + wd.p("scenario.json") + " --seed 6 --out " + wd.p("d3")) == 0);
  json m3 = read_json(wd.p("d3/manifest.json"));
  CHECK(m3["seed"] == 6);
  CHECK(manifest["outputs"][wd.p("d1/tracks.csv")] != m3["outputs"][wd.p("d3/tracks.csv")]);

  // Invalid config: usage/config exit code, no partial files.
  write(wd.p("bad.json"), R"({"green_s": -1.0})");
  CHECK(run_cli("gen-data --config " + wd.p("bad.json") + " --out " + wd.p("d4")) == 1);
  CHECK(!fs::exists(wd.p("d4/tracks.csv")));

  // Unknown config key.
  write(wd.p("typo.json"), R"({"green_seconds": 10.0})");
  CHECK(run_cli("gen-data --config " + wd.p("typo.json") + " --out " + wd.p("d5")) == 1);

  // Malformed JSON is a config error too.
  write(wd.p("broken.json"), "{not json");
  CHECK(run_cli("gen-data --config " + wd.p("broken.json") + " --out " + wd.p("d7")) == 1);

  // Missing dataset for eval: data error.
  CHECK(run_cli("eval --checkpoint nope.bin --data nowhere --out " + wd.p("d6")) == 2);
}

TEST_CASE("train, eval, predict, resume round trip through the CLI") {
  Workdir wd;
  write(wd.p("scenario.json"),
        R"({"seed": 11, "agents_per_approach": 3, "duration_s": 80.0})");
  REQUIRE(run_cli("gen-data --config " + wd.p("scenario.json") + " --out " + wd.p("data")) == 0);

  write(wd.p("train.json"), R"({
    "model": {"d_h": 8, "d_a": 4, "d_t": 4, "d_size": 4, "d_embed": 8, "d_e": 8, "d_p": 8,
               "d_z": 4, "attn_hidden": 8, "pool_hidden": 12, "disc_hidden": 8},
    "batch_size": 8, "epochs": 2, "k_variety": 2, "eval_k": 2, "seed": 3})");

  REQUIRE(run_cli("train --data " + wd.p("data") + " --config " + wd.p("train.json") + " --out " +
                  wd.p("run")) == 0);
  CHECK(fs::exists(wd.p("run/checkpoint.bin")));

  // Two-row log for two epochs.
  const std::string log = read_file(wd.p("run/train_log.csv"));
  CHECK(log.rfind(TrainLog::csv_header(), 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);

  json manifest = read_json(wd.p("run/manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["config"]["model"]["pooling"] == "vap");

  // Pooling flag overrides and is echoed in the manifest.
  REQUIRE(run_cli("train --data " + wd.p("data") + " --config " + wd.p("train.json") +
                  " --pooling hidden --out " + wd.p("run_hidden")) == 0);
  json hidden_manifest = read_json(wd.p("run_hidden/manifest.json"));
  CHECK(hidden_manifest["config"]["model"]["pooling"] == "hidden");

  // Determinism across reruns: identical checkpoint digests.
  REQUIRE(run_cli("train --data " + wd.p("data") + " --config " + wd.p("train.json") + " --out " +
                  wd.p("run_again")) == 0);
  json again = read_json(wd.p("run_again/manifest.json"));
  CHECK(manifest["outputs"][wd.p("run/checkpoint.bin")] ==
        again["outputs"][wd.p("run_again/checkpoint.bin")]);

  // Resume: 2 epochs + 2 resumed == 4 straight epochs, bit-identical.
  write(wd.p("train4.json"), R"({
    "model": {"d_h": 8, "d_a": 4, "d_t": 4, "d_size": 4, "d_embed": 8, "d_e": 8, "d_p": 8,
               "d_z": 4, "attn_hidden": 8, "pool_hidden": 12, "disc_hidden": 8},
    "batch_size": 8, "epochs": 4, "k_variety": 2, "eval_k": 2, "seed": 3})");
  REQUIRE(run_cli("train --data " + wd.p("data") + " --config " + wd.p("train4.json") + " --out " +
                  wd.p("run4")) == 0);
  REQUIRE(run_cli("train --data " + wd.p("data") + " --config " + wd.p("train4.json") +
                  " --resume " + wd.p("run/checkpoint.bin") + " --out " + wd.p("resumed")) == 0);
  CHECK(read_file(wd.p("run4/checkpoint.bin")) == read_file(wd.p("resumed/checkpoint.bin")));
  const std::string resumed_log = read_file(wd.p("resumed/train_log.csv"));
  CHECK(resumed_log.find("\n2,") != std::string::npos);  // epoch numbering continues

  // Eval: both horizons emitted; values match the library call-through.
  REQUIRE(run_cli("eval --checkpoint " + wd.p("run/checkpoint.bin") + " --data " + wd.p("data") +
                  " --out " + wd.p("eval") + " --k 3 --seed 17 --stride 4 --horizons both") == 0);
  json reports = read_json(wd.p("eval/metrics.json"));
  REQUIRE(reports.size() == 2);
  CHECK(reports[0]["pred_len"] == 12);
  CHECK(reports[1]["pred_len"] == 18);

  {
    Checkpoint ck = checkpoint_load(wd.p("run/checkpoint.bin"));
    auto tracks = resample(parse_tracks(read_file(wd.p("data/tracks.csv"))), 15);
    auto signals = resample(parse_signals(read_file(wd.p("data/signals.csv"))), 15);
    WindowSpec spec;
    spec.obs_len = ck.model.obs_len;
    spec.pred_len = 18;
    spec.stride = 4;
    auto windows = make_windows(tracks, signals, spec);
    MetricReport lib12 = evaluate(ck.gen, windows, 3, 17, 12);
    MetricReport lib18 = evaluate(ck.gen, windows, 3, 17, 18);
    CHECK(std::abs(reports[0]["ade"].get<double>() - lib12.ade) < 1e-12);
    CHECK(std::abs(reports[0]["fde"].get<double>() - lib12.fde) < 1e-12);
    CHECK(std::abs(reports[1]["ade"].get<double>() - lib18.ade) < 1e-12);
    CHECK(std::abs(reports[1]["fde"].get<double>() - lib18.fde) < 1e-12);
  }

  json eval_manifest = read_json(wd.p("eval/manifest.json"));
  CHECK(eval_manifest["config"]["k"] == 3);

  // Predict: per-scene CSVs with the pinned header.
  REQUIRE(run_cli("predict --checkpoint " + wd.p("run/checkpoint.bin") + " --data " + wd.p("data") +
                  " --out " + wd.p("pred") + " --k 2") == 0);
  CHECK(fs::exists(wd.p("pred/scene_000.csv")));
  const std::string scene = read_file(wd.p("pred/scene_000.csv"));
  CHECK(scene.rfind("agent_id,step,x_true,y_true,x_pred,y_pred", 0) == 0);

  // Checkpoint under a different architecture is rejected as config error.
  write(wd.p("other.json"), R"({
    "model": {"d_h": 16}, "epochs": 1, "k_variety": 1, "eval_k": 1, "seed": 3})");
  CHECK(run_cli("train --data " + wd.p("data") + " --config " + wd.p("other.json") + " --resume " +
                wd.p("run/checkpoint.bin") + " --out " + wd.p("bad_resume")) == 1);
}

TEST_CASE("ablate emits the encoder and pooling sweep tables") {
  Workdir wd;
  write(wd.p("scenario.json"),
        R"({"seed": 21, "agents_per_approach": 3, "duration_s": 100.0})");
  REQUIRE(run_cli("gen-data --config " + wd.p("scenario.json") + " --out " + wd.p("data")) == 0);

  write(wd.p("train.json"), R"({
    "model": {"d_h": 8, "d_a": 4, "d_t": 4, "d_size": 4, "d_embed": 8, "d_e": 8, "d_p": 8,
               "d_z": 4, "attn_hidden": 8, "pool_hidden": 12, "disc_hidden": 8},
    "batch_size": 8, "epochs": 1, "k_variety": 1, "eval_k": 1, "seed": 4})");
  REQUIRE(run_cli("ablate --data " + wd.p("data") + " --config " + wd.p("train.json") + " --out " +
                  wd.p("abl") + " --stride 4") == 0);

  const std::string csv = read_file(wd.p("abl/ablation.csv"));
  // Four encoder rows then three pooling rows, full model carrying no delta.
  CHECK(csv.find("no_traffic,vap,0,0,1") != std::string::npos);
  CHECK(csv.find("no_physical,vap,0,1,0") != std::string::npos);
  CHECK(csv.find("no_motion,vap,1,0,0") != std::string::npos);
  CHECK(csv.find("full,vap,0,0,0") != std::string::npos);
  CHECK(csv.find("pooling_social,social") != std::string::npos);
  CHECK(csv.find("pooling_hidden,hidden") != std::string::npos);
  // Percent deltas formatted with direction arrows.
  const bool has_arrow = csv.find("↑") != std::string::npos || csv.find("↓") != std::string::npos;
  CHECK(has_arrow);

  json report = read_json(wd.p("abl/ablation.json"));
  CHECK(report.size() == 6);
}
