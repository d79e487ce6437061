#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "kigan/checkpoint.hpp"
#include "kigan/evaluation.hpp"
#include "kigan/synth.hpp"
#include "kigan/training.hpp"

using namespace kigan;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.d_h = 8;
  cfg.d_a = 4;
  cfg.d_t = 4;
  cfg.d_size = 4;
  cfg.d_embed = 8;
  cfg.d_e = 8;
  cfg.d_p = 8;
  cfg.d_z = 4;
  cfg.attn_hidden = 8;
  cfg.pool_hidden = 12;
  cfg.disc_hidden = 8;
  cfg.obs_len = 4;
  cfg.pred_len = 3;
  return cfg;
}

SceneWindow toy_window(Rng& rng, const ModelConfig& cfg, std::size_t n_agents) {
  SceneWindow w;
  w.obs_len = cfg.obs_len;
  w.pred_len = cfg.pred_len;
  for (std::size_t a = 0; a < n_agents; ++a) {
    WindowAgent ag;
    ag.agent_id = "t" + std::to_string(a);
    ag.cls = AgentClass::car;
    ag.length_m = 4.5;
    ag.width_m = 1.8;
    Vec2 pos{rng.uniform(-20, 20), rng.uniform(-20, 20)};
    Vec2 vel{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    for (int t = 0; t < cfg.obs_len; ++t) {
      ag.obs_pos.push_back(pos);
      ag.obs_vel.push_back(vel);
      ag.obs_acc.push_back({0.1, -0.1});
      pos = pos + Vec2{vel.x * 0.5, vel.y * 0.5};
    }
    for (int t = 0; t < cfg.pred_len; ++t) {
      ag.fut_pos.push_back(pos);
      pos = pos + Vec2{vel.x * 0.5, vel.y * 0.5};
    }
    ag.anchor = ag.obs_pos.back();
    w.agents.push_back(std::move(ag));
  }
  for (int t = 0; t < cfg.obs_len + cfg.pred_len; ++t)
    w.signal_codes.push_back(static_cast<int>(rng.uniform_int(1, 5)));
  return w;
}

std::vector<SceneWindow> toy_dataset(std::uint64_t seed, const ModelConfig& cfg, int n_windows) {
  Rng rng(seed);
  std::vector<SceneWindow> out;
  for (int i = 0; i < n_windows; ++i)
    out.push_back(toy_window(rng, cfg, static_cast<std::size_t>(rng.uniform_int(1, 3))));
  return out;
}

bool params_identical(const ParamSet& a, const ParamSet& b) {
  if (a.count() != b.count()) return false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    const Tensor& ta = a.tensors()[i];
    const Tensor& tb = b.tensors()[i];
    if (ta.size() != tb.size()) return false;
    for (std::size_t j = 0; j < ta.size(); ++j)
      if (ta.at(j) != tb.at(j)) return false;
  }
  return true;
}

std::string strip_seconds(const std::string& csv) {
  std::string out;
  std::size_t start = 0;
  while (start < csv.size()) {
    std::size_t end = csv.find('\n', start);
    if (end == std::string::npos) end = csv.size();
    std::string line = csv.substr(start, end - start);
    const std::size_t comma = line.rfind(',');
    if (comma != std::string::npos) line.resize(comma);
    out += line;
    out += '\n';
    start = end + 1;
  }
  return out;
}

}  // namespace

TEST_CASE("ade and fde hand fixtures") {
  std::vector<std::vector<Vec2>> truth = {{{0, 0}, {1, 0}}};
  std::vector<std::vector<Vec2>> both_off = {{{3, 4}, {4, 4}}};  // (3,4) offset at both steps
  CHECK(ade(truth, both_off) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(fde(truth, both_off) == doctest::Approx(5.0).epsilon(1e-15));

  std::vector<std::vector<Vec2>> first_off = {{{3, 4}, {1, 0}}};  // (3,4) then exact
  CHECK(ade(truth, first_off) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(fde(truth, first_off) == 0.0);

  std::vector<std::vector<Vec2>> last_off = {{{0, 0}, {4, 4}}};  // exact then (3,4)
  CHECK(fde(truth, last_off) == doctest::Approx(5.0).epsilon(1e-15));

  CHECK(ade(truth, truth) == 0.0);

  // Single-step horizon: ade == fde.
  std::vector<std::vector<Vec2>> t1 = {{{0, 0}}}, p1 = {{{1, 1}}};
  CHECK(ade(t1, p1) == fde(t1, p1));

  // Symmetry and rigid-translation invariance.
  Rng rng(1);
  std::vector<std::vector<Vec2>> a(3), b(3);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 5; ++t) {
      a[static_cast<std::size_t>(i)].push_back({rng.normal(), rng.normal()});
      b[static_cast<std::size_t>(i)].push_back({rng.normal(), rng.normal()});
    }
  CHECK(ade(a, b) == doctest::Approx(ade(b, a)).epsilon(1e-15));
  auto shift = [](std::vector<std::vector<Vec2>> v) {
    for (auto& traj : v)
      for (Vec2& p : traj) p = p + Vec2{17.5, -3.25};
    return v;
  };
  CHECK(ade(shift(a), shift(b)) == doctest::Approx(ade(a, b)).epsilon(1e-12));
  CHECK(fde(shift(a), shift(b)) == doctest::Approx(fde(a, b)).epsilon(1e-12));

  std::vector<std::vector<Vec2>> wrong = {{{0, 0}}};
  CHECK_THROWS_AS(ade(truth, wrong), error);
}

TEST_CASE("evaluate matches a brute-force best-of-k recomputation") {
  ModelConfig cfg = small_cfg();
  GeneratorModel gen(cfg, 301);
  auto windows = toy_dataset(5, cfg, 4);
  const int k = 5;
  const std::uint64_t seed = 99;

  MetricReport report = evaluate(gen, windows, k, seed);

  // Independent recomputation: materialize every sample, select by
  // full-trajectory L2, reduce with separate arithmetic.
  double ade_sum = 0.0, fde_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const SceneWindow& w = windows[wi];
    for (std::size_t a = 0; a < w.agents.size(); ++a) {
      if (!w.agents[a].prediction_target) continue;
      double best_l2 = 1e300;
      std::vector<Vec2> best;
      for (int s = 0; s < k; ++s) {
        std::vector<Tensor> noise;
        for (std::size_t i = 0; i < w.agents.size(); ++i)
          noise.push_back(sample_noise(seed, {0xE, wi, i, static_cast<std::uint64_t>(s)}, cfg.d_z));
        Tape tape;
        tape.set_recording(false);
        auto scene = generate(tape, w, gen, noise);
        auto pos = scene.positions();
        double sq = 0.0;
        for (int t = 0; t < cfg.pred_len; ++t) {
          const Vec2 d = pos[a][static_cast<std::size_t>(t)] -
                         w.agents[a].fut_pos[static_cast<std::size_t>(t)];
          sq += d.x * d.x + d.y * d.y;
        }
        if (std::sqrt(sq) < best_l2) {
          best_l2 = std::sqrt(sq);
          best = pos[a];
        }
      }
      double err = 0.0;
      for (int t = 0; t < cfg.pred_len; ++t)
        err += hypot2(best[static_cast<std::size_t>(t)] - w.agents[a].fut_pos[static_cast<std::size_t>(t)]);
      ade_sum += err / cfg.pred_len;
      fde_sum += hypot2(best.back() - w.agents[a].fut_pos.back());
      count += 1;
    }
  }
  CHECK(std::abs(report.ade - ade_sum / static_cast<double>(count)) < 1e-12);
  CHECK(std::abs(report.fde - fde_sum / static_cast<double>(count)) < 1e-12);
  CHECK(report.trajectories == count);

  // k=1 equals plain single-sample metrics.
  MetricReport single = evaluate(gen, windows, 1, seed);
  CHECK(single.k == 1);
  CHECK(single.ade >= 0.0);

  // Determinism.
  MetricReport again = evaluate(gen, windows, k, seed);
  CHECK(again.ade == report.ade);
  CHECK(again.fde == report.fde);

  // Threaded evaluation aggregates in deterministic order.
  MetricReport threaded = evaluate(gen, windows, k, seed, -1, 2);
  CHECK(threaded.ade == report.ade);
  CHECK(threaded.fde == report.fde);
}

TEST_CASE("nested sample sets: larger k never increases reported ADE") {
  ModelConfig cfg = small_cfg();
  GeneratorModel gen(cfg, 302);
  auto windows = toy_dataset(6, cfg, 3);
  const std::uint64_t seed = 44;
  double prev = 1e300;
  for (int k = 1; k <= 8; ++k) {
    MetricReport r = evaluate(gen, windows, k, seed);
    CHECK(r.ade <= prev + 1e-12);
    prev = r.ade;
  }
}

TEST_CASE("train loop accounting: one window, one epoch, k=1") {
  ModelConfig cfg = small_cfg();
  TrainConfig tc;
  tc.model = cfg;
  tc.batch_size = 4;
  tc.epochs = 1;
  tc.k_variety = 1;
  tc.eval_k = 1;
  tc.seed = 7;
  auto windows = toy_dataset(9, cfg, 1);

  detail::StepCounters counters;
  TrainResult result = train(windows, tc, nullptr, nullptr, {}, &counters);
  CHECK(counters.d_steps == 1);
  CHECK(counters.g_steps == 1);
  CHECK(result.log.records.size() == 1);
  CHECK(result.checkpoint.epochs_completed == 1);
  CHECK(result.checkpoint.adam_g.step == 1);
  CHECK(result.checkpoint.adam_d.step == 1);

  std::vector<SceneWindow> empty;
  CHECK_THROWS_AS(train(empty, tc), error);
}

TEST_CASE("training is deterministic under (dataset, config, seed)") {
  ModelConfig cfg = small_cfg();
  TrainConfig tc;
  tc.model = cfg;
  tc.batch_size = 2;
  tc.epochs = 2;
  tc.k_variety = 2;
  tc.eval_k = 2;
  tc.seed = 21;
  auto windows = toy_dataset(13, cfg, 3);

  TrainResult a = train(windows, tc);
  TrainResult b = train(windows, tc);
  CHECK(params_identical(a.checkpoint.gen.params, b.checkpoint.gen.params));
  CHECK(params_identical(a.checkpoint.disc.params, b.checkpoint.disc.params));
  CHECK(strip_seconds(a.log.to_csv()) == strip_seconds(b.log.to_csv()));
  CHECK(checkpoint_serialize(a.checkpoint) == checkpoint_serialize(b.checkpoint));

  TrainConfig other = tc;
  other.seed = 22;
  TrainResult c = train(windows, other);
  CHECK(!params_identical(a.checkpoint.gen.params, c.checkpoint.gen.params));
}

TEST_CASE("no gradient cross-contamination between the two steps") {
  ModelConfig cfg = small_cfg();
  GeneratorModel gen(cfg, 303);
  DiscriminatorModel disc(cfg, 304);
  Rng rng(15);
  SceneWindow w = toy_window(rng, cfg, 2);

  // Discriminator-style step: forward-only generation, loss on tape_d.
  gen.params.zero_grads();
  disc.params.zero_grads();
  {
    Tape fwd;
    fwd.set_recording(false);
    std::vector<Tensor> noise;
    for (std::size_t a = 0; a < w.agents.size(); ++a)
      noise.push_back(sample_noise(1, {a}, cfg.d_z));
    auto fake = generate(fwd, w, gen, noise);

    Tape tape_d;
    std::vector<Tensor> real_logits, fake_logits;
    for (std::size_t a = 0; a < w.agents.size(); ++a) {
      real_logits.push_back(discriminate(tape_d, real_displacement_sequence(w.agents[a]), disc));
      std::vector<Tensor> seq;
      for (Vec2 d : displacement_sequence(w.agents[a].obs_pos)) seq.push_back(vec2_tensor(d));
      Vec2 prev = w.agents[a].obs_pos.back();
      for (const Tensor& p : fake.futures[a]) {
        seq.push_back(vec2_tensor(Vec2{p.at(0), p.at(1)} - prev));
        prev = {p.at(0), p.at(1)};
      }
      fake_logits.push_back(discriminate(tape_d, seq, disc));
    }
    tape_d.backward(d_loss(tape_d, real_logits, fake_logits));
  }
  bool disc_nonzero = false;
  for (const Tensor& t : disc.params.tensors())
    for (double g : t.grad()) disc_nonzero |= g != 0.0;
  CHECK(disc_nonzero);
  for (const Tensor& t : gen.params.tensors())
    for (double g : t.grad()) CHECK(g == 0.0);

  // Generator-style step with the discriminator frozen.
  gen.params.zero_grads();
  disc.params.zero_grads();
  disc.params.set_requires_grad(false);
  {
    Tape tape_g;
    std::vector<Tensor> noise;
    for (std::size_t a = 0; a < w.agents.size(); ++a)
      noise.push_back(sample_noise(2, {a}, cfg.d_z));
    auto scene = generate(tape_g, w, gen, noise);
    std::vector<Tensor> logits;
    for (std::size_t a = 0; a < w.agents.size(); ++a)
      logits.push_back(
          discriminate(tape_g, fake_displacement_sequence(tape_g, w.agents[a], scene.futures[a]), disc));
    tape_g.backward(g_loss(tape_g, logits));
  }
  disc.params.set_requires_grad(true);
  bool gen_nonzero = false;
  for (const Tensor& t : gen.params.tensors())
    for (double g : t.grad()) gen_nonzero |= g != 0.0;
  CHECK(gen_nonzero);
  for (const Tensor& t : disc.params.tensors())
    for (double g : t.grad()) CHECK(g == 0.0);
}

TEST_CASE("checkpoint round-trip is bit exact; guards reject bad files") {
  ModelConfig cfg = small_cfg();
  TrainConfig tc;
  tc.model = cfg;
  tc.batch_size = 2;
  tc.epochs = 1;
  tc.k_variety = 2;
  tc.eval_k = 1;
  tc.seed = 5;
  auto windows = toy_dataset(17, cfg, 2);
  TrainResult result = train(windows, tc);

  const std::string path = (std::filesystem::temp_directory_path() / "kigan_ck_test.bin").string();
  checkpoint_save(result.checkpoint, path);
  Checkpoint loaded = checkpoint_load(path);
  CHECK(params_identical(result.checkpoint.gen.params, loaded.gen.params));
  CHECK(params_identical(result.checkpoint.disc.params, loaded.disc.params));
  CHECK(loaded.epochs_completed == 1);
  CHECK(loaded.adam_g.step == result.checkpoint.adam_g.step);
  for (std::size_t p = 0; p < loaded.adam_g.m.size(); ++p)
    for (std::size_t i = 0; i < loaded.adam_g.m[p].size(); ++i)
      CHECK(loaded.adam_g.m[p][i] == result.checkpoint.adam_g.m[p][i]);

  // Serialized twice: identical bytes.
  CHECK(checkpoint_serialize(result.checkpoint) == checkpoint_serialize(loaded));

  // Mismatched expected config.
  ModelConfig bigger = cfg;
  bigger.d_h = 16;
  try {
    checkpoint_load_expect(path, bigger);
    CHECK(false);
  } catch (const error& e) {
    CHECK(e.kind() == error_kind::config);
  }
  CHECK(checkpoint_load_expect(path, cfg).epochs_completed == 1);

  // Corrupt one header byte: format error, no partial model.
  std::string bytes = checkpoint_serialize(result.checkpoint);
  bytes[1] ^= 0x40;
  try {
    checkpoint_deserialize(bytes);
    CHECK(false);
  } catch (const error& e) {
    CHECK(e.kind() == error_kind::format);
  }

  // Truncation: format error.
  std::string cut = checkpoint_serialize(result.checkpoint);
  cut.resize(cut.size() / 2);
  CHECK_THROWS_AS(checkpoint_deserialize(cut), error);

  std::remove(path.c_str());
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  ModelConfig cfg = small_cfg();
  TrainConfig tc;
  tc.model = cfg;
  tc.batch_size = 2;
  tc.epochs = 4;
  tc.k_variety = 2;
  tc.eval_k = 2;
  tc.seed = 31;
  auto windows = toy_dataset(19, cfg, 3);

  TrainResult full = train(windows, tc);

  TrainConfig first_half = tc;
  first_half.epochs = 2;
  TrainResult part1 = train(windows, first_half);
  CHECK(part1.checkpoint.epochs_completed == 2);

  TrainResult part2 = train(windows, tc, nullptr, &part1.checkpoint);
  CHECK(part2.checkpoint.epochs_completed == 4);
  CHECK(part2.log.records.front().epoch == 2);  // numbering continues

  CHECK(params_identical(full.checkpoint.gen.params, part2.checkpoint.gen.params));
  CHECK(params_identical(full.checkpoint.disc.params, part2.checkpoint.disc.params));

  // Merged logs match the uninterrupted run (wall clock excluded).
  TrainLog merged;
  for (const auto& r : part1.log.records) merged.records.push_back(r);
  for (const auto& r : part2.log.records) merged.records.push_back(r);
  CHECK(strip_seconds(merged.to_csv()) == strip_seconds(full.log.to_csv()));

  // Resuming under a different architecture is rejected.
  TrainConfig other = tc;
  other.model.d_h = 16;
  CHECK_THROWS_AS(train(windows, other, nullptr, &part1.checkpoint), error);
}

TEST_CASE("encoder masks keep widths fixed and change behavior") {
  ModelConfig cfg = small_cfg();
  ModelConfig masked = cfg;
  masked.mask_motion = true;
  masked.mask_physical = true;
  masked.mask_traffic = true;
  CHECK(cfg.recombined_width() == masked.recombined_width());

  GeneratorModel a(cfg, 305), b(masked, 305);
  Rng rng(16);
  SceneWindow w = toy_window(rng, cfg, 2);
  std::vector<Tensor> noise;
  for (std::size_t i = 0; i < 2; ++i) noise.push_back(sample_noise(3, {i}, cfg.d_z));

  Tape t1, t2;
  auto full = generate(t1, w, a, noise);
  auto cut = generate(t2, w, b, noise);
  double diff = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < full.futures[i].size(); ++t)
      for (std::size_t c = 0; c < 2; ++c)
        diff = std::max(diff, std::abs(full.futures[i][t].at(c) - cut.futures[i][t].at(c)));
  CHECK(diff > 1e-12);

  // Masked models train end to end.
  TrainConfig tc;
  tc.model = masked;
  tc.batch_size = 2;
  tc.epochs = 1;
  tc.k_variety = 1;
  tc.eval_k = 1;
  auto windows = toy_dataset(23, cfg, 2);
  TrainResult result = train(windows, tc);
  CHECK(result.log.records.size() == 1);
}

TEST_CASE("evaluate with a longer horizon truncates truth correctly") {
  ModelConfig cfg = small_cfg();
  cfg.pred_len = 4;
  GeneratorModel gen(cfg, 306);
  Rng rng(17);
  std::vector<SceneWindow> windows = {toy_window(rng, cfg, 2)};
  MetricReport full = evaluate(gen, windows, 2, 8, 4);
  MetricReport shorter = evaluate(gen, windows, 2, 8, 2);
  CHECK(shorter.pred_len == 2);
  CHECK(full.pred_len == 4);
  CHECK_THROWS_AS(evaluate(gen, windows, 2, 8, 9), error);
}
