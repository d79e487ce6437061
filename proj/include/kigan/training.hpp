#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kigan/adam.hpp"
#include "kigan/checkpoint.hpp"
#include "kigan/evaluation.hpp"
#include "kigan/gan.hpp"
#include "kigan/rng.hpp"

namespace kigan {

struct TrainConfig {
  ModelConfig model;
  int batch_size = 64;
  int epochs = 50;
  double lr_g = 0.001;
  double lr_d = 0.0005;
  int k_variety = 12;     // best-of-k samples per generator step
  int eval_k = 12;        // best-of-k for the per-epoch validation metrics
  double variety_weight = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    model.validate();
    if (batch_size < 1) throw_config("train config: batch_size must be >= 1");
    if (epochs < 1) throw_config("train config: epochs must be >= 1");
    if (k_variety < 1 || eval_k < 1) throw_config("train config: k must be >= 1");
    if (!(lr_g > 0) || !(lr_d > 0)) throw_config("train config: learning rates must be positive");
    if (variety_weight < 0) throw_config("train config: variety weight must be >= 0");
  }
};

inline json train_config_to_json(const TrainConfig& cfg) {
  return json{{"model", model_config_to_json(cfg.model)},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"lr_g", cfg.lr_g},
              {"lr_d", cfg.lr_d},
              {"k_variety", cfg.k_variety},
              {"eval_k", cfg.eval_k},
              {"variety_weight", cfg.variety_weight},
              {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const json& j, const std::string& where = "train config") {
  TrainConfig cfg;
  detail::JsonReader r(j, where);
  cfg.model = model_config_from_json(r.sub("model"), where + ".model");
  r.get("batch_size", cfg.batch_size);
  r.get("epochs", cfg.epochs);
  r.get("lr_g", cfg.lr_g);
  r.get("lr_d", cfg.lr_d);
  r.get("k_variety", cfg.k_variety);
  r.get("eval_k", cfg.eval_k);
  r.get("variety_weight", cfg.variety_weight);
  r.get("seed", cfg.seed);
  r.finish();
  cfg.validate();
  return cfg;
}

struct EpochRecord {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;     // adversarial term only
  double variety = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double seconds = 0.0;    // wall clock, excluded from determinism checks
};

struct TrainLog {
  std::vector<EpochRecord> records;

  static std::string csv_header() { return "epoch,d_loss,g_loss,variety,ade,fde,seconds"; }

  std::string to_csv() const {
    std::string out = csv_header() + "\n";
    for (const EpochRecord& r : records) {
      out += std::to_string(r.epoch);
      for (double v : {r.d_loss, r.g_loss, r.variety, r.ade, r.fde, r.seconds}) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
    return out;
  }
};

struct TrainResult {
  Checkpoint checkpoint;  // models + optimizer states + epochs_completed
  TrainLog log;
};

namespace detail {

struct StepCounters {
  std::size_t d_steps = 0;
  std::size_t g_steps = 0;
};

}  // namespace detail

// Adversarial loop: per batch one discriminator Adam step on real vs
// generated trajectories, then one generator step on the non-saturating
// adversarial loss plus the best-of-k variety loss. Deterministic under
// (dataset, config, seed); noise streams are keyed by (epoch, batch, window,
// agent, sample) so interrupted runs resume bit-exactly.
inline TrainResult train(const std::vector<SceneWindow>& windows, const TrainConfig& cfg,
                         const std::vector<SceneWindow>* validation = nullptr,
                         const Checkpoint* resume = nullptr,
                         const std::function<void(const EpochRecord&)>& on_epoch = {},
                         detail::StepCounters* counters = nullptr) {
  cfg.validate();
  if (windows.empty()) throw_data("train: no training windows");
  std::size_t total_targets = 0;
  for (const SceneWindow& w : windows) total_targets += w.target_count();
  if (total_targets == 0) throw_data("train: no prediction targets in the dataset");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  int start_epoch = 0;
  if (resume != nullptr) {
    if (!(resume->model == cfg.model))
      throw_config("train: resume checkpoint was built with a different model configuration");
    ck = *resume;
    start_epoch = ck.epochs_completed;
    if (start_epoch >= cfg.epochs)
      throw_config("train: checkpoint already has " + std::to_string(start_epoch) + " epochs");
  } else {
    ck.model = cfg.model;
    ck.seed = cfg.seed;
    ck.gen = GeneratorModel(cfg.model, cfg.seed);
    ck.disc = DiscriminatorModel(cfg.model, cfg.seed);
    ck.adam_g.init(ck.gen.params.tensors(), cfg.lr_g);
    ck.adam_d.init(ck.disc.params.tensors(), cfg.lr_d);
  }
  GeneratorModel& gen = ck.gen;
  DiscriminatorModel& disc = ck.disc;

  const std::uint64_t eval_seed = mix_seed(cfg.seed, {0xE7});

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const std::uint64_t e = static_cast<std::uint64_t>(epoch);

    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, {0x5F, e}));
    shuffle_rng.shuffle(order);

    double epoch_d = 0.0, epoch_g = 0.0, epoch_variety = 0.0;
    std::size_t batches = 0;

    for (std::size_t batch_lo = 0; batch_lo < order.size();
         batch_lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t batch_hi =
          std::min(order.size(), batch_lo + static_cast<std::size_t>(cfg.batch_size));
      const std::uint64_t b = batch_lo / static_cast<std::size_t>(cfg.batch_size);
      try {

      // ---- Discriminator step ----
      disc.params.zero_grads();
      Tape tape_d;
      std::vector<Tensor> real_logits, fake_logits;
      for (std::size_t slot = batch_lo; slot < batch_hi; ++slot) {
        const std::size_t wi = order[slot];
        const SceneWindow& w = windows[wi];
        if (w.target_count() == 0) continue;

        // Forward-only generation; nothing recorded, nothing flows back
        // into the generator from the discriminator update.
        Tape fwd;
        fwd.set_recording(false);
        std::vector<Tensor> noise;
        for (std::size_t a = 0; a < w.agents.size(); ++a)
          noise.push_back(sample_noise(cfg.seed, {0xDD, e, b, wi, a}, cfg.model.d_z));
        auto fake_scene = generate(fwd, w, gen, noise);

        const int code = w.final_observed_code();
        for (std::size_t a = 0; a < w.agents.size(); ++a) {
          if (!w.agents[a].prediction_target) continue;
          real_logits.push_back(
              discriminate(tape_d, real_displacement_sequence(w.agents[a]), disc, code));
          std::vector<Tensor> fake_seq;
          auto obs = displacement_sequence(w.agents[a].obs_pos);
          for (Vec2 d : obs) fake_seq.push_back(vec2_tensor(d));
          Vec2 prev = w.agents[a].obs_pos.back();
          for (const Tensor& p : fake_scene.futures[a]) {
            const Vec2 cur{p.at(0), p.at(1)};
            fake_seq.push_back(vec2_tensor(cur - prev));
            prev = cur;
          }
          fake_logits.push_back(discriminate(tape_d, fake_seq, disc, code));
        }
      }
      if (real_logits.empty()) continue;
      Tensor dl = d_loss(tape_d, real_logits, fake_logits);
      tape_d.backward(dl);
      adam_step(disc.params.tensors(), ck.adam_d);
      if (counters != nullptr) counters->d_steps += 1;
      epoch_d += dl.item();

      // ---- Generator step ----
      gen.params.zero_grads();
      disc.params.zero_grads();
      disc.params.set_requires_grad(false);  // no cross-contamination
      Tape tape_g;
      std::vector<Tensor> adv_logits;
      Tensor variety_sum;
      std::size_t variety_count = 0;
      for (std::size_t slot = batch_lo; slot < batch_hi; ++slot) {
        const std::size_t wi = order[slot];
        const SceneWindow& w = windows[wi];
        if (w.target_count() == 0) continue;

        SceneContext ctx = encode_scene(tape_g, w, gen);
        std::vector<GeneratedScene> scenes;
        scenes.reserve(static_cast<std::size_t>(cfg.k_variety));
        for (int k = 0; k < cfg.k_variety; ++k) {
          std::vector<Tensor> noise;
          for (std::size_t a = 0; a < w.agents.size(); ++a)
            noise.push_back(
                sample_noise(cfg.seed, {0x66, e, b, wi, a, static_cast<std::uint64_t>(k)},
                             cfg.model.d_z));
          scenes.push_back(decode_scene(tape_g, w, gen, ctx, noise));
        }

        const int code = w.final_observed_code();
        for (std::size_t a = 0; a < w.agents.size(); ++a) {
          if (!w.agents[a].prediction_target) continue;
          std::vector<std::vector<Tensor>> samples;
          samples.reserve(scenes.size());
          for (const auto& s : scenes) samples.push_back(s.futures[a]);
          Tensor v = variety_loss(tape_g, w.agents[a].fut_pos, samples);
          variety_sum = variety_sum.defined() ? add(tape_g, variety_sum, v) : v;
          variety_count += 1;

          // Adversarial term on the last sample, sharing its forward pass.
          auto fake_seq = fake_displacement_sequence(tape_g, w.agents[a], scenes.back().futures[a]);
          adv_logits.push_back(discriminate(tape_g, fake_seq, disc, code));
        }
      }
      Tensor adv = g_loss(tape_g, adv_logits);
      Tensor variety_mean = mul(tape_g, variety_sum, 1.0 / static_cast<double>(variety_count));
      Tensor gl = add(tape_g, adv, mul(tape_g, variety_mean, cfg.variety_weight));
      tape_g.backward(gl);
      adam_step(gen.params.tensors(), ck.adam_g);
      disc.params.set_requires_grad(true);
      if (counters != nullptr) counters->g_steps += 1;
      epoch_g += adv.item();
      epoch_variety += variety_mean.item();
      batches += 1;
      } catch (const error& e) {
        disc.params.set_requires_grad(true);
        if (e.kind() == error_kind::numeric)
          throw_numeric("train: epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                        ": " + e.what());
        throw;
      }
    }

    if (batches == 0) throw_data("train: no batch contained a prediction target");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.d_loss = epoch_d / static_cast<double>(batches);
    rec.g_loss = epoch_g / static_cast<double>(batches);
    rec.variety = epoch_variety / static_cast<double>(batches);
    const std::vector<SceneWindow>& val = validation != nullptr ? *validation : windows;
    MetricReport val_report = evaluate(gen, val, cfg.eval_k, eval_seed);
    rec.ade = val_report.ade;
    rec.fde = val_report.fde;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.log.records.push_back(rec);
    ck.epochs_completed = epoch + 1;
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace kigan
