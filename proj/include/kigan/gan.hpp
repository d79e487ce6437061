#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kigan/config.hpp"
#include "kigan/data.hpp"
#include "kigan/encoders.hpp"
#include "kigan/nn.hpp"
#include "kigan/pooling.hpp"
#include "kigan/rng.hpp"
#include "kigan/tensor.hpp"

namespace kigan {

// d_z-wide standard-normal draw from a stream keyed by (epoch, batch,
// agent, ...); regenerating with the same keys reproduces the sample.
inline Tensor sample_noise(std::uint64_t root_seed, std::initializer_list<std::uint64_t> keys,
                           std::size_t d_z) {
  Rng rng(mix_seed(root_seed, keys));
  Tensor z = Tensor::zeros({d_z});
  for (double& v : z.values()) v = rng.normal();
  return z;
}

struct GeneratorModel {
  ModelConfig cfg;
  ParamSet params;
  EncoderParams enc;
  PoolingParams pooling;
  Linear dec_init;       // [recombined ; z] -> d_h
  Linear dec_embed;      // 2 -> d_embed
  LstmParams dec_cell;   // d_embed -> d_h
  Linear out_proj;       // d_h -> 2

  GeneratorModel() = default;
  GeneratorModel(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(mix_seed(seed, {0x47}));
    enc = EncoderParams(params, cfg, rng);
    pooling = PoolingParams(params, cfg, rng);
    const std::size_t init_in = cfg.recombined_width() + cfg.d_z;
    dec_init = Linear(params, "dec.init", init_in, cfg.d_h, rng);
    dec_embed = Linear(params, "dec.embed", 2, cfg.d_embed, rng);
    dec_cell = LstmParams(params, "dec.lstm", cfg.d_embed, cfg.d_h, rng);
    out_proj = Linear(params, "dec.out", cfg.d_h, 2, rng);
  }
};

struct DiscriminatorModel {
  ModelConfig cfg;
  ParamSet params;
  Linear embed;        // 2 -> d_embed
  LstmParams cell;     // d_embed -> d_h
  Linear mlp_in;       // d_h (+5 with signal input) -> disc_hidden
  Linear mlp_out;      // disc_hidden -> 1

  DiscriminatorModel() = default;
  DiscriminatorModel(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(mix_seed(seed, {0x44}));
    embed = Linear(params, "disc.embed", 2, cfg.d_embed, rng);
    cell = LstmParams(params, "disc.lstm", cfg.d_embed, cfg.d_h, rng);
    const std::size_t mlp_width = cfg.d_h + (cfg.disc_sees_signal ? 5 : 0);
    mlp_in = Linear(params, "disc.mlp_in", mlp_width, cfg.disc_hidden, rng);
    mlp_out = Linear(params, "disc.mlp_out", cfg.disc_hidden, 1, rng);
  }
};

// ---------------------------------------------------------------------------
// Generator forward pass
// ---------------------------------------------------------------------------

struct GeneratedScene {
  // Absolute predicted positions, one [2] tensor per step per agent,
  // still attached to the tape that produced them.
  std::vector<std::vector<Tensor>> futures;

  std::vector<std::vector<Vec2>> positions() const {
    std::vector<std::vector<Vec2>> out(futures.size());
    for (std::size_t i = 0; i < futures.size(); ++i)
      for (const Tensor& p : futures[i]) out[i].push_back({p.at(0), p.at(1)});
    return out;
  }
};

namespace detail {

inline std::vector<Vec2> encoder_positions(const WindowAgent& agent, bool absolute_mode) {
  if (!absolute_mode) return {};  // displacement path reads obs_pos directly
  std::vector<Vec2> anchored;
  anchored.reserve(agent.obs_pos.size());
  for (Vec2 p : agent.obs_pos) anchored.push_back(p - agent.anchor);
  return anchored;
}

}  // namespace detail

// Noise-independent part of the generator: encoders, pooling and the
// concatenation feeding the decoder (one vector per agent).
struct SceneContext {
  std::vector<Tensor> recombined;
};

inline SceneContext encode_scene(Tape& tape, const SceneWindow& window, const GeneratorModel& gen) {
  const ModelConfig& cfg = gen.cfg;
  if (window.agents.empty()) throw_data("generate: window has no agents");
  if (window.obs_len != cfg.obs_len)
    throw_dimension("generate: window obs_len " + std::to_string(window.obs_len) +
                    " does not match model obs_len " + std::to_string(cfg.obs_len));
  if (window.signal_codes.size() < static_cast<std::size_t>(window.obs_len))
    throw_dimension("generate: window signal sequence shorter than the observation");
  const std::size_t n = window.agents.size();

  // Per-agent combined features (Trajectory + Motion + Physical).
  std::vector<Tensor> combined;
  combined.reserve(n);
  for (const WindowAgent& agent : window.agents) {
    Tensor e_traj;
    if (cfg.trajectory_absolute) {
      const auto anchored = detail::encoder_positions(agent, true);
      std::vector<Vec2> seq(anchored.begin(), anchored.end());
      e_traj = encode_trajectory(tape, seq, gen.enc, cfg);
    } else {
      e_traj = encode_trajectory(tape, displacement_sequence(agent.obs_pos), gen.enc, cfg);
    }
    Tensor e_motion = cfg.mask_motion ? Tensor::zeros({cfg.d_h})
                                      : encode_motion(tape, agent.obs_vel, agent.obs_acc, gen.enc, cfg);
    Tensor e_phy = cfg.mask_physical
                       ? Tensor::zeros({cfg.d_a + cfg.d_size})
                       : encode_physical(tape, agent.cls, agent.length_m, agent.width_m, gen.enc);
    combined.push_back(combine(tape, e_traj, e_motion, e_phy, cfg));
  }

  // Scene-level traffic embedding from the observed signal codes.
  Tensor e_traffic;
  if (cfg.mask_traffic) {
    e_traffic = Tensor::zeros({cfg.d_t});
  } else {
    std::vector<int> observed(window.signal_codes.begin(),
                              window.signal_codes.begin() + window.obs_len);
    e_traffic = encode_traffic(tape, observed, gen.enc, cfg);
  }

  // Social context from final-observed-frame absolute states.
  PoolingInput pin;
  for (const WindowAgent& agent : window.agents) {
    pin.positions.push_back(agent.obs_pos.back());
    pin.velocities.push_back(agent.obs_vel.back());
  }
  pin.hidden = combined;
  std::vector<Tensor> pooled = pool(tape, pin, gen.pooling, cfg);

  SceneContext ctx;
  ctx.recombined.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    ctx.recombined.push_back(concat(tape, {pooled[i], combined[i], e_traffic}));
  return ctx;
}

// Decoder rollout: the initial hidden state is a projection of the
// recombined features and the noise; each step feeds back the emitted
// displacement, accumulated from the agent's anchor into absolute
// coordinates.
inline GeneratedScene decode_scene(Tape& tape, const SceneWindow& window, const GeneratorModel& gen,
                                   const SceneContext& ctx, std::span<const Tensor> noise_per_agent,
                                   int horizon = -1) {
  const ModelConfig& cfg = gen.cfg;
  if (horizon < 0) horizon = cfg.pred_len;
  const std::size_t n = window.agents.size();
  if (noise_per_agent.size() != n)
    throw_dimension("generate: need one noise vector per agent");
  if (ctx.recombined.size() != n)
    throw_dimension("generate: scene context does not match the window");

  GeneratedScene scene;
  scene.futures.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const WindowAgent& agent = window.agents[i];
    if (noise_per_agent[i].size() != cfg.d_z)
      throw_dimension("generate: noise width " + std::to_string(noise_per_agent[i].size()) +
                      " does not match d_z " + std::to_string(cfg.d_z));
    Tensor h = gen.dec_init.apply(tape, concat(tape, {ctx.recombined[i], noise_per_agent[i]}));
    Tensor c = Tensor::zeros({cfg.d_h});

    Vec2 last_disp{0.0, 0.0};
    if (agent.obs_pos.size() >= 2)
      last_disp = agent.obs_pos.back() - agent.obs_pos[agent.obs_pos.size() - 2];
    Tensor prev_disp = vec2_tensor(last_disp);
    Tensor pos = vec2_tensor(agent.anchor);

    for (int t = 0; t < horizon; ++t) {
      Tensor x_in = gen.dec_embed.apply_relu(tape, prev_disp);
      auto st = lstm_step(tape, x_in, h, c, gen.dec_cell);
      h = st.h;
      c = st.c;
      Tensor disp = gen.out_proj.apply(tape, h);
      pos = add(tape, pos, disp);
      scene.futures[i].push_back(pos);
      prev_disp = disp;
    }
  }
  return scene;
}

inline GeneratedScene generate(Tape& tape, const SceneWindow& window, const GeneratorModel& gen,
                               std::span<const Tensor> noise_per_agent, int horizon = -1) {
  SceneContext ctx = encode_scene(tape, window, gen);
  return decode_scene(tape, window, gen, ctx, noise_per_agent, horizon);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

// Scores a full-trajectory displacement sequence (obs + pred steps) with a
// single logit; sigmoid of the logit is the authenticity probability.
inline Tensor discriminate(Tape& tape, std::span<const Tensor> displacement_seq,
                           const DiscriminatorModel& disc, int observed_code = 0) {
  const std::size_t expect =
      static_cast<std::size_t>(disc.cfg.obs_len) + static_cast<std::size_t>(disc.cfg.pred_len);
  if (displacement_seq.size() != expect)
    throw_dimension("discriminate: expected " + std::to_string(expect) + " steps, got " +
                    std::to_string(displacement_seq.size()));
  Tensor h = run_lstm_encoder(
      tape, displacement_seq, disc.cell,
      [&disc](Tape& tp, const Tensor& x) { return disc.embed.apply_relu(tp, x); },
      "discriminator encoder");
  Tensor mlp_input = h;
  if (disc.cfg.disc_sees_signal) {
    if (observed_code < 1 || observed_code > 5)
      throw_data("discriminate: signal input enabled but code " + std::to_string(observed_code) +
                 " outside 1..5");
    Tensor onehot = Tensor::zeros({5});
    onehot.values()[static_cast<std::size_t>(observed_code - 1)] = 1.0;
    mlp_input = concat(tape, {h, onehot});
  }
  return disc.mlp_out.apply(tape, relu(tape, disc.mlp_in.apply(tape, mlp_input)));
}

// Ground-truth full-trajectory displacements for one agent (leading zero).
inline std::vector<Tensor> real_displacement_sequence(const WindowAgent& agent) {
  std::vector<Tensor> seq;
  auto obs = displacement_sequence(agent.obs_pos);
  for (Vec2 d : obs) seq.push_back(vec2_tensor(d));
  Vec2 prev = agent.obs_pos.back();
  for (Vec2 p : agent.fut_pos) {
    seq.push_back(vec2_tensor(p - prev));
    prev = p;
  }
  return seq;
}

// Same, but with the predicted future still attached to the tape.
inline std::vector<Tensor> fake_displacement_sequence(Tape& tape, const WindowAgent& agent,
                                                      std::span<const Tensor> future_positions) {
  std::vector<Tensor> seq;
  auto obs = displacement_sequence(agent.obs_pos);
  for (Vec2 d : obs) seq.push_back(vec2_tensor(d));
  Tensor prev = vec2_tensor(agent.obs_pos.back());
  for (const Tensor& p : future_positions) {
    seq.push_back(sub(tape, p, prev));
    prev = p;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor logit_vector(Tape& tape, std::span<const Tensor> logits) {
  if (logits.empty()) throw_dimension("gan loss: empty logit list");
  std::vector<Tensor> parts(logits.begin(), logits.end());
  return concat(tape, parts);
}

}  // namespace detail

// -mean log sigma(real) - mean log(1 - sigma(fake)), log arguments clamped
// at 1e-12.
inline Tensor d_loss(Tape& tape, std::span<const Tensor> real_logits,
                     std::span<const Tensor> fake_logits) {
  Tensor real = sigmoid(tape, detail::logit_vector(tape, real_logits));
  Tensor fake = sigmoid(tape, detail::logit_vector(tape, fake_logits));
  Tensor real_term = mean(tape, log(tape, clamp_min(tape, real, 1e-12)));
  Tensor fake_term = mean(tape, log(tape, clamp_min(tape, sub(tape, 1.0, fake), 1e-12)));
  return neg(tape, add(tape, real_term, fake_term));
}

// Non-saturating generator objective: -mean log sigma(fake).
inline Tensor g_loss(Tape& tape, std::span<const Tensor> fake_logits) {
  Tensor fake = sigmoid(tape, detail::logit_vector(tape, fake_logits));
  return neg(tape, mean(tape, log(tape, clamp_min(tape, fake, 1e-12))));
}

inline std::pair<Tensor, Tensor> gan_losses(Tape& tape, std::span<const Tensor> real_logits,
                                            std::span<const Tensor> fake_logits) {
  return {d_loss(tape, real_logits, fake_logits), g_loss(tape, fake_logits)};
}

struct VarietyResult {
  Tensor loss;                    // distance of the closest sample (tape-attached)
  std::vector<double> distances;  // all k distances
  std::size_t best = 0;
};

// Best-of-k L2: the minimum over samples of the Euclidean norm between the
// flattened predicted and true futures. Gradient flows only through the
// winning sample.
inline VarietyResult variety_loss_detail(Tape& tape, std::span<const Vec2> truth,
                                         std::span<const std::vector<Tensor>> sample_futures) {
  if (sample_futures.empty()) throw_dimension("variety_loss: need at least one sample");
  std::vector<double> flat_truth;
  for (Vec2 p : truth) {
    flat_truth.push_back(p.x);
    flat_truth.push_back(p.y);
  }
  Tensor truth_t = Tensor::from({flat_truth.size()}, flat_truth);

  VarietyResult result;
  Tensor best_dist;
  for (std::size_t k = 0; k < sample_futures.size(); ++k) {
    if (sample_futures[k].size() != truth.size())
      throw_dimension("variety_loss: sample " + std::to_string(k) + " has " +
                      std::to_string(sample_futures[k].size()) + " steps, truth has " +
                      std::to_string(truth.size()));
    std::vector<Tensor> parts(sample_futures[k].begin(), sample_futures[k].end());
    Tensor flat_pred = concat(tape, parts);
    Tensor dist = l2_distance(tape, flat_pred, truth_t);
    result.distances.push_back(dist.item());
    if (!best_dist.defined() || dist.item() < best_dist.item()) {
      best_dist = dist;
      result.best = k;
    }
  }
  result.loss = best_dist;
  return result;
}

inline Tensor variety_loss(Tape& tape, std::span<const Vec2> truth,
                           std::span<const std::vector<Tensor>> sample_futures) {
  return variety_loss_detail(tape, truth, sample_futures).loss;
}

}  // namespace kigan
