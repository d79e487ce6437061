#pragma once

#include <span>
#include <vector>

#include "kigan/config.hpp"
#include "kigan/data.hpp"
#include "kigan/nn.hpp"
#include "kigan/tensor.hpp"

namespace kigan {

inline Tensor vec2_tensor(Vec2 v) { return Tensor::from({2}, {v.x, v.y}); }

// Per-step displacements with a leading zero, so the sequence has the same
// length as the observation.
inline std::vector<Vec2> displacement_sequence(std::span<const Vec2> positions) {
  std::vector<Vec2> out;
  out.reserve(positions.size());
  out.push_back({0.0, 0.0});
  for (std::size_t i = 1; i < positions.size(); ++i) out.push_back(positions[i] - positions[i - 1]);
  return out;
}

// The four knowledge encoders. Trajectory and motion are embedding + LSTM
// passes; physical attributes pair a class embedding with a size projection;
// traffic state is an embedding-table lookup.
struct EncoderParams {
  Linear traj_embed;     // 2 -> d_embed
  LstmParams traj_cell;  // d_embed -> d_h
  Linear motion_embed;   // 4 -> d_embed
  LstmParams motion_cell;
  Tensor class_table;    // [7 x d_a]
  Linear size_proj;      // 2 -> d_size
  Tensor traffic_table;  // [5 x d_t]

  EncoderParams() = default;
  EncoderParams(ParamSet& ps, const ModelConfig& cfg, Rng& rng) {
    traj_embed = Linear(ps, "enc.traj.embed", 2, cfg.d_embed, rng);
    traj_cell = LstmParams(ps, "enc.traj.lstm", cfg.d_embed, cfg.d_h, rng);
    motion_embed = Linear(ps, "enc.motion.embed", 4, cfg.d_embed, rng);
    motion_cell = LstmParams(ps, "enc.motion.lstm", cfg.d_embed, cfg.d_h, rng);
    class_table = ps.add("enc.phy.class_table", init_uniform(rng, {kClassCount, cfg.d_a}, kClassCount));
    size_proj = Linear(ps, "enc.phy.size_proj", 2, cfg.d_size, rng);
    traffic_table = ps.add("enc.traffic.table", init_uniform(rng, {5, cfg.d_t}, 5));
  }
};

inline Tensor encode_trajectory(Tape& tape, std::span<const Vec2> displacements,
                                const EncoderParams& p, const ModelConfig& cfg) {
  if (displacements.size() != static_cast<std::size_t>(cfg.obs_len))
    throw_dimension("encode_trajectory: expected " + std::to_string(cfg.obs_len) + " steps, got " +
                    std::to_string(displacements.size()));
  std::vector<Tensor> seq;
  seq.reserve(displacements.size());
  for (Vec2 d : displacements) seq.push_back(vec2_tensor(d));
  return run_lstm_encoder(
      tape, seq, p.traj_cell,
      [&p](Tape& tp, const Tensor& x) { return p.traj_embed.apply_relu(tp, x); },
      "trajectory encoder");
}

inline Tensor encode_motion(Tape& tape, std::span<const Vec2> velocities,
                            std::span<const Vec2> accelerations, const EncoderParams& p,
                            const ModelConfig& cfg) {
  if (velocities.size() != static_cast<std::size_t>(cfg.obs_len) ||
      accelerations.size() != velocities.size())
    throw_dimension("encode_motion: expected " + std::to_string(cfg.obs_len) +
                    " velocity/acceleration steps");
  std::vector<Tensor> seq;
  seq.reserve(velocities.size());
  for (std::size_t i = 0; i < velocities.size(); ++i)
    seq.push_back(Tensor::from(
        {4}, {velocities[i].x, velocities[i].y, accelerations[i].x, accelerations[i].y}));
  return run_lstm_encoder(
      tape, seq, p.motion_cell,
      [&p](Tape& tp, const Tensor& x) { return p.motion_embed.apply_relu(tp, x); },
      "motion encoder");
}

inline Tensor encode_physical(Tape& tape, AgentClass cls, double length_m, double width_m,
                              const EncoderParams& p) {
  if (!(length_m > 0.0) || !(width_m > 0.0))
    throw_data("encode_physical: non-positive vehicle dimensions");
  Tensor cls_emb = embedding_lookup(tape, p.class_table, class_index(cls));
  Tensor size_emb = p.size_proj.apply(tape, Tensor::from({2}, {length_m, width_m}));
  return concat(tape, {cls_emb, size_emb});
}

// Signal state at the final observed frame by default; the mean-embedding
// variant averages over every observed frame.
inline Tensor encode_traffic(Tape& tape, std::span<const int> observed_codes,
                             const EncoderParams& p, const ModelConfig& cfg) {
  for (int code : observed_codes)
    if (code < 1 || code > 5)
      throw_data("encode_traffic: signal code " + std::to_string(code) + " outside 1..5");
  if (observed_codes.empty()) throw_data("encode_traffic: no observed signal codes");
  if (!cfg.traffic_mean_mode)
    return embedding_lookup(tape, p.traffic_table,
                            static_cast<std::size_t>(observed_codes.back() - 1));
  Tensor acc = embedding_lookup(tape, p.traffic_table, static_cast<std::size_t>(observed_codes[0] - 1));
  for (std::size_t i = 1; i < observed_codes.size(); ++i)
    acc = add(tape, acc,
              embedding_lookup(tape, p.traffic_table, static_cast<std::size_t>(observed_codes[i] - 1)));
  return mul(tape, acc, 1.0 / static_cast<double>(observed_codes.size()));
}

inline Tensor combine(Tape& tape, Tensor e_traj, Tensor e_motion, Tensor e_phy,
                      const ModelConfig& cfg) {
  if (e_traj.size() != cfg.d_h || e_motion.size() != cfg.d_h ||
      e_phy.size() != cfg.d_a + cfg.d_size)
    throw_dimension("combine: encoder widths do not match the configuration");
  return concat(tape, {e_traj, e_motion, e_phy});
}

}  // namespace kigan
