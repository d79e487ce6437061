#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "kigan/config.hpp"
#include "kigan/data.hpp"
#include "kigan/nn.hpp"
#include "kigan/tensor.hpp"

namespace kigan {

// Final-observed-frame state for every agent in the scene. Pooling sees
// absolute positions; per-agent coordinate anchoring happens elsewhere.
struct PoolingInput {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<Tensor> hidden;

  std::size_t count() const { return positions.size(); }
  void validate() const {
    if (positions.empty()) throw_dimension("pooling: scene has no agents");
    if (velocities.size() != positions.size() || hidden.size() != positions.size())
      throw_dimension("pooling: agent lists have mismatched lengths");
  }
};

// RP[i][j] = p_i - p_j for all ordered pairs.
inline std::vector<std::vector<Vec2>> relative_positions(std::span<const Vec2> positions) {
  std::vector<std::vector<Vec2>> rp(positions.size(), std::vector<Vec2>(positions.size()));
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (std::size_t j = 0; j < positions.size(); ++j) rp[i][j] = positions[i] - positions[j];
  return rp;
}

struct VapParams {
  Linear spatial_embed;  // 2 -> d_e
  Linear vel_embed;      // 2 -> d_e
  Linear attn_in;        // 2*d_e -> attn_hidden
  Linear attn_out;       // attn_hidden -> hidden width (or 1 in scalar mode)
  Linear pool_in;        // d_e + hidden width -> pool_hidden
  Linear pool_out;       // pool_hidden -> d_p

  VapParams() = default;
  VapParams(ParamSet& ps, const ModelConfig& cfg, Rng& rng) {
    const std::size_t h = cfg.combined_width();
    spatial_embed = Linear(ps, "pool.vap.spatial", 2, cfg.d_e, rng);
    vel_embed = Linear(ps, "pool.vap.velocity", 2, cfg.d_e, rng);
    attn_in = Linear(ps, "pool.vap.attn_in", 2 * cfg.d_e, cfg.attn_hidden, rng);
    attn_out = Linear(ps, "pool.vap.attn_out", cfg.attn_hidden,
                      cfg.scalar_attention ? 1 : h, rng);
    pool_in = Linear(ps, "pool.vap.mlp_in", cfg.d_e + h, cfg.pool_hidden, rng);
    pool_out = Linear(ps, "pool.vap.mlp_out", cfg.pool_hidden, cfg.d_p, rng);
  }
};

struct SocialParams {
  Linear grid_embed;  // 64 * hidden width -> d_p

  SocialParams() = default;
  SocialParams(ParamSet& ps, const ModelConfig& cfg, Rng& rng) {
    grid_embed = Linear(ps, "pool.social.grid", 64 * cfg.combined_width(), cfg.d_p, rng);
  }
};

struct HiddenParams {
  Linear spatial_embed;  // 2 -> d_e
  Linear pool_in;        // d_e + hidden width -> pool_hidden
  Linear pool_out;       // pool_hidden -> d_p

  HiddenParams() = default;
  HiddenParams(ParamSet& ps, const ModelConfig& cfg, Rng& rng) {
    spatial_embed = Linear(ps, "pool.hidden.spatial", 2, cfg.d_e, rng);
    pool_in = Linear(ps, "pool.hidden.mlp_in", cfg.d_e + cfg.combined_width(), cfg.pool_hidden, rng);
    pool_out = Linear(ps, "pool.hidden.mlp_out", cfg.pool_hidden, cfg.d_p, rng);
  }
};

struct PoolingParams {
  PoolingKind kind = PoolingKind::vap;
  VapParams vap;
  SocialParams social;
  HiddenParams hidden;

  PoolingParams() = default;
  PoolingParams(ParamSet& ps, const ModelConfig& cfg, Rng& rng) : kind(cfg.pooling) {
    switch (kind) {
      case PoolingKind::vap: vap = VapParams(ps, cfg, rng); break;
      case PoolingKind::social: social = SocialParams(ps, cfg, rng); break;
      case PoolingKind::hidden: hidden = HiddenParams(ps, cfg, rng); break;
    }
  }
};

inline Tensor embed_pair(Tape& tape, Vec2 rp, const VapParams& p) {
  return p.spatial_embed.apply_relu(tape, vec2_tensor(rp));
}

inline Tensor embed_velocity(Tape& tape, Vec2 v, const VapParams& p) {
  return p.vel_embed.apply_relu(tape, vec2_tensor(v));
}

// Attention weights for one agent over its neighbors: scores per pair from
// an MLP over [E_ij ; V_i], normalized with a softmax across the neighbor
// axis independently per feature channel. Rows of the result align with
// `pair_embeds`; every column sums to one.
inline Tensor attention_weights(Tape& tape, std::span<const Tensor> pair_embeds, Tensor vel_embed,
                                const VapParams& p) {
  if (pair_embeds.empty()) throw_dimension("attention_weights: agent has no neighbors");
  std::vector<Tensor> score_rows;
  score_rows.reserve(pair_embeds.size());
  for (const Tensor& e_ij : pair_embeds) {
    Tensor joint = concat(tape, {e_ij, vel_embed});
    score_rows.push_back(p.attn_out.apply(tape, relu(tape, p.attn_in.apply(tape, joint))));
  }
  return softmax(tape, stack_rows(tape, score_rows), 0);
}

namespace detail {

inline std::vector<Tensor> zero_context(std::size_t n, std::size_t d_p) {
  return std::vector<Tensor>(n, Tensor::zeros({d_p}));
}

}  // namespace detail

// VAP-Net: attention-modulated hidden states, concatenated with the pair
// embedding, through the pooling MLP and a max over neighbors. Single-agent
// scenes pool to the zero vector.
inline std::vector<Tensor> pool_scene(Tape& tape, const PoolingInput& input, const VapParams& p,
                                      const ModelConfig& cfg) {
  input.validate();
  const std::size_t n = input.count();
  if (n == 1) return detail::zero_context(1, cfg.d_p);
  auto rp = relative_positions(input.positions);

  std::vector<Tensor> context;
  context.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Tensor> pair_embeds;
    pair_embeds.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) pair_embeds.push_back(embed_pair(tape, rp[i][j], p));

    Tensor v_i = embed_velocity(tape, input.velocities[i], p);
    Tensor weights = attention_weights(tape, pair_embeds, v_i, p);

    std::vector<Tensor> pooled_rows;
    pooled_rows.reserve(pair_embeds.size());
    for (std::size_t m = 0; m < pair_embeds.size(); ++m) {
      Tensor w_row = row(tape, weights, m);
      Tensor modulated = cfg.scalar_attention ? scale(tape, input.hidden[i], w_row)
                                              : mul(tape, input.hidden[i], w_row);
      Tensor joint = concat(tape, {pair_embeds[m], modulated});
      Tensor h1 = relu(tape, p.pool_in.apply(tape, joint));
      pooled_rows.push_back(relu(tape, p.pool_out.apply(tape, h1)));
    }
    context.push_back(max_pool_rows(tape, stack_rows(tape, pooled_rows)));
  }
  return context;
}

// Grid occupancy baseline: neighbor hidden states summed into an 8x8 grid
// of 2x2 m cells centered on the agent, flattened and projected.
inline std::vector<Tensor> pool_social(Tape& tape, const PoolingInput& input, const SocialParams& p,
                                       const ModelConfig& cfg) {
  input.validate();
  const std::size_t n = input.count();
  if (n == 1) return detail::zero_context(1, cfg.d_p);
  const std::size_t h = cfg.combined_width();
  constexpr double kCell = 2.0;
  constexpr int kCells = 8;
  constexpr double kHalf = kCell * kCells / 2.0;  // 8 m

  std::vector<Tensor> context;
  context.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Tensor> cells(64);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec2 rel = input.positions[j] - input.positions[i];
      const double gx = std::floor((rel.x + kHalf) / kCell);
      const double gy = std::floor((rel.y + kHalf) / kCell);
      if (gx < 0 || gx >= kCells || gy < 0 || gy >= kCells) continue;  // outside the grid
      const std::size_t cell = static_cast<std::size_t>(gy) * kCells + static_cast<std::size_t>(gx);
      cells[cell] = cells[cell].defined() ? add(tape, cells[cell], input.hidden[j]) : input.hidden[j];
    }
    std::vector<Tensor> segments;
    segments.reserve(64);
    for (Tensor& c : cells) segments.push_back(c.defined() ? c : Tensor::zeros({h}));
    Tensor grid = concat(tape, segments);
    context.push_back(relu(tape, p.grid_embed.apply(tape, grid)));
  }
  return context;
}

// Pooling over [pair embedding ; neighbor hidden state] with a max, no
// attention and no velocity path.
inline std::vector<Tensor> pool_hidden(Tape& tape, const PoolingInput& input, const HiddenParams& p,
                                       const ModelConfig& cfg) {
  input.validate();
  const std::size_t n = input.count();
  if (n == 1) return detail::zero_context(1, cfg.d_p);
  auto rp = relative_positions(input.positions);

  std::vector<Tensor> context;
  context.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Tensor> pooled_rows;
    pooled_rows.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Tensor e_ij = p.spatial_embed.apply_relu(tape, vec2_tensor(rp[i][j]));
      Tensor joint = concat(tape, {e_ij, input.hidden[j]});
      Tensor h1 = relu(tape, p.pool_in.apply(tape, joint));
      pooled_rows.push_back(relu(tape, p.pool_out.apply(tape, h1)));
    }
    context.push_back(max_pool_rows(tape, stack_rows(tape, pooled_rows)));
  }
  return context;
}

inline std::vector<Tensor> pool(Tape& tape, const PoolingInput& input, const PoolingParams& p,
                                const ModelConfig& cfg) {
  switch (p.kind) {
    case PoolingKind::vap: return pool_scene(tape, input, p.vap, cfg);
    case PoolingKind::social: return pool_social(tape, input, p.social, cfg);
    case PoolingKind::hidden: return pool_hidden(tape, input, p.hidden, cfg);
  }
  throw_config("pool: unknown pooling kind");
}

}  // namespace kigan
