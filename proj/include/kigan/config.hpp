#pragma once

#include <cstddef>
#include <string>

#include "kigan/error.hpp"

namespace kigan {

enum class PoolingKind { vap, social, hidden };

inline const char* pooling_name(PoolingKind k) {
  switch (k) {
    case PoolingKind::vap: return "vap";
    case PoolingKind::social: return "social";
    case PoolingKind::hidden: return "hidden";
  }
  return "vap";
}

inline PoolingKind pooling_from_name(const std::string& s) {
  if (s == "vap") return PoolingKind::vap;
  if (s == "social") return PoolingKind::social;
  if (s == "hidden") return PoolingKind::hidden;
  throw_config("unknown pooling method '" + s + "' (expected vap, social or hidden)");
}

// Architecture hyperparameters shared by the encoders, pooling, generator
// and discriminator. The paper names no layer sizes; these defaults keep
// desk-scale gradient checks fast and are all configurable.
struct ModelConfig {
  std::size_t d_h = 32;        // recurrent hidden width
  std::size_t d_a = 8;         // vehicle-class embedding width
  std::size_t d_t = 8;         // traffic-state embedding width
  std::size_t d_size = 8;      // (length, width) projection width
  std::size_t d_embed = 16;    // input embedding before recurrent cells
  std::size_t d_e = 16;        // pooling spatial/velocity embedding width
  std::size_t d_p = 32;        // pooled context width
  std::size_t d_z = 8;         // noise width
  std::size_t attn_hidden = 32;
  std::size_t pool_hidden = 64;
  std::size_t disc_hidden = 16;
  int obs_len = 12;
  int pred_len = 12;
  PoolingKind pooling = PoolingKind::vap;

  // Variant switches (defaults are the primary formulation).
  bool scalar_attention = false;    // one score per pair, softmax over neighbors
  bool traffic_mean_mode = false;   // mean signal embedding over observed frames
  bool trajectory_absolute = false; // anchored absolute inputs instead of displacements
  bool disc_sees_signal = false;    // append one-hot signal state to the classifier

  // Zero-substitution ablation masks; widths never change.
  bool mask_motion = false;
  bool mask_physical = false;
  bool mask_traffic = false;

  std::size_t combined_width() const { return 2 * d_h + d_a + d_size; }
  std::size_t recombined_width() const { return d_p + combined_width() + d_t; }

  void validate() const {
    for (std::size_t v : {d_h, d_a, d_t, d_size, d_embed, d_e, d_p, d_z, attn_hidden, pool_hidden,
                          disc_hidden})
      if (v < 1) throw_config("model config: all layer widths must be >= 1");
    if (obs_len < 1 || pred_len < 1) throw_config("model config: obs_len and pred_len must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace kigan
