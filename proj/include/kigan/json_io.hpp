#pragma once

#include <string>

#include <json.hpp>

#include "kigan/config.hpp"
#include "kigan/error.hpp"
#include "kigan/synth.hpp"

namespace kigan {

using json = nlohmann::json;

namespace detail {

// Strict object reader: every key must be known, every value type-checked.
class JsonReader {
 public:
  JsonReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw_config(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;  // keep the default
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw_config(where_ + ": bad value for '" + std::string(key) + "'");
    }
  }

  json sub(const char* key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? json::object() : *it;
  }

  void finish() const {
    for (auto& [key, value] : j_.items()) {
      bool known = false;
      for (const auto& s : seen_) known |= s == key;
      if (!known) throw_config(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace detail

inline json model_config_to_json(const ModelConfig& cfg) {
  return json{{"d_h", cfg.d_h},
              {"d_a", cfg.d_a},
              {"d_t", cfg.d_t},
              {"d_size", cfg.d_size},
              {"d_embed", cfg.d_embed},
              {"d_e", cfg.d_e},
              {"d_p", cfg.d_p},
              {"d_z", cfg.d_z},
              {"attn_hidden", cfg.attn_hidden},
              {"pool_hidden", cfg.pool_hidden},
              {"disc_hidden", cfg.disc_hidden},
              {"obs_len", cfg.obs_len},
              {"pred_len", cfg.pred_len},
              {"pooling", pooling_name(cfg.pooling)},
              {"scalar_attention", cfg.scalar_attention},
              {"traffic_mean_mode", cfg.traffic_mean_mode},
              {"trajectory_absolute", cfg.trajectory_absolute},
              {"disc_sees_signal", cfg.disc_sees_signal},
              {"mask_motion", cfg.mask_motion},
              {"mask_physical", cfg.mask_physical},
              {"mask_traffic", cfg.mask_traffic}};
}

inline ModelConfig model_config_from_json(const json& j, const std::string& where = "model config") {
  ModelConfig cfg;
  detail::JsonReader r(j, where);
  r.get("d_h", cfg.d_h);
  r.get("d_a", cfg.d_a);
  r.get("d_t", cfg.d_t);
  r.get("d_size", cfg.d_size);
  r.get("d_embed", cfg.d_embed);
  r.get("d_e", cfg.d_e);
  r.get("d_p", cfg.d_p);
  r.get("d_z", cfg.d_z);
  r.get("attn_hidden", cfg.attn_hidden);
  r.get("pool_hidden", cfg.pool_hidden);
  r.get("disc_hidden", cfg.disc_hidden);
  r.get("obs_len", cfg.obs_len);
  r.get("pred_len", cfg.pred_len);
  std::string pooling = pooling_name(cfg.pooling);
  r.get("pooling", pooling);
  cfg.pooling = pooling_from_name(pooling);
  r.get("scalar_attention", cfg.scalar_attention);
  r.get("traffic_mean_mode", cfg.traffic_mean_mode);
  r.get("trajectory_absolute", cfg.trajectory_absolute);
  r.get("disc_sees_signal", cfg.disc_sees_signal);
  r.get("mask_motion", cfg.mask_motion);
  r.get("mask_physical", cfg.mask_physical);
  r.get("mask_traffic", cfg.mask_traffic);
  r.finish();
  cfg.validate();
  return cfg;
}

inline json scenario_config_to_json(const synth::ScenarioConfig& cfg) {
  return json{{"seed", cfg.seed},
              {"agents_per_approach", cfg.agents_per_approach},
              {"green_s", cfg.green_s},
              {"yellow_s", cfg.yellow_s},
              {"all_red_s", cfg.all_red_s},
              {"speed_min_mps", cfg.speed_min_mps},
              {"speed_max_mps", cfg.speed_max_mps},
              {"decel_comfort_mps2", cfg.decel_comfort_mps2},
              {"mix",
               {{"car", cfg.mix.car},
                {"truck", cfg.mix.truck},
                {"bus", cfg.mix.bus},
                {"motorcycle", cfg.mix.motorcycle}}},
              {"duration_s", cfg.duration_s},
              {"left_fraction", cfg.left_fraction},
              {"right_fraction", cfg.right_fraction}};
}

inline synth::ScenarioConfig scenario_config_from_json(const json& j,
                                                       const std::string& where = "scenario config") {
  synth::ScenarioConfig cfg;
  detail::JsonReader r(j, where);
  r.get("seed", cfg.seed);
  r.get("agents_per_approach", cfg.agents_per_approach);
  r.get("green_s", cfg.green_s);
  r.get("yellow_s", cfg.yellow_s);
  r.get("all_red_s", cfg.all_red_s);
  r.get("speed_min_mps", cfg.speed_min_mps);
  r.get("speed_max_mps", cfg.speed_max_mps);
  r.get("decel_comfort_mps2", cfg.decel_comfort_mps2);
  json mix = r.sub("mix");
  if (!mix.empty()) {
    detail::JsonReader mr(mix, where + ".mix");
    mr.get("car", cfg.mix.car);
    mr.get("truck", cfg.mix.truck);
    mr.get("bus", cfg.mix.bus);
    mr.get("motorcycle", cfg.mix.motorcycle);
    mr.finish();
  }
  r.get("duration_s", cfg.duration_s);
  r.get("left_fraction", cfg.left_fraction);
  r.get("right_fraction", cfg.right_fraction);
  r.finish();
  cfg.validate();
  return cfg;
}

}  // namespace kigan
