#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kigan/data.hpp"
#include "kigan/gan.hpp"
#include "kigan/json_io.hpp"

namespace kigan {

// Mean over trajectories of the per-trajectory mean Euclidean point error.
inline double ade(const std::vector<std::vector<Vec2>>& truth,
                  const std::vector<std::vector<Vec2>>& pred) {
  if (truth.size() != pred.size()) throw_dimension("ade: trajectory count mismatch");
  if (truth.empty()) throw_data("ade: no trajectories");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != pred[i].size() || truth[i].empty())
      throw_dimension("ade: trajectory length mismatch at index " + std::to_string(i));
    double per_traj = 0.0;
    for (std::size_t t = 0; t < truth[i].size(); ++t) per_traj += hypot2(truth[i][t] - pred[i][t]);
    total += per_traj / static_cast<double>(truth[i].size());
  }
  return total / static_cast<double>(truth.size());
}

// Mean over trajectories of the final-point Euclidean error.
inline double fde(const std::vector<std::vector<Vec2>>& truth,
                  const std::vector<std::vector<Vec2>>& pred) {
  if (truth.size() != pred.size()) throw_dimension("fde: trajectory count mismatch");
  if (truth.empty()) throw_data("fde: no trajectories");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != pred[i].size() || truth[i].empty())
      throw_dimension("fde: trajectory length mismatch at index " + std::to_string(i));
    total += hypot2(truth[i].back() - pred[i].back());
  }
  return total / static_cast<double>(truth.size());
}

struct SceneMetrics {
  std::size_t window_index = 0;
  double ade = 0.0;
  double fde = 0.0;
  std::size_t trajectories = 0;
};

struct MetricReport {
  double ade = 0.0;
  double fde = 0.0;
  int k = 1;
  int pred_len = 0;
  std::string pooling;
  bool mask_motion = false, mask_physical = false, mask_traffic = false;
  std::size_t trajectories = 0;
  std::vector<SceneMetrics> per_scene;

  json to_json() const {
    json scenes = json::array();
    for (const SceneMetrics& s : per_scene)
      scenes.push_back({{"window", s.window_index},
                        {"ade", s.ade},
                        {"fde", s.fde},
                        {"trajectories", s.trajectories}});
    return json{{"ade", ade},
                {"fde", fde},
                {"k", k},
                {"pred_len", pred_len},
                {"pooling", pooling},
                {"mask_motion", mask_motion},
                {"mask_physical", mask_physical},
                {"mask_traffic", mask_traffic},
                {"trajectories", trajectories},
                {"per_scene", scenes}};
  }

  static std::string csv_header() {
    return "pooling,mask_motion,mask_physical,mask_traffic,k,pred_len,trajectories,ade,fde";
  }

  std::string to_csv_row() const {
    std::string row = pooling;
    row += ',';
    row += mask_motion ? "1" : "0";
    row += ',';
    row += mask_physical ? "1" : "0";
    row += ',';
    row += mask_traffic ? "1" : "0";
    row += ',';
    row += std::to_string(k);
    row += ',';
    row += std::to_string(pred_len);
    row += ',';
    row += std::to_string(trajectories);
    row += ',';
    row += format_double(ade);
    row += ',';
    row += format_double(fde);
    return row;
  }
};

// Best-of-k prediction for one window: k futures per agent, full-trajectory
// L2 selection against the truth, ADE/FDE read from the selected sample.
struct WindowPrediction {
  std::vector<std::size_t> agent_indices;               // targets only
  std::vector<std::vector<std::vector<Vec2>>> samples;  // [target][k][T]
  std::vector<std::vector<double>> distances;           // [target][k]
  std::vector<std::size_t> best;                        // [target]
};

inline WindowPrediction predict_window(const GeneratorModel& gen, const SceneWindow& window,
                                       std::size_t window_index, int k, std::uint64_t seed,
                                       int horizon = -1) {
  if (k < 1) throw_config("evaluate: k must be >= 1");
  if (horizon < 0) horizon = gen.cfg.pred_len;
  if (window.pred_len < horizon)
    throw_data("evaluate: window provides " + std::to_string(window.pred_len) +
               " future frames, horizon needs " + std::to_string(horizon));

  WindowPrediction out;
  for (std::size_t i = 0; i < window.agents.size(); ++i)
    if (window.agents[i].prediction_target) out.agent_indices.push_back(i);
  if (out.agent_indices.empty()) return out;

  Tape tape;
  tape.set_recording(false);
  SceneContext ctx = encode_scene(tape, window, gen);

  out.samples.resize(out.agent_indices.size());
  out.distances.resize(out.agent_indices.size());
  out.best.assign(out.agent_indices.size(), 0);

  for (int sample = 0; sample < k; ++sample) {
    std::vector<Tensor> noise;
    noise.reserve(window.agents.size());
    for (std::size_t i = 0; i < window.agents.size(); ++i)
      noise.push_back(sample_noise(seed, {0xE, window_index, i, static_cast<std::uint64_t>(sample)},
                                   gen.cfg.d_z));
    auto scene = decode_scene(tape, window, gen, ctx, noise, horizon);
    auto positions = scene.positions();

    for (std::size_t t = 0; t < out.agent_indices.size(); ++t) {
      const WindowAgent& agent = window.agents[out.agent_indices[t]];
      const auto& pred = positions[out.agent_indices[t]];
      double sq = 0.0;
      for (int step = 0; step < horizon; ++step) {
        const Vec2 d = pred[static_cast<std::size_t>(step)] - agent.fut_pos[static_cast<std::size_t>(step)];
        sq += d.x * d.x + d.y * d.y;
      }
      out.samples[t].push_back(pred);
      out.distances[t].push_back(std::sqrt(sq));
      if (out.distances[t].back() < out.distances[t][out.best[t]])
        out.best[t] = out.samples[t].size() - 1;
    }
  }
  return out;
}

// Best-of-k evaluation over all windows. ADE and FDE are both read from the
// single sample selected by full-trajectory L2 per agent.
inline MetricReport evaluate(const GeneratorModel& gen, const std::vector<SceneWindow>& windows,
                             int k, std::uint64_t seed, int horizon = -1, int threads = 1) {
  if (windows.empty()) throw_data("evaluate: no windows");
  if (horizon < 0) horizon = gen.cfg.pred_len;
  if (threads < 1) threads = 1;

  struct PerWindow {
    double ade_sum = 0.0, fde_sum = 0.0;
    std::size_t count = 0;
  };
  std::vector<PerWindow> results(windows.size());

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t wi = lo; wi < hi; ++wi) {
      auto pred = predict_window(gen, windows[wi], wi, k, seed, horizon);
      PerWindow& res = results[wi];
      for (std::size_t t = 0; t < pred.agent_indices.size(); ++t) {
        const WindowAgent& agent = windows[wi].agents[pred.agent_indices[t]];
        const auto& best = pred.samples[t][pred.best[t]];
        double err = 0.0;
        for (int step = 0; step < horizon; ++step)
          err += hypot2(best[static_cast<std::size_t>(step)] -
                        agent.fut_pos[static_cast<std::size_t>(step)]);
        res.ade_sum += err / static_cast<double>(horizon);
        res.fde_sum += hypot2(best[static_cast<std::size_t>(horizon) - 1] -
                              agent.fut_pos[static_cast<std::size_t>(horizon) - 1]);
        res.count += 1;
      }
    }
  };

  if (threads == 1 || windows.size() < 2) {
    run_range(0, windows.size());
  } else {
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), windows.size());
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto guarded = [&](std::size_t lo, std::size_t hi) {
      try {
        run_range(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    };
    const std::size_t chunk = (windows.size() + n_workers - 1) / n_workers;
    for (std::size_t w = 0; w < n_workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(windows.size(), lo + chunk);
      if (lo < hi) pool.emplace_back(guarded, lo, hi);
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  MetricReport report;
  report.k = k;
  report.pred_len = horizon;
  report.pooling = pooling_name(gen.cfg.pooling);
  report.mask_motion = gen.cfg.mask_motion;
  report.mask_physical = gen.cfg.mask_physical;
  report.mask_traffic = gen.cfg.mask_traffic;

  double ade_total = 0.0, fde_total = 0.0;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const PerWindow& res = results[wi];
    if (res.count == 0) continue;
    ade_total += res.ade_sum;
    fde_total += res.fde_sum;
    report.trajectories += res.count;
    report.per_scene.push_back({wi, res.ade_sum / static_cast<double>(res.count),
                                res.fde_sum / static_cast<double>(res.count), res.count});
  }
  if (report.trajectories == 0) throw_data("evaluate: no prediction targets in any window");
  report.ade = ade_total / static_cast<double>(report.trajectories);
  report.fde = fde_total / static_cast<double>(report.trajectories);
  return report;
}

}  // namespace kigan
