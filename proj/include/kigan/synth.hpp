#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "kigan/data.hpp"
#include "kigan/error.hpp"
#include "kigan/rng.hpp"

namespace kigan::synth {

struct ClassMix {
  double car = 0.7;
  double truck = 0.1;
  double bus = 0.1;
  double motorcycle = 0.1;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int agents_per_approach = 3;
  double green_s = 15.0;
  double yellow_s = 3.0;
  double all_red_s = 2.0;
  double speed_min_mps = 8.0;
  double speed_max_mps = 12.0;
  double decel_comfort_mps2 = 3.0;
  ClassMix mix;
  double duration_s = 120.0;
  double left_fraction = 0.25;
  double right_fraction = 0.25;

  void validate() const {
    if (green_s <= 0 || yellow_s <= 0 || all_red_s <= 0)
      throw_config("scenario: cycle durations must be positive");
    if (!(speed_min_mps > 0) || speed_max_mps < speed_min_mps || speed_max_mps >= 30.0)
      throw_config("scenario: approach speed range must satisfy 0 < min <= max < 30");
    if (!(decel_comfort_mps2 > 0) || decel_comfort_mps2 > 5.0)
      throw_config("scenario: comfortable deceleration must be in (0, 5]");
    const double total = mix.car + mix.truck + mix.bus + mix.motorcycle;
    if (std::abs(total - 1.0) > 1e-9) throw_config("scenario: class mix proportions must sum to 1");
    if (mix.car < 0 || mix.truck < 0 || mix.bus < 0 || mix.motorcycle < 0)
      throw_config("scenario: class mix proportions must be non-negative");
    if (duration_s <= 0) throw_config("scenario: duration must be positive");
    if (agents_per_approach < 0) throw_config("scenario: agents per approach must be >= 0");
    if (left_fraction < 0 || right_fraction < 0 || left_fraction + right_fraction > 1.0 + 1e-12)
      throw_config("scenario: turn fractions must be non-negative and sum to at most 1");
    // Anyone who proceeds on yellow must clear the bar before red. The two
    // bounds cover free-flow arrivals and turners riding the arc-entry
    // envelope (which keeps them permanently past the stoppability test).
    const double clear_free = speed_max_mps / (2.0 * decel_comfort_mps2);
    const double clear_turn = (speed_max_mps - 6.0) / decel_comfort_mps2;
    if (yellow_s < std::max(clear_free, clear_turn) + 0.6)
      throw_config("scenario: yellow too short for the speed range (red-running would occur)");
  }
};

// Intersection geometry. One inbound lane per approach, right-hand traffic;
// the stop bar sits 10 m from the center, lanes 1.75 m off the axis. Turn
// radii make quarter-circle arcs tangent to the approach and exit lanes.
constexpr double kFps = 30.0;
constexpr double kDt = 1.0 / kFps;
constexpr double kLaneOffset = 1.75;
constexpr double kStopBar = 10.0;
constexpr double kRightRadius = kStopBar - kLaneOffset;  // 8.25
constexpr double kLeftRadius = kStopBar + kLaneOffset;   // 11.75
constexpr double kSpawnU = -70.0;                        // path coord, bar at u = 0
constexpr double kExitU = 60.0;
constexpr double kStopMargin = 0.5;
constexpr double kMinGap = 2.0;
constexpr double kTimeGap = 1.5;  // car-following headway, s
constexpr double kTurnSpeed = 6.0;
constexpr double kHardDecel = 5.0;

enum class TurnKind { straight, left, right };

struct PathPoint {
  Vec2 pos;
  Vec2 tan;      // unit tangent
  Vec2 dtan_du;  // curvature vector (d tangent / d arclength)
};

// Canonical northbound path (heading +y), parameterized by distance u with
// the stop bar at u = 0.
inline PathPoint canonical_path(TurnKind turn, double u) {
  if (u <= 0.0 || turn == TurnKind::straight)
    return {{kLaneOffset, u - kStopBar}, {0.0, 1.0}, {0.0, 0.0}};
  if (turn == TurnKind::right) {
    const double arc = kRightRadius * std::numbers::pi / 2.0;
    if (u < arc) {
      const double phi = u / kRightRadius;
      return {{kStopBar - kRightRadius * std::cos(phi), -kStopBar + kRightRadius * std::sin(phi)},
              {std::sin(phi), std::cos(phi)},
              {std::cos(phi) / kRightRadius, -std::sin(phi) / kRightRadius}};
    }
    return {{kStopBar + (u - arc), -kLaneOffset}, {1.0, 0.0}, {0.0, 0.0}};
  }
  // left turn
  const double arc = kLeftRadius * std::numbers::pi / 2.0;
  if (u < arc) {
    const double phi = u / kLeftRadius;
    return {{-kStopBar + kLeftRadius * std::cos(phi), -kStopBar + kLeftRadius * std::sin(phi)},
            {-std::sin(phi), std::cos(phi)},
            {-std::cos(phi) / kLeftRadius, -std::sin(phi) / kLeftRadius}};
  }
  return {{-kStopBar - (u - arc), kLaneOffset}, {-1.0, 0.0}, {0.0, 0.0}};
}

// Approach 0 heads +y, 1 heads +x, 2 heads -y, 3 heads -x.
inline Vec2 rotate_to_approach(int approach, Vec2 c) {
  switch (approach) {
    case 0: return {c.x, c.y};
    case 1: return {c.y, -c.x};
    case 2: return {-c.x, -c.y};
    default: return {-c.y, c.x};
  }
}

inline bool is_ns_approach(int approach) { return approach == 0 || approach == 2; }

// Signal cycle 1 -> 2 -> 3 -> 4 -> 5 -> 3 -> 1 (all-red between axis switches).
inline int signal_code_at(double t_s, const ScenarioConfig& cfg) {
  const double cycle = 2.0 * (cfg.green_s + cfg.yellow_s + cfg.all_red_s);
  double p = std::fmod(t_s, cycle);
  if (p < 0) p += cycle;
  if (p < cfg.green_s) return 1;
  p -= cfg.green_s;
  if (p < cfg.yellow_s) return 2;
  p -= cfg.yellow_s;
  if (p < cfg.all_red_s) return 3;
  p -= cfg.all_red_s;
  if (p < cfg.green_s) return 4;
  p -= cfg.green_s;
  if (p < cfg.yellow_s) return 5;
  return 3;
}

enum class Light { green, yellow, red };

inline Light light_for(int code, bool ns_axis) {
  if (ns_axis) {
    if (code == 1) return Light::green;
    if (code == 2) return Light::yellow;
    return Light::red;
  }
  if (code == 4) return Light::green;
  if (code == 5) return Light::yellow;
  return Light::red;
}

struct SimOutput {
  std::string tracks_csv;
  std::string signals_csv;
};

namespace detail {

struct VehicleSpec {
  AgentClass cls;
  double length, width, accel_cap;
};

inline VehicleSpec class_spec(AgentClass cls) {
  switch (cls) {
    case AgentClass::truck: return {cls, 8.0, 2.4, 1.5};
    case AgentClass::bus: return {cls, 11.0, 2.6, 1.2};
    case AgentClass::motorcycle: return {cls, 2.0, 0.8, 3.0};
    default: return {AgentClass::car, 4.5, 1.8, 2.5};
  }
}

struct Vehicle {
  int approach = 0;
  TurnKind turn = TurnKind::straight;
  VehicleSpec spec{AgentClass::car, 4.5, 1.8, 2.5};
  double v_des = 10.0;
  std::int64_t spawn_frame = 0;
  bool spawned = false;
  bool exited = false;
  bool stop_committed = false;
  double u = kSpawnU;
  double v = 0.0;
  AgentTrack track;
};

// Stopping envelope: the speed from which a stop at distance `d` is
// feasible at deceleration b. Following it discretely converges just short
// of the target without crossing it.
inline double envelope(double d, double b) { return d > 0.0 ? std::sqrt(2.0 * b * d) : 0.0; }

}  // namespace detail

inline SimOutput simulate(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::int64_t frames = static_cast<std::int64_t>(std::llround(cfg.duration_s * kFps));
  Rng rng(cfg.seed);

  // Spawn plan. All draws happen up front in a fixed order so the stream is
  // stable under control-flow changes in the tick loop.
  std::vector<detail::Vehicle> fleet;
  for (int approach = 0; approach < 4; ++approach) {
    std::vector<std::int64_t> when;
    for (int i = 0; i < cfg.agents_per_approach; ++i)
      when.push_back(rng.uniform_int(0, std::max<std::int64_t>(0, (frames * 7) / 10)));
    std::sort(when.begin(), when.end());
    for (int i = 0; i < cfg.agents_per_approach; ++i) {
      detail::Vehicle veh;
      veh.approach = approach;
      veh.spawn_frame = when[static_cast<std::size_t>(i)];
      const double r_turn = rng.uniform();
      veh.turn = r_turn < cfg.left_fraction
                     ? TurnKind::left
                     : (r_turn < cfg.left_fraction + cfg.right_fraction ? TurnKind::right
                                                                        : TurnKind::straight);
      const double r_cls = rng.uniform();
      AgentClass cls = AgentClass::car;
      if (r_cls >= cfg.mix.car && r_cls < cfg.mix.car + cfg.mix.truck) cls = AgentClass::truck;
      else if (r_cls >= cfg.mix.car + cfg.mix.truck && r_cls < cfg.mix.car + cfg.mix.truck + cfg.mix.bus)
        cls = AgentClass::bus;
      else if (r_cls >= cfg.mix.car + cfg.mix.truck + cfg.mix.bus) cls = AgentClass::motorcycle;
      veh.spec = detail::class_spec(cls);
      veh.v_des = rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps);
      fleet.push_back(std::move(veh));
    }
  }

  // Per-approach order of active vehicles, leader first. Single lane, no
  // overtaking, so the order only changes at spawn/exit.
  std::vector<std::vector<std::size_t>> lane(4);
  std::size_t next_id = 0;

  const double b = cfg.decel_comfort_mps2;

  for (std::int64_t frame = 0; frame < frames; ++frame) {
    const double t = static_cast<double>(frame) * kDt;
    const int code = signal_code_at(t, cfg);

    // Spawns, gated on the entry segment being clear.
    for (std::size_t vi = 0; vi < fleet.size(); ++vi) {
      detail::Vehicle& veh = fleet[vi];
      if (veh.spawned || veh.exited || frame < veh.spawn_frame) continue;
      bool clear = true;
      for (std::size_t other : lane[static_cast<std::size_t>(veh.approach)])
        if (fleet[other].u < kSpawnU + 15.0) {
          clear = false;
          break;
        }
      if (!clear) continue;
      veh.spawned = true;
      veh.u = kSpawnU;
      veh.v = veh.v_des;
      veh.track.agent_id = "a" + std::to_string(next_id++);
      veh.track.cls = veh.spec.cls;
      veh.track.length_m = veh.spec.length;
      veh.track.width_m = veh.spec.width;
      lane[static_cast<std::size_t>(veh.approach)].push_back(vi);
    }

    // Pre-update snapshot so follower constraints see time-t leader state.
    std::vector<double> u_snap(fleet.size()), v_snap(fleet.size());
    for (std::size_t vi = 0; vi < fleet.size(); ++vi) {
      u_snap[vi] = fleet[vi].u;
      v_snap[vi] = fleet[vi].v;
    }

    for (int approach = 0; approach < 4; ++approach) {
      const Light light = light_for(code, is_ns_approach(approach));
      auto& order = lane[static_cast<std::size_t>(approach)];
      for (std::size_t pos = 0; pos < order.size(); ++pos) {
        detail::Vehicle& veh = fleet[order[pos]];

        double v_allowed = veh.v_des;

        // Signal rule, active only before the bar. The stop decision
        // latches until green: on yellow a vehicle commits if a comfortable
        // stop is feasible, on red if even hard braking can still make it.
        if (light == Light::green) veh.stop_committed = false;
        if (veh.u < 0.0) {
          const double dist_to_stop = -veh.u - kStopMargin;
          if (!veh.stop_committed && light == Light::yellow)
            veh.stop_committed = veh.v * veh.v <= 2.0 * b * dist_to_stop;
          if (!veh.stop_committed && light == Light::red)
            veh.stop_committed = veh.v * veh.v <= 2.0 * kHardDecel * dist_to_stop;
          if (veh.stop_committed)
            v_allowed = std::min(v_allowed, detail::envelope(dist_to_stop, b));
        }

        // Turn speed cap, with a braking envelope toward the arc entry.
        if (veh.turn != TurnKind::straight) {
          const double arc_len =
              (veh.turn == TurnKind::right ? kRightRadius : kLeftRadius) * std::numbers::pi / 2.0;
          if (veh.u < 0.0)
            v_allowed = std::min(v_allowed, std::sqrt(kTurnSpeed * kTurnSpeed +
                                                      2.0 * b * std::max(0.0, -veh.u)));
          else if (veh.u < arc_len)
            v_allowed = std::min(v_allowed, kTurnSpeed);
        }

        // Car following on the shared approach segment.
        if (pos > 0 && veh.u < 0.0) {
          const detail::Vehicle& lead = fleet[order[pos - 1]];
          if (u_snap[order[pos - 1]] < 0.0) {
            const double gap = u_snap[order[pos - 1]] - veh.u -
                               0.5 * (lead.spec.length + veh.spec.length) - kMinGap;
            v_allowed = std::min(v_allowed, std::min(v_snap[order[pos - 1]] + detail::envelope(gap, b),
                                                     std::max(0.0, gap) / kTimeGap));
          }
        }

        double v_next = std::clamp(v_allowed, veh.v - kHardDecel * kDt,
                                   veh.v + veh.spec.accel_cap * kDt);
        v_next = std::max(0.0, v_next);
        const double a_long = (v_next - veh.v) / kDt;

        // Emit the frame-t state; accelerations are filled in afterwards
        // from position second differences so the triple stays consistent.
        const PathPoint pp = canonical_path(veh.turn, veh.u);
        const Vec2 pos_w = rotate_to_approach(approach, pp.pos);
        const Vec2 tan_w = rotate_to_approach(approach, pp.tan);
        TrackFrame tf;
        tf.frame = frame;
        tf.x = pos_w.x;
        tf.y = pos_w.y;
        tf.vx = tan_w.x * veh.v;
        tf.vy = tan_w.y * veh.v;
        tf.ax = tan_w.x * a_long;
        tf.ay = tan_w.y * a_long;
        veh.track.frames.push_back(tf);

        veh.u += v_next * kDt;
        veh.v = v_next;
      }

      // Retire vehicles that left the scene.
      std::vector<std::size_t> still;
      for (std::size_t vi : order) {
        if (fleet[vi].u > kExitU) fleet[vi].exited = true;
        else still.push_back(vi);
      }
      order = std::move(still);
    }
  }

  // Tracks in spawn order; vehicles that never spawned are dropped.
  std::vector<AgentTrack> tracks;
  std::vector<const detail::Vehicle*> spawned;
  for (const detail::Vehicle& veh : fleet)
    if (veh.spawned && !veh.track.frames.empty()) spawned.push_back(&veh);
  std::sort(spawned.begin(), spawned.end(), [](const detail::Vehicle* a, const detail::Vehicle* b) {
    return a->track.agent_id.size() < b->track.agent_id.size() ||
           (a->track.agent_id.size() == b->track.agent_id.size() &&
            a->track.agent_id < b->track.agent_id);
  });
  for (const detail::Vehicle* veh : spawned) tracks.push_back(veh->track);

  // Accelerations as the discrete curvature of the emitted positions,
  // including the centripetal part on turn arcs. Endpoints copy inward.
  for (AgentTrack& t : tracks) {
    const std::size_t n = t.frames.size();
    if (n < 3) continue;
    std::vector<Vec2> acc(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      acc[i].x = (t.frames[i + 1].x - 2.0 * t.frames[i].x + t.frames[i - 1].x) * kFps * kFps;
      acc[i].y = (t.frames[i + 1].y - 2.0 * t.frames[i].y + t.frames[i - 1].y) * kFps * kFps;
    }
    acc[0] = acc[1];
    acc[n - 1] = acc[n - 2];
    for (std::size_t i = 0; i < n; ++i) {
      t.frames[i].ax = acc[i].x;
      t.frames[i].ay = acc[i].y;
    }
  }

  SignalMap signals;
  for (std::int64_t frame = 0; frame < frames; ++frame)
    signals.emplace(frame, signal_code_at(static_cast<double>(frame) * kDt, cfg));

  return {serialize_tracks(tracks), serialize_signals(signals)};
}

// ---------------------------------------------------------------------------
// Stop-bar compliance check
// ---------------------------------------------------------------------------

struct LabelViolation {
  std::string agent_id;
  std::int64_t frame = 0;
  bool ns_axis = true;
};

struct LabelReport {
  std::vector<LabelViolation> violations;
  std::size_t vehicles_checked = 0;
  bool ok() const { return violations.empty(); }
};

// Flags any vehicle whose position crosses an inbound stop line while its
// axis shows red. The light is read at the frame the movement started.
inline LabelReport label_check(std::string_view tracks_csv, std::string_view signals_csv) {
  const auto tracks = parse_tracks(tracks_csv);
  const auto signals = parse_signals(signals_csv);
  LabelReport report;

  auto light_at = [&](std::int64_t frame, bool ns) {
    auto it = signals.find(frame);
    if (it == signals.end())
      throw_data("label_check: no signal code for frame " + std::to_string(frame));
    return light_for(it->second, ns);
  };

  for (const AgentTrack& t : tracks) {
    if (t.cls == AgentClass::pedestrian) continue;
    report.vehicles_checked += 1;
    for (std::size_t i = 1; i < t.frames.size(); ++i) {
      const TrackFrame& p = t.frames[i - 1];
      const TrackFrame& q = t.frames[i];
      if (q.frame != p.frame + 1) continue;

      bool crossed_ns = false, crossed_ew = false;
      // Inbound lanes: northbound x in (0,6), southbound x in (-6,0),
      // eastbound y in (-6,0), westbound y in (0,6).
      if (p.y < -kStopBar && q.y >= -kStopBar && p.x > 0 && p.x < 6) crossed_ns = true;
      if (p.y > kStopBar && q.y <= kStopBar && p.x < 0 && p.x > -6) crossed_ns = true;
      if (p.x < -kStopBar && q.x >= -kStopBar && p.y < 0 && p.y > -6) crossed_ew = true;
      if (p.x > kStopBar && q.x <= kStopBar && p.y > 0 && p.y < 6) crossed_ew = true;

      if (crossed_ns && light_at(p.frame, true) == Light::red)
        report.violations.push_back({t.agent_id, q.frame, true});
      if (crossed_ew && light_at(p.frame, false) == Light::red)
        report.violations.push_back({t.agent_id, q.frame, false});
    }
  }
  return report;
}

}  // namespace kigan::synth
