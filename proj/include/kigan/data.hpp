#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kigan/error.hpp"

namespace kigan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline double hypot2(Vec2 v) { return std::hypot(v.x, v.y); }

enum class AgentClass { car, bus, truck, motorcycle, bicycle, tricycle, pedestrian };

inline const char* class_name(AgentClass c) {
  switch (c) {
    case AgentClass::car: return "car";
    case AgentClass::bus: return "bus";
    case AgentClass::truck: return "truck";
    case AgentClass::motorcycle: return "motorcycle";
    case AgentClass::bicycle: return "bicycle";
    case AgentClass::tricycle: return "tricycle";
    case AgentClass::pedestrian: return "pedestrian";
  }
  return "car";
}

inline AgentClass class_from_name(std::string_view s) {
  static const std::pair<std::string_view, AgentClass> table[] = {
      {"car", AgentClass::car},               {"bus", AgentClass::bus},
      {"truck", AgentClass::truck},           {"motorcycle", AgentClass::motorcycle},
      {"bicycle", AgentClass::bicycle},       {"tricycle", AgentClass::tricycle},
      {"pedestrian", AgentClass::pedestrian},
  };
  for (auto [name, cls] : table)
    if (s == name) return cls;
  throw_data("unknown agent class label '" + std::string(s) + "'");
}

inline std::size_t class_index(AgentClass c) { return static_cast<std::size_t>(c); }
constexpr std::size_t kClassCount = 7;

struct TrackFrame {
  std::int64_t frame = 0;
  double x = 0, y = 0;
  double vx = 0, vy = 0;
  double ax = 0, ay = 0;
};

struct AgentTrack {
  std::string agent_id;
  AgentClass cls = AgentClass::car;
  double length_m = 0, width_m = 0;
  std::vector<TrackFrame> frames;
};

// Joint signal state of all four approaches, codes 1..5:
//   1 N/S green, E/W red     2 N/S yellow, E/W red     3 all red
//   4 E/W green, N/S red     5 E/W yellow, N/S red
struct SignalCode {
  int code = 3;
};

inline bool ns_green(int code) { return code == 1; }
inline bool ew_green(int code) { return code == 4; }

using SignalMap = std::map<std::int64_t, int>;

// ---------------------------------------------------------------------------
// Number formatting/parsing (shortest round-trip so serialize/parse is exact)
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw_parse("could not format numeric value");
  return std::string(buf, end);
}

namespace detail {

inline double parse_number(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last)
    throw_parse("line " + std::to_string(line_no) + ": non-numeric field '" + std::string(field) + "'");
  if (!std::isfinite(v))
    throw_parse("line " + std::to_string(line_no) + ": non-finite field '" + std::string(field) + "'");
  return v;
}

inline std::int64_t parse_integer(std::string_view field, std::size_t line_no) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size())
    throw_parse("line " + std::to_string(line_no) + ": non-integer field '" + std::string(field) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

struct HeaderIndex {
  std::unordered_map<std::string_view, std::size_t> cols;

  std::size_t require(const char* name) const {
    auto it = cols.find(name);
    if (it == cols.end()) throw_schema(std::string("missing column '") + name + "'");
    return it->second;
  }
  bool has(const char* name) const { return cols.contains(name); }
};

inline HeaderIndex index_header(std::string_view header_line) {
  HeaderIndex idx;
  auto fields = split_csv_line(header_line);
  for (std::size_t i = 0; i < fields.size(); ++i) idx.cols.emplace(fields[i], i);
  return idx;
}

inline void validate_track(const AgentTrack& t) {
  for (std::size_t i = 1; i < t.frames.size(); ++i)
    if (t.frames[i].frame <= t.frames[i - 1].frame)
      throw_data("agent '" + t.agent_id + "': duplicate frame " + std::to_string(t.frames[i].frame));
  if (t.cls != AgentClass::pedestrian && (t.length_m <= 0.0 || t.width_m <= 0.0))
    throw_data("agent '" + t.agent_id + "': non-positive dimensions for vehicle class");
  for (const TrackFrame& f : t.frames) {
    const double speed = std::hypot(f.vx, f.vy);
    if (!(speed < 40.0))
      throw_data("agent '" + t.agent_id + "' frame " + std::to_string(f.frame) +
                 ": speed " + format_double(speed) + " m/s exceeds urban sanity bound");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Track CSV: agent_id,frame_id,agent_type,length,width,x,y,vx,vy,ax,ay
// ---------------------------------------------------------------------------

inline std::vector<AgentTrack> parse_tracks(std::string_view csv) {
  auto lines = detail::split_lines(csv);
  if (lines.empty()) throw_schema("track file is empty (missing header)");
  auto hdr = detail::index_header(lines[0]);
  const std::size_t c_id = hdr.require("agent_id");
  const std::size_t c_frame = hdr.require("frame_id");
  const std::size_t c_type = hdr.require("agent_type");
  const std::size_t c_len = hdr.require("length");
  const std::size_t c_wid = hdr.require("width");
  const std::size_t c_x = hdr.require("x"), c_y = hdr.require("y");
  const std::size_t c_vx = hdr.require("vx"), c_vy = hdr.require("vy");
  const std::size_t c_ax = hdr.require("ax"), c_ay = hdr.require("ay");
  const std::size_t n_cols = hdr.cols.size();

  std::vector<AgentTrack> tracks;
  std::unordered_map<std::string, std::size_t> by_id;  // first-appearance order

  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    auto f = detail::split_csv_line(lines[li]);
    const std::size_t line_no = li + 1;
    if (f.size() < n_cols)
      throw_parse("line " + std::to_string(line_no) + ": expected " + std::to_string(n_cols) +
                  " fields, got " + std::to_string(f.size()));

    const std::string id(f[c_id]);
    auto [it, inserted] = by_id.emplace(id, tracks.size());
    if (inserted) {
      AgentTrack t;
      t.agent_id = id;
      t.cls = class_from_name(f[c_type]);
      t.length_m = detail::parse_number(f[c_len], line_no);
      t.width_m = detail::parse_number(f[c_wid], line_no);
      tracks.push_back(std::move(t));
    }
    AgentTrack& t = tracks[it->second];
    TrackFrame fr;
    fr.frame = detail::parse_integer(f[c_frame], line_no);
    fr.x = detail::parse_number(f[c_x], line_no);
    fr.y = detail::parse_number(f[c_y], line_no);
    fr.vx = detail::parse_number(f[c_vx], line_no);
    fr.vy = detail::parse_number(f[c_vy], line_no);
    fr.ax = detail::parse_number(f[c_ax], line_no);
    fr.ay = detail::parse_number(f[c_ay], line_no);
    t.frames.push_back(fr);
  }

  for (AgentTrack& t : tracks) {
    std::stable_sort(t.frames.begin(), t.frames.end(),
                     [](const TrackFrame& a, const TrackFrame& b) { return a.frame < b.frame; });
    detail::validate_track(t);
  }
  return tracks;
}

inline std::string serialize_tracks(const std::vector<AgentTrack>& tracks) {
  std::string out = "agent_id,frame_id,agent_type,length,width,x,y,vx,vy,ax,ay\n";
  for (const AgentTrack& t : tracks)
    for (const TrackFrame& f : t.frames) {
      out += t.agent_id;
      out += ',';
      out += std::to_string(f.frame);
      out += ',';
      out += class_name(t.cls);
      out += ',';
      out += format_double(t.length_m);
      out += ',';
      out += format_double(t.width_m);
      for (double v : {f.x, f.y, f.vx, f.vy, f.ax, f.ay}) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
  return out;
}

// ---------------------------------------------------------------------------
// Signal CSV: frame_id,code  or  frame_id,north,south,east,west
// ---------------------------------------------------------------------------

namespace detail {

inline char light_letter(std::string_view v, std::size_t line_no) {
  if (v == "Green" || v == "green" || v == "G") return 'G';
  if (v == "Yellow" || v == "yellow" || v == "Y") return 'Y';
  if (v == "Red" || v == "red" || v == "R") return 'R';
  throw_parse("line " + std::to_string(line_no) + ": unknown light state '" + std::string(v) + "'");
}

inline int code_from_directions(char n, char s, char e, char w, std::size_t line_no) {
  if (n != s || e != w)
    throw_data("line " + std::to_string(line_no) + ": N/S or E/W signal states are not synchronized");
  if (n == 'G' && e == 'R') return 1;
  if (n == 'Y' && e == 'R') return 2;
  if (n == 'R' && e == 'R') return 3;
  if (n == 'R' && e == 'G') return 4;
  if (n == 'R' && e == 'Y') return 5;
  throw_data("line " + std::to_string(line_no) + ": signal combination has no code");
}

}  // namespace detail

inline SignalMap parse_signals(std::string_view csv) {
  auto lines = detail::split_lines(csv);
  if (lines.empty()) throw_schema("signal file is empty (missing header)");
  auto hdr = detail::index_header(lines[0]);
  const std::size_t c_frame = hdr.require("frame_id");
  const bool per_direction = hdr.has("north");

  std::size_t c_code = 0, c_n = 0, c_s = 0, c_e = 0, c_w = 0;
  if (per_direction) {
    c_n = hdr.require("north");
    c_s = hdr.require("south");
    c_e = hdr.require("east");
    c_w = hdr.require("west");
  } else {
    c_code = hdr.require("code");
  }

  const std::size_t n_cols = hdr.cols.size();
  SignalMap map;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    auto f = detail::split_csv_line(lines[li]);
    const std::size_t line_no = li + 1;
    if (f.size() < n_cols)
      throw_parse("line " + std::to_string(line_no) + ": expected " + std::to_string(n_cols) +
                  " fields, got " + std::to_string(f.size()));
    const std::int64_t frame = detail::parse_integer(f[c_frame], line_no);
    int code;
    if (per_direction) {
      code = detail::code_from_directions(
          detail::light_letter(f[c_n], line_no), detail::light_letter(f[c_s], line_no),
          detail::light_letter(f[c_e], line_no), detail::light_letter(f[c_w], line_no), line_no);
    } else {
      code = static_cast<int>(detail::parse_integer(f[c_code], line_no));
      if (code < 1 || code > 5)
        throw_data("line " + std::to_string(line_no) + ": signal code " + std::to_string(code) +
                   " outside 1..5");
    }
    auto [it, inserted] = map.emplace(frame, code);
    if (!inserted && it->second != code)
      throw_data("line " + std::to_string(line_no) + ": conflicting codes for frame " +
                 std::to_string(frame));
  }
  return map;
}

inline std::string serialize_signals(const SignalMap& map) {
  std::string out = "frame_id,code\n";
  for (auto [frame, code] : map) {
    out += std::to_string(frame);
    out += ',';
    out += std::to_string(code);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling: keep rows on the global frame grid (frame % step == 0) and
// renumber to the sample index, so agents and signals stay aligned and
// resample(resample(t, a), b) == resample(t, a*b).
// ---------------------------------------------------------------------------

inline AgentTrack resample(const AgentTrack& track, std::int64_t step) {
  if (step < 1) throw_config("resample: step must be >= 1");
  AgentTrack out = track;
  out.frames.clear();
  for (const TrackFrame& f : track.frames)
    if (f.frame % step == 0) {
      TrackFrame kept = f;
      kept.frame = f.frame / step;
      out.frames.push_back(kept);
    }
  return out;
}

inline std::vector<AgentTrack> resample(const std::vector<AgentTrack>& tracks, std::int64_t step) {
  std::vector<AgentTrack> out;
  out.reserve(tracks.size());
  for (const AgentTrack& t : tracks) out.push_back(resample(t, step));
  return out;
}

inline SignalMap resample(const SignalMap& signals, std::int64_t step) {
  if (step < 1) throw_config("resample: step must be >= 1");
  SignalMap out;
  for (auto [frame, code] : signals)
    if (frame % step == 0) out.emplace(frame / step, code);
  return out;
}

// ---------------------------------------------------------------------------
// Scene windows
// ---------------------------------------------------------------------------

struct WindowAgent {
  std::string agent_id;
  AgentClass cls = AgentClass::car;
  double length_m = 0, width_m = 0;
  std::vector<Vec2> obs_pos, obs_vel, obs_acc;  // obs_len entries
  std::vector<Vec2> fut_pos;                    // pred_len entries
  Vec2 anchor;                                  // last observed position
  bool prediction_target = true;
};

struct SceneWindow {
  int obs_len = 12;
  int pred_len = 12;
  std::int64_t start_frame = 0;
  std::vector<WindowAgent> agents;
  std::vector<int> signal_codes;  // obs_len + pred_len entries

  int final_observed_code() const { return signal_codes[static_cast<std::size_t>(obs_len) - 1]; }
  std::size_t target_count() const {
    std::size_t n = 0;
    for (const WindowAgent& a : agents) n += a.prediction_target ? 1 : 0;
    return n;
  }
};

struct WindowSpec {
  int obs_len = 12;
  int pred_len = 12;
  int stride = 12;
  bool include_pedestrians = false;
};

inline std::vector<SceneWindow> make_windows(const std::vector<AgentTrack>& tracks,
                                             const SignalMap& signals, const WindowSpec& spec) {
  if (spec.obs_len < 1 || spec.pred_len < 1 || spec.stride < 1)
    throw_config("make_windows: obs_len, pred_len and stride must be >= 1");
  const std::int64_t total = spec.obs_len + spec.pred_len;

  std::int64_t min_frame = 0, max_frame = -1;
  bool any = false;
  for (const AgentTrack& t : tracks) {
    if (t.frames.empty()) continue;
    const std::int64_t lo = t.frames.front().frame, hi = t.frames.back().frame;
    if (!any) {
      min_frame = lo;
      max_frame = hi;
      any = true;
    } else {
      min_frame = std::min(min_frame, lo);
      max_frame = std::max(max_frame, hi);
    }
  }

  std::vector<SceneWindow> windows;
  if (!any) return windows;

  for (std::int64_t t0 = min_frame; t0 + total - 1 <= max_frame; t0 += spec.stride) {
    SceneWindow w;
    w.obs_len = spec.obs_len;
    w.pred_len = spec.pred_len;
    w.start_frame = t0;

    for (const AgentTrack& t : tracks) {
      // Frames are strictly increasing after parse; binary-search the start
      // and require `total` consecutive frame indices.
      auto it = std::lower_bound(t.frames.begin(), t.frames.end(), t0,
                                 [](const TrackFrame& f, std::int64_t v) { return f.frame < v; });
      if (it == t.frames.end() || it->frame != t0) continue;
      if (static_cast<std::int64_t>(t.frames.end() - it) < total) continue;
      bool complete = true;
      for (std::int64_t k = 0; k < total; ++k)
        if ((it + k)->frame != t0 + k) {
          complete = false;
          break;
        }
      if (!complete) continue;

      WindowAgent a;
      a.agent_id = t.agent_id;
      a.cls = t.cls;
      a.length_m = t.length_m;
      a.width_m = t.width_m;
      for (std::int64_t k = 0; k < spec.obs_len; ++k) {
        const TrackFrame& f = *(it + k);
        a.obs_pos.push_back({f.x, f.y});
        a.obs_vel.push_back({f.vx, f.vy});
        a.obs_acc.push_back({f.ax, f.ay});
      }
      for (std::int64_t k = spec.obs_len; k < total; ++k) {
        const TrackFrame& f = *(it + k);
        a.fut_pos.push_back({f.x, f.y});
      }
      a.anchor = a.obs_pos.back();
      a.prediction_target = spec.include_pedestrians || t.cls != AgentClass::pedestrian;
      w.agents.push_back(std::move(a));
    }

    if (w.agents.empty()) continue;

    for (std::int64_t k = 0; k < total; ++k) {
      auto it = signals.find(t0 + k);
      if (it == signals.end())
        throw_data("make_windows: no signal code for frame " + std::to_string(t0 + k));
      w.signal_codes.push_back(it->second);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

// ---------------------------------------------------------------------------
// Per-agent translation to the last observed position
// ---------------------------------------------------------------------------

struct NormalizationTransform {
  std::vector<Vec2> anchors;  // aligned with SceneWindow::agents
};

inline std::pair<SceneWindow, NormalizationTransform> normalize(const SceneWindow& window) {
  SceneWindow out = window;
  NormalizationTransform tf;
  for (WindowAgent& a : out.agents) {
    const Vec2 anchor = a.anchor;
    tf.anchors.push_back(anchor);
    for (Vec2& p : a.obs_pos) p = p - anchor;
    for (Vec2& p : a.fut_pos) p = p - anchor;
    a.anchor = {0.0, 0.0};
  }
  return {out, tf};
}

inline SceneWindow denormalize(const SceneWindow& window, const NormalizationTransform& tf) {
  if (tf.anchors.size() != window.agents.size())
    throw_dimension("denormalize: transform does not match window agent count");
  SceneWindow out = window;
  for (std::size_t i = 0; i < out.agents.size(); ++i) {
    WindowAgent& a = out.agents[i];
    for (Vec2& p : a.obs_pos) p = p + tf.anchors[i];
    for (Vec2& p : a.fut_pos) p = p + tf.anchors[i];
    a.anchor = a.anchor + tf.anchors[i];
  }
  return out;
}

}  // namespace kigan
