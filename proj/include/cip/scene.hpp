#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cip/geometry.hpp"
#include "cip/kinematics.hpp"
#include "cip/util.hpp"

namespace cip {

enum class MapKind { lane_center, road_boundary, crosswalk };
enum class AgentKind { vehicle, cyclist, pedestrian };

struct MapPolyline {
  int id = 0;
  MapKind kind = MapKind::lane_center;
  std::vector<Vec2> points;
  double speed_limit = 0.0;  // m/s, lane_center only
};

struct AgentState {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;

  Vec2 pos() const { return {x, y}; }
};

struct AgentTrack {
  int agent_id = 0;
  AgentKind kind = AgentKind::vehicle;
  std::vector<AgentState> states;
  double length = 4.5;  // footprint, meters
  double width = 2.0;

  double start_time() const { return states.empty() ? 0.0 : states.front().t; }
  double end_time() const { return states.empty() ? 0.0 : states.back().t; }
};

struct Scenario {
  std::string id;
  std::vector<MapPolyline> map;
  std::vector<AgentTrack> agents;
  AgentTrack ego_track;  // the expert demonstration
  Vec2 goal;
  double duration = 20.0;
  double dt = 0.1;
};

// Log replay with clamping at the track ends and linear interpolation between
// samples (shortest-arc for heading).
inline AgentState track_state_at(const AgentTrack& track, double t) {
  const auto& ss = track.states;
  if (ss.empty()) throw ValidationError("track_state_at: empty track");
  if (t <= ss.front().t) return ss.front();
  if (t >= ss.back().t) return ss.back();
  std::size_t hi = 1;
  while (hi < ss.size() && ss[hi].t < t) ++hi;
  const AgentState& a = ss[hi - 1];
  const AgentState& b = ss[hi];
  double u = (t - a.t) / (b.t - a.t);
  AgentState out;
  out.t = t;
  out.x = a.x + u * (b.x - a.x);
  out.y = a.y + u * (b.y - a.y);
  double dh = normalize_heading(b.heading - a.heading);
  out.heading = normalize_heading(a.heading + u * dh);
  out.speed = a.speed + u * (b.speed - a.speed);
  return out;
}

inline Obb track_obb_at(const AgentTrack& track, double t) {
  AgentState s = track_state_at(track, t);
  return Obb{{s.x, s.y}, s.heading, track.length, track.width};
}

// ---------------------------------------------------------------------------
// Drivable area

// Chains road_boundary polylines into closed simple polygons (CCW). Endpoints
// are matched within 1e-6 m; chains that cannot be closed raise GeometryError.
inline std::vector<Polygon> drivable_area(const Scenario& scenario) {
  constexpr double tol = 1e-6;
  std::vector<std::vector<Vec2>> chains;
  for (const auto& pl : scenario.map)
    if (pl.kind == MapKind::road_boundary && pl.points.size() >= 2)
      chains.push_back(pl.points);
  if (chains.empty()) throw GeometryError("drivable_area: no road_boundary polylines");

  auto close_enough = [&](Vec2 a, Vec2 b) { return dist(a, b) <= tol; };
  std::vector<bool> used(chains.size(), false);
  std::vector<Polygon> polys;
  for (std::size_t start = 0; start < chains.size(); ++start) {
    if (used[start]) continue;
    used[start] = true;
    std::vector<Vec2> loop = chains[start];
    while (!close_enough(loop.front(), loop.back())) {
      bool extended = false;
      for (std::size_t j = 0; j < chains.size(); ++j) {
        if (used[j]) continue;
        std::vector<Vec2> piece = chains[j];
        if (close_enough(loop.back(), piece.front())) {
          loop.insert(loop.end(), piece.begin() + 1, piece.end());
        } else if (close_enough(loop.back(), piece.back())) {
          std::reverse(piece.begin(), piece.end());
          loop.insert(loop.end(), piece.begin() + 1, piece.end());
        } else {
          continue;
        }
        used[j] = true;
        extended = true;
        break;
      }
      if (!extended)
        throw GeometryError("drivable_area: boundary polylines do not close into a loop");
    }
    loop.pop_back();  // drop the duplicated closing point
    if (loop.size() < 3)
      throw GeometryError("drivable_area: degenerate boundary loop");
    Polygon poly{std::move(loop)};
    make_ccw(poly);
    polys.push_back(std::move(poly));
  }
  return polys;
}

// ---------------------------------------------------------------------------
// Scenario validation

inline void validate_scenario(const Scenario& s) {
  if (s.dt <= 0.0) throw ValidationError("Scenario: dt must be positive");
  if (s.duration <= 0.0) throw ValidationError("Scenario: duration must be positive");
  for (const auto& pl : s.map) {
    if (pl.points.size() < 2)
      throw ValidationError("MapPolyline " + std::to_string(pl.id) + ": needs >= 2 points");
    for (std::size_t i = 1; i < pl.points.size(); ++i)
      if (dist(pl.points[i], pl.points[i - 1]) < 1e-12)
        throw ValidationError("MapPolyline " + std::to_string(pl.id) +
                              ": consecutive points must be distinct");
  }
  auto check_track = [&](const AgentTrack& tr, const std::string& who) {
    if (tr.states.empty()) throw ValidationError(who + ": track has no states");
    if (tr.length <= 0.0 || tr.width <= 0.0)
      throw ValidationError(who + ": footprint dimensions must be positive");
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
      if (tr.states[i].speed < 0.0) throw ValidationError(who + ": speed must be >= 0");
      if (i > 0) {
        double step = tr.states[i].t - tr.states[i - 1].t;
        if (step <= 0.0)
          throw ValidationError(who + ": timestamps must be strictly increasing");
        if (std::abs(step - s.dt) > 1e-6)
          throw ValidationError(who + ": AgentTrack timestamps must advance uniformly by dt");
      }
    }
  };
  check_track(s.ego_track, "ego");
  for (const auto& a : s.agents) check_track(a, "agent " + std::to_string(a.agent_id));
  if (s.ego_track.start_time() > 1e-9 || s.ego_track.end_time() < s.duration - s.dt * 0.5)
    throw ValidationError("ego: track must span the full scenario duration");

  auto polys = drivable_area(s);  // raises GeometryError if boundaries do not close
  if (!point_in_any_polygon(s.goal, polys))
    throw ValidationError("Scenario: goal must lie inside the drivable area");

  // All agent states must stay within the scene bounding box (map bbox + margin).
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& pl : s.map)
    for (const auto& p : pl.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  const double margin = 1.0;
  auto in_bbox = [&](const AgentState& st) {
    return st.x >= xmin - margin && st.x <= xmax + margin && st.y >= ymin - margin &&
           st.y <= ymax + margin;
  };
  for (const auto& a : s.agents)
    for (const auto& st : a.states)
      if (!in_bbox(st))
        throw ValidationError("agent " + std::to_string(a.agent_id) +
                              ": state outside scene bounding box");
}

// ---------------------------------------------------------------------------
// Vectorization

enum class PolylineRole { ego, agent, map };

inline constexpr int kAttrWidth = 11;
// Attribute layout per feature row. The declared width is 11; slot 10 is a
// reserved zero.
//   [0..2] kind one-hot (map: lane/boundary/crosswalk; dynamic: veh/cyc/ped)
//   [3]    speed (m/s)            [4] cos heading   [5] sin heading (ego frame)
//   [6]    footprint length       [7] footprint width
//   [8]    speed limit (lane_center only)
//   [9]    polyline-local index   [10] reserved

struct FeatureRow {
  Vec2 start;
  Vec2 end;
  std::array<double, kAttrWidth> attrs{};
};

struct ScenePolyline {
  int polyline_id = 0;  // position within the PolylineSet
  PolylineRole role = PolylineRole::map;
  int source_id = 0;  // agent_id or map polyline id; ego uses its track id
  std::vector<FeatureRow> vectors;
};

struct PolylineSet {
  std::vector<ScenePolyline> polylines;
};

// A dynamic participant as seen at vectorization time: its uniform-step state
// history up to and including the current state.
struct DynamicView {
  int source_id = 0;
  AgentKind kind = AgentKind::vehicle;
  double length = 4.5;
  double width = 2.0;
  std::vector<AgentState> history;  // last element = current state
};

namespace detail {

inline std::array<double, kAttrWidth> dynamic_attrs(const DynamicView& view,
                                                    const AgentState& end_state,
                                                    double ego_heading, int local_index) {
  std::array<double, kAttrWidth> a{};
  a[static_cast<int>(view.kind)] = 1.0;
  a[3] = end_state.speed;
  a[4] = std::cos(end_state.heading - ego_heading);
  a[5] = std::sin(end_state.heading - ego_heading);
  a[6] = view.length;
  a[7] = view.width;
  a[9] = static_cast<double>(local_index);
  return a;
}

inline ScenePolyline vectorize_dynamic(const DynamicView& view, Vec2 origin,
                                       double heading, PolylineRole role) {
  ScenePolyline pl;
  pl.role = role;
  pl.source_id = view.source_id;
  const auto& h = view.history;
  if (h.size() < 2) {
    // Too little history: a single zero-length-padded vector, never dropped.
    AgentState cur = h.empty() ? AgentState{} : h.back();
    Vec2 p = to_frame(cur.pos(), origin, heading);
    FeatureRow row;
    row.start = p;
    row.end = p;
    row.attrs = dynamic_attrs(view, cur, heading, 0);
    pl.vectors.push_back(row);
    return pl;
  }
  for (std::size_t i = 1; i < h.size(); ++i) {
    FeatureRow row;
    row.start = to_frame(h[i - 1].pos(), origin, heading);
    row.end = to_frame(h[i].pos(), origin, heading);
    row.attrs = dynamic_attrs(view, h[i], heading, static_cast<int>(i) - 1);
    pl.vectors.push_back(row);
  }
  return pl;
}

}  // namespace detail

// Vectorizes explicit views. All coordinates are transformed into the ego
// frame at the current tick (ego at origin, heading along +x).
inline PolylineSet vectorize_views(const std::vector<MapPolyline>& map,
                                   const DynamicView& ego,
                                   const std::vector<DynamicView>& agents) {
  if (ego.history.empty())
    throw ValidationError("vectorize: ego view needs at least one state");
  const AgentState& cur = ego.history.back();
  Vec2 origin = cur.pos();
  double heading = cur.heading;

  PolylineSet out;
  out.polylines.push_back(detail::vectorize_dynamic(ego, origin, heading, PolylineRole::ego));
  for (const auto& agent : agents)
    out.polylines.push_back(
        detail::vectorize_dynamic(agent, origin, heading, PolylineRole::agent));
  for (const auto& pl : map) {
    ScenePolyline sp;
    sp.role = PolylineRole::map;
    sp.source_id = pl.id;
    for (std::size_t i = 1; i < pl.points.size(); ++i) {
      FeatureRow row;
      row.start = to_frame(pl.points[i - 1], origin, heading);
      row.end = to_frame(pl.points[i], origin, heading);
      row.attrs[static_cast<int>(pl.kind)] = 1.0;
      row.attrs[8] = pl.kind == MapKind::lane_center ? pl.speed_limit : 0.0;
      row.attrs[9] = static_cast<double>(i - 1);
      sp.vectors.push_back(row);
    }
    out.polylines.push_back(std::move(sp));
  }
  for (std::size_t i = 0; i < out.polylines.size(); ++i)
    out.polylines[i].polyline_id = static_cast<int>(i);
  return out;
}

inline DynamicView track_view_at(const AgentTrack& track, double t, int history_len) {
  DynamicView view;
  view.source_id = track.agent_id;
  view.kind = track.kind;
  view.length = track.length;
  view.width = track.width;
  for (const auto& st : track.states) {
    if (st.t <= t + 1e-9) view.history.push_back(st);
    if (static_cast<int>(view.history.size()) > history_len + 1)
      view.history.erase(view.history.begin());
  }
  if (view.history.empty()) view.history.push_back(track.states.front());
  return view;
}

// Vectorizes the logged scenario at time t with the given history window.
inline PolylineSet vectorize(const Scenario& scenario, double t, int history_len) {
  if (t < -1e-9 || t > scenario.duration + 1e-9)
    throw ValidationError("vectorize: t outside scenario duration");
  DynamicView ego = track_view_at(scenario.ego_track, t, history_len);
  std::vector<DynamicView> agents;
  agents.reserve(scenario.agents.size());
  for (const auto& a : scenario.agents) agents.push_back(track_view_at(a, t, history_len));
  return vectorize_views(scenario.map, ego, agents);
}

}  // namespace cip
