#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cip/kinematics.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

struct ScenarioConfig {
  double dt = 0.1;
  double duration = 20.0;
  int lanes_per_direction = 1;  // intersection arms; total lane count for jams
  double lane_width = 3.5;
  int agent_count = 4;
  double speed_limit = 12.0;   // m/s on intersection arms
  double arm_length = 60.0;    // intersection approach length
  double road_length = 220.0;  // jam road length
  double stop_duration = 6.0;  // jam leader full-stop length, seconds
  int ego_route = -1;          // intersection: 0 straight, 1 right, 2 left; -1 = seeded
};

inline void validate_config(const ScenarioConfig& c) {
  if (c.lanes_per_direction < 1)
    throw ValidationError("ScenarioConfig: lanes_per_direction must be >= 1");
  if (c.agent_count < 0) throw ValidationError("ScenarioConfig: agent_count must be >= 0");
  if (c.lane_width < 2.5) throw ValidationError("ScenarioConfig: lane_width must be >= 2.5");
  if (c.dt <= 0.0 || c.duration < 5.0)
    throw ValidationError("ScenarioConfig: need dt > 0 and duration >= 5");
  if (c.arm_length < 20.0)
    throw GeometryError("ScenarioConfig: arm_length < 20 cannot close the boundary polygon");
  if (c.road_length < 50.0) throw ValidationError("ScenarioConfig: road_length must be >= 50");
}

// ---------------------------------------------------------------------------
// Arc-length parameterized path

struct RoutePath {
  std::vector<Vec2> pts;
  std::vector<double> cum;  // cumulative arc length per point

  void rebuild() {
    cum.resize(pts.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i > 0) s += dist(pts[i], pts[i - 1]);
      cum[i] = s;
    }
  }
  double length() const { return cum.empty() ? 0.0 : cum.back(); }

  Vec2 pos_at(double s) const {
    if (pts.empty()) return {};
    if (s <= 0.0) return pts.front();
    if (s >= length()) return pts.back();
    std::size_t hi = 1;
    while (cum[hi] < s) ++hi;
    double u = (s - cum[hi - 1]) / (cum[hi] - cum[hi - 1]);
    return pts[hi - 1] + u * (pts[hi] - pts[hi - 1]);
  }

  double heading_at(double s) const {
    if (pts.size() < 2) return 0.0;
    std::size_t hi = 1;
    double sc = clamp(s, 0.0, length());
    while (hi + 1 < pts.size() && cum[hi] < sc) ++hi;
    Vec2 d = pts[hi] - pts[hi - 1];
    return std::atan2(d.y, d.x);
  }

  // Arc length of the closest point on the path.
  double project(Vec2 p) const {
    double best_d = 1e300, best_s = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      Vec2 a = pts[i - 1], b = pts[i];
      Vec2 ab = b - a;
      double len2 = dot(ab, ab);
      double u = len2 > 0.0 ? clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
      Vec2 q = a + u * ab;
      double d = dist(p, q);
      if (d < best_d) {
        best_d = d;
        best_s = cum[i - 1] + u * std::sqrt(len2);
      }
    }
    return best_s;
  }

  // Discrete three-point curvature magnitude near s.
  double curvature_at(double s) const {
    double h = 1.0;
    Vec2 a = pos_at(s - h), b = pos_at(s), c = pos_at(s + h);
    double area2 = std::abs(cross(b - a, c - a));
    double la = dist(a, b), lb = dist(b, c), lc = dist(a, c);
    if (la * lb * lc < 1e-9) return 0.0;
    return 2.0 * area2 / (la * lb * lc);
  }
};

inline RoutePath make_route(std::vector<Vec2> pts) {
  RoutePath r;
  r.pts = std::move(pts);
  r.rebuild();
  return r;
}

// Quarter-ish arc sampled at roughly 0.5 m spacing.
inline void append_arc(std::vector<Vec2>& pts, Vec2 center, double radius,
                       double ang0, double ang1) {
  int n = std::max(4, static_cast<int>(std::ceil(std::abs(ang1 - ang0) * radius / 0.5)));
  for (int i = 1; i <= n; ++i) {
    double a = ang0 + (ang1 - ang0) * i / n;
    pts.push_back(center + Vec2{radius * std::cos(a), radius * std::sin(a)});
  }
}

// ---------------------------------------------------------------------------
// Intelligent-driver-style longitudinal rule

struct IdmParams {
  double accel = 2.0;
  double decel = 2.5;
  double min_gap = 2.0;
  double headway = 1.2;
};

inline double idm_accel(double v, double v_des, double gap, double v_lead,
                        const IdmParams& p = {}) {
  double vd = std::max(v_des, 0.1);
  double free_term = 1.0 - std::pow(v / vd, 4.0);
  if (gap > 1e8) return p.accel * free_term;
  if (gap <= 0.05) return -4.0 * p.decel;
  double s_star =
      p.min_gap + std::max(0.0, v * p.headway + v * (v - v_lead) /
                                    (2.0 * std::sqrt(p.accel * p.decel)));
  return p.accel * (free_term - (s_star / gap) * (s_star / gap));
}

namespace detail {

// A vehicle riding on a route: either IDM-following a predecessor or driving
// a scripted speed profile.
struct RailAgent {
  RoutePath route;
  double s = 0.0;
  double v = 0.0;
  double v_des = 10.0;
  double len = 4.5;
  double wid = 2.0;
  int follows = -1;                              // index of predecessor, -1 = free
  std::function<double(double)> scripted_speed;  // overrides IDM when set
};

inline AgentState rail_state(const RailAgent& a, double t) {
  Vec2 p = a.route.pos_at(a.s);
  AgentState st;
  st.t = t;
  st.x = p.x;
  st.y = p.y;
  st.heading = a.route.heading_at(a.s);
  st.speed = a.v;
  return st;
}

// Steps every rail agent over [0, duration] and returns per-agent state logs.
inline std::vector<std::vector<AgentState>> simulate_rails(std::vector<RailAgent>& agents,
                                                           double dt, double duration) {
  int steps = static_cast<int>(std::round(duration / dt));
  std::vector<std::vector<AgentState>> logs(agents.size());
  for (auto& log : logs) log.reserve(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    double t = k * dt;
    for (std::size_t i = 0; i < agents.size(); ++i) logs[i].push_back(rail_state(agents[i], t));
    for (std::size_t i = 0; i < agents.size(); ++i) {
      RailAgent& a = agents[i];
      if (a.scripted_speed) {
        a.v = std::max(0.0, a.scripted_speed(t + dt));
      } else {
        double gap = 1e9, v_lead = 0.0;
        if (a.follows >= 0) {
          const RailAgent& lead = agents[a.follows];
          gap = lead.s - a.s - 0.5 * (lead.len + a.len);
          v_lead = lead.v;
        }
        // Hold short of the route end so agents stay inside the scene box.
        double end_gap = a.route.length() - 3.0 - a.s;
        double acc;
        if (end_gap < gap) {
          acc = idm_accel(a.v, a.v_des, std::max(end_gap, 0.01), 0.0);
        } else {
          acc = idm_accel(a.v, a.v_des, gap, v_lead);
        }
        a.v = std::max(0.0, a.v + clamp(acc, -8.0, 3.0) * dt);
      }
      a.s += a.v * dt;
    }
  }
  return logs;
}

// Expert ego driver: pure-pursuit steering along the route plus IDM speed
// control with optional stop-line yielding. Returns uniform-dt states.
struct EgoDriver {
  RoutePath route;
  double v_des = 8.0;
  double ego_len = 4.5;
  KinematicLimits limits;
  double lat_accel_max = 2.5;

  double curve_speed_cap(double s) const {
    double cap = 1e9;
    for (double look = 0.0; look <= 14.0; look += 2.0) {
      double kappa = route.curvature_at(s + look);
      if (kappa > 1e-6) {
        cap = std::min(cap, 0.92 * limits.omega_max / kappa);
        cap = std::min(cap, std::sqrt(lat_accel_max / kappa));
      }
    }
    return cap;
  }

  // stop_gate(t, s): >0 means "stop that many meters before this arc length";
  // returns the stop arc-length if a stop is demanded, or +inf.
  std::vector<AgentState> drive(EgoState start, double dt, double duration,
                                const std::function<double(double, double)>& stop_line,
                                const std::function<std::pair<double, double>(double)>& lead) {
    int steps = static_cast<int>(std::round(duration / dt));
    std::vector<AgentState> log;
    log.reserve(steps + 1);
    EgoState s = start;
    for (int k = 0; k <= steps; ++k) {
      double t = k * dt;
      log.push_back(AgentState{t, s.x, s.y, s.heading, s.speed});
      if (k == steps) break;

      double arc = route.project(s.pos());
      double v_cap = std::min(v_des, curve_speed_cap(arc));
      double acc = idm_accel(s.speed, v_cap, 1e9, 0.0);
      // Hold short of the route end.
      double end_gap = route.length() - 0.5 * ego_len - 1.0 - arc;
      acc = std::min(acc, idm_accel(s.speed, v_cap, std::max(end_gap, 0.01), 0.0));
      if (lead) {
        auto [gap, v_lead] = lead(t);
        acc = std::min(acc, idm_accel(s.speed, v_cap, std::max(gap, 0.01), v_lead));
      }
      if (stop_line) {
        double stop_s = stop_line(t, arc);
        if (stop_s < 1e8) {
          double gap = stop_s - arc - 0.5 * ego_len;
          acc = std::min(acc, idm_accel(s.speed, v_cap, std::max(gap, 0.01), 0.0));
        }
      }

      // Pure pursuit toward a speed-scaled lookahead point on the route.
      double lookahead = std::max(2.5, 1.0 * s.speed);
      Vec2 target = route.pos_at(arc + lookahead);
      Vec2 local = to_frame(target, s.pos(), s.heading);
      double ld = std::max(norm(local), 0.3);
      double kappa = 2.0 * local.y / (ld * ld);
      double omega = clamp(s.speed * kappa, -limits.omega_max, limits.omega_max);
      s = step_bicycle(s, {clamp(acc, -limits.a_max, limits.a_max), omega}, dt, limits);
    }
    return log;
  }
};

inline AgentTrack make_track(int id, AgentKind kind, double len, double wid,
                             std::vector<AgentState> states) {
  AgentTrack tr;
  tr.agent_id = id;
  tr.kind = kind;
  tr.length = len;
  tr.width = wid;
  tr.states = std::move(states);
  return tr;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Four-way unsignalized intersection.
//
// Roads run along the axes, right-hand traffic. The ego enters from the south
// heading north and drives straight, right, or left; crossing traffic rides
// the east-west through lanes that do not share the ego's exit lane. The
// expert yields at the stop line until the intersection box is clear for its
// whole crossing window, which keeps generated demonstrations constraint-
// abiding by construction.
inline Scenario generate_intersection(std::uint64_t seed, const ScenarioConfig& config) {
  validate_config(config);
  SplitMix64 rng(splitmix64_mix(seed ^ 0x1a2b3c4d5e6f7788ULL));

  const int n = config.lanes_per_direction;
  const double lw = config.lane_width;
  const double hw = n * lw + 1.2;  // half-width of each road, incl. shoulder
  const double arm = config.arm_length;
  const double ext = hw + arm;

  Scenario s;
  s.id = "intersection-" + std::to_string(seed);
  s.dt = config.dt;
  s.duration = config.duration;

  int next_id = 0;
  auto add_center = [&](std::vector<Vec2> pts, double limit) {
    MapPolyline pl;
    pl.id = next_id++;
    pl.kind = MapKind::lane_center;
    pl.speed_limit = limit;
    pl.points = std::move(pts);
    s.map.push_back(pl);
    return pl.id;
  };

  auto lane_off = [&](int i) { return (i + 0.5) * lw; };
  // Through centerlines: northbound (x>0), southbound (x<0), eastbound (y<0),
  // westbound (y>0).
  std::vector<RoutePath> east_routes, west_routes;
  for (int i = 0; i < n; ++i) {
    add_center({{lane_off(i), -ext}, {lane_off(i), ext}}, config.speed_limit);
    add_center({{-lane_off(i), ext}, {-lane_off(i), -ext}}, config.speed_limit);
    std::vector<Vec2> east = {{-ext, -lane_off(i)}, {ext, -lane_off(i)}};
    std::vector<Vec2> west = {{ext, lane_off(i)}, {-ext, lane_off(i)}};
    add_center(east, config.speed_limit);
    add_center(west, config.speed_limit);
    east_routes.push_back(make_route(east));
    west_routes.push_back(make_route(west));
  }

  // Plus-shaped boundary, counter-clockwise.
  {
    MapPolyline b;
    b.id = next_id++;
    b.kind = MapKind::road_boundary;
    b.points = {{hw, hw},   {hw, ext},   {-hw, ext},  {-hw, hw},  {-ext, hw},
                {-ext, -hw}, {-hw, -hw},  {-hw, -ext}, {hw, -ext}, {hw, -hw},
                {ext, -hw},  {ext, hw},   {hw, hw}};
    s.map.push_back(b);
  }
  {
    MapPolyline cw;
    cw.id = next_id++;
    cw.kind = MapKind::crosswalk;
    cw.points = {{-hw, hw + 1.5}, {hw, hw + 1.5}};
    s.map.push_back(cw);
  }

  // Ego route: approach on the first northbound lane, then straight / right /
  // left. Crossing agents are kept off the ego's exit lane.
  int route_kind = config.ego_route >= 0 ? config.ego_route % 3 : rng.uniform_int(0, 2);
  std::vector<Vec2> ego_pts;
  if (route_kind == 0) {
    ego_pts = {{lane_off(0), -ext}, {lane_off(0), ext}};
  } else if (route_kind == 1) {
    // Right turn onto the eastbound arm: a smooth tangent arc whose radius is
    // bounded by the clearance to the inside curb corner at (hw, -hw).
    double r = std::min(7.0, (std::sqrt(2.0) * (hw - lane_off(0)) - 1.3) /
                                 (std::sqrt(2.0) - 1.0));
    ego_pts = {{lane_off(0), -ext}, {lane_off(0), -(lane_off(0) + r)}};
    append_arc(ego_pts, {lane_off(0) + r, -(lane_off(0) + r)}, r, kPi, 0.5 * kPi);
    ego_pts.push_back({ext, -lane_off(0)});
  } else {  // left turn onto the westbound arm
    ego_pts = {{lane_off(0), -ext}, {lane_off(0), -hw}};
    append_arc(ego_pts, {-hw, -hw}, hw + lane_off(0), 0.0, 0.5 * kPi);
    ego_pts.push_back({-ext, lane_off(0)});
  }
  RoutePath ego_route = make_route(ego_pts);
  add_center(ego_pts, config.speed_limit);

  // Crossing traffic: eastbound conflicts with a left-turning ego exit lane,
  // westbound with a right-turning one, so exclude the shared-direction side.
  std::vector<int> dirs;  // 0 = eastbound, 1 = westbound
  for (int i = 0; i < config.agent_count; ++i) {
    if (route_kind == 1) dirs.push_back(0);
    else if (route_kind == 2) dirs.push_back(1);
    else dirs.push_back(i % 2);
  }
  std::vector<detail::RailAgent> rails;
  int per_dir[2] = {0, 0};
  int last_in_dir[2][8];
  for (int d = 0; d < 2; ++d)
    for (int l = 0; l < 8; ++l) last_in_dir[d][l] = -1;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    int d = dirs[i];
    int lane = per_dir[d] % n;
    detail::RailAgent a;
    a.route = d == 0 ? east_routes[lane] : west_routes[lane];
    double gap0 = rng.uniform(6.0, 22.0);
    int ahead = last_in_dir[d][lane];
    double base = ahead >= 0 ? rails[ahead].s : arm - gap0;
    a.s = std::max(2.0, base - rng.uniform(14.0, 24.0));
    a.v_des = rng.uniform(0.55, 0.95) * config.speed_limit;
    a.v = std::min(a.v_des, rng.uniform(4.0, 8.0));
    a.follows = ahead;
    last_in_dir[d][lane] = static_cast<int>(rails.size());
    rails.push_back(a);
    ++per_dir[d];
  }
  auto agent_logs = detail::simulate_rails(rails, s.dt, s.duration);
  for (std::size_t i = 0; i < rails.size(); ++i)
    s.agents.push_back(detail::make_track(static_cast<int>(i) + 1, AgentKind::vehicle,
                                          rails[i].len, rails[i].wid, agent_logs[i]));

  // Intersection-box occupancy per step, inflated by half a car length.
  int steps = static_cast<int>(std::round(s.duration / s.dt));
  std::vector<char> occupied(steps + 1, 0);
  for (int k = 0; k <= steps; ++k) {
    double t = k * s.dt;
    for (const auto& a : s.agents) {
      AgentState st = track_state_at(a, t);
      double m = 0.5 * a.length + 1.5;
      if (st.x >= -hw - m && st.x <= hw + m && st.y >= -hw - m && st.y <= hw + m) {
        occupied[k] = 1;
        break;
      }
    }
  }
  auto box_clear = [&](double t0, double t1) {
    int k0 = std::max(0, static_cast<int>(std::floor(t0 / s.dt)));
    int k1 = std::min(steps, static_cast<int>(std::ceil(t1 / s.dt)));
    for (int k = k0; k <= k1; ++k)
      if (occupied[k]) return false;
    return true;
  };

  detail::EgoDriver driver;
  driver.route = ego_route;
  driver.v_des = rng.uniform(0.7, 0.95) * config.speed_limit;

  const double s_box_entry = ego_route.project({lane_off(0), -hw});
  const double s_box_exit = s_box_entry + (route_kind == 0 ? 2.0 * hw
                                           : route_kind == 1 ? (hw - lane_off(0)) * 0.5 * kPi
                                                             : (hw + lane_off(0)) * 0.5 * kPi) + 2.0;
  auto stop_line = [&](double t, double arc) -> double {
    if (arc + 0.5 * driver.ego_len >= s_box_entry - 0.6) return 1e9;  // committed
    double v_est = std::max(std::min(driver.v_des, driver.curve_speed_cap(s_box_entry)), 1.2);
    double eta = std::max(0.0, (s_box_entry - arc) / std::max(v_est, 1.0));
    double t_cross = (s_box_exit - std::min(arc, s_box_entry)) / v_est + 1.0;
    if (box_clear(t + eta, t + eta + t_cross)) return 1e9;
    return s_box_entry - 0.8;
  };

  EgoState start;
  start.x = lane_off(0);
  start.y = -ext + 4.0;
  start.heading = 0.5 * kPi;
  start.speed = std::min(driver.v_des, rng.uniform(5.0, 8.0));
  auto ego_log = driver.drive(start, s.dt, s.duration, stop_line, nullptr);
  s.ego_track = detail::make_track(0, AgentKind::vehicle, 4.5, 2.0, std::move(ego_log));

  // Goal: a point the expert passes shortly before the end of the episode.
  AgentState near_end = track_state_at(s.ego_track, s.duration - 3.0);
  s.goal = {near_end.x, near_end.y};
  validate_scenario(s);
  return s;
}

// ---------------------------------------------------------------------------
// Straight multi-lane road with a stop-and-go platoon ahead of the ego.
//
// The platoon leader executes a scripted cruise / full-stop / resume profile
// (the stop lasts config.stop_duration seconds); followers and the expert ego
// run the car-following rule behind it.
inline Scenario generate_trafficjam(std::uint64_t seed, const ScenarioConfig& config) {
  validate_config(config);
  if (config.agent_count < 1)
    throw ValidationError("generate_trafficjam: needs at least one lead vehicle");
  SplitMix64 rng(splitmix64_mix(seed ^ 0x9d8c7b6a59483726ULL));

  const int n = config.lanes_per_direction;
  const double lw = config.lane_width;
  const double half = 0.5 * n * lw;
  const double edge = half + 1.2;  // road edge incl. shoulder
  const double len = config.road_length;

  Scenario s;
  s.id = "jam-" + std::to_string(seed);
  s.dt = config.dt;
  s.duration = config.duration;

  const double x0 = -30.0;  // road extends behind the ego start
  auto lane_y = [&](int i) { return (i + 0.5) * lw - half; };
  for (int i = 0; i < n; ++i) {
    MapPolyline pl;
    pl.id = i;
    pl.kind = MapKind::lane_center;
    pl.speed_limit = 15.0;
    pl.points = {{x0, lane_y(i)}, {len, lane_y(i)}};
    s.map.push_back(pl);
  }
  {
    MapPolyline b;
    b.id = n;
    b.kind = MapKind::road_boundary;
    b.points = {{x0, -edge}, {len, -edge}, {len, edge}, {x0, edge}, {x0, -edge}};
    s.map.push_back(b);
  }

  const int ego_lane = 0;
  RoutePath lane_route = make_route({{x0, lane_y(ego_lane)}, {len, lane_y(ego_lane)}});

  double v0 = rng.uniform(6.0, 9.5);
  double t_brake = rng.uniform(2.5, 4.5);
  double decel = 2.2;
  double t_stopped = t_brake + v0 / decel;
  double t_go = t_stopped + config.stop_duration;
  double accel = 1.6;
  auto leader_speed = [=](double t) {
    if (t < t_brake) return v0;
    if (t < t_stopped) return std::max(0.0, v0 - decel * (t - t_brake));
    if (t < t_go) return 0.0;
    return std::min(v0, accel * (t - t_go));
  };

  std::vector<detail::RailAgent> rails;
  double ego_anchor = 12.0 + rng.uniform(0.0, 6.0);
  double cursor = ego_anchor;
  for (int i = 0; i < config.agent_count; ++i) {
    cursor += rng.uniform(9.0, 14.0);
    detail::RailAgent a;
    a.route = lane_route;
    a.s = cursor - x0;  // rail arc length measured from the route start
    a.v = v0;
    a.v_des = v0 + 2.0;
    a.follows = i == 0 ? -1 : static_cast<int>(rails.size()) - 1;
    rails.push_back(a);
  }
  // The platoon head (largest s) is the scripted stop-and-go leader; IDM
  // followers were appended tail-to-head, so reverse the follow pointers.
  for (std::size_t i = 0; i + 1 < rails.size(); ++i) rails[i].follows = static_cast<int>(i) + 1;
  rails.back().follows = -1;
  rails.back().scripted_speed = leader_speed;

  auto agent_logs = detail::simulate_rails(rails, s.dt, s.duration);
  for (std::size_t i = 0; i < rails.size(); ++i)
    s.agents.push_back(detail::make_track(static_cast<int>(i) + 1, AgentKind::vehicle,
                                          rails[i].len, rails[i].wid, agent_logs[i]));

  const AgentTrack& tail = s.agents.front();  // smallest s = nearest platoon car
  detail::EgoDriver driver;
  driver.route = lane_route;
  driver.v_des = v0 + 1.0;

  EgoState start;
  start.x = ego_anchor - rng.uniform(7.0, 10.0);
  start.y = lane_y(ego_lane);
  start.heading = 0.0;
  start.speed = v0;
  auto lead = [&](double t) -> std::pair<double, double> {
    AgentState st = track_state_at(tail, t);
    return {st.x, st.speed};
  };
  int steps = static_cast<int>(std::round(s.duration / s.dt));
  std::vector<AgentState> ego_log;
  ego_log.reserve(steps + 1);
  EgoState es = start;
  for (int k = 0; k <= steps; ++k) {
    double t = k * s.dt;
    ego_log.push_back(AgentState{t, es.x, es.y, es.heading, es.speed});
    if (k == steps) break;
    double arc = lane_route.project(es.pos());
    auto [lead_x, lead_v] = lead(t);
    double gap = lead_x - es.x - 0.5 * (tail.length + 4.5);
    double acc = idm_accel(es.speed, driver.v_des, std::max(gap, 0.01), lead_v);
    double lookahead = std::max(2.5, 1.0 * es.speed);
    Vec2 target = lane_route.pos_at(arc + lookahead);
    Vec2 local = to_frame(target, es.pos(), es.heading);
    double ld = std::max(norm(local), 0.3);
    double omega = clamp(es.speed * 2.0 * local.y / (ld * ld), -driver.limits.omega_max,
                         driver.limits.omega_max);
    es = step_bicycle(es, {clamp(acc, -driver.limits.a_max, driver.limits.a_max), omega},
                      s.dt, driver.limits);
  }
  s.ego_track = detail::make_track(0, AgentKind::vehicle, 4.5, 2.0, std::move(ego_log));

  AgentState near_end = track_state_at(s.ego_track, s.duration - 3.0);
  s.goal = {near_end.x, near_end.y};
  validate_scenario(s);
  return s;
}

}  // namespace cip
