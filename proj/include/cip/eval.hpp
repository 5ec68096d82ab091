#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cip/encoder.hpp"
#include "cip/labeling.hpp"
#include "cip/model.hpp"
#include "cip/planner.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

struct EvalConfig {
  int replan_every = 5;       // steps executed per planning tick
  double r_goal = 2.0;        // meters
  double timeout_extra = 2.0; // seconds past the scenario duration
};

enum class Outcome { success, collision, out_of_map, timeout };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::collision: return "collision";
    case Outcome::out_of_map: return "out_of_map";
    case Outcome::timeout: return "timeout";
  }
  return "timeout";
}

struct AttentionEntry {
  int polyline_id = 0;
  PolylineRole role = PolylineRole::map;
  int source_id = 0;
  double weight = 0.0;
};

struct TickRecord {
  double t = 0.0;
  int chosen = 0;
  int n_candidates = 0;
  int n_colliding = 0;  // candidate collision verdicts at this tick
  bool eq1_fallback = false;
  std::vector<AttentionEntry> attention;
  Trajectory chosen_trajectory;
};

struct EpisodeResult {
  std::string scenario_id;
  Outcome outcome = Outcome::timeout;
  double distance_driven = 0.0;
  double distance_toward_goal = 0.0;
  double expert_distance = 0.0;
  std::vector<TickRecord> ticks;
  std::vector<AgentState> executed;  // ego state log at dt resolution
};

// ---------------------------------------------------------------------------
// Closed loop

// Receding-horizon execution: plan, execute the first replan_every steps,
// repeat. Other agents replay their logs. Termination precedence at every
// executed step: collision, then out-of-map, then goal, then timeout.
inline EpisodeResult run_closed_loop(const Scenario& scenario, const ModelParams& m,
                                     ScoringMode mode, const EvalConfig& cfg = {}) {
  const ModelConfig& mc = m.cfg;
  if (cfg.replan_every < 1 || cfg.replan_every > mc.horizon)
    throw ValidationError("run_closed_loop: replan_every must be in [1, H]");
  const Footprint fp{scenario.ego_track.length, scenario.ego_track.width};
  const auto drivable = drivable_area(scenario);
  const double t_end = scenario.duration + cfg.timeout_extra;

  EpisodeResult ep;
  ep.scenario_id = scenario.id;

  const AgentState& s0 = scenario.ego_track.states.front();
  ep.executed.push_back(s0);

  {
    double d0 = dist(s0.pos(), scenario.goal);
    double dmin = d0;
    for (const auto& st : scenario.ego_track.states)
      dmin = std::min(dmin, dist(st.pos(), scenario.goal));
    ep.expert_distance = std::max(0.0, d0 - dmin);
  }

  double t = 0.0;
  double min_goal_dist = dist(s0.pos(), scenario.goal);
  bool done = false;
  while (!done) {
    // Plan from the executed history.
    DynamicView ego_view;
    ego_view.source_id = scenario.ego_track.agent_id;
    ego_view.kind = scenario.ego_track.kind;
    ego_view.length = scenario.ego_track.length;
    ego_view.width = scenario.ego_track.width;
    std::size_t first = ep.executed.size() > static_cast<std::size_t>(mc.history_len + 1)
                            ? ep.executed.size() - (mc.history_len + 1)
                            : 0;
    ego_view.history.assign(ep.executed.begin() + first, ep.executed.end());
    std::vector<DynamicView> agent_views;
    agent_views.reserve(scenario.agents.size());
    for (const auto& a : scenario.agents)
      agent_views.push_back(track_view_at(a, t, mc.history_len));

    PolylineSet pset = vectorize_views(scenario.map, ego_view, agent_views);
    SceneEmbedding emb = encode_scene(m, pset);

    const AgentState& cur = ep.executed.back();
    EgoState start{cur.x, cur.y, normalize_heading(cur.heading),
                   clamp(cur.speed, 0.0, mc.limits.v_max)};
    TargetSelection sel = select_targets(m, emb, scenario.map, start);
    std::vector<Vec2> targets;
    for (int idx : sel.selected) targets.push_back(sel.pool[idx].world);
    CandidateSet cs = score(m, emb, estimate_motions(m, emb, targets, start), mode);
    int chosen = plan(cs);

    TickRecord rec;
    rec.t = t;
    rec.chosen = chosen;
    rec.n_candidates = cs.size();
    rec.eq1_fallback = cs.used_eq1_fallback;
    for (int i = 0; i < cs.size(); ++i)
      if (detect_collision(cs.trajectories[i], scenario, t, fp)) ++rec.n_colliding;
    for (std::size_t p = 0; p < emb.attention_weights.size(); ++p)
      rec.attention.push_back(AttentionEntry{emb.polyline_ids[p], emb.roles[p],
                                             emb.source_ids[p], emb.attention_weights[p]});
    rec.chosen_trajectory = cs.trajectories[chosen];
    ep.ticks.push_back(std::move(rec));

    // Execute the head of the chosen trajectory.
    for (int j = 1; j <= cfg.replan_every; ++j) {
      const EgoState& s = cs.trajectories[chosen].states[j];
      t += mc.dt;
      ep.distance_driven += dist(s.pos(), ep.executed.back().pos());
      ep.executed.push_back(AgentState{t, s.x, s.y, s.heading, s.speed});
      min_goal_dist = std::min(min_goal_dist, dist(s.pos(), scenario.goal));

      Obb ego_box = footprint_obb(s, fp);
      bool hit = false;
      for (const auto& agent : scenario.agents)
        if (obb_overlap(ego_box, track_obb_at(agent, t))) {
          hit = true;
          break;
        }
      if (hit) {
        ep.outcome = Outcome::collision;
        done = true;
        break;
      }
      bool outside = false;
      for (const Vec2& corner : obb_corners(ego_box))
        if (!point_in_any_polygon(corner, drivable)) {
          outside = true;
          break;
        }
      if (outside) {
        ep.outcome = Outcome::out_of_map;
        done = true;
        break;
      }
      if (dist(s.pos(), scenario.goal) <= cfg.r_goal) {
        ep.outcome = Outcome::success;
        done = true;
        break;
      }
      if (t >= t_end - 1e-9) {
        ep.outcome = Outcome::timeout;
        done = true;
        break;
      }
    }
  }
  double d0 = dist(s0.pos(), scenario.goal);
  ep.distance_toward_goal = std::max(0.0, d0 - min_goal_dist);
  return ep;
}

// ---------------------------------------------------------------------------
// Metrics

// Mean per-tick ratio of colliding candidates to total candidates, averaged
// over ticks within a scenario and then over scenarios.
inline double risk_factor(const std::vector<EpisodeResult>& episodes) {
  if (episodes.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ep : episodes) {
    double per_tick = 0.0;
    for (const auto& rec : ep.ticks)
      per_tick += rec.n_candidates > 0
                      ? static_cast<double>(rec.n_colliding) / rec.n_candidates
                      : 0.0;
    total += ep.ticks.empty() ? 0.0 : per_tick / static_cast<double>(ep.ticks.size());
  }
  return total / static_cast<double>(episodes.size());
}

struct MetricsReport {
  std::string config_id;
  int episodes = 0;
  double progress_rate = 0.0;   // percent, capped at 100 per episode
  double success_rate = 0.0;    // percent
  double collision_rate = 0.0;  // percent
  double mdbc = 0.0;            // meters
  double outside_road = 0.0;    // percent
  double risk = 0.0;            // risk factor, [0, 1]
  bool mdbc_no_collision = false;  // mdbc reports total distance, flagged
};

inline MetricsReport metrics(const std::vector<EpisodeResult>& episodes,
                             const std::string& config_id = {}) {
  if (episodes.empty()) throw ValidationError("metrics: empty episode list");
  MetricsReport r;
  r.config_id = config_id;
  r.episodes = static_cast<int>(episodes.size());
  int n_success = 0, n_collision = 0, n_outside = 0;
  double total_driven = 0.0, progress_sum = 0.0;
  for (const auto& ep : episodes) {
    if (ep.outcome == Outcome::success) ++n_success;
    if (ep.outcome == Outcome::collision) ++n_collision;
    if (ep.outcome == Outcome::out_of_map) ++n_outside;
    total_driven += ep.distance_driven;
    double expert = std::max(ep.expert_distance, 0.1);
    progress_sum += std::min(1.0, ep.distance_toward_goal / expert) * 100.0;
  }
  double n = static_cast<double>(episodes.size());
  r.progress_rate = progress_sum / n;
  r.success_rate = 100.0 * n_success / n;
  r.collision_rate = 100.0 * n_collision / n;
  r.outside_road = 100.0 * n_outside / n;
  r.mdbc = total_driven / std::max(1, n_collision);
  r.mdbc_no_collision = n_collision == 0;
  r.risk = risk_factor(episodes);
  return r;
}

// Table-style CSV row, mirroring the closed-loop report column set.
inline std::string metrics_csv_header() {
  return "config_id,episodes,progress_rate,success_rate,collision_rate,mdbc,"
         "outside_road,risk_factor,mdbc_no_collision";
}

inline std::string metrics_csv_row(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%.4f,%.4f,%.4f,%.4f,%.4f,%.6f,%d",
                r.config_id.c_str(), r.episodes, r.progress_rate, r.success_rate,
                r.collision_rate, r.mdbc, r.outside_road, r.risk, r.mdbc_no_collision ? 1 : 0);
  return buf;
}

// ---------------------------------------------------------------------------
// Episode serialization (consumed by the CLI and the SVG renderer)

inline const char* role_name(PolylineRole role) {
  switch (role) {
    case PolylineRole::ego: return "ego";
    case PolylineRole::agent: return "agent";
    case PolylineRole::map: return "map";
  }
  return "map";
}

inline PolylineRole role_from(const std::string& s) {
  if (s == "ego") return PolylineRole::ego;
  if (s == "agent") return PolylineRole::agent;
  if (s == "map") return PolylineRole::map;
  throw ParseError("episode record: unknown role '" + s + "'");
}

inline nlohmann::json episode_to_json(const EpisodeResult& ep) {
  nlohmann::json j;
  j["scenario_id"] = ep.scenario_id;
  j["outcome"] = outcome_name(ep.outcome);
  j["distance_driven"] = ep.distance_driven;
  j["distance_toward_goal"] = ep.distance_toward_goal;
  j["expert_distance"] = ep.expert_distance;
  j["executed"] = nlohmann::json::array();
  for (const auto& s : ep.executed) j["executed"].push_back({s.t, s.x, s.y, s.heading, s.speed});
  j["ticks"] = nlohmann::json::array();
  for (const auto& rec : ep.ticks) {
    nlohmann::json jt;
    jt["t"] = rec.t;
    jt["chosen"] = rec.chosen;
    jt["n_candidates"] = rec.n_candidates;
    jt["n_colliding"] = rec.n_colliding;
    jt["eq1_fallback"] = rec.eq1_fallback;
    jt["attention"] = nlohmann::json::array();
    for (const auto& a : rec.attention)
      jt["attention"].push_back({a.polyline_id, role_name(a.role), a.source_id, a.weight});
    jt["trajectory"] = nlohmann::json::array();
    for (const auto& s : rec.chosen_trajectory.states)
      jt["trajectory"].push_back({s.x, s.y, s.heading, s.speed});
    j["ticks"].push_back(std::move(jt));
  }
  return j;
}

inline EpisodeResult episode_from_json(const nlohmann::json& j) {
  EpisodeResult ep;
  try {
    ep.scenario_id = j.at("scenario_id").get<std::string>();
    std::string oc = j.at("outcome").get<std::string>();
    if (oc == "success") ep.outcome = Outcome::success;
    else if (oc == "collision") ep.outcome = Outcome::collision;
    else if (oc == "out_of_map") ep.outcome = Outcome::out_of_map;
    else ep.outcome = Outcome::timeout;
    ep.distance_driven = j.at("distance_driven").get<double>();
    ep.distance_toward_goal = j.at("distance_toward_goal").get<double>();
    ep.expert_distance = j.at("expert_distance").get<double>();
    for (const auto& row : j.at("executed"))
      ep.executed.push_back(AgentState{row.at(0).get<double>(), row.at(1).get<double>(),
                                       row.at(2).get<double>(), row.at(3).get<double>(),
                                       row.at(4).get<double>()});
    for (const auto& jt : j.at("ticks")) {
      TickRecord rec;
      rec.t = jt.at("t").get<double>();
      rec.chosen = jt.at("chosen").get<int>();
      rec.n_candidates = jt.at("n_candidates").get<int>();
      rec.n_colliding = jt.at("n_colliding").get<int>();
      rec.eq1_fallback = jt.at("eq1_fallback").get<bool>();
      for (const auto& a : jt.at("attention"))
        rec.attention.push_back(AttentionEntry{a.at(0).get<int>(),
                                               role_from(a.at(1).get<std::string>()),
                                               a.at(2).get<int>(), a.at(3).get<double>()});
      for (const auto& row : jt.at("trajectory"))
        rec.chosen_trajectory.states.push_back(
            EgoState{row.at(0).get<double>(), row.at(1).get<double>(),
                     row.at(2).get<double>(), row.at(3).get<double>()});
      ep.ticks.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("episode record: ") + e.what());
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Attention visualization (SVG frame per tick + JSON sidecar)

inline constexpr double kAttentionRadiusScale = 8.0;  // circle radius = scale * weight

namespace detail {

struct SvgMapper {
  double xmin, ymin, xmax, ymax, scale;
  double px(double x) const { return (x - xmin) * scale + 10.0; }
  double py(double y) const { return (ymax - y) * scale + 10.0; }
};

inline std::string svg_poly(const SvgMapper& mp, const std::vector<Vec2>& pts,
                            const char* style, bool close) {
  std::string out = close ? "<polygon points=\"" : "<polyline points=\"";
  char buf[64];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", mp.px(p.x), mp.py(p.y));
    out += buf;
  }
  out += "\" style=\"";
  out += style;
  out += "\"/>\n";
  return out;
}

}  // namespace detail

// Renders one tick: map, agent boxes, executed ego path, chosen trajectory,
// and circles on the two highest-attention polylines with radius proportional
// to the weight. Returns the SVG document.
inline std::string render_attention_frame(const Scenario& scenario, const EpisodeResult& ep,
                                          std::size_t tick_index) {
  const TickRecord& rec = ep.ticks.at(tick_index);
  double xmin = 1e300, ymin = 1e300, xmax = -1e300, ymax = -1e300;
  for (const auto& pl : scenario.map)
    for (const auto& p : pl.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  detail::SvgMapper mp{xmin, ymin, xmax, ymax, 0.0};
  mp.scale = 780.0 / std::max(xmax - xmin, 1.0);
  double w = (xmax - xmin) * mp.scale + 20.0;
  double h = (ymax - ymin) * mp.scale + 20.0;

  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                w, h);
  svg += buf;
  for (const auto& pl : scenario.map) {
    const char* style = pl.kind == MapKind::road_boundary
                            ? "fill:none;stroke:#222;stroke-width:2"
                            : (pl.kind == MapKind::crosswalk
                                   ? "fill:none;stroke:#57a;stroke-width:1;stroke-dasharray:4"
                                   : "fill:none;stroke:#bbb;stroke-width:1;stroke-dasharray:6");
    svg += detail::svg_poly(mp, pl.points, style, false);
  }
  for (const auto& agent : scenario.agents) {
    auto corners = obb_corners(track_obb_at(agent, rec.t));
    svg += detail::svg_poly(mp, {corners.begin(), corners.end()},
                            "fill:#4a7fd4;fill-opacity:0.8;stroke:#1a3f84", true);
  }
  {
    AgentState cur = ep.executed.front();
    std::vector<Vec2> path;
    for (const auto& s : ep.executed)
      if (s.t <= rec.t + 1e-9) {
        path.push_back(s.pos());
        cur = s;
      }
    if (path.size() >= 2)
      svg += detail::svg_poly(mp, path, "fill:none;stroke:#a22;stroke-width:1.5", false);
    std::vector<Vec2> traj;
    for (const auto& s : rec.chosen_trajectory.states) traj.push_back(s.pos());
    if (traj.size() >= 2)
      svg += detail::svg_poly(mp, traj,
                              "fill:none;stroke:#2a4;stroke-width:1.5;stroke-dasharray:3",
                              false);
    auto corners = obb_corners(Obb{{cur.x, cur.y}, cur.heading, scenario.ego_track.length,
                                   scenario.ego_track.width});
    svg += detail::svg_poly(mp, {corners.begin(), corners.end()},
                            "fill:#d44;fill-opacity:0.9;stroke:#801", true);
  }

  // Top-2 attention circles; ties by lower polyline id.
  std::vector<int> order(rec.attention.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (rec.attention[a].weight != rec.attention[b].weight)
      return rec.attention[a].weight > rec.attention[b].weight;
    return rec.attention[a].polyline_id < rec.attention[b].polyline_id;
  });
  for (std::size_t k = 0; k < std::min<std::size_t>(2, order.size()); ++k) {
    const AttentionEntry& a = rec.attention[order[k]];
    Vec2 at;
    if (a.role == PolylineRole::ego) {
      const AgentState* cur = &ep.executed.front();
      for (const auto& s : ep.executed)
        if (s.t <= rec.t + 1e-9) cur = &s;
      at = cur->pos();
    } else if (a.role == PolylineRole::agent) {
      for (const auto& agent : scenario.agents)
        if (agent.agent_id == a.source_id) at = track_state_at(agent, rec.t).pos();
    } else {
      for (const auto& pl : scenario.map)
        if (pl.id == a.source_id) at = pl.points[pl.points.size() / 2];
    }
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.3f\" "
                  "style=\"fill:none;stroke:#e80;stroke-width:2\"/>\n",
                  mp.px(at.x), mp.py(at.y), kAttentionRadiusScale * a.weight * mp.scale);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

// Writes frame_XXXX.svg per tick plus attention.json with the raw weights.
inline void export_attention(const Scenario& scenario, const EpisodeResult& ep,
                             const std::string& out_dir) {
  nlohmann::json sidecar = nlohmann::json::array();
  for (std::size_t i = 0; i < ep.ticks.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "/frame_%04d.svg", static_cast<int>(i));
    std::ofstream out(out_dir + name);
    if (!out) throw std::runtime_error("export_attention: cannot write to " + out_dir);
    out << render_attention_frame(scenario, ep, i);
    nlohmann::json jt;
    jt["t"] = ep.ticks[i].t;
    jt["weights"] = nlohmann::json::array();
    for (const auto& a : ep.ticks[i].attention)
      jt["weights"].push_back({{"polyline_id", a.polyline_id},
                               {"role", role_name(a.role)},
                               {"source_id", a.source_id},
                               {"weight", a.weight}});
    sidecar.push_back(std::move(jt));
  }
  std::ofstream out(out_dir + "/attention.json");
  if (!out) throw std::runtime_error("export_attention: cannot write to " + out_dir);
  out << sidecar.dump(2) << "\n";
}

}  // namespace cip
