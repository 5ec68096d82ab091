#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

namespace detail {

inline const char* map_kind_name(MapKind k) {
  switch (k) {
    case MapKind::lane_center: return "lane_center";
    case MapKind::road_boundary: return "road_boundary";
    case MapKind::crosswalk: return "crosswalk";
  }
  return "lane_center";
}

inline MapKind map_kind_from(const std::string& s) {
  if (s == "lane_center") return MapKind::lane_center;
  if (s == "road_boundary") return MapKind::road_boundary;
  if (s == "crosswalk") return MapKind::crosswalk;
  throw ParseError("map.kind: unknown value '" + s + "'");
}

inline const char* agent_kind_name(AgentKind k) {
  switch (k) {
    case AgentKind::vehicle: return "vehicle";
    case AgentKind::cyclist: return "cyclist";
    case AgentKind::pedestrian: return "pedestrian";
  }
  return "vehicle";
}

inline AgentKind agent_kind_from(const std::string& s) {
  if (s == "vehicle") return AgentKind::vehicle;
  if (s == "cyclist") return AgentKind::cyclist;
  if (s == "pedestrian") return AgentKind::pedestrian;
  throw ParseError("agent.kind: unknown value '" + s + "'");
}

inline nlohmann::json track_to_json(const AgentTrack& tr) {
  nlohmann::json j;
  j["agent_id"] = tr.agent_id;
  j["kind"] = agent_kind_name(tr.kind);
  j["footprint"] = {tr.length, tr.width};
  auto& states = j["states"];
  states = nlohmann::json::array();
  for (const auto& s : tr.states) states.push_back({s.t, s.x, s.y, s.heading, s.speed});
  return j;
}

inline AgentTrack track_from_json(const nlohmann::json& j, const std::string& where) {
  AgentTrack tr;
  try {
    tr.agent_id = j.at("agent_id").get<int>();
    tr.kind = agent_kind_from(j.at("kind").get<std::string>());
    const auto& fp = j.at("footprint");
    tr.length = fp.at(0).get<double>();
    tr.width = fp.at(1).get<double>();
    for (const auto& row : j.at("states")) {
      if (row.size() != 5)
        throw ParseError(where + ".states: each state must be [t, x, y, heading, speed]");
      AgentState s;
      s.t = row.at(0).get<double>();
      s.x = row.at(1).get<double>();
      s.y = row.at(2).get<double>();
      s.heading = row.at(3).get<double>();
      s.speed = row.at(4).get<double>();
      tr.states.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return tr;
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["dt"] = s.dt;
  j["duration"] = s.duration;
  j["goal"] = {s.goal.x, s.goal.y};
  j["map"] = nlohmann::json::array();
  for (const auto& pl : s.map) {
    nlohmann::json m;
    m["id"] = pl.id;
    m["kind"] = detail::map_kind_name(pl.kind);
    m["speed_limit"] = pl.speed_limit;
    auto& pts = m["points"];
    pts = nlohmann::json::array();
    for (const auto& p : pl.points) pts.push_back({p.x, p.y});
    j["map"].push_back(std::move(m));
  }
  j["agents"] = nlohmann::json::array();
  for (const auto& a : s.agents) j["agents"].push_back(detail::track_to_json(a));
  j["ego"] = detail::track_to_json(s.ego_track);
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  try {
    s.id = j.value("id", std::string{});
    s.dt = j.at("dt").get<double>();
    s.duration = j.at("duration").get<double>();
    const auto& goal = j.at("goal");
    s.goal = {goal.at(0).get<double>(), goal.at(1).get<double>()};
    for (const auto& m : j.at("map")) {
      MapPolyline pl;
      pl.id = m.at("id").get<int>();
      pl.kind = detail::map_kind_from(m.at("kind").get<std::string>());
      pl.speed_limit = m.value("speed_limit", 0.0);
      for (const auto& p : m.at("points"))
        pl.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      s.map.push_back(std::move(pl));
    }
    for (const auto& a : j.at("agents"))
      s.agents.push_back(detail::track_from_json(a, "agents"));
    s.ego_track = detail::track_from_json(j.at("ego"), "ego");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("Scenario: ") + e.what());
  }
  validate_scenario(s);
  return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_scenario: cannot open " + path);
  out << scenario_to_json(s).dump(2) << "\n";
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_scenario: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("load_scenario: " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// inD-style CSV track ingestion.
//
// Required columns: trackId, frame, xCenter, yCenter, heading, xVelocity,
// yVelocity, width, length. Extra columns are ignored. `heading` is in
// degrees (drone-dataset convention); frames must be consecutive per track at
// the declared frame rate. Tracks are resampled to the uniform dt grid by
// linear interpolation.
inline std::vector<AgentTrack> ingest_csv_tracks(const std::string& path,
                                                 double frame_rate_hz, double dt) {
  if (frame_rate_hz <= 0.0) throw ValidationError("ingest_csv_tracks: frame rate must be > 0");
  if (dt <= 0.0) throw ValidationError("ingest_csv_tracks: dt must be > 0");
  std::ifstream in(path);
  if (!in) throw ParseError("ingest_csv_tracks: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("ingest_csv_tracks: empty file " + path);
  auto split = [](const std::string& str) {
    std::vector<std::string> cells;
    std::stringstream ss(str);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!str.empty() && str.back() == ',') cells.push_back("");
    return cells;
  };
  auto header = split(line);
  std::map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = header[i];
    name.erase(std::remove_if(name.begin(), name.end(),
                              [](unsigned char c) { return c == '\r' || c == ' '; }),
               name.end());
    col[name] = static_cast<int>(i);
  }
  for (const char* required : {"trackId", "frame", "xCenter", "yCenter", "heading",
                               "xVelocity", "yVelocity", "width", "length"})
    if (!col.count(required))
      throw ParseError("ingest_csv_tracks: missing column '" + std::string(required) + "'");

  struct RawRow {
    long frame;
    double x, y, heading_deg, vx, vy, width, length;
  };
  std::map<int, std::vector<RawRow>> by_track;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    auto field = [&](const char* name) -> const std::string& {
      int idx = col.at(name);
      if (idx >= static_cast<int>(cells.size()))
        throw ParseError("ingest_csv_tracks: line " + std::to_string(line_no) +
                         ": missing field '" + name + "'");
      return cells[idx];
    };
    try {
      RawRow r;
      int track_id = std::stoi(field("trackId"));
      r.frame = std::stol(field("frame"));
      r.x = std::stod(field("xCenter"));
      r.y = std::stod(field("yCenter"));
      r.heading_deg = std::stod(field("heading"));
      r.vx = std::stod(field("xVelocity"));
      r.vy = std::stod(field("yVelocity"));
      r.width = std::stod(field("width"));
      r.length = std::stod(field("length"));
      by_track[track_id].push_back(r);
    } catch (const std::invalid_argument&) {
      throw ParseError("ingest_csv_tracks: line " + std::to_string(line_no) +
                       ": malformed numeric field");
    }
  }

  std::vector<AgentTrack> tracks;
  for (auto& [track_id, rows] : by_track) {
    std::sort(rows.begin(), rows.end(),
              [](const RawRow& a, const RawRow& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].frame != rows[i - 1].frame + 1)
        throw ValidationError("ingest_csv_tracks: track " + std::to_string(track_id) +
                              ": AgentTrack timestamps must advance uniformly (missing frame " +
                              std::to_string(rows[i - 1].frame + 1) + ")");
    AgentTrack raw;
    raw.agent_id = track_id;
    raw.kind = AgentKind::vehicle;
    raw.length = rows.front().length;
    raw.width = rows.front().width;
    for (const auto& r : rows) {
      AgentState s;
      s.t = static_cast<double>(r.frame) / frame_rate_hz;
      s.x = r.x;
      s.y = r.y;
      s.heading = normalize_heading(r.heading_deg * kPi / 180.0);
      s.speed = std::hypot(r.vx, r.vy);
      raw.states.push_back(s);
    }
    // Resample onto the uniform dt grid spanning the logged window.
    AgentTrack res = raw;
    res.states.clear();
    double t0 = raw.states.front().t;
    double t1 = raw.states.back().t;
    int steps = static_cast<int>(std::floor((t1 - t0) / dt + 1e-9));
    for (int k = 0; k <= steps; ++k) {
      AgentState s = track_state_at(raw, t0 + k * dt);
      s.t = t0 + k * dt;
      res.states.push_back(s);
    }
    tracks.push_back(std::move(res));
  }
  return tracks;
}

}  // namespace cip
