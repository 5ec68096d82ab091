#pragma once

#include <optional>
#include <set>
#include <vector>

#include "cip/geometry.hpp"
#include "cip/kinematics.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

enum class ConstraintKind { collision, out_of_map, stuck };
using ConstraintSet = std::set<ConstraintKind>;

struct LabelingConfig {
  ConstraintSet enabled = {ConstraintKind::collision, ConstraintKind::out_of_map,
                           ConstraintKind::stuck};
  double stuck_time_threshold = 5.0;   // T, seconds
  double stuck_displacement = 0.5;     // total displacement below which a candidate is stationary
  double stationary_speed = 0.1;       // m/s; defines "the ego is stationary"
};

struct CandidateLabel {
  enum class Tag { unlabeled, best, violating };
  Tag tag = Tag::unlabeled;
  ConstraintKind kind = ConstraintKind::collision;  // meaningful when violating
};

struct ConstraintLabelSet {
  std::vector<CandidateLabel> labels;
  int best_index = -1;

  std::vector<int> violating_indices() const {
    std::vector<int> v;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i].tag == CandidateLabel::Tag::violating) v.push_back(static_cast<int>(i));
    return v;
  }
};

// ---------------------------------------------------------------------------
// Similarity and best-trajectory identification

// Sum of squared Euclidean distances between corresponding (x, y) samples.
inline double similarity(const Trajectory& a, const Trajectory& b) {
  if (a.states.size() != b.states.size())
    throw DimensionError("similarity: trajectories must share a horizon");
  double s = 0.0;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    double dx = a.states[i].x - b.states[i].x;
    double dy = a.states[i].y - b.states[i].y;
    s += dx * dx + dy * dy;
  }
  return s;
}

// argmin of the similarity to the ground truth; ties go to the lowest index.
inline int best_trajectory(const std::vector<Trajectory>& candidates, const Trajectory& gt) {
  if (candidates.empty()) throw ValidationError("best_trajectory: no candidates");
  int best = 0;
  double best_s = similarity(candidates[0], gt);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    double s = similarity(candidates[i], gt);
    if (s < best_s) {
      best_s = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Crops the expert demonstration to the candidate horizon starting at t0.
inline Trajectory expert_slice(const AgentTrack& ego_track, double t0, int horizon, double dt) {
  Trajectory traj;
  traj.states.reserve(horizon + 1);
  for (int j = 0; j <= horizon; ++j) {
    AgentState s = track_state_at(ego_track, t0 + j * dt);
    traj.states.push_back(EgoState{s.x, s.y, s.heading, s.speed});
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Violation detectors

struct Footprint {
  double length = 4.5;
  double width = 2.0;
};

inline Obb footprint_obb(const EgoState& s, const Footprint& fp) {
  return Obb{{s.x, s.y}, s.heading, fp.length, fp.width};
}

// First step at which the ego footprint box overlaps any agent box at the
// same absolute time; touching counts. Agents are non-reactive log replays.
inline std::optional<int> detect_collision(const Trajectory& traj, const Scenario& scenario,
                                           double t0, const Footprint& fp) {
  for (std::size_t j = 0; j < traj.states.size(); ++j) {
    Obb ego = footprint_obb(traj.states[j], fp);
    double t = t0 + static_cast<double>(j) * scenario.dt;
    for (const auto& agent : scenario.agents) {
      if (obb_overlap(ego, track_obb_at(agent, t)))
        return static_cast<int>(j);
    }
  }
  return std::nullopt;
}

// First step at which any footprint corner leaves every drivable polygon.
// Boundary points count as inside (closed-set convention).
inline std::optional<int> detect_out_of_map(const Trajectory& traj,
                                            const std::vector<Polygon>& drivable,
                                            const Footprint& fp) {
  for (std::size_t j = 0; j < traj.states.size(); ++j) {
    for (const Vec2& corner : obb_corners(footprint_obb(traj.states[j], fp))) {
      if (!point_in_any_polygon(corner, drivable))
        return static_cast<int>(j);
    }
  }
  return std::nullopt;
}

// Stuck rule: only applies once the ego has been stationary for longer than
// T. A candidate is stationary when its total displacement stays below the
// threshold. Stationary candidates are labeled only if at least one safe and
// non-stationary alternative exists (waiting in a jam stays unlabeled).
inline std::vector<int> detect_stuck(const std::vector<Trajectory>& candidates,
                                     double stationary_time, const std::vector<bool>& safe,
                                     const LabelingConfig& cfg = {}) {
  if (candidates.size() != safe.size())
    throw DimensionError("detect_stuck: candidates/safety verdicts size mismatch");
  if (stationary_time <= cfg.stuck_time_threshold) return {};
  std::vector<int> stationary;
  bool alternative = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    bool is_stationary = candidates[i].total_displacement() < cfg.stuck_displacement;
    if (is_stationary) stationary.push_back(static_cast<int>(i));
    else if (safe[i]) alternative = true;
  }
  if (!alternative) return {};
  return stationary;
}

// How long the ego has been continuously stationary up to (and including)
// time t0, judged from a state log.
inline double stationary_time_before(const AgentTrack& track, double t0,
                                     const LabelingConfig& cfg = {}) {
  double span = 0.0;
  for (auto it = track.states.rbegin(); it != track.states.rend(); ++it) {
    if (it->t > t0 + 1e-9) continue;
    if (it->speed >= cfg.stationary_speed) break;
    span = t0 - it->t;
  }
  return span;
}

// ---------------------------------------------------------------------------
// Full labeling pass

// Violating = union of the enabled detectors; Best = similarity argmin among
// the non-violating candidates; the rest stay unlabeled. Returns nullopt when
// every candidate violates (the tick is skipped and flagged by the caller).
// The stuck rule's safety verdicts always use both the collision and
// out-of-map detectors regardless of which kinds are enabled as labels.
inline std::optional<ConstraintLabelSet> label_candidates(
    const std::vector<Trajectory>& candidates, const Trajectory& expert_gt,
    const Scenario& scenario, double t0, const std::vector<Polygon>& drivable,
    const LabelingConfig& cfg, double stationary_time) {
  if (candidates.empty()) throw ValidationError("label_candidates: no candidates");
  const Footprint fp{scenario.ego_track.length, scenario.ego_track.width};

  const std::size_t n = candidates.size();
  std::vector<bool> collides(n, false), off_map(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    collides[i] = detect_collision(candidates[i], scenario, t0, fp).has_value();
    off_map[i] = detect_out_of_map(candidates[i], drivable, fp).has_value();
  }
  std::vector<bool> safe(n);
  for (std::size_t i = 0; i < n; ++i) safe[i] = !collides[i] && !off_map[i];

  ConstraintLabelSet out;
  out.labels.resize(n);
  auto mark = [&](std::size_t i, ConstraintKind kind) {
    if (out.labels[i].tag == CandidateLabel::Tag::violating) return;  // first kind wins
    out.labels[i].tag = CandidateLabel::Tag::violating;
    out.labels[i].kind = kind;
  };
  if (cfg.enabled.count(ConstraintKind::collision))
    for (std::size_t i = 0; i < n; ++i)
      if (collides[i]) mark(i, ConstraintKind::collision);
  if (cfg.enabled.count(ConstraintKind::out_of_map))
    for (std::size_t i = 0; i < n; ++i)
      if (off_map[i]) mark(i, ConstraintKind::out_of_map);
  if (cfg.enabled.count(ConstraintKind::stuck))
    for (int i : detect_stuck(candidates, stationary_time, safe, cfg))
      mark(i, ConstraintKind::stuck);

  // Eq.-(3) argmin restricted to non-violating candidates, so the 1-label can
  // never land on a 0-labeled trajectory.
  int best = -1;
  double best_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i].tag == CandidateLabel::Tag::violating) continue;
    double s = similarity(candidates[i], expert_gt);
    if (best < 0 || s < best_s) {
      best = static_cast<int>(i);
      best_s = s;
    }
  }
  if (best < 0) return std::nullopt;
  out.labels[best].tag = CandidateLabel::Tag::best;
  out.best_index = best;
  return out;
}

}  // namespace cip
