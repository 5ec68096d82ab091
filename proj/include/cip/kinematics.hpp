#pragma once

#include <cmath>
#include <vector>

#include "cip/geometry.hpp"
#include "cip/util.hpp"

namespace cip {

// Control envelope. The source material leaves these unspecified; typical
// urban values are used throughout.
struct KinematicLimits {
  double a_max = 4.0;      // m/s^2
  double omega_max = 0.8;  // rad/s
  double v_max = 20.0;     // m/s
};

struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians in (-pi, pi]
  double speed = 0.0;    // m/s, >= 0

  Vec2 pos() const { return {x, y}; }
};

struct ControlStep {
  double accel = 0.0;      // m/s^2
  double turn_rate = 0.0;  // rad/s
};

struct ControlProfile {
  std::vector<ControlStep> steps;
};

struct Trajectory {
  std::vector<EgoState> states;  // H+1 states, index 0 = start

  int horizon() const { return static_cast<int>(states.size()) - 1; }
  double total_displacement() const {
    double d = 0.0;
    for (std::size_t i = 1; i < states.size(); ++i)
      d += dist(states[i].pos(), states[i - 1].pos());
    return d;
  }
};

// One exact-arc integration step: the speed update applies first (linear in
// accel, clamped at 0 and v_max), heading advances by turn_rate*dt, and the
// position moves along the circular arc traced at the post-update speed.
// The chord is evaluated as v*h*(cos,sin at mid-heading) with
// h = 2 sin(omega dt/2)/omega, which is exact and cancellation-free.
inline EgoState step_bicycle(const EgoState& s, ControlStep u, double dt,
                             const KinematicLimits& lim = {}) {
  double a = clamp(u.accel, -lim.a_max, lim.a_max);
  double w = clamp(u.turn_rate, -lim.omega_max, lim.omega_max);
  EgoState out;
  out.speed = clamp(s.speed + a * dt, 0.0, lim.v_max);
  double h = (std::abs(w) < 1e-9) ? dt : 2.0 * std::sin(0.5 * w * dt) / w;
  double mid = s.heading + 0.5 * w * dt;
  out.x = s.x + out.speed * h * std::cos(mid);
  out.y = s.y + out.speed * h * std::sin(mid);
  out.heading = normalize_heading(s.heading + w * dt);
  return out;
}

inline Trajectory rollout(const EgoState& start, const ControlProfile& controls,
                          double dt, const KinematicLimits& lim = {}) {
  Trajectory traj;
  traj.states.reserve(controls.steps.size() + 1);
  EgoState s = start;
  s.heading = normalize_heading(s.heading);
  s.speed = clamp(s.speed, 0.0, lim.v_max);
  traj.states.push_back(s);
  for (const ControlStep& u : controls.steps) {
    s = step_bicycle(s, u, dt, lim);
    traj.states.push_back(s);
  }
  return traj;
}

// Centered moving average per channel with edge replication; window must be
// odd. Bounds are re-clamped afterwards.
inline ControlProfile smooth_controls(const ControlProfile& raw, int window,
                                      const KinematicLimits& lim = {}) {
  if (window < 1 || window % 2 == 0)
    throw ValidationError("smooth_controls: window must be odd and >= 1");
  if (window == 1 || raw.steps.empty()) return raw;
  const int n = static_cast<int>(raw.steps.size());
  const int k = (window - 1) / 2;
  ControlProfile out;
  out.steps.resize(n);
  for (int i = 0; i < n; ++i) {
    double a = 0.0, w = 0.0;
    for (int j = -k; j <= k; ++j) {
      int idx = std::min(std::max(i + j, 0), n - 1);
      a += raw.steps[idx].accel;
      w += raw.steps[idx].turn_rate;
    }
    out.steps[i].accel = clamp(a / window, -lim.a_max, lim.a_max);
    out.steps[i].turn_rate = clamp(w / window, -lim.omega_max, lim.omega_max);
  }
  return out;
}

}  // namespace cip
