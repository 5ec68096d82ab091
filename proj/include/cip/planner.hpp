#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cip/encoder.hpp"
#include "cip/kinematics.hpp"
#include "cip/model.hpp"
#include "cip/nn.hpp"
#include "cip/scenario_gen.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

// ---------------------------------------------------------------------------
// Maximum-entropy selection probabilities.

// Plain softmax over rewards: P(tau_i) = e^{r_i} / sum_j e^{r_j}.
inline nn::Vec softmax_probabilities(const nn::Vec& rewards) {
  return nn::softmax_stable(rewards);
}

// Constraint-weighted rule: P(tau_i) = c_i e^{r_i} / sum_j c_j e^{r_j}.
// With all c = 1 this reduces exactly to the plain softmax over rewards.
// Exponentials are stabilized by subtracting max(r); if the stabilized
// denominator underflows below 1e-300 (all constraint values effectively
// zero), the plain softmax is used instead and `fallback` is set.
inline nn::Vec selection_probabilities(const nn::Vec& rewards, const nn::Vec& constraints,
                                       bool* fallback = nullptr) {
  if (rewards.empty()) throw DimensionError("selection_probabilities: empty reward list");
  if (!constraints.empty() && constraints.size() != rewards.size())
    throw DimensionError("selection_probabilities: rewards/constraints size mismatch");
  if (fallback) *fallback = false;
  double m = rewards[0];
  for (double r : rewards) m = std::max(m, r);
  nn::Vec w(rewards.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    double e = std::exp(rewards[i] - m);
    w[i] = constraints.empty() ? e : constraints[i] * e;
    sum += w[i];
  }
  if (sum < 1e-300) {
    if (fallback) *fallback = true;
    return softmax_probabilities(rewards);
  }
  for (double& v : w) v /= sum;
  return w;
}

// ---------------------------------------------------------------------------
// Target selection

struct Anchor {
  Vec2 world;
  Vec2 ego;  // offset in the ego frame
  int index = 0;
  bool padded = false;  // straight-ahead fill, excluded from training labels
};

struct TargetSelection {
  std::vector<Anchor> pool;
  nn::Vec scores;                  // aligned with pool
  std::vector<int> selected;      // indices into pool, |selected| == N
  std::vector<nn::MlpTape> tapes;  // aligned with pool (filled when requested)
};

inline nn::Vec anchor_head_input(const ModelConfig& cfg, const nn::Vec& embedding, Vec2 ego_offset) {
  nn::Vec in;
  in.reserve(cfg.anchor_input_width());
  in.insert(in.end(), embedding.begin(), embedding.end());
  in.push_back(0.05 * ego_offset.x);
  in.push_back(0.05 * ego_offset.y);
  return in;
}

// Candidate anchors sampled along reachable lane centerlines ahead of the ego
// (arc-length offsets up to v*H*dt plus margin), scored by the target head;
// the top N are kept. Falls back to / pads with a straight-ahead fan.
inline TargetSelection select_targets(const ModelParams& m, const SceneEmbedding& embedding,
                                      const std::vector<MapPolyline>& map,
                                      const EgoState& ego, bool with_tapes = false) {
  const ModelConfig& cfg = m.cfg;
  if (cfg.n_targets < 2) throw ValidationError("select_targets: N must be >= 2");
  const double reach = ego.speed * cfg.horizon * cfg.dt + 10.0;
  const int per_lane = 8;

  TargetSelection sel;
  for (const auto& pl : map) {
    if (pl.kind != MapKind::lane_center) continue;
    RoutePath route = make_route(pl.points);
    double s0 = route.project(ego.pos());
    Vec2 foot = route.pos_at(s0);
    if (dist(foot, ego.pos()) > 6.0) continue;
    double dh = std::abs(normalize_heading(route.heading_at(s0 + 1.0) - ego.heading));
    if (dh > kPi / 3.0) continue;
    for (int k = 1; k <= per_lane; ++k) {
      double s = s0 + reach * k / per_lane;
      if (s > route.length()) break;
      Anchor a;
      a.world = route.pos_at(s);
      a.ego = to_frame(a.world, ego.pos(), ego.heading);
      a.index = static_cast<int>(sel.pool.size());
      sel.pool.push_back(a);
    }
  }
  // Straight-ahead fan: used alone when no centerline is reachable, or as
  // deterministic padding when the pool is short of N.
  std::size_t organic = sel.pool.size();
  int fan_k = 0;
  while (sel.pool.size() < static_cast<std::size_t>(cfg.n_targets)) {
    double d = reach * ((fan_k / 3) % per_lane + 1) / per_lane;
    double off = (fan_k % 3 == 0) ? 0.0 : (fan_k % 3 == 1 ? 0.15 : -0.15);
    Anchor a;
    a.ego = {d * std::cos(off), d * std::sin(off)};
    a.world = from_frame(a.ego, ego.pos(), ego.heading);
    a.index = static_cast<int>(sel.pool.size());
    a.padded = organic > 0;
    sel.pool.push_back(a);
    ++fan_k;
  }

  sel.scores.resize(sel.pool.size());
  if (with_tapes) sel.tapes.resize(sel.pool.size());
  for (std::size_t i = 0; i < sel.pool.size(); ++i) {
    nn::Vec out = nn::mlp_forward(m.target_head,
                                  anchor_head_input(cfg, embedding.global_context, sel.pool[i].ego),
                                  with_tapes ? &sel.tapes[i] : nullptr);
    sel.scores[i] = out[0];
  }

  sel.selected.resize(sel.pool.size());
  for (std::size_t i = 0; i < sel.pool.size(); ++i) sel.selected[i] = static_cast<int>(i);
  std::stable_sort(sel.selected.begin(), sel.selected.end(), [&](int a, int b) {
    if (sel.scores[a] != sel.scores[b]) return sel.scores[a] > sel.scores[b];
    return a < b;
  });
  sel.selected.resize(cfg.n_targets);
  std::sort(sel.selected.begin(), sel.selected.end());
  return sel;
}

// ---------------------------------------------------------------------------
// Motion estimation

// Control parameterization: three acceleration knots and three turn-rate
// knots at the start / middle / end of the horizon, linearly interpolated.
inline ControlProfile knots_to_profile(const nn::Vec& knots, int horizon,
                                       const KinematicLimits& lim) {
  ControlProfile profile;
  profile.steps.resize(horizon);
  for (int j = 0; j < horizon; ++j) {
    double u = horizon > 1 ? 2.0 * j / (horizon - 1) : 0.0;
    int seg = u >= 1.0 ? 1 : 0;
    double frac = u - seg;
    double a = knots[seg] * (1.0 - frac) + knots[seg + 1] * frac;
    double w = knots[3 + seg] * (1.0 - frac) + knots[3 + seg + 1] * frac;
    profile.steps[j].accel = clamp(a, -lim.a_max, lim.a_max);
    profile.steps[j].turn_rate = clamp(w, -lim.omega_max, lim.omega_max);
  }
  return profile;
}

struct MotionEstimate {
  std::vector<Vec2> targets;  // world positions; the stay candidate repeats the ego position
  std::vector<nn::Vec> raw_knots;
  std::vector<ControlProfile> controls;
  std::vector<Trajectory> trajectories;
  std::vector<nn::MlpTape> tapes;  // one per target (not for the stay candidate)
};

inline constexpr int kSmoothWindow = 5;

// Rolls every target through the motion head, the smoothing filter and the
// bicycle model, then appends the all-zero-control stay candidate.
inline MotionEstimate estimate_motions(const ModelParams& m, const SceneEmbedding& embedding,
                                       const std::vector<Vec2>& targets, const EgoState& start,
                                       bool with_tapes = false) {
  const ModelConfig& cfg = m.cfg;
  MotionEstimate est;
  est.targets = targets;
  if (with_tapes) est.tapes.resize(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Vec2 local = to_frame(targets[i], start.pos(), start.heading);
    nn::Vec knots = nn::mlp_forward(m.motion_head,
                                    anchor_head_input(cfg, embedding.global_context, local),
                                    with_tapes ? &est.tapes[i] : nullptr);
    est.raw_knots.push_back(knots);
    ControlProfile profile = knots_to_profile(knots, cfg.horizon, cfg.limits);
    profile = smooth_controls(profile, kSmoothWindow, cfg.limits);
    est.controls.push_back(profile);
    est.trajectories.push_back(rollout(start, profile, cfg.dt, cfg.limits));
  }
  ControlProfile stay;
  stay.steps.resize(cfg.horizon);
  est.targets.push_back(start.pos());
  est.raw_knots.push_back(nn::Vec(6, 0.0));
  est.controls.push_back(stay);
  est.trajectories.push_back(rollout(start, stay, cfg.dt, cfg.limits));
  return est;
}

// ---------------------------------------------------------------------------
// Scoring

struct CandidateSet {
  std::vector<Trajectory> trajectories;
  std::vector<ControlProfile> controls;
  std::vector<Vec2> targets;
  nn::Vec rewards;
  nn::Vec constraints;    // all ones in baseline mode
  nn::Vec probabilities;  // Eq. (2) in constrained mode, Eq. (1) in baseline
  bool used_eq1_fallback = false;

  int size() const { return static_cast<int>(trajectories.size()); }
};

struct ScoreTape {
  std::vector<nn::Vec> head_inputs;
  std::vector<nn::MlpTape> reward_tapes;
  std::vector<nn::MlpTape> constraint_tapes;
  nn::Vec constraint_logits;
};

// Trajectory featurization for the reward/constraint heads: (x, y, cos h,
// sin h, speed) at every traj_stride-th step, in the frame of the start state.
inline nn::Vec trajectory_features(const ModelConfig& cfg, const Trajectory& traj,
                                   const EgoState& start) {
  nn::Vec f;
  f.reserve(cfg.traj_feature_width());
  for (int j = cfg.traj_stride; j <= cfg.horizon; j += cfg.traj_stride) {
    const EgoState& s = traj.states[j];
    Vec2 local = to_frame(s.pos(), start.pos(), start.heading);
    f.push_back(0.05 * local.x);
    f.push_back(0.05 * local.y);
    f.push_back(std::cos(s.heading - start.heading));
    f.push_back(std::sin(s.heading - start.heading));
    f.push_back(0.1 * s.speed);
  }
  return f;
}

enum class ScoringMode { baseline, constrained };

// Reward and (in constrained mode) constraint values for every candidate,
// combined into selection probabilities.
inline CandidateSet score(const ModelParams& m, const SceneEmbedding& embedding,
                          MotionEstimate est, ScoringMode mode, ScoreTape* tape = nullptr) {
  if (est.trajectories.empty()) throw ValidationError("score: empty trajectory list");
  const ModelConfig& cfg = m.cfg;
  CandidateSet cs;
  cs.trajectories = std::move(est.trajectories);
  cs.controls = std::move(est.controls);
  cs.targets = std::move(est.targets);
  const EgoState& start = cs.trajectories.front().states.front();

  const int n = cs.size();
  cs.rewards.resize(n);
  cs.constraints.assign(n, 1.0);
  if (tape) {
    tape->head_inputs.resize(n);
    tape->reward_tapes.resize(n);
    tape->constraint_tapes.resize(n);
    tape->constraint_logits.assign(n, 0.0);
  }
  for (int i = 0; i < n; ++i) {
    nn::Vec input;
    input.reserve(cfg.head_input_width());
    input.insert(input.end(), embedding.global_context.begin(), embedding.global_context.end());
    nn::Vec tf = trajectory_features(cfg, cs.trajectories[i], start);
    input.insert(input.end(), tf.begin(), tf.end());

    nn::Vec r = nn::mlp_forward(m.reward_head, input, tape ? &tape->reward_tapes[i] : nullptr);
    if (!std::isfinite(r[0])) throw NumericError("score: non-finite output from reward head");
    cs.rewards[i] = r[0];
    if (mode == ScoringMode::constrained) {
      nn::Vec c = nn::mlp_forward(m.constraint_head, input,
                                  tape ? &tape->constraint_tapes[i] : nullptr);
      if (!std::isfinite(c[0]))
        throw NumericError("score: non-finite output from constraint head");
      cs.constraints[i] = nn::sigmoid(c[0]);
      if (tape) tape->constraint_logits[i] = c[0];
    }
    if (tape) tape->head_inputs[i] = std::move(input);
  }
  cs.probabilities = selection_probabilities(cs.rewards, cs.constraints, &cs.used_eq1_fallback);
  return cs;
}

// Executes the paper's closed-loop selection rule: the highest-probability
// candidate, ties broken by the lowest index.
inline int plan(const CandidateSet& cs) {
  if (cs.size() == 0) throw ValidationError("plan: empty candidate set");
  int best = 0;
  for (int i = 1; i < cs.size(); ++i)
    if (cs.probabilities[i] > cs.probabilities[best]) best = i;
  return best;
}

}  // namespace cip
