#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cip/encoder.hpp"
#include "cip/labeling.hpp"
#include "cip/model.hpp"
#include "cip/planner.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

// ---------------------------------------------------------------------------
// Losses

// Binary cross-entropy with a 1e-12 guard (the sigmoid keeps logs finite in
// practice).
inline double binary_cross_entropy(double x, double y) {
  x = clamp(x, 1e-12, 1.0 - 1e-12);
  return -y * std::log(x) - (1.0 - y) * std::log(1.0 - x);
}

// Constraint loss: binary cross-entropy over the violating set pulled toward
// 0 plus the best trajectory pulled toward 1, normalized by (|violating|+1).
inline double constraint_loss(const nn::Vec& c, const ConstraintLabelSet& labels) {
  if (labels.best_index < 0 || labels.best_index >= static_cast<int>(c.size()))
    throw DimensionError("constraint_loss: label set does not match constraint values");
  auto bar = labels.violating_indices();
  double loss = binary_cross_entropy(c[labels.best_index], 1.0);
  for (int i : bar) loss += binary_cross_entropy(c[i], 0.0);
  return loss / static_cast<double>(bar.size() + 1);
}

// d(loss)/dc per candidate; zero on unlabeled entries.
inline nn::Vec constraint_loss_grad(const nn::Vec& c, const ConstraintLabelSet& labels) {
  auto bar = labels.violating_indices();
  double scale = 1.0 / static_cast<double>(bar.size() + 1);
  nn::Vec dc(c.size(), 0.0);
  double cb = clamp(c[labels.best_index], 1e-12, 1.0 - 1e-12);
  dc[labels.best_index] = -scale / cb;
  for (int i : bar) {
    double ci = clamp(c[i], 1e-12, 1.0 - 1e-12);
    dc[i] = scale / (1.0 - ci);
  }
  return dc;
}

// Imitation term: negative log selection probability of the best candidate.
inline double reward_loss(const nn::Vec& probabilities, int best_index) {
  if (best_index < 0 || best_index >= static_cast<int>(probabilities.size()))
    throw DimensionError("reward_loss: best index out of range");
  return -std::log(std::max(probabilities[best_index], 1e-300));
}

// ---------------------------------------------------------------------------
// Motion distillation teacher
//
// The motion head is supervised toward an analytic reach-the-target
// controller: a constant acceleration covering the circular arc through the
// target over the horizon, with turn-rate knots tracking kappa * v(t) along
// that arc.
inline nn::Vec teacher_knots(Vec2 target_local, double v0, int horizon, double dt,
                             const KinematicLimits& lim) {
  const double t_h = horizon * dt;
  nn::Vec knots(6, 0.0);
  double chord = norm(target_local);
  if (chord < 0.3) {
    double a = clamp(-v0 / t_h, -lim.a_max, lim.a_max);
    knots[0] = knots[1] = knots[2] = a;
    return knots;
  }
  double alpha = clamp(std::atan2(target_local.y, target_local.x), -1.25, 1.25);
  double kappa = 2.0 * target_local.y / (chord * chord);
  double arc_len = std::abs(alpha) < 1e-6 ? chord : chord * alpha / std::sin(alpha);
  double a = clamp(2.0 * (arc_len - v0 * t_h) / (t_h * t_h), -0.9 * lim.a_max, 0.9 * lim.a_max);
  knots[0] = knots[1] = knots[2] = a;
  for (int k = 0; k < 3; ++k) {
    double v_k = std::max(0.0, v0 + a * (0.5 * k * t_h));
    knots[3 + k] = clamp(kappa * v_k, -0.9 * lim.omega_max, 0.9 * lim.omega_max);
  }
  return knots;
}

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  double eta = 0.01;
  int epochs = 10;
  int batch_size = 8;
  ConstraintSet constraints;  // empty set = reward-only baseline
  std::uint64_t seed = 0;
  double lambda_constraint = 1.0;
  double motion_weight = 1.0;
  double target_weight = 1.0;
  int replan_every = 5;  // tick stride, steps
  LabelingConfig labeling;
  ModelConfig model;
};

struct EpochStats {
  int epoch = 0;
  double reward_loss = 0.0;
  double constraint_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
  int skipped_ticks = 0;  // ticks where every candidate violated
};

// One training tick, exposed for the label dump and for tests.
struct TickSample {
  std::string scenario_id;
  double t0 = 0.0;
  CandidateSet candidates;
  std::optional<ConstraintLabelSet> labels;
  Trajectory expert;
};

struct TickOutput {
  double reward_loss = 0.0;
  double constraint_loss = 0.0;
  double target_loss = 0.0;
  double motion_loss = 0.0;
  bool labeling_skipped = false;

  double total(const TrainConfig& cfg) const {
    return reward_loss + cfg.lambda_constraint * constraint_loss +
           cfg.target_weight * target_loss + cfg.motion_weight * motion_loss;
  }
};

// ---------------------------------------------------------------------------
// One tick of Algorithm 1: generate candidates, label them, evaluate the
// losses, and (optionally) accumulate analytic gradients.
//
// The reward stream is trained under Eq.-(1) probabilities so the constraint
// head stays detached from the imitation signal; the constraint stream
// applies Eq. (4) to the labeled candidates. The shared encoder receives
// gradient from every stream.
inline TickOutput process_tick(const ModelParams& m, const Scenario& scenario,
                               const std::vector<Polygon>& drivable, double t0,
                               const TrainConfig& cfg, ModelGrads* grads,
                               TickSample* sample_out = nullptr) {
  const ModelConfig& mc = m.cfg;
  const bool constrained = !cfg.constraints.empty();
  const bool want_grads = grads != nullptr;
  LabelingConfig lab = cfg.labeling;
  lab.enabled = cfg.constraints;

  PolylineSet pset = vectorize(scenario, t0, mc.history_len);
  EncoderTape enc_tape;
  SceneEmbedding emb = encode_scene(m, pset, want_grads ? &enc_tape : nullptr);

  AgentState cur = track_state_at(scenario.ego_track, t0);
  EgoState start{cur.x, cur.y, normalize_heading(cur.heading),
                 clamp(cur.speed, 0.0, mc.limits.v_max)};

  TargetSelection sel = select_targets(m, emb, scenario.map, start, want_grads);
  std::vector<Vec2> targets;
  for (int idx : sel.selected) targets.push_back(sel.pool[idx].world);
  MotionEstimate est = estimate_motions(m, emb, targets, start, want_grads);
  std::vector<nn::Vec> raw_knots = est.raw_knots;
  std::vector<nn::MlpTape> motion_tapes = std::move(est.tapes);

  ScoreTape stape;
  CandidateSet cs = score(m, emb, std::move(est),
                          constrained ? ScoringMode::constrained : ScoringMode::baseline,
                          &stape);

  Trajectory expert = expert_slice(scenario.ego_track, t0, mc.horizon, mc.dt);
  std::optional<ConstraintLabelSet> labels;
  if (constrained)
    labels = label_candidates(cs.trajectories, expert, scenario, t0, drivable, lab,
                              stationary_time_before(scenario.ego_track, t0, lab));
  int best = labels ? labels->best_index : best_trajectory(cs.trajectories, expert);

  TickOutput out;
  out.labeling_skipped = constrained && !labels;
  nn::Vec d_embed(mc.d_embed, 0.0);

  // Reward stream.
  nn::Vec p1 = softmax_probabilities(cs.rewards);
  out.reward_loss = reward_loss(p1, best);
  if (want_grads) {
    for (int i = 0; i < cs.size(); ++i) {
      double dr = p1[i] - (i == best ? 1.0 : 0.0);
      nn::Vec d_in =
          nn::mlp_backward(m.reward_head, stape.reward_tapes[i], {dr}, grads->reward_head);
      for (int d = 0; d < mc.d_embed; ++d) d_embed[d] += d_in[d];
    }
  }

  // Constraint stream, Eq. (4).
  if (constrained && labels) {
    out.constraint_loss = constraint_loss(cs.constraints, *labels);
    if (want_grads) {
      nn::Vec dc = constraint_loss_grad(cs.constraints, *labels);
      for (int i = 0; i < cs.size(); ++i) {
        if (dc[i] == 0.0) continue;
        double c = cs.constraints[i];
        double dlogit = cfg.lambda_constraint * dc[i] * c * (1.0 - c);
        nn::Vec d_in = nn::mlp_backward(m.constraint_head, stape.constraint_tapes[i], {dlogit},
                                        grads->constraint_head);
        for (int d = 0; d < mc.d_embed; ++d) d_embed[d] += d_in[d];
      }
    }
  }

  // Target head: cross-entropy on the anchor nearest the expert endpoint.
  if (cfg.target_weight > 0.0) {
    const Vec2 expert_end = expert.states.back().pos();
    std::vector<int> pool_ids;
    for (std::size_t i = 0; i < sel.pool.size(); ++i)
      if (!sel.pool[i].padded) pool_ids.push_back(static_cast<int>(i));
    if (pool_ids.size() >= 2) {
      int label = pool_ids[0];
      for (int i : pool_ids)
        if (dist(sel.pool[i].world, expert_end) < dist(sel.pool[label].world, expert_end))
          label = i;
      nn::Vec logits;
      for (int i : pool_ids) logits.push_back(sel.scores[i]);
      nn::Vec probs = nn::softmax_stable(logits);
      for (std::size_t k = 0; k < pool_ids.size(); ++k)
        if (pool_ids[k] == label) out.target_loss = -std::log(std::max(probs[k], 1e-300));
      if (want_grads) {
        for (std::size_t k = 0; k < pool_ids.size(); ++k) {
          int i = pool_ids[k];
          double dlogit = cfg.target_weight * (probs[k] - (i == label ? 1.0 : 0.0));
          nn::Vec d_in =
              nn::mlp_backward(m.target_head, sel.tapes[i], {dlogit}, grads->target_head);
          for (int d = 0; d < mc.d_embed; ++d) d_embed[d] += d_in[d];
        }
      }
    }
  }

  // Motion head: distillation toward the analytic reach-the-target controller.
  if (cfg.motion_weight > 0.0 && !targets.empty()) {
    double w = 1.0 / (6.0 * static_cast<double>(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Vec2 local = to_frame(targets[i], start.pos(), start.heading);
      nn::Vec ref = teacher_knots(local, start.speed, mc.horizon, mc.dt, mc.limits);
      double l = 0.0;
      for (int k = 0; k < 6; ++k) {
        double diff = raw_knots[i][k] - ref[k];
        l += diff * diff;
      }
      out.motion_loss += w * l;
      if (want_grads) {
        nn::Vec d_out(6);
        for (int k = 0; k < 6; ++k)
          d_out[k] = 2.0 * cfg.motion_weight * w * (raw_knots[i][k] - ref[k]);
        nn::Vec d_in =
            nn::mlp_backward(m.motion_head, motion_tapes[i], d_out, grads->motion_head);
        for (int d = 0; d < mc.d_embed; ++d) d_embed[d] += d_in[d];
      }
    }
  }

  if (!std::isfinite(out.reward_loss) || !std::isfinite(out.constraint_loss))
    throw NumericError("train: non-finite loss at scenario " + scenario.id +
                       ", t=" + std::to_string(t0));

  if (want_grads) encode_scene_backward(m, pset, enc_tape, emb.ego_index, d_embed, *grads);

  if (sample_out) {
    sample_out->scenario_id = scenario.id;
    sample_out->t0 = t0;
    sample_out->candidates = std::move(cs);
    sample_out->labels = std::move(labels);
    sample_out->expert = std::move(expert);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Algorithm-1 loop: regenerate candidates from the current motion estimator,
// label, take one SGD step per batch of ticks. Deterministic per seed.

inline TrainResult train(const std::vector<Scenario>& corpus, const TrainConfig& cfg,
                         const std::function<void(int, const ModelParams&)>& on_epoch = {},
                         const std::function<void(const TickSample&)>& dump = {}) {
  if (corpus.empty()) throw ValidationError("train: empty corpus");
  if (cfg.eta <= 0.0) throw ValidationError("train: eta must be positive");
  if (cfg.epochs < 0) throw ValidationError("train: epochs must be >= 0");

  ModelParams m = init_model(cfg.model, cfg.seed);
  TrainResult result;

  std::vector<std::vector<Polygon>> drivables;
  drivables.reserve(corpus.size());
  for (const auto& s : corpus) drivables.push_back(drivable_area(s));

  const ModelConfig& mc = cfg.model;
  const double tick_stride = cfg.replan_every * mc.dt;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t_start = std::chrono::steady_clock::now();
    double sum_reward = 0.0, sum_constraint = 0.0;
    int n_ticks = 0, n_constraint_ticks = 0;

    ModelGrads grads = zero_grads(m);
    int in_batch = 0;
    auto flush = [&]() {
      if (in_batch == 0) return;
      sgd_step(m, grads, cfg.eta / in_batch);
      grads = zero_grads(m);
      in_batch = 0;
    };

    for (std::size_t si = 0; si < corpus.size(); ++si) {
      const Scenario& scenario = corpus[si];
      const double t_max = scenario.duration - mc.horizon * mc.dt + 1e-9;
      for (double t0 = 0.0; t0 <= t_max; t0 += tick_stride) {
        TickSample sample;
        TickOutput out = process_tick(m, scenario, drivables[si], t0, cfg, &grads,
                                      dump ? &sample : nullptr);
        if (dump) dump(sample);
        if (out.labeling_skipped) ++result.skipped_ticks;
        sum_reward += out.reward_loss;
        if (!cfg.constraints.empty() && !out.labeling_skipped) {
          sum_constraint += out.constraint_loss;
          ++n_constraint_ticks;
        }
        ++n_ticks;
        if (++in_batch >= cfg.batch_size) flush();
      }
    }
    flush();

    EpochStats stats;
    stats.epoch = epoch;
    stats.reward_loss = n_ticks > 0 ? sum_reward / n_ticks : 0.0;
    stats.constraint_loss = n_constraint_ticks > 0 ? sum_constraint / n_constraint_ticks : 0.0;
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(epoch, m);
  }

  result.params = std::move(m);
  return result;
}

}  // namespace cip
