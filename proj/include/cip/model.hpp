#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cip/kinematics.hpp"
#include "cip/nn.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

inline constexpr const char* kCheckpointSchema = "cip-checkpoint-v1";

// Architecture knobs. Production defaults follow the two-hidden-layers-of-64
// convention; tests shrink them for hand evaluation and gradient sweeps.
struct ModelConfig {
  int d_embed = 64;
  int subgraph_hidden = 64;
  std::vector<int> head_hidden = {64, 64};
  int n_targets = 16;  // N anchors; candidates add one stay trajectory
  int horizon = 30;    // H steps
  int traj_stride = 5; // trajectory featurization stride
  int history_len = 10;
  double dt = 0.1;
  KinematicLimits limits;

  int vec_row_width() const { return 4 + kAttrWidth; }
  int traj_feature_width() const { return (horizon / traj_stride) * 5; }
  int head_input_width() const { return d_embed + traj_feature_width(); }
  int anchor_input_width() const { return d_embed + 2; }
};

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.d_embed == b.d_embed && a.subgraph_hidden == b.subgraph_hidden &&
         a.head_hidden == b.head_hidden && a.n_targets == b.n_targets &&
         a.horizon == b.horizon && a.traj_stride == b.traj_stride &&
         a.history_len == b.history_len && a.dt == b.dt;
}

// All learned parameters: the polyline subgraph encoder, the global
// interaction projection, and the four task heads.
struct ModelParams {
  ModelConfig cfg;
  nn::MlpParams subgraph;         // vec row -> polyline feature space
  nn::MlpParams global_proj;      // [attention context ; ego feature] -> embedding
  nn::MlpParams target_head;      // [embedding ; anchor offset] -> anchor score
  nn::MlpParams motion_head;      // [embedding ; target offset] -> 6 control knots
  nn::MlpParams reward_head;      // [embedding ; trajectory features] -> r(tau)
  nn::MlpParams constraint_head;  // [embedding ; trajectory features] -> logit of c(tau)
};

// Shape-congruent gradient holder.
struct ModelGrads {
  nn::MlpGrads subgraph, global_proj, target_head, motion_head, reward_head, constraint_head;
};

inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  SplitMix64 rng(splitmix64_mix(seed ^ 0x5eedbead5eedbeadULL));
  ModelParams m;
  m.cfg = cfg;
  m.subgraph = nn::make_mlp(cfg.vec_row_width(), {cfg.subgraph_hidden}, cfg.d_embed, rng);
  m.global_proj = nn::make_mlp(2 * cfg.d_embed, {cfg.d_embed}, cfg.d_embed, rng);
  m.target_head = nn::make_mlp(cfg.anchor_input_width(), cfg.head_hidden, 1, rng);
  m.motion_head = nn::make_mlp(cfg.anchor_input_width(), cfg.head_hidden, 6, rng);
  m.reward_head = nn::make_mlp(cfg.head_input_width(), cfg.head_hidden, 1, rng);
  m.constraint_head = nn::make_mlp(cfg.head_input_width(), cfg.head_hidden, 1, rng);
  return m;
}

inline ModelGrads zero_grads(const ModelParams& m) {
  return ModelGrads{nn::zeros_like(m.subgraph),    nn::zeros_like(m.global_proj),
                    nn::zeros_like(m.target_head), nn::zeros_like(m.motion_head),
                    nn::zeros_like(m.reward_head), nn::zeros_like(m.constraint_head)};
}

inline void sgd_step(ModelParams& m, const ModelGrads& g, double eta) {
  nn::sgd_step(m.subgraph, g.subgraph, eta);
  nn::sgd_step(m.global_proj, g.global_proj, eta);
  nn::sgd_step(m.target_head, g.target_head, eta);
  nn::sgd_step(m.motion_head, g.motion_head, eta);
  nn::sgd_step(m.reward_head, g.reward_head, eta);
  nn::sgd_step(m.constraint_head, g.constraint_head, eta);
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: named, shape-annotated flat arrays.

namespace detail {

inline nlohmann::json mlp_to_json(const nn::MlpParams& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : mlp.layers) {
    nlohmann::json jl;
    jl["w"] = {{"shape", {layer.w.rows, layer.w.cols}}, {"data", layer.w.data}};
    jl["b"] = {{"shape", {static_cast<int>(layer.b.size())}}, {"data", layer.b}};
    jl["hidden"] = layer.hidden;
    if (layer.hidden) {
      jl["ln_gain"] = {{"shape", {static_cast<int>(layer.ln_gain.size())}},
                       {"data", layer.ln_gain}};
      jl["ln_bias"] = {{"shape", {static_cast<int>(layer.ln_bias.size())}},
                       {"data", layer.ln_bias}};
    }
    layers.push_back(std::move(jl));
  }
  return nlohmann::json{{"in", mlp.in_size}, {"out", mlp.out_size}, {"layers", layers}};
}

inline nn::MlpParams mlp_from_json(const nlohmann::json& j) {
  nn::MlpParams mlp;
  mlp.in_size = j.at("in").get<int>();
  mlp.out_size = j.at("out").get<int>();
  for (const auto& jl : j.at("layers")) {
    nn::DenseLayer layer;
    auto shape = jl.at("w").at("shape");
    layer.w = nn::Mat(shape.at(0).get<int>(), shape.at(1).get<int>());
    layer.w.data = jl.at("w").at("data").get<nn::Vec>();
    if (layer.w.data.size() !=
        static_cast<std::size_t>(layer.w.rows) * static_cast<std::size_t>(layer.w.cols))
      throw ParseError("checkpoint: weight data does not match annotated shape");
    layer.b = jl.at("b").at("data").get<nn::Vec>();
    layer.hidden = jl.at("hidden").get<bool>();
    if (layer.hidden) {
      layer.ln_gain = jl.at("ln_gain").at("data").get<nn::Vec>();
      layer.ln_bias = jl.at("ln_bias").at("data").get<nn::Vec>();
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelParams& m) {
  nlohmann::json j;
  j["schema"] = kCheckpointSchema;
  j["config"] = {{"d_embed", m.cfg.d_embed},
                 {"subgraph_hidden", m.cfg.subgraph_hidden},
                 {"head_hidden", m.cfg.head_hidden},
                 {"n_targets", m.cfg.n_targets},
                 {"horizon", m.cfg.horizon},
                 {"traj_stride", m.cfg.traj_stride},
                 {"history_len", m.cfg.history_len},
                 {"dt", m.cfg.dt}};
  j["params"] = {{"subgraph", detail::mlp_to_json(m.subgraph)},
                 {"global_proj", detail::mlp_to_json(m.global_proj)},
                 {"target_head", detail::mlp_to_json(m.target_head)},
                 {"motion_head", detail::mlp_to_json(m.motion_head)},
                 {"reward_head", detail::mlp_to_json(m.reward_head)},
                 {"constraint_head", detail::mlp_to_json(m.constraint_head)}};
  return j;
}

inline ModelParams model_from_json(const nlohmann::json& j) {
  if (!j.contains("schema") || j.at("schema").get<std::string>() != kCheckpointSchema)
    throw ParseError("checkpoint: unknown or missing schema string");
  ModelParams m;
  try {
    const auto& c = j.at("config");
    m.cfg.d_embed = c.at("d_embed").get<int>();
    m.cfg.subgraph_hidden = c.at("subgraph_hidden").get<int>();
    m.cfg.head_hidden = c.at("head_hidden").get<std::vector<int>>();
    m.cfg.n_targets = c.at("n_targets").get<int>();
    m.cfg.horizon = c.at("horizon").get<int>();
    m.cfg.traj_stride = c.at("traj_stride").get<int>();
    m.cfg.history_len = c.at("history_len").get<int>();
    m.cfg.dt = c.at("dt").get<double>();
    const auto& p = j.at("params");
    m.subgraph = detail::mlp_from_json(p.at("subgraph"));
    m.global_proj = detail::mlp_from_json(p.at("global_proj"));
    m.target_head = detail::mlp_from_json(p.at("target_head"));
    m.motion_head = detail::mlp_from_json(p.at("motion_head"));
    m.reward_head = detail::mlp_from_json(p.at("reward_head"));
    m.constraint_head = detail::mlp_from_json(p.at("constraint_head"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  return m;
}

inline void save_checkpoint(const ModelParams& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << model_to_json(m).dump() << "\n";
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace cip
