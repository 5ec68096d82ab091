#pragma once

#include <algorithm>
#include <vector>

#include "cip/model.hpp"
#include "cip/nn.hpp"
#include "cip/scene.hpp"
#include "cip/util.hpp"

namespace cip {

// Output of the global interaction step: the context vector consumed by every
// head plus the per-polyline attention row used for interpretability export.
struct SceneEmbedding {
  nn::Vec global_context;
  std::vector<int> polyline_ids;
  std::vector<PolylineRole> roles;
  std::vector<int> source_ids;
  nn::Vec attention_weights;
  int ego_index = -1;
};

// Fixed input scaling so raw meter/velocity magnitudes enter the subgraph MLP
// at O(1). Part of the model definition, not a learned quantity.
inline nn::Vec scale_feature_row(const FeatureRow& row) {
  nn::Vec x(4 + kAttrWidth, 0.0);
  x[0] = 0.05 * row.start.x;
  x[1] = 0.05 * row.start.y;
  x[2] = 0.05 * row.end.x;
  x[3] = 0.05 * row.end.y;
  const auto& a = row.attrs;
  x[4] = a[0];
  x[5] = a[1];
  x[6] = a[2];
  x[7] = 0.1 * a[3];   // speed
  x[8] = a[4];         // cos heading
  x[9] = a[5];         // sin heading
  x[10] = 0.2 * a[6];  // footprint length
  x[11] = 0.2 * a[7];  // footprint width
  x[12] = 0.1 * a[8];  // speed limit
  x[13] = 0.1 * a[9];  // polyline-local index
  x[14] = a[10];
  return x;
}

struct EncoderTape {
  std::vector<std::vector<nn::MlpTape>> row_tapes;  // per polyline, per vector
  std::vector<std::vector<int>> pool_argmax;        // per polyline, per feature dim
  std::vector<nn::Vec> features;
  nn::AttentionTape attention;
  nn::MlpTape proj;
};

// Per-polyline subgraph: per-vector MLP followed by elementwise max-pool.
inline std::vector<nn::Vec> encode_polylines(const ModelParams& m, const PolylineSet& pset,
                                             EncoderTape* tape = nullptr) {
  if (pset.polylines.empty()) throw ValidationError("encode_polylines: empty polyline set");
  std::vector<nn::Vec> features;
  features.reserve(pset.polylines.size());
  if (tape) {
    tape->row_tapes.assign(pset.polylines.size(), {});
    tape->pool_argmax.assign(pset.polylines.size(), {});
  }
  for (std::size_t p = 0; p < pset.polylines.size(); ++p) {
    const auto& pl = pset.polylines[p];
    nn::Vec pooled(m.cfg.d_embed, -1e300);
    std::vector<int> argmax(m.cfg.d_embed, 0);
    if (tape) tape->row_tapes[p].resize(pl.vectors.size());
    for (std::size_t r = 0; r < pl.vectors.size(); ++r) {
      nn::Vec out = nn::mlp_forward(m.subgraph, scale_feature_row(pl.vectors[r]),
                                    tape ? &tape->row_tapes[p][r] : nullptr);
      for (int d = 0; d < m.cfg.d_embed; ++d) {
        if (out[d] > pooled[d]) {
          pooled[d] = out[d];
          argmax[d] = static_cast<int>(r);
        }
      }
    }
    if (tape) tape->pool_argmax[p] = std::move(argmax);
    features.push_back(std::move(pooled));
  }
  if (tape) tape->features = features;
  return features;
}

// Global interaction: the ego polyline feature queries all polyline features;
// the attention context concatenated with the ego feature is projected into
// the scene embedding.
inline SceneEmbedding global_interaction(const ModelParams& m, const PolylineSet& pset,
                                         const std::vector<nn::Vec>& features,
                                         EncoderTape* tape = nullptr) {
  int ego_index = -1;
  for (std::size_t p = 0; p < pset.polylines.size(); ++p) {
    if (pset.polylines[p].role == PolylineRole::ego) {
      if (ego_index >= 0)
        throw ValidationError("global_interaction: more than one ego polyline");
      ego_index = static_cast<int>(p);
    }
  }
  if (ego_index < 0) throw ValidationError("global_interaction: missing ego polyline");

  nn::AttentionOut att = nn::attention(features[ego_index], features, features,
                                       tape ? &tape->attention : nullptr);
  nn::Vec concat;
  concat.reserve(2 * m.cfg.d_embed);
  concat.insert(concat.end(), att.context.begin(), att.context.end());
  concat.insert(concat.end(), features[ego_index].begin(), features[ego_index].end());
  nn::Vec ctx = nn::mlp_forward(m.global_proj, concat, tape ? &tape->proj : nullptr);

  SceneEmbedding emb;
  emb.global_context = std::move(ctx);
  emb.attention_weights = std::move(att.weights);
  emb.ego_index = ego_index;
  for (const auto& pl : pset.polylines) {
    emb.polyline_ids.push_back(pl.polyline_id);
    emb.roles.push_back(pl.role);
    emb.source_ids.push_back(pl.source_id);
  }
  return emb;
}

inline SceneEmbedding encode_scene(const ModelParams& m, const PolylineSet& pset,
                                   EncoderTape* tape = nullptr) {
  auto features = encode_polylines(m, pset, tape);
  return global_interaction(m, pset, features, tape);
}

// Backward through projection, attention and the per-polyline subgraphs.
inline void encode_scene_backward(const ModelParams& m, const PolylineSet& pset,
                                  const EncoderTape& tape, int ego_index,
                                  const nn::Vec& d_global_context, ModelGrads& grads) {
  nn::Vec d_concat = nn::mlp_backward(m.global_proj, tape.proj, d_global_context,
                                      grads.global_proj);
  nn::Vec d_context(d_concat.begin(), d_concat.begin() + m.cfg.d_embed);
  nn::Vec d_ego_feat(d_concat.begin() + m.cfg.d_embed, d_concat.end());

  nn::AttentionGrads ag = nn::attention_backward(tape.attention, d_context);
  std::vector<nn::Vec> d_features(pset.polylines.size(), nn::Vec(m.cfg.d_embed, 0.0));
  for (std::size_t p = 0; p < d_features.size(); ++p)
    for (int d = 0; d < m.cfg.d_embed; ++d)
      d_features[p][d] = ag.d_keys[p][d] + ag.d_values[p][d];
  for (int d = 0; d < m.cfg.d_embed; ++d) {
    d_features[ego_index][d] += ag.d_query[d];
    d_features[ego_index][d] += d_ego_feat[d];
  }

  for (std::size_t p = 0; p < pset.polylines.size(); ++p) {
    // Max-pool routes each feature dimension's gradient to its argmax row.
    std::vector<nn::Vec> d_rows(pset.polylines[p].vectors.size());
    for (int d = 0; d < m.cfg.d_embed; ++d) {
      int r = tape.pool_argmax[p][d];
      if (d_rows[r].empty()) d_rows[r].assign(m.cfg.d_embed, 0.0);
      d_rows[r][d] += d_features[p][d];
    }
    for (std::size_t r = 0; r < d_rows.size(); ++r) {
      if (d_rows[r].empty()) continue;
      nn::mlp_backward(m.subgraph, tape.row_tapes[p][r], d_rows[r], grads.subgraph);
    }
  }
}

// Indices of the two highest-attention polylines; ties resolved by the lower
// polyline id.
inline std::pair<int, int> top_two_attention(const SceneEmbedding& emb) {
  std::vector<int> order(emb.attention_weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (emb.attention_weights[a] != emb.attention_weights[b])
      return emb.attention_weights[a] > emb.attention_weights[b];
    return emb.polyline_ids[a] < emb.polyline_ids[b];
  });
  return {order[0], order.size() > 1 ? order[1] : order[0]};
}

}  // namespace cip
