#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "cip/encoder.hpp"
#include "cip/model.hpp"

using namespace cip;
using nn::Vec;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_embed = 6;
  cfg.subgraph_hidden = 5;
  cfg.head_hidden = {4};
  cfg.n_targets = 3;
  cfg.horizon = 10;
  cfg.traj_stride = 5;
  return cfg;
}

FeatureRow row(double sx, double sy, double ex, double ey, double speed = 0.0) {
  FeatureRow r;
  r.start = {sx, sy};
  r.end = {ex, ey};
  r.attrs[0] = 1.0;
  r.attrs[3] = speed;
  r.attrs[4] = 1.0;
  return r;
}

ScenePolyline polyline(int id, PolylineRole role, std::vector<FeatureRow> rows) {
  ScenePolyline pl;
  pl.polyline_id = id;
  pl.role = role;
  pl.source_id = id;
  pl.vectors = std::move(rows);
  return pl;
}

}  // namespace

TEST_CASE("single-vector polyline feature equals the row's MLP output") {
  ModelParams m = init_model(tiny_config(), 5);
  FeatureRow r = row(1.0, 2.0, 3.0, 4.0, 2.5);
  PolylineSet pset;
  pset.polylines = {polyline(0, PolylineRole::ego, {r})};
  auto features = encode_polylines(m, pset);
  Vec direct = nn::mlp_forward(m.subgraph, scale_feature_row(r));
  REQUIRE(features.size() == 1);
  CHECK(features[0] == direct);
}

TEST_CASE("duplicating a vector does not change the pooled feature") {
  ModelParams m = init_model(tiny_config(), 6);
  FeatureRow a = row(0.0, 0.0, 1.0, 0.5, 1.0);
  FeatureRow b = row(1.0, 0.5, 2.0, 1.5, 2.0);
  PolylineSet one, two;
  one.polylines = {polyline(0, PolylineRole::ego, {a, b})};
  two.polylines = {polyline(0, PolylineRole::ego, {a, b, b, a})};
  CHECK(encode_polylines(m, one)[0] == encode_polylines(m, two)[0]);
}

TEST_CASE("two-vector polyline feature is the elementwise max of row outputs") {
  ModelParams m = init_model(tiny_config(), 7);
  FeatureRow a = row(0.0, 0.0, 1.0, 0.5, 1.0);
  FeatureRow b = row(-2.0, 3.0, 0.5, -1.0, 4.0);
  PolylineSet pset;
  pset.polylines = {polyline(0, PolylineRole::ego, {a, b})};
  Vec fa = nn::mlp_forward(m.subgraph, scale_feature_row(a));
  Vec fb = nn::mlp_forward(m.subgraph, scale_feature_row(b));
  Vec pooled = encode_polylines(m, pset)[0];
  for (std::size_t d = 0; d < pooled.size(); ++d)
    CHECK(pooled[d] == std::max(fa[d], fb[d]));
}

TEST_CASE("ego-only scene puts attention weight 1 on the ego") {
  ModelParams m = init_model(tiny_config(), 8);
  PolylineSet pset;
  pset.polylines = {polyline(0, PolylineRole::ego, {row(0, 0, 1, 0)})};
  SceneEmbedding emb = encode_scene(m, pset);
  REQUIRE(emb.attention_weights.size() == 1);
  CHECK(emb.attention_weights[0] == 1.0);
  CHECK(emb.ego_index == 0);
}

TEST_CASE("permuting non-ego polylines leaves the context unchanged") {
  ModelParams m = init_model(tiny_config(), 9);
  auto p0 = polyline(0, PolylineRole::ego, {row(0, 0, 1, 0, 1)});
  auto p1 = polyline(1, PolylineRole::agent, {row(2, 1, 3, 1, 2)});
  auto p2 = polyline(2, PolylineRole::map, {row(-1, 0, -1, 5)});
  auto p3 = polyline(3, PolylineRole::map, {row(4, -2, 4, 6)});

  PolylineSet a, b;
  a.polylines = {p0, p1, p2, p3};
  b.polylines = {p0, p3, p1, p2};
  SceneEmbedding ea = encode_scene(m, a);
  SceneEmbedding eb = encode_scene(m, b);
  for (std::size_t d = 0; d < ea.global_context.size(); ++d)
    CHECK(ea.global_context[d] == Catch::Approx(eb.global_context[d]).margin(1e-12));
  // Weights permute with their polylines.
  CHECK(ea.attention_weights[1] == Catch::Approx(eb.attention_weights[2]).margin(1e-12));
  CHECK(ea.attention_weights[2] == Catch::Approx(eb.attention_weights[3]).margin(1e-12));
  CHECK(ea.attention_weights[3] == Catch::Approx(eb.attention_weights[1]).margin(1e-12));
}

TEST_CASE("identical non-ego polylines get equal attention weights") {
  ModelParams m = init_model(tiny_config(), 10);
  auto ego = polyline(0, PolylineRole::ego, {row(0, 0, 1, 0, 1)});
  auto twin_a = polyline(1, PolylineRole::agent, {row(2, 1, 3, 1, 2)});
  auto twin_b = polyline(2, PolylineRole::agent, {row(2, 1, 3, 1, 2)});
  PolylineSet pset;
  pset.polylines = {ego, twin_a, twin_b};
  SceneEmbedding emb = encode_scene(m, pset);
  CHECK(emb.attention_weights[1] == Catch::Approx(emb.attention_weights[2]).margin(1e-12));
  double sum = 0.0;
  for (double w : emb.attention_weights) sum += w;
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("missing or duplicate ego polyline is a structural error") {
  ModelParams m = init_model(tiny_config(), 11);
  PolylineSet none, twice;
  none.polylines = {polyline(0, PolylineRole::map, {row(0, 0, 1, 0)})};
  twice.polylines = {polyline(0, PolylineRole::ego, {row(0, 0, 1, 0)}),
                     polyline(1, PolylineRole::ego, {row(1, 0, 2, 0)})};
  auto features_none = encode_polylines(m, none);
  auto features_twice = encode_polylines(m, twice);
  CHECK_THROWS_AS(global_interaction(m, none, features_none), ValidationError);
  CHECK_THROWS_AS(global_interaction(m, twice, features_twice), ValidationError);
  PolylineSet empty;
  CHECK_THROWS_AS(encode_polylines(m, empty), ValidationError);
}

TEST_CASE("top-2 attention selection breaks ties by polyline id") {
  SceneEmbedding emb;
  emb.polyline_ids = {0, 1, 2, 3};
  emb.roles = {PolylineRole::ego, PolylineRole::agent, PolylineRole::agent, PolylineRole::map};
  emb.attention_weights = {0.25, 0.25, 0.25, 0.25};
  auto [first, second] = top_two_attention(emb);
  CHECK(first == 0);
  CHECK(second == 1);
  emb.attention_weights = {0.1, 0.2, 0.5, 0.2};
  auto [f2, s2] = top_two_attention(emb);
  CHECK(f2 == 2);
  CHECK(s2 == 1);
}

TEST_CASE("encoder gradients flow end to end") {
  ModelParams m = init_model(tiny_config(), 12);
  PolylineSet pset;
  pset.polylines = {polyline(0, PolylineRole::ego, {row(0, 0, 1, 0, 1), row(1, 0, 2, 1, 2)}),
                    polyline(1, PolylineRole::agent, {row(2, 1, 3, 1, 2)}),
                    polyline(2, PolylineRole::map, {row(-1, 0, -1, 5)})};
  SplitMix64 rng(3);
  Vec g(m.cfg.d_embed);
  for (double& v : g) v = rng.uniform(-1, 1);

  EncoderTape tape;
  SceneEmbedding emb = encode_scene(m, pset, &tape);
  ModelGrads grads = zero_grads(m);
  encode_scene_backward(m, pset, tape, emb.ego_index, g, grads);

  auto loss = [&]() {
    SceneEmbedding e = encode_scene(m, pset);
    double l = 0.0;
    for (std::size_t d = 0; d < g.size(); ++d) l += g[d] * e.global_context[d];
    return l;
  };
  auto sweep = [&](nn::MlpParams& params, nn::MlpParams& gparams) {
    std::vector<double*> ptrs, gptrs;
    nn::visit_params(params, [&](double& v) { ptrs.push_back(&v); });
    nn::visit_params(gparams, [&](double& v) { gptrs.push_back(&v); });
    const double h = 1e-5;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      double saved = *ptrs[i];
      *ptrs[i] = saved + h;
      double up = loss();
      *ptrs[i] = saved - h;
      double dn = loss();
      *ptrs[i] = saved;
      double fd = (up - dn) / (2.0 * h);
      double an = *gptrs[i];
      if (std::max(std::abs(fd), std::abs(an)) < 1e-10) continue;
      REQUIRE(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}) < 1e-4);
    }
  };
  sweep(m.subgraph, grads.subgraph);
  sweep(m.global_proj, grads.global_proj);
}
