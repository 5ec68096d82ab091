#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "cip/model.hpp"
#include "cip/nn.hpp"
#include "cip/util.hpp"

using namespace cip;
using nn::Vec;

namespace {

double rel_err(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

std::vector<double*> param_ptrs(nn::MlpParams& p) {
  std::vector<double*> out;
  nn::visit_params(p, [&](double& v) { out.push_back(&v); });
  return out;
}

// Central finite differences of a scalar functional against analytic grads.
void check_mlp_gradients(nn::MlpParams mlp, const Vec& input, const Vec& upstream) {
  nn::MlpTape tape;
  nn::mlp_forward(mlp, input, &tape);
  nn::MlpGrads grads = nn::zeros_like(mlp);
  Vec d_input = nn::mlp_backward(mlp, tape, upstream, grads);

  auto loss = [&](const Vec& x) {
    Vec out = nn::mlp_forward(mlp, x);
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += upstream[i] * out[i];
    return l;
  };

  const double h = 1e-5;
  auto ptrs = param_ptrs(mlp);
  auto gptrs = param_ptrs(grads);
  REQUIRE(ptrs.size() == gptrs.size());
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    double saved = *ptrs[i];
    *ptrs[i] = saved + h;
    double up = loss(input);
    *ptrs[i] = saved - h;
    double dn = loss(input);
    *ptrs[i] = saved;
    double fd = (up - dn) / (2.0 * h);
    if (std::max(std::abs(fd), std::abs(*gptrs[i])) < 1e-10) continue;
    REQUIRE(rel_err(fd, *gptrs[i]) < 1e-4);
  }
  Vec x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double saved = x[i];
    x[i] = saved + h;
    double up = loss(x);
    x[i] = saved - h;
    double dn = loss(x);
    x[i] = saved;
    double fd = (up - dn) / (2.0 * h);
    if (std::max(std::abs(fd), std::abs(d_input[i])) < 1e-10) continue;
    REQUIRE(rel_err(fd, d_input[i]) < 1e-4);
  }
}

}  // namespace

TEST_CASE("layer norm basics") {
  Vec gain{1, 1, 1}, bias{0, 0, 0};
  SECTION("constant input maps to zero") {
    Vec y = nn::layer_norm({1, 1, 1}, gain, bias);
    for (double v : y) CHECK(v == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("hand-computed case [1,2,3]") {
    Vec y = nn::layer_norm({1, 2, 3}, gain, bias);
    double inv_std = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5);
    CHECK(y[0] == Catch::Approx(-inv_std).epsilon(1e-12));
    CHECK(y[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(y[2] == Catch::Approx(inv_std).epsilon(1e-12));
    CHECK(y[2] == Catch::Approx(1.2247).margin(1e-3));
  }
  SECTION("shift invariance") {
    SplitMix64 rng(1);
    Vec x{0.4, -1.2, 2.2, 0.9};
    Vec g{1.5, 0.5, -1.0, 2.0}, b{0.1, 0.2, 0.3, 0.4};
    Vec y0 = nn::layer_norm(x, g, b);
    for (double k : {-3.0, 0.7, 42.0}) {
      Vec xs = x;
      for (double& v : xs) v += k;
      Vec y = nn::layer_norm(xs, g, b);
      for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == Catch::Approx(y0[i]).margin(1e-9));
    }
  }
}

TEST_CASE("attention weight contracts") {
  SECTION("single key gets weight 1") {
    auto out = nn::attention({0.3, -0.2}, {{1.0, 2.0}}, {{5.0, 6.0}});
    REQUIRE(out.weights.size() == 1);
    CHECK(out.weights[0] == 1.0);
    CHECK(out.context[0] == 5.0);
  }
  SECTION("identical keys share weight uniformly") {
    std::vector<Vec> keys(5, Vec{0.7, -0.4});
    std::vector<Vec> values{{1, 0}, {0, 1}, {2, 2}, {-1, 3}, {0, 0}};
    auto out = nn::attention({1.0, 1.0}, keys, values);
    for (double w : out.weights) CHECK(w == Catch::Approx(0.2).margin(1e-12));
  }
  SECTION("closed-form 2-key case") {
    auto out = nn::attention({1, 0}, {{1, 0}, {0, 1}}, {{1, 0}, {0, 1}});
    double s = 1.0 / std::sqrt(2.0);
    double e = std::exp(s);
    CHECK(out.weights[0] == Catch::Approx(e / (e + 1.0)).epsilon(1e-12));
    CHECK(out.weights[1] == Catch::Approx(1.0 / (e + 1.0)).epsilon(1e-12));
    CHECK(out.weights[0] == Catch::Approx(0.6698).margin(1e-3));
    CHECK(out.weights[1] == Catch::Approx(0.3302).margin(1e-3));
  }
  SECTION("weights are a probability vector") {
    SplitMix64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      int n = rng.uniform_int(1, 12);
      std::vector<Vec> keys, values;
      for (int i = 0; i < n; ++i) {
        keys.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)});
        values.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3)});
      }
      Vec q{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
      auto out = nn::attention(q, keys, values);
      double sum = 0.0;
      for (double w : out.weights) {
        CHECK(w >= 0.0);
        sum += w;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  SECTION("empty keys are rejected") {
    CHECK_THROWS_AS(nn::attention({1.0}, {}, {}), DimensionError);
  }
}

TEST_CASE("mlp forward basics") {
  SplitMix64 rng(17);
  SECTION("zero parameters give zero output") {
    nn::MlpParams mlp = nn::make_mlp(3, {4}, 2, rng);
    for (auto& layer : mlp.layers) {
      std::fill(layer.w.data.begin(), layer.w.data.end(), 0.0);
      std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
    Vec out = nn::mlp_forward(mlp, {1.0, -2.0, 3.0});
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
  }
  SECTION("purity: same input twice") {
    nn::MlpParams mlp = nn::make_mlp(3, {8, 8}, 2, rng);
    Vec a = nn::mlp_forward(mlp, {0.1, 0.2, 0.3});
    Vec b = nn::mlp_forward(mlp, {0.1, 0.2, 0.3});
    CHECK(a == b);
  }
  SECTION("input size is checked") {
    nn::MlpParams mlp = nn::make_mlp(3, {4}, 2, rng);
    CHECK_THROWS_AS(nn::mlp_forward(mlp, {1.0, 2.0}), DimensionError);
  }
}

TEST_CASE("mlp 2x2 hand evaluation through affine + layer norm + relu") {
  SplitMix64 rng(0);
  nn::MlpParams mlp = nn::make_mlp(2, {2}, 2, rng);
  mlp.layers[0].w.data = {1.0, 0.0, 0.0, -1.0};
  mlp.layers[0].b = {0.5, 0.5};
  mlp.layers[0].ln_gain = {2.0, 1.0};
  mlp.layers[0].ln_bias = {0.1, -0.1};
  mlp.layers[1].w.data = {1.0, 1.0, 1.0, -1.0};
  mlp.layers[1].b = {0.0, 0.0};

  // Hand evaluation: z = [0.8, -0.2]; mean 0.3, population var 0.25.
  double inv_std = 1.0 / std::sqrt(0.25 + 1e-5);
  double h0 = 2.0 * 0.5 * inv_std + 0.1;    // > 0, passes ReLU
  double h1 = 1.0 * -0.5 * inv_std - 0.1;   // < 0, clipped
  (void)h1;
  Vec expect{h0, h0};

  Vec out = nn::mlp_forward(mlp, {0.3, 0.7});
  CHECK(out[0] == Catch::Approx(expect[0]).epsilon(1e-12));
  CHECK(out[1] == Catch::Approx(expect[1]).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 8; ++trial) {
    nn::MlpParams mlp = nn::make_mlp(3, {4, 4}, 2, rng);
    Vec input{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec upstream{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    check_mlp_gradients(mlp, input, upstream);
  }
}

TEST_CASE("zero upstream gradient yields zero gradients") {
  SplitMix64 rng(31);
  nn::MlpParams mlp = nn::make_mlp(3, {4}, 2, rng);
  nn::MlpTape tape;
  nn::mlp_forward(mlp, {0.2, -0.4, 0.9}, &tape);
  nn::MlpGrads grads = nn::zeros_like(mlp);
  nn::mlp_backward(mlp, tape, {0.0, 0.0}, grads);
  nn::visit_params(grads, [](double& v) { CHECK(v == 0.0); });
}

TEST_CASE("attention gradients match finite differences") {
  SplitMix64 rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    int n = rng.uniform_int(2, 5);
    std::vector<Vec> keys, values;
    for (int i = 0; i < n; ++i) {
      keys.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      values.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    Vec q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec g{rng.uniform(-1, 1), rng.uniform(-1, 1)};

    nn::AttentionTape tape;
    nn::attention(q, keys, values, &tape);
    nn::AttentionGrads grads = nn::attention_backward(tape, g);

    auto loss = [&]() {
      auto out = nn::attention(q, keys, values);
      return g[0] * out.context[0] + g[1] * out.context[1];
    };
    const double h = 1e-6;
    auto fd_check = [&](double& slot, double analytic) {
      double saved = slot;
      slot = saved + h;
      double up = loss();
      slot = saved - h;
      double dn = loss();
      slot = saved;
      double fd = (up - dn) / (2.0 * h);
      if (std::max(std::abs(fd), std::abs(analytic)) < 1e-10) return;
      REQUIRE(rel_err(fd, analytic) < 1e-4);
    };
    for (int j = 0; j < 3; ++j) fd_check(q[j], grads.d_query[j]);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) fd_check(keys[i][j], grads.d_keys[i][j]);
      for (int j = 0; j < 2; ++j) fd_check(values[i][j], grads.d_values[i][j]);
    }
  }
}

TEST_CASE("sgd step") {
  SplitMix64 rng(41);
  nn::MlpParams mlp = nn::make_mlp(2, {3}, 1, rng);
  nn::MlpParams before = mlp;
  nn::MlpGrads grads = nn::zeros_like(mlp);
  grads.layers[0].w.data[0] = 2.0;

  SECTION("eta = 0 leaves parameters unchanged") {
    nn::sgd_step(mlp, grads, 0.0);
    CHECK(mlp.layers[0].w.data == before.layers[0].w.data);
  }
  SECTION("applies theta - eta * grad") {
    nn::sgd_step(mlp, grads, 0.1);
    CHECK(mlp.layers[0].w.data[0] == Catch::Approx(before.layers[0].w.data[0] - 0.2));
    CHECK(mlp.layers[0].w.data[1] == before.layers[0].w.data[1]);
  }
}

TEST_CASE("checkpoint save/load round-trips exactly") {
  ModelConfig cfg;
  cfg.d_embed = 6;
  cfg.subgraph_hidden = 5;
  cfg.head_hidden = {4, 4};
  cfg.n_targets = 3;
  ModelParams m = init_model(cfg, 99);
  auto path = std::filesystem::temp_directory_path() / "cip_ckpt_test.json";
  save_checkpoint(m, path.string());
  ModelParams r = load_checkpoint(path.string());
  CHECK(model_to_json(m).dump() == model_to_json(r).dump());
  CHECK(r.cfg == cfg);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint schema is validated") {
  auto path = std::filesystem::temp_directory_path() / "cip_bad_ckpt.json";
  {
    std::ofstream out(path);
    out << "{\"schema\": \"something-else\", \"params\": {}}";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("sigmoid is bounded and symmetric") {
  CHECK(nn::sigmoid(0.0) == 0.5);
  CHECK(nn::sigmoid(800.0) == 1.0);
  CHECK(nn::sigmoid(-800.0) >= 0.0);
  CHECK(nn::sigmoid(-800.0) < 1e-300);
  SplitMix64 rng(2);
  for (int i = 0; i < 100; ++i) {
    double x = rng.uniform(-20, 20);
    CHECK(nn::sigmoid(x) + nn::sigmoid(-x) == Catch::Approx(1.0).margin(1e-12));
  }
}
