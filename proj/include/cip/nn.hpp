#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cip/util.hpp"

namespace cip::nn {

using Vec = std::vector<double>;

struct Mat {
  int rows = 0, cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vec softmax_stable(const Vec& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Layer normalization (population variance, eps = 1e-5)

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormTape {
  Vec xhat;
  double inv_std = 0.0;
};

inline Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias,
                      LayerNormTape* tape = nullptr) {
  if (x.size() != gain.size() || x.size() != bias.size())
    throw DimensionError("layer_norm: mismatched lengths");
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  Vec out(n);
  Vec xhat(n);
  for (std::size_t i = 0; i < n; ++i) {
    xhat[i] = (x[i] - mean) * inv_std;
    out[i] = gain[i] * xhat[i] + bias[i];
  }
  if (tape) {
    tape->xhat = std::move(xhat);
    tape->inv_std = inv_std;
  }
  return out;
}

inline Vec layer_norm_backward(const LayerNormTape& tape, const Vec& gain, const Vec& dy,
                               Vec& dgain_acc, Vec& dbias_acc) {
  const std::size_t n = dy.size();
  Vec h(n);
  double mean_h = 0.0, mean_hx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dgain_acc[i] += dy[i] * tape.xhat[i];
    dbias_acc[i] += dy[i];
    h[i] = dy[i] * gain[i];
    mean_h += h[i];
    mean_hx += h[i] * tape.xhat[i];
  }
  mean_h /= static_cast<double>(n);
  mean_hx /= static_cast<double>(n);
  Vec dx(n);
  for (std::size_t i = 0; i < n; ++i)
    dx[i] = tape.inv_std * (h[i] - mean_h - tape.xhat[i] * mean_hx);
  return dx;
}

// ---------------------------------------------------------------------------
// MLP: hidden layers are affine -> layer norm -> ReLU; the output layer is
// affine only. Gradients reuse the parameter layout, so the gradient of an
// MlpParams is itself an MlpParams (shape-congruent by construction).

struct DenseLayer {
  Mat w;  // out x in
  Vec b;
  Vec ln_gain, ln_bias;  // empty on the output layer
  bool hidden = false;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  int in_size = 0;
  int out_size = 0;
};

using MlpGrads = MlpParams;

inline MlpParams make_mlp(int in, const std::vector<int>& hidden, int out, SplitMix64& rng) {
  MlpParams mlp;
  mlp.in_size = in;
  mlp.out_size = out;
  std::vector<int> sizes;
  sizes.push_back(in);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(out);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    int fan_in = sizes[l], fan_out = sizes[l + 1];
    layer.w = Mat(fan_out, fan_in);
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : layer.w.data) v = rng.uniform(-limit, limit);
    layer.b.assign(fan_out, 0.0);
    layer.hidden = (l + 2 < sizes.size());
    if (layer.hidden) {
      layer.ln_gain.assign(fan_out, 1.0);
      layer.ln_bias.assign(fan_out, 0.0);
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

inline MlpGrads zeros_like(const MlpParams& p) {
  MlpGrads g = p;
  for (auto& layer : g.layers) {
    std::fill(layer.w.data.begin(), layer.w.data.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
    std::fill(layer.ln_gain.begin(), layer.ln_gain.end(), 0.0);
    std::fill(layer.ln_bias.begin(), layer.ln_bias.end(), 0.0);
  }
  return g;
}

// Applies fn to every scalar parameter in a fixed order. Used by the SGD
// update, the checkpoint writer, and the finite-difference test harness.
inline void visit_params(MlpParams& p, const std::function<void(double&)>& fn) {
  for (auto& layer : p.layers) {
    for (double& v : layer.w.data) fn(v);
    for (double& v : layer.b) fn(v);
    for (double& v : layer.ln_gain) fn(v);
    for (double& v : layer.ln_bias) fn(v);
  }
}

struct MlpLayerTape {
  Vec input;
  LayerNormTape ln;
  Vec ln_out;  // pre-ReLU activations of hidden layers
};

struct MlpTape {
  std::vector<MlpLayerTape> layers;
  Vec output;
};

inline Vec mlp_forward(const MlpParams& mlp, const Vec& input, MlpTape* tape = nullptr) {
  if (static_cast<int>(input.size()) != mlp.in_size)
    throw DimensionError("mlp_forward: input size " + std::to_string(input.size()) +
                         " != declared " + std::to_string(mlp.in_size));
  if (tape) {
    tape->layers.clear();
    tape->layers.resize(mlp.layers.size());
  }
  Vec x = input;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const DenseLayer& layer = mlp.layers[l];
    if (tape) tape->layers[l].input = x;
    Vec z(layer.w.rows, 0.0);
    for (int r = 0; r < layer.w.rows; ++r) {
      double acc = layer.b[r];
      const double* wrow = &layer.w.data[static_cast<std::size_t>(r) * layer.w.cols];
      for (int c = 0; c < layer.w.cols; ++c) acc += wrow[c] * x[c];
      z[r] = acc;
    }
    if (layer.hidden) {
      Vec ln_out = layer_norm(z, layer.ln_gain, layer.ln_bias,
                              tape ? &tape->layers[l].ln : nullptr);
      if (tape) tape->layers[l].ln_out = ln_out;
      for (double& v : ln_out) v = v > 0.0 ? v : 0.0;
      x = std::move(ln_out);
    } else {
      x = std::move(z);
    }
  }
  if (tape) tape->output = x;
  return x;
}

// Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
inline Vec mlp_backward(const MlpParams& mlp, const MlpTape& tape, const Vec& d_output,
                        MlpGrads& grads) {
  if (d_output.size() != static_cast<std::size_t>(mlp.out_size))
    throw DimensionError("mlp_backward: upstream gradient size mismatch");
  Vec dy = d_output;
  for (int l = static_cast<int>(mlp.layers.size()) - 1; l >= 0; --l) {
    const DenseLayer& layer = mlp.layers[l];
    const MlpLayerTape& lt = tape.layers[l];
    DenseLayer& glayer = grads.layers[l];
    Vec dz;
    if (layer.hidden) {
      Vec d_ln(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i)
        d_ln[i] = lt.ln_out[i] > 0.0 ? dy[i] : 0.0;  // ReLU mask
      dz = layer_norm_backward(lt.ln, layer.ln_gain, d_ln, glayer.ln_gain, glayer.ln_bias);
    } else {
      dz = dy;
    }
    Vec dx(layer.w.cols, 0.0);
    for (int r = 0; r < layer.w.rows; ++r) {
      glayer.b[r] += dz[r];
      double* gw = &glayer.w.data[static_cast<std::size_t>(r) * layer.w.cols];
      const double* wrow = &layer.w.data[static_cast<std::size_t>(r) * layer.w.cols];
      for (int c = 0; c < layer.w.cols; ++c) {
        gw[c] += dz[r] * lt.input[c];
        dx[c] += wrow[c] * dz[r];
      }
    }
    dy = std::move(dx);
  }
  return dy;
}

// Plain SGD: theta <- theta - eta * grad.
inline void sgd_step(MlpParams& params, const MlpGrads& grads, double eta) {
  if (params.layers.size() != grads.layers.size())
    throw DimensionError("sgd_step: gradient/parameter layer count mismatch");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    DenseLayer& p = params.layers[l];
    const DenseLayer& g = grads.layers[l];
    if (p.w.data.size() != g.w.data.size())
      throw DimensionError("sgd_step: gradient/parameter shape mismatch");
    for (std::size_t i = 0; i < p.w.data.size(); ++i) p.w.data[i] -= eta * g.w.data[i];
    for (std::size_t i = 0; i < p.b.size(); ++i) p.b[i] -= eta * g.b[i];
    for (std::size_t i = 0; i < p.ln_gain.size(); ++i) p.ln_gain[i] -= eta * g.ln_gain[i];
    for (std::size_t i = 0; i < p.ln_bias.size(); ++i) p.ln_bias[i] -= eta * g.ln_bias[i];
  }
}

// ---------------------------------------------------------------------------
// Single-head scaled dot-product attention. Weights are returned for
// interpretability export; gradients flow through the context only.

struct AttentionTape {
  Vec query;
  std::vector<Vec> keys, values;
  Vec weights;
  double scale = 1.0;
};

struct AttentionOut {
  Vec context;
  Vec weights;
};

inline AttentionOut attention(const Vec& query, const std::vector<Vec>& keys,
                              const std::vector<Vec>& values, AttentionTape* tape = nullptr) {
  if (keys.empty()) throw DimensionError("attention: empty key set");
  if (keys.size() != values.size())
    throw DimensionError("attention: keys and values must align");
  const std::size_t d = query.size();
  for (const auto& k : keys)
    if (k.size() != d) throw DimensionError("attention: key dimension mismatch");
  double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Vec scores(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += query[j] * keys[i][j];
    scores[i] = s * scale;
  }
  Vec weights = softmax_stable(scores);
  Vec context(values[0].size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < context.size(); ++j) context[j] += weights[i] * values[i][j];
  if (tape) {
    tape->query = query;
    tape->keys = keys;
    tape->values = values;
    tape->weights = weights;
    tape->scale = scale;
  }
  return {std::move(context), std::move(weights)};
}

struct AttentionGrads {
  Vec d_query;
  std::vector<Vec> d_keys, d_values;
};

inline AttentionGrads attention_backward(const AttentionTape& tape, const Vec& d_context) {
  const std::size_t n = tape.keys.size();
  const std::size_t d = tape.query.size();
  AttentionGrads g;
  g.d_query.assign(d, 0.0);
  g.d_keys.assign(n, Vec(d, 0.0));
  g.d_values.assign(n, Vec(tape.values[0].size(), 0.0));

  Vec dw(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_context.size(); ++j) {
      g.d_values[i][j] = tape.weights[i] * d_context[j];
      dw[i] += tape.values[i][j] * d_context[j];
    }
  }
  double wd = 0.0;
  for (std::size_t i = 0; i < n; ++i) wd += tape.weights[i] * dw[i];
  for (std::size_t i = 0; i < n; ++i) {
    double ds = tape.weights[i] * (dw[i] - wd);  // softmax backward
    for (std::size_t j = 0; j < d; ++j) {
      g.d_query[j] += ds * tape.keys[i][j] * tape.scale;
      g.d_keys[i][j] += ds * tape.query[j] * tape.scale;
    }
  }
  return g;
}

}  // namespace cip::nn
