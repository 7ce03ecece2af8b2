#pragma once

// Independent double-precision interpreter of a ModelGraph. Direct nested-loop
// convolution, no im2col, no shared code with the engine. Used as the oracle
// for forward passes and for finite-difference gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prunebench/graph.hpp"
#include "prunebench/nn.hpp"
#include "prunebench/tensor.hpp"

namespace reftest {

using prunebench::LayerKind;
using prunebench::LayerSpec;
using prunebench::ModelGraph;
using prunebench::Tensor;

struct DTensor {
  std::vector<std::size_t> shape;  // (n, c, h, w) or (n, f)
  std::vector<double> v;
};

using DParams = std::map<std::string, std::vector<double>>;

inline DParams to_double(const ModelGraph& m) {
  DParams out;
  for (const auto& [name, t] : m.params()) out[name] = std::vector<double>(t.data().begin(), t.data().end());
  return out;
}

inline DTensor to_double(const Tensor& t) { return {t.shape(), std::vector<double>(t.data().begin(), t.data().end())}; }

// Forward in eval mode (running statistics) or train mode (batch statistics,
// biased variance). Returns the logits.
inline DTensor reference_forward(const ModelGraph& m, const DParams& p, const DTensor& x, bool train) {
  std::vector<DTensor> out(m.size());
  auto input_of = [&](const LayerSpec& l, std::size_t i = 0) -> const DTensor& {
    return l.inputs[i] == prunebench::kGraphInput ? x : out[static_cast<std::size_t>(l.inputs[i])];
  };
  for (std::size_t li = 0; li < m.size(); ++li) {
    const LayerSpec& l = m.layer(li);
    const DTensor& a = input_of(l);
    DTensor y;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const std::size_t n = a.shape[0], c = a.shape[1], h = a.shape[2], w = a.shape[3];
        const std::size_t k = l.kernel, s = l.stride, pd = l.padding, o = l.out_channels;
        const std::size_t ho = (h + 2 * pd - k) / s + 1, wo = (w + 2 * pd - k) / s + 1;
        const auto& W = p.at(l.name + ".weight");
        const std::vector<double>* B = l.bias ? &p.at(l.name + ".bias") : nullptr;
        y.shape = {n, o, ho, wo};
        y.v.assign(n * o * ho * wo, 0.0);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t oc = 0; oc < o; ++oc)
            for (std::size_t i = 0; i < ho; ++i)
              for (std::size_t j = 0; j < wo; ++j) {
                double acc = B ? (*B)[oc] : 0.0;
                for (std::size_t ic = 0; ic < c; ++ic)
                  for (std::size_t ki = 0; ki < k; ++ki)
                    for (std::size_t kj = 0; kj < k; ++kj) {
                      const long r = static_cast<long>(i * s + ki) - static_cast<long>(pd);
                      const long q = static_cast<long>(j * s + kj) - static_cast<long>(pd);
                      if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                      acc += W[((oc * c + ic) * k + ki) * k + kj] * a.v[((b * c + ic) * h + r) * w + q];
                    }
                y.v[((b * o + oc) * ho + i) * wo + j] = acc;
              }
        break;
      }
      case LayerKind::Linear: {
        const std::size_t n = a.shape[0], in = l.in_channels, o = l.out_channels;
        const auto& W = p.at(l.name + ".weight");
        y.shape = {n, o};
        y.v.assign(n * o, 0.0);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t oc = 0; oc < o; ++oc) {
            double acc = l.bias ? p.at(l.name + ".bias")[oc] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += W[oc * in + i] * a.v[b * in + i];
            y.v[b * o + oc] = acc;
          }
        break;
      }
      case LayerKind::BatchNorm2d: {
        const std::size_t n = a.shape[0], c = a.shape[1], hw = a.shape[2] * a.shape[3];
        const auto& g = p.at(l.name + ".weight");
        const auto& be = p.at(l.name + ".bias");
        y = a;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double mean = 0.0, var = 0.0;
          if (train) {
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t i = 0; i < hw; ++i) mean += a.v[(b * c + ch) * hw + i];
            mean /= static_cast<double>(n * hw);
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t i = 0; i < hw; ++i) {
                const double d = a.v[(b * c + ch) * hw + i] - mean;
                var += d * d;
              }
            var /= static_cast<double>(n * hw);
          } else {
            mean = p.at(l.name + ".running_mean")[ch];
            var = p.at(l.name + ".running_var")[ch];
          }
          const double inv = 1.0 / std::sqrt(var + static_cast<double>(prunebench::kBatchNormEpsilon));
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              double& v = y.v[(b * c + ch) * hw + i];
              v = (v - mean) * inv * g[ch] + be[ch];
            }
        }
        break;
      }
      case LayerKind::Relu:
        y = a;
        for (double& v : y.v) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const std::size_t n = a.shape[0], c = a.shape[1], h = a.shape[2], w = a.shape[3];
        const bool global = l.kernel == 0;
        const std::size_t k = global ? 0 : l.kernel, s = global ? 1 : l.stride, pd = global ? 0 : l.padding;
        const std::size_t ho = global ? 1 : (h + 2 * pd - k) / s + 1, wo = global ? 1 : (w + 2 * pd - k) / s + 1;
        const long kh = global ? static_cast<long>(h) : static_cast<long>(k);
        const long kw = global ? static_cast<long>(w) : static_cast<long>(k);
        y.shape = {n, c, ho, wo};
        y.v.assign(n * c * ho * wo, 0.0);
        for (std::size_t bc = 0; bc < n * c; ++bc)
          for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j) {
              double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
              for (long r = static_cast<long>(i * s) - static_cast<long>(pd); r < static_cast<long>(i * s) - static_cast<long>(pd) + kh; ++r)
                for (long q = static_cast<long>(j * s) - static_cast<long>(pd); q < static_cast<long>(j * s) - static_cast<long>(pd) + kw; ++q) {
                  if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                  const double v = a.v[(bc * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(q)];
                  best = std::max(best, v);
                  sum += v;
                }
              y.v[(bc * ho + i) * wo + j] = l.kind == LayerKind::MaxPool ? best : sum / static_cast<double>(kh * kw);
            }
        break;
      }
      case LayerKind::Add: {
        const DTensor& b = input_of(l, 1);
        y = a;
        for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += b.v[i];
        break;
      }
      case LayerKind::Flatten:
        y = a;
        y.shape = {a.shape[0], a.v.size() / a.shape[0]};
        break;
    }
    out[li] = std::move(y);
  }
  return out.back();
}

// Mean softmax cross-entropy.
inline double reference_loss(const DTensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.shape[0], k = logits.shape[1];
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.v[b * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.v[b * k + j] - mx);
    total += std::log(z) + mx - logits.v[b * k + static_cast<std::size_t>(labels[b])];
  }
  return total / static_cast<double>(n);
}

// Random weights plus non-trivial batchnorm state so that eval-mode passes
// exercise every parameter.
inline void randomize(ModelGraph& m, std::mt19937_64& rng) {
  prunebench::init_parameters(m, rng());
  std::uniform_real_distribution<float> u(-0.5f, 0.5f), pos(0.5f, 1.5f);
  for (const auto& l : m.layers()) {
    if (l.kind == LayerKind::BatchNorm2d) {
      for (float& v : m.param(l.name + ".weight").data()) v = pos(rng);
      for (float& v : m.param(l.name + ".bias").data()) v = u(rng);
      for (float& v : m.param(l.name + ".running_mean").data()) v = u(rng);
      for (float& v : m.param(l.name + ".running_var").data()) v = pos(rng);
    }
    if (l.bias)
      for (float& v : m.param(l.name + ".bias").data()) v = u(rng);
  }
}

inline Tensor random_input(const prunebench::InputSpec& in, std::size_t n, std::mt19937_64& rng) {
  Tensor t({n, in.channels, in.height, in.width});
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (float& v : t.data()) v = d(rng);
  return t;
}

// Random small residual network: stem, 1-3 basic blocks (with or without a
// projection shortcut), optional max pool, global-pool or flatten head.
inline ModelGraph random_resnet(std::mt19937_64& rng, std::size_t max_width = 8) {
  std::uniform_int_distribution<std::size_t> width(2, max_width), side(4, 7), classes(2, 5);
  std::uniform_int_distribution<int> blocks(1, 3), coin(0, 1);
  prunebench::InputSpec in{static_cast<std::size_t>(coin(rng) + 1), side(rng), side(rng), classes(rng)};
  ModelGraph g("random-resnet", in);
  std::size_t c = width(rng);
  const bool stem_bias = coin(rng) == 1;
  int x = g.conv("stem", prunebench::kGraphInput, in.channels, c, 3, 1, 1, stem_bias);
  x = g.batchnorm("stem.bn", x, c);
  x = g.relu("stem.relu", x);
  g.mutable_layer(0).role = prunebench::ConvRole::NonBlock;
  const int nb = blocks(rng);
  for (int b = 0; b < nb; ++b) {
    const std::string p = "b" + std::to_string(b) + ".";
    const std::size_t mid = width(rng);
    const bool project = coin(rng) == 1;
    const std::size_t out = project ? width(rng) : c;
    const std::size_t stride = project && coin(rng) == 1 ? 2 : 1;
    int h = g.conv(p + "conv1", x, c, mid, 3, stride, 1);
    g.mutable_layer(static_cast<std::size_t>(h)).role = prunebench::ConvRole::BlockInternal;
    g.mutable_layer(static_cast<std::size_t>(h)).prunable = true;
    g.mutable_layer(static_cast<std::size_t>(h)).stage = 1;
    h = g.batchnorm(p + "bn1", h, mid);
    h = g.relu(p + "relu1", h);
    h = g.conv(p + "conv2", h, mid, out, 3, 1, 1);
    g.mutable_layer(static_cast<std::size_t>(h)).role = prunebench::ConvRole::BlockLast;
    g.mutable_layer(static_cast<std::size_t>(h)).stage = 1;
    h = g.batchnorm(p + "bn2", h, out);
    int skip = x;
    if (project) {
      skip = g.conv(p + "shortcut.conv", x, c, out, 1, stride, 0);
      g.mutable_layer(static_cast<std::size_t>(skip)).role = prunebench::ConvRole::Shortcut;
      g.mutable_layer(static_cast<std::size_t>(skip)).stage = 1;
      skip = g.batchnorm(p + "shortcut.bn", skip, out);
    }
    x = g.add(p + "add", h, skip);
    x = g.relu(p + "relu2", x);
    c = out;
  }
  const auto body = g.infer_shapes().back();
  if (coin(rng) == 1 || std::min(body.h, body.w) < 2) {
    x = g.avgpool("pool", x);
    x = g.flatten("flatten", x);
    g.linear("fc", x, c, in.num_classes);
  } else {
    x = g.maxpool("pool", x, 2, 2);
    const auto shapes = g.infer_shapes();
    x = g.flatten("flatten", x);
    g.linear("fc", x, shapes.back().numel(), in.num_classes);
  }
  g.mutable_layer(g.size() - 1).stage = 2;
  return g;
}

// Random plain chain: conv-bn-relu units with interleaved max pools and a
// flatten head (exercises channel-to-feature keep propagation).
inline ModelGraph random_chain(std::mt19937_64& rng, std::size_t max_width = 8) {
  std::uniform_int_distribution<std::size_t> width(2, max_width), side(4, 8), classes(2, 5);
  std::uniform_int_distribution<int> units(2, 4), coin(0, 1);
  prunebench::InputSpec in{3, side(rng), side(rng), classes(rng)};
  ModelGraph g("random-chain", in);
  int x = prunebench::kGraphInput;
  std::size_t c = in.channels;
  const int nu = units(rng);
  bool pooled = false;
  for (int u = 0; u < nu; ++u) {
    const std::string p = "u" + std::to_string(u) + ".";
    const std::size_t o = width(rng);
    const std::size_t k = coin(rng) ? 3 : 1;
    const bool bias = coin(rng) == 1;
    x = g.conv(p + "conv", x, c, o, k, 1, k / 2, bias);
    g.mutable_layer(static_cast<std::size_t>(x)).prunable = u > 0;
    x = g.batchnorm(p + "bn", x, o);
    x = g.relu(p + "relu", x);
    if (!pooled && coin(rng) == 1) {
      x = g.maxpool(p + "pool", x, 2, 2);
      pooled = true;
    }
    c = o;
  }
  const auto shapes = g.infer_shapes();
  x = g.flatten("flatten", x);
  g.linear("fc", x, shapes.back().numel(), in.num_classes);
  return g;
}

}  // namespace reftest
