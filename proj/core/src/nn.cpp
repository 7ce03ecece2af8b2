#include "prunebench/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <type_traits>

#include "prunebench/error.hpp"

namespace prunebench {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeom {
  std::size_t n, c, h, w, o, k, s, p, ho, wo;
  std::size_t K() const { return c * k * k; }
  std::size_t P() const { return ho * wo; }
};

ConvGeom conv_geom(const LayerSpec& l, const Tensor& x) {
  if (x.rank() != 4) throw ShapeError(l.name, "conv2d expects a 4-d input, got " + shape_to_string(x.shape()));
  if (x.dim(1) != l.in_channels)
    throw ShapeError(l.name, "expects " + std::to_string(l.in_channels) + " input channels, got " +
                                 std::to_string(x.dim(1)));
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), l.out_channels, l.kernel, l.stride, l.padding, 0, 0};
  if (g.h + 2 * g.p < g.k || g.w + 2 * g.p < g.k) throw ShapeError(l.name, "kernel larger than padded input");
  g.ho = (g.h + 2 * g.p - g.k) / g.s + 1;
  g.wo = (g.w + 2 * g.p - g.k) / g.s + 1;
  return g;
}

// Output columns [lo, hi) whose input column ow*s + kj - p lies inside [0, w).
std::pair<std::size_t, std::size_t> valid_cols(const ConvGeom& g, std::size_t kj) {
  std::size_t lo = 0;
  while (lo < g.wo && lo * g.s + kj < g.p) ++lo;
  std::size_t hi = lo;
  while (hi < g.wo && hi * g.s + kj < g.p + g.w) ++hi;
  return {lo, hi};
}

// Column matrix (K x N*P): column n*P + p holds the receptive field of output
// pixel p of sample n.
void im2col(const ConvGeom& g, const float* x, float* col) {
  const std::size_t NP = g.n * g.P();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        float* row = col + ((c * g.k + ki) * g.k + kj) * NP;
        const auto [lo, hi] = valid_cols(g, kj);
        for (std::size_t n = 0; n < g.n; ++n) {
          const float* xc = x + (n * g.c + c) * g.h * g.w;
          float* dst = row + n * g.P();
          for (std::size_t oh = 0; oh < g.ho; ++oh, dst += g.wo) {
            const long ih = static_cast<long>(oh * g.s + ki) - static_cast<long>(g.p);
            if (ih < 0 || ih >= static_cast<long>(g.h)) {
              std::fill_n(dst, g.wo, 0.0f);
              continue;
            }
            std::fill_n(dst, lo, 0.0f);
            const float* src = xc + ih * static_cast<long>(g.w) + static_cast<long>(kj) - static_cast<long>(g.p);
            if (g.s == 1) {
              std::copy(src + lo, src + hi, dst + lo);
            } else {
              for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.s];
            }
            std::fill(dst + hi, dst + g.wo, 0.0f);
          }
        }
      }
}

void col2im(const ConvGeom& g, const float* col, float* dx) {
  const std::size_t NP = g.n * g.P();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const float* row = col + ((c * g.k + ki) * g.k + kj) * NP;
        const auto [lo, hi] = valid_cols(g, kj);
        for (std::size_t n = 0; n < g.n; ++n) {
          float* dxc = dx + (n * g.c + c) * g.h * g.w;
          const float* src = row + n * g.P();
          for (std::size_t oh = 0; oh < g.ho; ++oh, src += g.wo) {
            const long ih = static_cast<long>(oh * g.s + ki) - static_cast<long>(g.p);
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            float* dst = dxc + ih * static_cast<long>(g.w) + static_cast<long>(kj) - static_cast<long>(g.p);
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow * g.s] += src[ow];
          }
        }
      }
}

// Reused per-thread work buffers; large per-call allocations otherwise
// dominate small-image training time.
float* scratch(std::size_t slot, std::size_t count) {
  thread_local std::vector<float> buffers[3];
  if (buffers[slot].size() < count) buffers[slot].resize(count);
  return buffers[slot].data();
}

Tensor conv_forward(const LayerSpec& l, const Tensor& x, const Tensor& weight, const Tensor* bias) {
  const ConvGeom g = conv_geom(l, x);
  const std::size_t K = g.K(), P = g.P(), NP = g.n * P;
  float* col = scratch(0, K * NP);
  im2col(g, x.ptr(), col);
  MatMap out(scratch(1, g.o * NP), g.o, NP);
  out.noalias() = ConstMatMap(weight.ptr(), g.o, K) * ConstMatMap(col, K, NP);

  Tensor y({g.n, g.o, g.ho, g.wo});
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < g.o; ++o) {
      const float b = bias ? (*bias)[o] : 0.0f;
      const float* src = out.data() + o * NP + n * P;
      float* dst = y.ptr() + (n * g.o + o) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
    }
  return y;
}

void conv_backward(const LayerSpec& l, const Tensor& x, const Tensor& weight, const Tensor& dy,
                   Tensor* dx, Tensor& dweight, Tensor* dbias) {
  const ConvGeom g = conv_geom(l, x);
  const std::size_t K = g.K(), P = g.P(), NP = g.n * P;
  float* col = scratch(0, K * NP);
  im2col(g, x.ptr(), col);

  MatMap dy_r(scratch(1, g.o * NP), g.o, NP);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < g.o; ++o)
      std::copy_n(dy.ptr() + (n * g.o + o) * P, P, dy_r.data() + o * NP + n * P);

  MatMap(dweight.ptr(), g.o, K).noalias() += dy_r * ConstMatMap(col, K, NP).transpose();
  if (dbias)
    for (std::size_t o = 0; o < g.o; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < NP; ++i) s += dy_r(o, i);
      (*dbias)[o] += static_cast<float>(s);
    }
  if (dx) {
    MatMap dcol(scratch(2, K * NP), K, NP);
    dcol.noalias() = ConstMatMap(weight.ptr(), g.o, K).transpose() * dy_r;
    col2im(g, dcol.data(), dx->ptr());
  }
}

Tensor linear_forward(const LayerSpec& l, const Tensor& x, const Tensor& weight, const Tensor* bias) {
  if (x.rank() != 2 || x.dim(1) != l.in_channels)
    throw ShapeError(l.name, "linear expects (N, " + std::to_string(l.in_channels) + ") input, got " +
                                 shape_to_string(x.shape()));
  const std::size_t n = x.dim(0);
  Tensor y({n, l.out_channels});
  MatMap(y.ptr(), n, l.out_channels).noalias() =
      ConstMatMap(x.ptr(), n, l.in_channels) * ConstMatMap(weight.ptr(), l.out_channels, l.in_channels).transpose();
  if (bias)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < l.out_channels; ++o) y[i * l.out_channels + o] += (*bias)[o];
  return y;
}

struct BnStats {
  std::vector<float> mean, var;
};

BnStats channel_stats(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const double m = static_cast<double>(n * hw);
  BnStats s{std::vector<float>(c, 0.0f), std::vector<float>(c, 0.0f)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = x.ptr() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) sum += p[j];
    }
    const double mean = sum / m;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = x.ptr() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    s.mean[ch] = static_cast<float>(mean);
    s.var[ch] = static_cast<float>(sq / m);
  }
  return s;
}

void check_bn_input(const LayerSpec& l, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != l.in_channels)
    throw ShapeError(l.name, "batchnorm2d expects (N, " + std::to_string(l.in_channels) +
                                 ", H, W) input, got " + shape_to_string(x.shape()));
}

Tensor bn_forward_eval(const LayerSpec& l, const Tensor& x, const ModelGraph& model) {
  check_bn_input(l, x);
  const auto& gamma = model.param(l.name + ".weight");
  const auto& beta = model.param(l.name + ".bias");
  const auto& rm = model.param(l.name + ".running_mean");
  const auto& rv = model.param(l.name + ".running_var");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float inv = 1.0f / std::sqrt(rv[ch] + kBatchNormEpsilon);
    const float scale = gamma[ch] * inv;
    const float shift = beta[ch] - rm[ch] * scale;
    for (std::size_t i = 0; i < n; ++i) {
      const float* src = x.ptr() + (i * c + ch) * hw;
      float* dst = y.ptr() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] = src[j] * scale + shift;
    }
  }
  return y;
}

Tensor bn_forward_train(const LayerSpec& l, const Tensor& x, ModelGraph& model, Tensor* xhat_out,
                        std::vector<float>* inv_std_out) {
  check_bn_input(l, x);
  const auto& gamma = model.param(l.name + ".weight");
  const auto& beta = model.param(l.name + ".bias");
  auto& rm = model.param(l.name + ".running_mean");
  auto& rv = model.param(l.name + ".running_var");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t m = n * hw;
  const BnStats st = channel_stats(x);

  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<float> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float inv = 1.0f / std::sqrt(st.var[ch] + kBatchNormEpsilon);
    inv_std[ch] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        const float xh = (x[off + j] - st.mean[ch]) * inv;
        xhat[off + j] = xh;
        y[off + j] = gamma[ch] * xh + beta[ch];
      }
    }
    const float unbiased = m > 1 ? st.var[ch] * static_cast<float>(m) / static_cast<float>(m - 1) : st.var[ch];
    rm[ch] = (1.0f - kBatchNormMomentum) * rm[ch] + kBatchNormMomentum * st.mean[ch];
    rv[ch] = (1.0f - kBatchNormMomentum) * rv[ch] + kBatchNormMomentum * unbiased;
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return y;
}

Tensor pool_forward(const LayerSpec& l, const Tensor& x, std::vector<std::uint32_t>* argmax) {
  if (x.rank() != 4) throw ShapeError(l.name, "pooling expects a 4-d input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool global = l.kernel == 0;
  const std::size_t k = global ? 0 : l.kernel;
  const std::size_t s = global ? 1 : l.stride, p = global ? 0 : l.padding;
  if (l.kind == LayerKind::AvgPool && p != 0) throw ShapeError(l.name, "average pooling takes no padding");
  const std::size_t ho = global ? 1 : (h + 2 * p - k) / s + 1;
  const std::size_t wo = global ? 1 : (w + 2 * p - k) / s + 1;
  Tensor y({n, c, ho, wo});
  if (argmax) argmax->assign(y.numel(), 0);

  for (std::size_t i = 0; i < n * c; ++i) {
    const float* src = x.ptr() + i * h * w;
    float* dst = y.ptr() + i * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const long h0 = global ? 0 : static_cast<long>(oh * s) - static_cast<long>(p);
        const long w0 = global ? 0 : static_cast<long>(ow * s) - static_cast<long>(p);
        const long kh = global ? static_cast<long>(h) : static_cast<long>(k);
        const long kw = global ? static_cast<long>(w) : static_cast<long>(k);
        if (l.kind == LayerKind::MaxPool) {
          float best = -std::numeric_limits<float>::infinity();
          std::uint32_t best_idx = 0;
          for (long a = h0; a < h0 + kh; ++a)
            for (long b = w0; b < w0 + kw; ++b) {
              if (a < 0 || b < 0 || a >= static_cast<long>(h) || b >= static_cast<long>(w)) continue;
              const float v = src[a * w + b];
              if (v > best) {
                best = v;
                best_idx = static_cast<std::uint32_t>(a * w + b);
              }
            }
          dst[oh * wo + ow] = best;
          if (argmax) (*argmax)[i * ho * wo + oh * wo + ow] = best_idx;
        } else {
          float sum = 0.0f;
          for (long a = h0; a < h0 + kh; ++a)
            for (long b = w0; b < w0 + kw; ++b) sum += src[a * w + b];
          dst[oh * wo + ow] = sum / static_cast<float>(kh * kw);
        }
      }
  }
  return y;
}

void pool_backward(const LayerSpec& l, const Tensor& x, const Tensor& dy,
                   const std::vector<std::uint32_t>* argmax, Tensor& dx) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = dy.dim(2), wo = dy.dim(3);
  const bool global = l.kernel == 0;
  for (std::size_t i = 0; i < n * c; ++i) {
    float* dsrc = dx.ptr() + i * h * w;
    const float* g = dy.ptr() + i * ho * wo;
    if (l.kind == LayerKind::MaxPool) {
      for (std::size_t j = 0; j < ho * wo; ++j) dsrc[(*argmax)[i * ho * wo + j]] += g[j];
      continue;
    }
    const std::size_t k = global ? 0 : l.kernel;
    const std::size_t s = global ? 1 : l.stride;
    const std::size_t kh = global ? h : k, kw = global ? w : k;
    const float scale = 1.0f / static_cast<float>(kh * kw);
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const float v = g[oh * wo + ow] * scale;
        const std::size_t h0 = global ? 0 : oh * s, w0 = global ? 0 : ow * s;
        for (std::size_t a = h0; a < h0 + kh; ++a)
          for (std::size_t b = w0; b < w0 + kw; ++b) dsrc[a * w + b] += v;
      }
  }
}


template <typename Model>
Tensor run_forward(Model& model, const Tensor& batch, Mode mode, ForwardCache* cache) {
  const auto& in = model.input();
  if (batch.rank() != 4 || batch.dim(1) != in.channels)
    throw ShapeError("<input>", "batch shape " + shape_to_string(batch.shape()) + " does not match input spec (N, " +
                                    std::to_string(in.channels) + ", H, W)");
  const auto& layers = model.layers();
  std::vector<Tensor> outs(layers.size());
  if (cache) {
    cache->bn_normalized.assign(layers.size(), Tensor());
    cache->bn_inv_std.assign(layers.size(), {});
    cache->argmax.assign(layers.size(), {});
  }
  auto src = [&](int idx) -> const Tensor& { return idx == kGraphInput ? batch : outs[idx]; };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const Tensor& x = src(l.inputs.at(0));
    switch (l.kind) {
      case LayerKind::Conv2d:
        outs[i] = conv_forward(l, x, model.param(l.name + ".weight"),
                               l.bias ? &model.param(l.name + ".bias") : nullptr);
        break;
      case LayerKind::Linear:
        outs[i] = linear_forward(l, x, model.param(l.name + ".weight"),
                                 l.bias ? &model.param(l.name + ".bias") : nullptr);
        break;
      case LayerKind::BatchNorm2d:
        if constexpr (std::is_const_v<Model>) {
          outs[i] = bn_forward_eval(l, x, model);
        } else {
          if (mode == Mode::Train)
            outs[i] = bn_forward_train(l, x, model, cache ? &cache->bn_normalized[i] : nullptr,
                                       cache ? &cache->bn_inv_std[i] : nullptr);
          else
            outs[i] = bn_forward_eval(l, x, model);
        }
        break;
      case LayerKind::Relu: {
        Tensor y(x.shape());
        for (std::size_t j = 0; j < x.numel(); ++j) y[j] = x[j] > 0.0f ? x[j] : 0.0f;
        outs[i] = std::move(y);
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        outs[i] = pool_forward(l, x, cache && l.kind == LayerKind::MaxPool ? &cache->argmax[i] : nullptr);
        break;
      case LayerKind::Add: {
        const Tensor& b = src(l.inputs.at(1));
        if (b.shape() != x.shape())
          throw ShapeError(l.name, "add operands disagree: " + shape_to_string(x.shape()) + " vs " +
                                       shape_to_string(b.shape()));
        Tensor y(x.shape());
        for (std::size_t j = 0; j < x.numel(); ++j) y[j] = x[j] + b[j];
        outs[i] = std::move(y);
        break;
      }
      case LayerKind::Flatten: {
        Tensor y = x;
        y.reshape({x.dim(0), x.numel() / x.dim(0)});
        outs[i] = std::move(y);
        break;
      }
    }
  }
  Tensor logits = outs.back();
  if (logits.rank() != 2 || logits.dim(1) != in.num_classes)
    throw ShapeError(layers.back().name, "produces " + shape_to_string(logits.shape()) + ", expected (N, " +
                                             std::to_string(in.num_classes) + ")");
  if (cache) cache->outputs = std::move(outs);
  return logits;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < src.numel(); ++i) dst[i] += src[i];
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Tensor forward(const ModelGraph& model, const Tensor& batch) {
  return run_forward(model, batch, Mode::Eval, nullptr);
}

Tensor forward(ModelGraph& model, const Tensor& batch, Mode mode, ForwardCache* cache) {
  return run_forward(model, batch, mode, cache);
}

float cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* dlogits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw Error("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  if (dlogits) *dlogits = Tensor(logits.shape());
  float total = 0.0f;
  std::vector<float> prob(k);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    const float* row = logits.ptr() + i * k;
    const float mx = *std::max_element(row, row + k);
    float z = 0.0f;
    for (std::size_t j = 0; j < k; ++j) {
      prob[j] = std::exp(row[j] - mx);
      z += prob[j];
    }
    total += std::log(z) - (row[y] - mx);
    if (dlogits) {
      float* d = dlogits->ptr() + i * k;
      for (std::size_t j = 0; j < k; ++j) d[j] = (prob[j] / z - (static_cast<int>(j) == y ? 1.0f : 0.0f)) / static_cast<float>(n);
    }
  }
  return total / static_cast<float>(n);
}

LossAndGrads backward(ModelGraph& model, const Tensor& batch, std::span<const int> labels,
                      std::size_t batch_index) {
  ForwardCache cache;
  Tensor logits = forward(model, batch, Mode::Train, &cache);
  LossAndGrads result;
  Tensor dlogits;
  result.loss = cross_entropy(logits, labels, &dlogits);
  if (!std::isfinite(result.loss)) throw NonFiniteLossError(batch_index);

  for (const auto& p : model.param_layout())
    if (p.trainable) result.grads.emplace(p.name, Tensor(p.shape));

  const auto& layers = model.layers();
  std::vector<Tensor> dout(layers.size());
  dout.back() = std::move(dlogits);
  auto input_of = [&](int idx) -> const Tensor& { return idx == kGraphInput ? batch : cache.outputs[idx]; };
  auto push = [&](int idx, const Tensor& g) {
    if (idx != kGraphInput) accumulate(dout[idx], g);
  };

  for (std::size_t ri = layers.size(); ri-- > 0;) {
    const LayerSpec& l = layers[ri];
    if (dout[ri].empty()) continue;
    const Tensor& dy = dout[ri];
    const int in0 = l.inputs.at(0);
    const Tensor& x = input_of(in0);
    const bool need_dx = in0 != kGraphInput;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
        conv_backward(l, x, model.param(l.name + ".weight"), dy, need_dx ? &dx : nullptr,
                      result.grads.at(l.name + ".weight"), l.bias ? &result.grads.at(l.name + ".bias") : nullptr);
        if (need_dx) push(in0, dx);
        break;
      }
      case LayerKind::Linear: {
        const std::size_t n = x.dim(0);
        const auto& w = model.param(l.name + ".weight");
        ConstMatMap dyM(dy.ptr(), n, l.out_channels);
        MatMap(result.grads.at(l.name + ".weight").ptr(), l.out_channels, l.in_channels).noalias() +=
            dyM.transpose() * ConstMatMap(x.ptr(), n, l.in_channels);
        if (l.bias) {
          auto& db = result.grads.at(l.name + ".bias");
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < l.out_channels; ++o) db[o] += dy[i * l.out_channels + o];
        }
        if (need_dx) {
          Tensor dx(x.shape());
          MatMap(dx.ptr(), n, l.in_channels).noalias() = dyM * ConstMatMap(w.ptr(), l.out_channels, l.in_channels);
          push(in0, dx);
        }
        break;
      }
      case LayerKind::BatchNorm2d: {
        const auto& gamma = model.param(l.name + ".weight");
        auto& dgamma = result.grads.at(l.name + ".weight");
        auto& dbeta = result.grads.at(l.name + ".bias");
        const Tensor& xhat = cache.bn_normalized[ri];
        const auto& inv_std = cache.bn_inv_std[ri];
        const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        const double m = static_cast<double>(n * hw);
        Tensor dx(x.shape());
        for (std::size_t ch = 0; ch < c; ++ch) {
          // Double sums: the result feeds gradients that cancel to zero
          // (e.g. a conv bias in front of batchnorm).
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
              sum_dy += dy[off + j];
              sum_dy_xhat += dy[off + j] * xhat[off + j];
            }
          }
          dgamma[ch] += static_cast<float>(sum_dy_xhat);
          dbeta[ch] += static_cast<float>(sum_dy);
          const double scale = gamma[ch] * inv_std[ch] / m;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j)
              dx[off + j] = static_cast<float>(scale * (m * dy[off + j] - sum_dy - xhat[off + j] * sum_dy_xhat));
          }
        }
        if (need_dx) push(in0, dx);
        break;
      }
      case LayerKind::Relu: {
        if (!need_dx) break;
        const Tensor& y = cache.outputs[ri];
        Tensor dx(x.shape());
        for (std::size_t j = 0; j < dx.numel(); ++j) dx[j] = y[j] > 0.0f ? dy[j] : 0.0f;
        push(in0, dx);
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        if (!need_dx) break;
        Tensor dx(x.shape());
        pool_backward(l, x, dy, &cache.argmax[ri], dx);
        push(in0, dx);
        break;
      }
      case LayerKind::Add:
        push(l.inputs[0], dy);
        push(l.inputs[1], dy);
        break;
      case LayerKind::Flatten: {
        if (!need_dx) break;
        Tensor dx = dy;
        dx.reshape(x.shape());
        push(in0, dx);
        break;
      }
    }
    dout[ri] = Tensor();
  }
  return result;
}

void sgd_step(std::map<std::string, Tensor>& params, const GradientSet& grads, OptimizerState& state) {
  const float lr = state.learning_rate, m = state.momentum, wd = state.weight_decay;
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("gradient for unknown parameter '" + name + "'");
    Tensor& w = it->second;
    if (w.shape() != g.shape())
      throw ShapeError(name, "gradient shape " + shape_to_string(g.shape()) + " vs parameter " +
                                 shape_to_string(w.shape()));
    auto [vit, inserted] = state.velocity.try_emplace(name, Tensor(w.shape()));
    Tensor& v = vit->second;
    if (v.shape() != w.shape()) throw ShapeError(name, "velocity buffer shape mismatch");
    for (std::size_t i = 0; i < w.numel(); ++i) {
      v[i] = m * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

void init_parameters(ModelGraph& model, std::uint64_t seed) {
  model.allocate_params();
  for (const auto& l : model.layers()) {
    auto stream = [&](const std::string& pname) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(name_hash(pname)),
                        static_cast<std::uint32_t>(name_hash(pname) >> 32)};
      return std::mt19937_64(seq);
    };
    if (l.kind == LayerKind::Conv2d) {
      const float fan_in = static_cast<float>(l.in_channels * l.kernel * l.kernel);
      auto rng = stream(l.name + ".weight");
      std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / fan_in));
      for (float& v : model.param(l.name + ".weight").data()) v = dist(rng);
      if (l.bias) model.param(l.name + ".bias").fill(0.0f);
    } else if (l.kind == LayerKind::Linear) {
      const float bound = 1.0f / std::sqrt(static_cast<float>(l.in_channels));
      auto rng = stream(l.name + ".weight");
      std::uniform_real_distribution<float> dist(-bound, bound);
      for (float& v : model.param(l.name + ".weight").data()) v = dist(rng);
      if (l.bias) {
        auto brng = stream(l.name + ".bias");
        for (float& v : model.param(l.name + ".bias").data()) v = dist(brng);
      }
    } else if (l.kind == LayerKind::BatchNorm2d) {
      model.param(l.name + ".weight").fill(1.0f);
      model.param(l.name + ".bias").fill(0.0f);
      model.param(l.name + ".running_mean").fill(0.0f);
      model.param(l.name + ".running_var").fill(1.0f);
    }
  }
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.ptr() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

}  // namespace prunebench
