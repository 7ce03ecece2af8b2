#include "prunebench/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "prunebench/digest.hpp"
#include "prunebench/error.hpp"

namespace prunebench {
namespace {

void check_ratio(double r, const std::string& where) {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("pruning ratio for " + where + " must be in [0, 1), got " + std::to_string(r));
}

void check_config(const ModelGraph& model, const PruneConfig& cfg) {
  check_ratio(cfg.ratio, "the model");
  if (cfg.stage_ratios.empty()) return;
  int max_stage = 0;
  for (const auto& l : model.layers()) max_stage = std::max(max_stage, l.stage);
  if (cfg.stage_ratios.size() != static_cast<std::size_t>(max_stage) + 1)
    throw ConfigError("stage ratio vector has " + std::to_string(cfg.stage_ratios.size()) + " entries, model '" +
                      model.family() + "' has " + std::to_string(max_stage + 1) + " stages");
  for (std::size_t s = 0; s < cfg.stage_ratios.size(); ++s) {
    check_ratio(cfg.stage_ratios[s], "stage " + std::to_string(s));
    bool has_prunable = false;
    for (const auto& l : model.layers()) has_prunable |= l.prunable && l.stage == static_cast<int>(s);
    if (!has_prunable && cfg.stage_ratios[s] != 0.0)
      throw ConfigError("stage " + std::to_string(s) + " holds only spared layers; its ratio must be 0");
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Follows the output of `conv` through channel-preserving layers and
// records the induced slices.
void propagate(const ModelGraph& model, const std::vector<ActShape>& shapes, int conv,
               const std::vector<std::size_t>& kept, KeepPlan& out) {
  std::vector<int> frontier{conv};
  while (!frontier.empty()) {
    const int node = frontier.back();
    frontier.pop_back();
    for (int c : model.consumers(node)) {
      const LayerSpec& l = model.layer(c);
      switch (l.kind) {
        case LayerKind::BatchNorm2d:
          out.out[l.name] = kept;
          frontier.push_back(c);
          break;
        case LayerKind::Relu:
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
          frontier.push_back(c);
          break;
        case LayerKind::Conv2d:
          out.in[l.name] = kept;
          break;
        case LayerKind::Flatten: {
          const ActShape& src = shapes[node];
          const std::size_t hw = src.h * src.w;
          std::vector<std::size_t> features;
          features.reserve(kept.size() * hw);
          for (auto ch : kept)
            for (std::size_t j = 0; j < hw; ++j) features.push_back(ch * hw + j);
          for (int lin : model.consumers(c)) {
            if (model.layer(lin).kind != LayerKind::Linear)
              throw ConfigError("flattened output of pruned '" + model.layer(conv).name + "' feeds non-linear layer '" +
                                model.layer(lin).name + "'");
            out.in[model.layer(lin).name] = features;
          }
          break;
        }
        case LayerKind::Add:
          throw ConfigError("prunable conv '" + model.layer(conv).name + "' reaches residual add '" + l.name +
                            "'; its channels cannot be removed");
        case LayerKind::Linear:
          throw ConfigError("linear layer '" + l.name + "' consumes an unflattened conv output");
      }
    }
  }
}

template <typename SelectFn>
KeepPlan make_plan(const ModelGraph& model, const PruneConfig& cfg, SelectFn select) {
  check_config(model, cfg);
  const auto shapes = model.infer_shapes();
  KeepPlan keep;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const LayerSpec& l = model.layer(i);
    if (l.kind != LayerKind::Conv2d || !l.prunable) continue;
    const std::size_t k = kept_count(l.out_channels, layer_ratio(l, cfg));
    if (k == 0) throw ConfigError("layer '" + l.name + "' would keep no filters");
    std::vector<std::size_t> kept = select(l, k);
    std::sort(kept.begin(), kept.end());
    keep.out[l.name] = kept;
    propagate(model, shapes, static_cast<int>(i), kept, keep);
  }
  return keep;
}

void check_index_set(const std::vector<std::size_t>& idx, std::size_t bound, const std::string& what) {
  if (idx.empty()) throw ConfigError(what + ": empty keep set");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= bound) throw ConfigError(what + ": index " + std::to_string(idx[i]) + " out of range " + std::to_string(bound));
    if (i > 0 && idx[i] <= idx[i - 1]) throw ConfigError(what + ": keep indices must be strictly increasing");
  }
}

std::vector<float> gather(const Tensor& t, const std::vector<std::size_t>& rows) {
  std::vector<float> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(t[r]);
  return out;
}

}  // namespace

std::size_t kept_count(std::size_t channels, double ratio) {
  // The epsilon keeps exact halves such as (1 - 0.3) * 5 from rounding down.
  const double k = std::floor((1.0 - ratio) * static_cast<double>(channels) + 0.5 + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

double layer_ratio(const LayerSpec& layer, const PruneConfig& cfg) {
  if (!layer.prunable || layer.kind != LayerKind::Conv2d) return 0.0;
  if (cfg.stage_ratios.empty()) return cfg.ratio;
  return cfg.stage_ratios.at(static_cast<std::size_t>(layer.stage));
}

FilterRanking l1_rank(const Tensor& w) {
  if (w.rank() != 4) throw ShapeError("<weight>", "l1_rank expects a rank-4 conv weight, got " + shape_to_string(w.shape()));
  const std::size_t filters = w.dim(0), per = w.numel() / filters;
  FilterRanking r;
  r.norms.assign(filters, 0.0);
  for (std::size_t f = 0; f < filters; ++f) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += std::fabs(static_cast<double>(w[f * per + j]));
    r.norms[f] = s;
  }
  r.order = iota(filters);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.norms[a] > r.norms[b]; });
  return r;
}

KeepPlan plan(const ModelGraph& model, const PruneConfig& cfg) {
  return make_plan(model, cfg, [&](const LayerSpec& l, std::size_t k) {
    std::vector<std::size_t> order;
    if (cfg.criterion == RankCriterion::L1) {
      order = l1_rank(model.param(l.name + ".weight")).order;
    } else {
      order = iota(l.out_channels);
      std::mt19937_64 rng(derive_seed(l.name, cfg.seed));
      std::shuffle(order.begin(), order.end(), rng);
    }
    order.resize(k);
    return order;
  });
}

KeepPlan plan_structure(const ModelGraph& model, const PruneConfig& cfg) {
  return make_plan(model, cfg, [](const LayerSpec&, std::size_t k) { return iota(k); });
}

ModelGraph rebuild_small_dense(const ModelGraph& model, const KeepPlan& keep) {
  ModelGraph out(model.family(), model.input());
  std::set<std::string> used;
  for (const auto& src : model.layers()) {
    LayerSpec l = src;
    if (auto it = keep.out.find(l.name); it != keep.out.end()) {
      if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::BatchNorm2d)
        throw ConfigError("keep plan slices outputs of non-conv layer '" + l.name + "'");
      check_index_set(it->second, l.out_channels, l.name);
      l.out_channels = it->second.size();
      if (l.kind == LayerKind::BatchNorm2d) l.in_channels = l.out_channels;
      used.insert("out:" + l.name);
    }
    if (auto it = keep.in.find(l.name); it != keep.in.end()) {
      if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Linear)
        throw ConfigError("keep plan slices inputs of layer '" + l.name + "'");
      check_index_set(it->second, l.in_channels, l.name);
      l.in_channels = it->second.size();
      used.insert("in:" + l.name);
    }
    out.add_layer(std::move(l));
  }
  for (const auto& [name, _] : keep.out)
    if (!used.count("out:" + name)) throw ConfigError("keep plan names unknown layer '" + name + "'");
  for (const auto& [name, _] : keep.in)
    if (!used.count("in:" + name)) throw ConfigError("keep plan names unknown layer '" + name + "'");
  try {
    out.infer_shapes();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("inconsistent keep plan: ") + e.what());
  }

  if (!model.materialized()) return out;

  for (const auto& l : model.layers()) {
    const auto* out_keep = keep.out.count(l.name) ? &keep.out.at(l.name) : nullptr;
    const auto* in_keep = keep.in.count(l.name) ? &keep.in.at(l.name) : nullptr;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const Tensor& w = model.param(l.name + ".weight");
        const auto rows = out_keep ? *out_keep : iota(l.out_channels);
        const auto cols = in_keep ? *in_keep : iota(l.in_channels);
        const std::size_t kk = l.kernel * l.kernel;
        std::vector<float> data;
        data.reserve(rows.size() * cols.size() * kk);
        for (auto o : rows)
          for (auto i : cols) {
            const float* p = w.ptr() + (o * l.in_channels + i) * kk;
            data.insert(data.end(), p, p + kk);
          }
        out.params().emplace(l.name + ".weight", Tensor({rows.size(), cols.size(), l.kernel, l.kernel}, std::move(data)));
        if (l.bias)
          out.params().emplace(l.name + ".bias", Tensor({rows.size()}, gather(model.param(l.name + ".bias"), rows)));
        break;
      }
      case LayerKind::Linear: {
        const Tensor& w = model.param(l.name + ".weight");
        const auto cols = in_keep ? *in_keep : iota(l.in_channels);
        std::vector<float> data;
        data.reserve(l.out_channels * cols.size());
        for (std::size_t o = 0; o < l.out_channels; ++o)
          for (auto i : cols) data.push_back(w[o * l.in_channels + i]);
        out.params().emplace(l.name + ".weight", Tensor({l.out_channels, cols.size()}, std::move(data)));
        if (l.bias) out.params().emplace(l.name + ".bias", model.param(l.name + ".bias"));
        break;
      }
      case LayerKind::BatchNorm2d: {
        const auto rows = out_keep ? *out_keep : iota(l.out_channels);
        for (const char* suffix : {".weight", ".bias", ".running_mean", ".running_var"})
          out.params().emplace(l.name + suffix, Tensor({rows.size()}, gather(model.param(l.name + suffix), rows)));
        break;
      }
      default:
        break;
    }
  }
  out.validate();
  return out;
}

void apply_mask(ModelGraph& model, const KeepPlan& keep) {
  auto dropped = [](const std::vector<std::size_t>& kept, std::size_t n) {
    std::vector<bool> drop(n, true);
    for (auto k : kept) drop.at(k) = false;
    return drop;
  };
  for (const auto& l : model.layers()) {
    if (auto it = keep.out.find(l.name); it != keep.out.end()) {
      const auto drop = dropped(it->second, l.out_channels);
      if (l.kind == LayerKind::Conv2d) {
        Tensor& w = model.param(l.name + ".weight");
        const std::size_t per = w.numel() / l.out_channels;
        for (std::size_t o = 0; o < l.out_channels; ++o)
          if (drop[o]) std::fill_n(w.ptr() + o * per, per, 0.0f);
        if (l.bias)
          for (std::size_t o = 0; o < l.out_channels; ++o)
            if (drop[o]) model.param(l.name + ".bias")[o] = 0.0f;
      } else if (l.kind == LayerKind::BatchNorm2d) {
        for (std::size_t o = 0; o < l.out_channels; ++o)
          if (drop[o]) {
            model.param(l.name + ".weight")[o] = 0.0f;
            model.param(l.name + ".bias")[o] = 0.0f;
          }
      }
    }
    if (auto it = keep.in.find(l.name); it != keep.in.end()) {
      const auto drop = dropped(it->second, l.in_channels);
      Tensor& w = model.param(l.name + ".weight");
      const std::size_t per = l.kind == LayerKind::Conv2d ? l.kernel * l.kernel : 1;
      for (std::size_t o = 0; o < l.out_channels; ++o)
        for (std::size_t i = 0; i < l.in_channels; ++i)
          if (drop[i]) std::fill_n(w.ptr() + (o * l.in_channels + i) * per, per, 0.0f);
    }
  }
}

ModelGraph prune_architecture(const ModelGraph& model, const PruneConfig& cfg) {
  ModelGraph shell(model.family(), model.input());
  for (const auto& l : model.layers()) shell.add_layer(l);
  return rebuild_small_dense(shell, plan_structure(shell, cfg));
}

ModelGraph adopt_tensors(const ModelGraph& tmpl, TensorMap tensors) {
  ModelGraph out(tmpl.family(), tmpl.input());
  auto shape_of = [&](const std::string& name) -> const Shape& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("checkpoint lacks tensor '" + name + "'");
    return it->second.shape();
  };
  for (LayerSpec l : tmpl.layers()) {
    if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Linear) {
      const Shape& s = shape_of(l.name + ".weight");
      if (s.size() < 2) throw ShapeError(l.name, "stored weight has rank " + std::to_string(s.size()));
      l.out_channels = s[0];
      l.in_channels = s[1];
    } else if (l.kind == LayerKind::BatchNorm2d) {
      l.in_channels = l.out_channels = shape_of(l.name + ".weight").at(0);
    }
    out.add_layer(std::move(l));
  }
  for (const auto& p : out.param_layout()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw ConfigError("checkpoint lacks tensor '" + p.name + "'");
    out.params().emplace(p.name, std::move(it->second));
  }
  out.validate();
  return out;
}

std::string format_index_list(const std::vector<std::size_t>& idx) {
  std::ostringstream os;
  for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
  return os.str();
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad index list entry '" + tok + "'");
    }
  }
  return out;
}

}  // namespace prunebench
