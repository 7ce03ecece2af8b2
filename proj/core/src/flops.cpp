#include "prunebench/flops.hpp"

#include <cstdio>
#include <sstream>

#include "prunebench/error.hpp"

namespace prunebench {

std::string to_string(FlopsConvention c) { return c == FlopsConvention::Mac ? "MAC" : "2xMAC"; }

double FlopsReport::total() const {
  return static_cast<double>(total_macs) * (convention == FlopsConvention::TwoMac ? 2.0 : 1.0);
}

FlopsReport count_flops(const ModelGraph& model, std::size_t height, std::size_t width,
                        FlopsConvention convention) {
  const auto shapes = model.infer_shapes(height, width);
  FlopsReport r;
  r.convention = convention;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const LayerSpec& l = model.layer(i);
    LayerCost cost{l.name, l.kind, 0, 0};
    const ActShape& y = shapes[i];
    switch (l.kind) {
      case LayerKind::Conv2d:
        cost.macs = static_cast<std::uint64_t>(y.c) * y.h * y.w * l.in_channels * l.kernel * l.kernel;
        cost.params = static_cast<std::uint64_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel +
                      (l.bias ? l.out_channels : 0);
        break;
      case LayerKind::Linear:
        cost.macs = static_cast<std::uint64_t>(l.in_channels) * l.out_channels;
        cost.params = cost.macs + (l.bias ? l.out_channels : 0);
        break;
      case LayerKind::BatchNorm2d:
        cost.params = 2 * static_cast<std::uint64_t>(l.out_channels);
        break;
      default:
        break;
    }
    r.total_macs += cost.macs;
    r.total_params += cost.params;
    r.layers.push_back(std::move(cost));
  }
  return r;
}

FlopsReport count_flops(const ModelGraph& model, FlopsConvention convention) {
  return count_flops(model, model.input().height, model.input().width, convention);
}

double speedup(const FlopsReport& dense, const FlopsReport& pruned) {
  if (dense.convention != pruned.convention)
    throw ConfigError("speedup between reports of different conventions (" + to_string(dense.convention) + " vs " +
                      to_string(pruned.convention) + ")");
  if (pruned.total_macs == 0) throw ConfigError("speedup: pruned model has zero MACs");
  return dense.total() / pruned.total();
}

std::string format_flops_table(const FlopsReport& report) {
  std::ostringstream os;
  std::size_t width = 5;
  for (const auto& l : report.layers) width = std::max(width, l.name.size());
  char buf[64];
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
  os << pad("layer") << "MACs\n";
  for (const auto& l : report.layers) {
    if (l.macs == 0) continue;
    os << pad(l.name) << l.macs << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(report.total_macs) / 1e9);
  os << pad("total") << report.total_macs << "  (" << buf << " GMAC";
  if (report.convention == FlopsConvention::TwoMac) {
    std::snprintf(buf, sizeof buf, "%.4f", report.total() / 1e9);
    os << ", " << buf << " G under 2xMAC";
  }
  std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(report.total_params) / 1e6);
  os << ")\n" << pad("params") << report.total_params << "  (" << buf << " M)\n";
  return os.str();
}

std::string format_flops_csv(const FlopsReport& report) {
  std::ostringstream os;
  os << "layer,kind,macs,params\n";
  for (const auto& l : report.layers) os << l.name << ',' << to_string(l.kind) << ',' << l.macs << ',' << l.params << '\n';
  return os.str();
}

}  // namespace prunebench
