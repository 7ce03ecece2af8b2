// prunebench: command-line front end.
//
// Exit codes: 0 success, 1 module error, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prunebench/checkpoint.hpp"
#include "prunebench/error.hpp"
#include "prunebench/flops.hpp"
#include "prunebench/manifest.hpp"
#include "prunebench/model_zoo.hpp"
#include "prunebench/planner.hpp"
#include "prunebench/pruner.hpp"
#include "prunebench/results.hpp"
#include "prunebench/runner.hpp"
#include "prunebench/schedule.hpp"

namespace fs = std::filesystem;
using namespace prunebench;

namespace {

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw ConfigError("not a number list: '" + text + "'");
    out.push_back(v);
  }
  return out;
}

InputSpec parse_input(const std::string& text, InputSpec base) {
  unsigned c = 0, h = 0, w = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%ux%ux%u%c", &c, &h, &w, &tail) != 3 || !c || !h || !w)
    throw ConfigError("--input expects CxHxW, got '" + text + "'");
  base.channels = c;
  base.height = h;
  base.width = w;
  return base;
}

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct Common {
  std::string work = "prunebench-work";
  bool quiet = false;

  Runner runner() const {
    RunnerOptions o;
    o.work_dir = work;
    o.log = quiet ? nullptr : &std::cerr;
    return Runner(o);
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--work", c.work, "Directory for cached base models and snapshots")->capture_default_str();
  cmd->add_flag("-q,--quiet", c.quiet, "No per-epoch progress on stderr");
}

void print_record(const RunRecord& r) {
  std::cout << "seed " << r.seed << ": final_acc=" << fmt(r.final_accuracy, "%.2f") << " T="
            << fmt(r.trainability, "%.2f");
  if (r.post_prune_accuracy) std::cout << " post_prune_acc=" << fmt(*r.post_prune_accuracy, "%.2f");
  std::cout << " total_epochs=" << r.total_epochs << " total_MACs=" << fmt(r.total_training_macs, "%.4e")
            << " wall=" << fmt(r.wall_seconds, "%.1f") << "s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-pruning benchmark toolkit"};
  app.require_subcommand(1);

  // zoo
  auto* zoo = app.add_subcommand("zoo", "Model zoo");
  zoo->require_subcommand(1);
  zoo->add_subcommand("list", "List zoo entries");
  auto* zoo_show = zoo->add_subcommand("show", "Print a model's layers");
  std::string show_name;
  zoo_show->add_option("model", show_name, "Zoo name")->required();

  // flops
  auto* flops = app.add_subcommand("flops", "Count MACs/params, optionally of a pruned graph");
  std::string flops_model, flops_input, prune_vector;
  std::optional<double> flops_ratio;
  std::optional<std::size_t> flops_classes;
  bool two_mac = false, per_layer = false, csv = false;
  flops->add_option("--model", flops_model, "Zoo name")->required();
  flops->add_option("--input", flops_input, "Input shape CxHxW (trainable models)");
  flops->add_option("--classes", flops_classes, "Classifier width");
  flops->add_option("--ratio", flops_ratio, "Uniform pruning ratio");
  flops->add_option("--prune-vector", prune_vector, "Per-stage ratios, e.g. 0,0.6,0.6,0.6,0.21,0");
  flops->add_flag("--two-mac", two_mac, "Count a MAC as 2 FLOPs");
  flops->add_flag("--layers", per_layer, "Per-layer table");
  flops->add_flag("--csv", csv, "Per-layer CSV instead of the table");

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "LR schedules and epoch budgets");
  int plan_epochs = 0, plan_cap = kDefaultStageCap;
  double init_lr = 0.0, final_lr = 0.0;
  bool cosine = false;
  std::string plan_manifest, scratch_b;
  std::optional<int> squeeze;
  std::optional<double> plan_speedup;
  plan_cmd->add_option("--epochs", plan_epochs, "Schedule length");
  plan_cmd->add_option("--init-lr", init_lr, "Initial LR");
  plan_cmd->add_option("--final-lr", final_lr, "Final LR");
  plan_cmd->add_option("--stage-cap", plan_cap, "Maximum epochs of a non-final stage")->capture_default_str();
  plan_cmd->add_flag("--cosine", cosine, "Cosine annealing instead of step decay");
  plan_cmd->add_option("--manifest", plan_manifest, "Print the schedules a manifest resolves to");
  plan_cmd->add_option("--scratch-b", scratch_b, "K1,K2: scratch epochs matching pretrain+finetune compute");
  plan_cmd->add_option("--squeeze", squeeze, "Pruning epoch to squeeze by the speedup");
  plan_cmd->add_option("--speedup", plan_speedup, "Speedup k = F1/F2");

  // classify
  auto* classify = app.add_subcommand("classify", "Comparison setup of two manifests");
  std::string man_a, man_b;
  classify->add_option("a", man_a, "First manifest")->required()->check(CLI::ExistingFile);
  classify->add_option("b", man_b, "Second manifest")->required()->check(CLI::ExistingFile);

  // pipeline commands
  Common common;
  std::string manifest_path, results_path, out_path;
  std::uint64_t seed = 0;
  int extra = 0;

  auto* pretrain = app.add_subcommand("pretrain", "Train (or fetch cached) base models up to the pruning epoch");
  pretrain->add_option("manifest", manifest_path, "Manifest")->required()->check(CLI::ExistingFile);
  add_common(pretrain, common);

  auto* prune = app.add_subcommand("prune", "Prune one seed's base model and save the small-dense checkpoint");
  prune->add_option("manifest", manifest_path, "Manifest")->required()->check(CLI::ExistingFile);
  prune->add_option("--seed", seed, "Seed")->required();
  prune->add_option("--out", out_path, "Checkpoint path")->required();
  add_common(prune, common);

  auto* finetune = app.add_subcommand("finetune", "Pretrain, prune and finetune every seed");
  auto* scratch = app.add_subcommand("scratch", "Train the (pruned) architecture from scratch");
  auto* extend = app.add_subcommand("extend", "Extend the first finetune LR stage");
  for (auto* cmd : {finetune, scratch, extend}) {
    cmd->add_option("manifest", manifest_path, "Manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--results", results_path, "Results file to append to");
    add_common(cmd, common);
  }
  extend->add_option("--extra", extra, "Extra epochs at the first-stage LR")->required()->check(CLI::NonNegativeNumber);

  auto* xval = app.add_subcommand("xval", "Cross-validate two pruning methods against two finetune recipes");
  xval->add_option("a", man_a, "Method A manifest")->required()->check(CLI::ExistingFile);
  xval->add_option("b", man_b, "Method B manifest")->required()->check(CLI::ExistingFile);
  xval->add_option("--results", results_path, "Results file to append to");
  add_common(xval, common);

  auto* report = app.add_subcommand("report", "Summarize a results file");
  std::string curves_path;
  report->add_option("results", results_path, "Results file")->required()->check(CLI::ExistingFile);
  report->add_option("--curves", curves_path, "Write per-epoch curve CSV ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (zoo->parsed()) {
      if (zoo_show->parsed()) {
        const ModelGraph m = build_model(show_name);
        const auto shapes = m.infer_shapes();
        for (std::size_t i = 0; i < m.layers().size(); ++i) {
          const auto& l = m.layers()[i];
          std::cout << l.name << "\t" << to_string(l.kind) << "\t" << l.in_channels << "->" << l.out_channels
                    << "\tout=" << shapes[i].c << "x" << shapes[i].h << "x" << shapes[i].w
                    << (l.prunable ? "\tprunable" : "") << "\tstage=" << l.stage << "\n";
        }
      } else {
        for (const auto& z : zoo_entries())
          std::cout << z.name << "\t" << z.reference_input.channels << "x" << z.reference_input.height << "x"
                    << z.reference_input.width << "\t" << z.description << "\n";
      }
      return 0;
    }

    if (flops->parsed()) {
      InputSpec input{};
      for (const auto& z : zoo_entries())
        if (z.name == flops_model) input = z.reference_input;
      if (!flops_input.empty()) input = parse_input(flops_input, input);
      if (flops_classes) input.num_classes = *flops_classes;
      const ModelGraph dense = build_model(flops_model, input);
      const auto conv = two_mac ? FlopsConvention::TwoMac : FlopsConvention::Mac;
      const FlopsReport d = count_flops(dense, conv);
      const bool pruning = flops_ratio.has_value() || !prune_vector.empty();
      std::optional<FlopsReport> p;
      if (pruning) {
        PruneConfig cfg;
        if (flops_ratio) cfg.ratio = *flops_ratio;
        if (!prune_vector.empty()) cfg.stage_ratios = parse_doubles(prune_vector);
        p = count_flops(prune_architecture(dense, cfg), conv);
      }
      const FlopsReport& shown = p ? *p : d;
      if (csv) std::cout << format_flops_csv(shown);
      else if (per_layer) std::cout << format_flops_table(shown);
      std::cout << "model " << flops_model << " (" << to_string(conv) << ")\n";
      std::cout << "dense: " << fmt(d.total() / 1e9, "%.4f") << "G, params " << d.total_params << " ("
                << fmt(d.total_params / 1e6, "%.3f") << "M)\n";
      if (p) {
        std::cout << "pruned: " << fmt(p->total() / 1e9, "%.4f") << "G, params " << p->total_params << " ("
                  << fmt(p->total_params / 1e6, "%.3f") << "M)\n";
        std::cout << "speedup: " << fmt(speedup(d, *p), "%.2f") << "x\n";
      }
      return 0;
    }

    if (plan_cmd->parsed()) {
      if (!plan_manifest.empty()) {
        const ExperimentConfig cfg = resolve(Manifest::load(plan_manifest));
        std::cout << "scratch: " << cfg.scratch.to_string() << " (" << cfg.scratch.total_epochs() << " epochs)\n";
        if (cfg.pipeline == Pipeline::PruneFinetune) {
          const ExperimentPlan p = cfg.plan();
          const LRSchedule ft = cfg.effective_finetune();
          std::cout << "pretrain: " << (p.pretrain.is_empty() ? "-" : p.pretrain.to_string()) << " ("
                    << p.prune_epoch << " epochs)\n";
          std::cout << "finetune: " << ft.to_string() << " (" << ft.total_epochs() << " epochs)\n";
        }
        return 0;
      }
      if (!scratch_b.empty()) {
        const auto k = parse_doubles(scratch_b);
        if (k.size() != 2 || !plan_speedup) throw ConfigError("--scratch-b needs K1,K2 and --speedup");
        BudgetSpec b{static_cast<int>(k[0]), static_cast<int>(k[1]), *plan_speedup, 1.0};
        std::cout << scratch_b_epochs(b) << "\n";
        return 0;
      }
      if (squeeze) {
        if (!plan_speedup) throw ConfigError("--squeeze needs --speedup");
        std::cout << squeeze_prune_epoch(*squeeze, *plan_speedup) << "\n";
        return 0;
      }
      if (plan_epochs <= 0 || init_lr <= 0.0 || final_lr <= 0.0)
        throw CLI::ValidationError("plan", "needs --epochs, --init-lr and --final-lr (or --manifest)");
      const LRSchedule s = cosine ? synthesize_cosine_schedule(plan_epochs, init_lr, final_lr)
                                  : synthesize_step_schedule(plan_epochs, init_lr, final_lr, plan_cap);
      std::cout << s.to_string() << "\n";
      return 0;
    }

    if (classify->parsed()) {
      std::cout << classify_setup(Manifest::load(man_a), Manifest::load(man_b)).to_string() << "\n";
      return 0;
    }

    if (pretrain->parsed()) {
      const ExperimentConfig cfg = resolve(Manifest::load(manifest_path));
      if (cfg.pipeline != Pipeline::PruneFinetune) throw ConfigError("pretrain needs a prune-finetune manifest");
      Runner r = common.runner();
      for (auto s : cfg.seeds) {
        const BaseModel base = r.pretrain(cfg, s);
        std::cout << "seed " << s << ": base " << base.content_hash << " acc="
                  << (base.pretrain_acc.empty() ? std::string("-") : fmt(base.pretrain_acc.back(), "%.2f")) << "\n";
      }
      return 0;
    }

    if (prune->parsed()) {
      Manifest m = Manifest::load(manifest_path);
      const ExperimentConfig cfg = resolve(m);
      if (cfg.pipeline != Pipeline::PruneFinetune) throw ConfigError("prune needs a prune-finetune manifest");
      Runner r = common.runner();
      const BaseModel base = r.pretrain(cfg, seed);
      const PrunedModel p = r.prune(cfg, base, seed);
      save_checkpoint(out_path, p.model.params());
      for (const auto& [layer, idx] : p.keep.out) m.set("plan." + layer, format_index_list(idx));
      m.save(out_path + ".manifest");
      const double k = static_cast<double>(count_flops(base.model).total_macs) /
                       static_cast<double>(count_flops(p.model).total_macs);
      std::cout << "base " << base.content_hash << "\npost_prune_acc=" << fmt(p.accuracy, "%.2f")
                << " speedup=" << fmt(k, "%.2f") << "x\nwrote " << out_path << " and " << out_path
                << ".manifest\n";
      return 0;
    }

    if (finetune->parsed() || scratch->parsed() || extend->parsed()) {
      Manifest m = Manifest::load(manifest_path);
      const ExperimentConfig cfg = resolve(m);
      if (scratch->parsed() && cfg.pipeline != Pipeline::Scratch)
        throw ConfigError("scratch needs pipeline = scratch");
      if (!scratch->parsed() && cfg.pipeline != Pipeline::PruneFinetune)
        throw ConfigError(std::string(extend->parsed() ? "extend" : "finetune") + " needs pipeline = prune-finetune");
      if (extend->parsed()) m.set("ft.extend", std::to_string(extra));
      Runner r = common.runner();
      for (const auto& rec : r.run_all(m, results_path)) print_record(rec);
      return 0;
    }

    if (xval->parsed()) {
      Runner r = common.runner();
      const XvalResult x = r.cross_validate(Manifest::load(man_a), Manifest::load(man_b), results_path);
      static const char* rows[2] = {"A", "B"};
      std::cout << "          FT_A              FT_B\n";
      for (int a = 0; a < 2; ++a)
        std::cout << rows[a] << "  " << x.grid.cell[a][0].to_string() << "  " << x.grid.cell[a][1].to_string()
                  << "\n";
      std::cout << "verdict: " << x.verdict.to_string() << "\n";
      return 0;
    }

    if (report->parsed()) {
      const ResultsTable t = read_results(results_path);
      std::cout << render_report(t);
      std::cout << "(± is the sample standard deviation over seeds)\n";
      if (!curves_path.empty()) {
        if (curves_path == "-") {
          std::cout << render_curves_csv(t);
        } else {
          std::ofstream f(curves_path, std::ios::trunc);
          if (!f) throw Error("cannot write '" + curves_path + "'");
          f << render_curves_csv(t);
        }
      }
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
