#include "prunebench/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "prunebench/digest.hpp"
#include "prunebench/error.hpp"
#include "prunebench/flops.hpp"
#include "prunebench/model_zoo.hpp"

namespace prunebench {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "name",          "dataset",       "model",          "pipeline",        "seeds",
      "batch_size",    "momentum",      "weight_decay",   "scratch.epochs",  "scratch.init_lr",
      "scratch.final_lr", "scratch.schedule", "prune.ratio", "prune.stage_ratios", "prune.criterion",
      "prune.epoch",   "ft.kind",       "ft.init_lr",     "ft.epochs",       "ft.extend",
      "base.hash"};
  return keys;
}

bool unhashed(const std::string& key) { return key == "name" || key.rfind("plan.", 0) == 0; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double number(const Manifest& m, const std::string& key) {
  const std::string& v = m.get(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("manifest key '" + key + "' expects a number, got '" + v + "'");
  }
}

long integer(const Manifest& m, const std::string& key) {
  const std::string& v = m.get(key);
  try {
    std::size_t used = 0;
    long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("manifest key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::vector<double> number_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("manifest key '" + key + "' has a bad entry '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("manifest line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!known_keys().count(key) && key.rfind("plan.", 0) != 0)
      throw ConfigError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (m.entries_.count(key)) throw ConfigError("manifest line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    m.entries_[key] = value;
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> Manifest::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

const std::string& Manifest::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("manifest is missing key '" + key + "'");
  return it->second;
}

void Manifest::set(const std::string& key, std::string value) {
  if (!known_keys().count(key) && key.rfind("plan.", 0) != 0) throw ConfigError("unknown manifest key '" + key + "'");
  entries_[key] = std::move(value);
}

std::string Manifest::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_)
    if (!unhashed(k)) out += k + "=" + v + "\n";
  return out;
}

std::string Manifest::hash() const { return sha256_hex(canonical()); }

std::string Manifest::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write manifest '" + path.string() + "'");
  f << to_text();
}

ExperimentPlan ExperimentConfig::plan() const {
  return plan_pxfy(scratch, prune_epoch, finetune_epochs, finetune_init_lr, finetune_kind);
}

LRSchedule ExperimentConfig::effective_finetune() const {
  auto ft = plan().finetune;
  return extend_epochs > 0 ? ft.extend_first_stage(extend_epochs) : ft;
}

ExperimentConfig resolve(const Manifest& m) {
  ExperimentConfig c;
  c.name = m.find("name").value_or("");
  c.dataset = DatasetSpec::parse(m.get("dataset"));
  c.model = m.get("model");
  const std::string pipeline = m.find("pipeline").value_or("prune-finetune");
  if (pipeline == "scratch") c.pipeline = Pipeline::Scratch;
  else if (pipeline == "prune-finetune") c.pipeline = Pipeline::PruneFinetune;
  else throw ConfigError("pipeline must be scratch or prune-finetune, got '" + pipeline + "'");

  if (auto s = m.find("seeds")) {
    c.seeds.clear();
    for (double v : number_list(*s, "seeds")) {
      if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
        throw ConfigError("seeds must be non-negative integers");
      c.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (c.seeds.empty()) throw ConfigError("manifest lists no seeds");
  }
  if (m.has("batch_size")) {
    const long b = integer(m, "batch_size");
    if (b < 2) throw ConfigError("batch_size must be at least 2");
    c.batch_size = static_cast<std::size_t>(b);
  }
  if (m.has("momentum")) c.momentum = static_cast<float>(number(m, "momentum"));
  if (m.has("weight_decay")) c.weight_decay = static_cast<float>(number(m, "weight_decay"));
  if (!(c.momentum >= 0.0f && c.momentum < 1.0f)) throw ConfigError("momentum must be in [0, 1)");
  if (!(c.weight_decay >= 0.0f)) throw ConfigError("weight_decay must be non-negative");

  const int scratch_epochs = static_cast<int>(integer(m, "scratch.epochs"));
  if (scratch_epochs < 0) throw ConfigError("scratch.epochs must be non-negative");
  if (scratch_epochs == 0) {
    c.scratch = LRSchedule::empty();
  } else if (auto sched = m.find("scratch.schedule")) {
    c.scratch = LRSchedule::parse_step(*sched, scratch_epochs);
  } else {
    c.scratch = synthesize_step_schedule(scratch_epochs, number(m, "scratch.init_lr"), number(m, "scratch.final_lr"));
  }

  if (m.has("prune.ratio")) c.prune.ratio = number(m, "prune.ratio");
  if (auto v = m.find("prune.stage_ratios")) c.prune.stage_ratios = number_list(*v, "prune.stage_ratios");
  const std::string crit = m.find("prune.criterion").value_or("l1");
  if (crit == "l1") c.prune.criterion = RankCriterion::L1;
  else if (crit == "random") c.prune.criterion = RankCriterion::Random;
  else throw ConfigError("prune.criterion must be l1 or random");

  if (c.pipeline == Pipeline::PruneFinetune) {
    c.prune_epoch = static_cast<int>(integer(m, "prune.epoch"));
    c.finetune_init_lr = number(m, "ft.init_lr");
    c.finetune_epochs = static_cast<int>(integer(m, "ft.epochs"));
    const std::string kind = m.find("ft.kind").value_or("step");
    if (kind == "step") c.finetune_kind = FinetuneKind::Step;
    else if (kind == "cosine") c.finetune_kind = FinetuneKind::Cosine;
    else throw ConfigError("ft.kind must be step or cosine");
    if (m.has("ft.extend")) {
      c.extend_epochs = static_cast<int>(integer(m, "ft.extend"));
      if (c.extend_epochs < 0) throw ConfigError("ft.extend must be non-negative");
      if (c.extend_epochs > 0 && c.finetune_kind == FinetuneKind::Cosine)
        throw ConfigError("first-stage extension is unsupported for cosine finetuning");
    }
    c.plan();  // validates the schedule combination
  }
  if (auto h = m.find("base.hash")) c.base_hash = *h;
  return c;
}

std::string pretrain_recipe_key(const ExperimentConfig& c, std::uint64_t seed) {
  std::ostringstream os;
  os << "dataset=" << c.dataset.to_string() << "\nmodel=" << c.model << "\nschedule="
     << c.scratch.prefix(c.prune_epoch).to_string() << "\nepochs=" << c.prune_epoch << "\nbatch=" << c.batch_size
     << "\nmomentum=" << c.momentum << "\nweight_decay=" << c.weight_decay << "\nseed=" << seed << "\n";
  return sha256_hex(os.str());
}

SetupFacts setup_facts(const Manifest& m) {
  const ExperimentConfig c = resolve(m);
  const InputSpec input = c.dataset.input_spec();
  const ModelGraph dense = build_model(c.model, input);
  const ModelGraph pruned = prune_architecture(dense, c.prune);
  const double dense_macs = static_cast<double>(count_flops(dense).total_macs);
  const double pruned_macs = static_cast<double>(count_flops(pruned).total_macs);
  const double train = static_cast<double>(c.dataset.train);

  SetupFacts f;
  f.dataset = c.dataset.to_string();
  f.network = c.model;
  f.speedup = dense_macs / pruned_macs;
  if (c.pipeline == Pipeline::Scratch) {
    f.total_epochs = c.scratch.total_epochs();
    f.total_training_macs = f.total_epochs * pruned_macs * train;
    return f;
  }
  const ExperimentPlan plan = c.plan();
  const LRSchedule ft = c.effective_finetune();
  if (c.base_hash) {
    f.base_model_hash = *c.base_hash;
  } else {
    std::string ids;
    for (auto s : c.seeds) ids += pretrain_recipe_key(c, s);
    f.base_model_hash = sha256_hex(ids);
  }
  f.finetune_epochs = ft.total_epochs();
  f.finetune_schedule = ft;
  f.pruning_epochs = plan.prune_epoch;
  f.pruning_schedule = plan.pretrain;
  f.total_epochs = plan.pretrain.total_epochs() + ft.total_epochs();
  f.total_training_macs = (plan.pretrain.total_epochs() * dense_macs + ft.total_epochs() * pruned_macs) * train;
  return f;
}

SetupClass classify_setup(const Manifest& a, const Manifest& b) {
  return classify_setup(setup_facts(a), setup_facts(b));
}

}  // namespace prunebench
