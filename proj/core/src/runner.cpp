#include "prunebench/runner.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "prunebench/checkpoint.hpp"
#include "prunebench/digest.hpp"
#include "prunebench/error.hpp"
#include "prunebench/flops.hpp"
#include "prunebench/model_zoo.hpp"
#include "prunebench/results.hpp"

namespace prunebench {
namespace fs = std::filesystem;
namespace {

constexpr const char* kMetaPrefix = "meta.";
constexpr const char* kVelocityPrefix = "velocity/";

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + tmp.string() + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, p);
}

Tensor vector_tensor(const std::vector<double>& v) {
  std::vector<float> f(v.begin(), v.end());
  if (f.empty()) f.push_back(0.0f);
  const std::size_t n = f.size();
  return Tensor({n}, std::move(f));
}

std::vector<double> tensor_vector(const TensorMap& m, const std::string& key, std::size_t count) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint lacks '" + key + "'", 0);
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(it->second[i]);
  return out;
}

// Accuracies are stored as exact correct counts so reloaded curves print
// identically to freshly measured ones.
std::vector<double> to_counts(const std::vector<double>& acc, std::size_t test) {
  std::vector<double> out;
  for (double a : acc) out.push_back(std::round(a * static_cast<double>(test) / 100.0));
  return out;
}

std::vector<double> from_counts(const std::vector<double>& counts, std::size_t test) {
  std::vector<double> out;
  for (double c : counts) out.push_back(100.0 * c / static_cast<double>(test));
  return out;
}

TensorMap strip_extras(TensorMap m) {
  for (auto it = m.begin(); it != m.end();) {
    if (it->first.rfind(kMetaPrefix, 0) == 0 || it->first.rfind(kVelocityPrefix, 0) == 0) it = m.erase(it);
    else ++it;
  }
  return m;
}

double per_sample_macs(const ModelGraph& m) { return static_cast<double>(count_flops(m).total_macs); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace

std::string XvalVerdict::to_string() const { return winner.empty() ? kind : kind + " " + winner; }

XvalVerdict decide_cross_validation(const XvalGrid& g) {
  // wins[r] = +1 when A beats B under recipe r, -1 when B beats A, 0 otherwise.
  int wins[2];
  for (int r = 0; r < 2; ++r) {
    const Summary& a = g.cell[0][r];
    const Summary& b = g.cell[1][r];
    const double margin = std::sqrt(a.std * a.std + b.std * b.std);
    wins[r] = a.mean > b.mean + margin ? 1 : (b.mean > a.mean + margin ? -1 : 0);
  }
  if (wins[0] >= 0 && wins[1] >= 0 && wins[0] + wins[1] > 0) return {"consistent winner", "A"};
  if (wins[0] <= 0 && wins[1] <= 0 && wins[0] + wins[1] < 0) return {"consistent winner", "B"};
  if (wins[0] == 0 && wins[1] == 0) return {"tie", ""};
  static const char* names[2][2] = {{"A+FT_A", "A+FT_B"}, {"B+FT_A", "B+FT_B"}};
  int best_alg = 0, best_recipe = 0;
  for (int a = 0; a < 2; ++a)
    for (int r = 0; r < 2; ++r)
      if (g.cell[a][r].mean > g.cell[best_alg][best_recipe].mean) best_alg = a, best_recipe = r;
  return {"synergy", names[best_alg][best_recipe]};
}

Runner::Runner(RunnerOptions options) : options_(std::move(options)) {}

void Runner::log(const std::string& line) const {
  if (options_.log) *options_.log << line << std::endl;
}

const Dataset& Runner::dataset(const DatasetSpec& spec) {
  const std::string key = spec.to_string();
  auto it = datasets_.find(key);
  if (it == datasets_.end()) it = datasets_.emplace(key, std::make_unique<Dataset>(load_dataset(spec))).first;
  return *it->second;
}

double Runner::evaluate(const ModelGraph& model, const Dataset& data) const {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.test_size(); b += options_.eval_batch) {
    const auto batch = data.test_batch(b, std::min(data.test_size(), b + options_.eval_batch));
    const auto pred = argmax_rows(forward(model, batch.images));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.test_size());
}

std::vector<double> Runner::train(ModelGraph& model, OptimizerState& opt, const LRSchedule& schedule,
                                  EpochRange range, const Dataset& data, const ExperimentConfig& cfg,
                                  std::uint64_t seed, const std::string& phase) {
  std::vector<double> acc;
  std::vector<std::size_t> order(data.train_size());
  const std::size_t batch = cfg.batch_size;
  for (int e = range.begin; e < range.end; ++e) {
    opt.learning_rate = static_cast<float>(schedule.lr_at(e));
    std::mt19937_64 rng(derive_seed(phase, seed * 1000003ULL + static_cast<std::uint64_t>(e)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    // A trailing batch of one sample has no batch statistics; it is dropped.
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b + 2 <= order.size(); b += batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), b + batch);
      if (end - b < 2) break;
      const auto mb = data.train_batch(std::span<const std::size_t>(order).subspan(b, end - b), &rng);
      auto lg = backward(model, mb.images, mb.labels, batch_index);
      sgd_step(model.params(), lg.grads, opt);
    }
    acc.push_back(evaluate(model, data));
    std::ostringstream os;
    os << "[seed " << seed << "] " << phase << " epoch " << (e + 1) << "/" << schedule.total_epochs()
       << " lr=" << format_lr(opt.learning_rate) << " acc=" << acc.back();
    log(os.str());
  }
  return acc;
}

BaseModel Runner::load_base(const std::string& content_hash, const ModelGraph& tmpl) const {
  const fs::path file = options_.work_dir / "bases" / (content_hash + ".ckpt");
  if (!fs::exists(file)) throw Error("no cached base model with hash " + content_hash + " in " + file.parent_path().string());
  const std::string bytes = read_bytes(file);
  const std::string actual = sha256_hex(bytes);
  if (actual != content_hash)
    throw Error("base model hash mismatch: expected " + content_hash + ", file has " + actual);
  TensorMap tensors = deserialize_tensors(bytes);
  const std::size_t n = static_cast<std::size_t>(tensors.at("meta.pretrain_epochs")[0]);
  const std::size_t test = static_cast<std::size_t>(tensors.at("meta.test_size")[0]);
  BaseModel base{ModelGraph(tmpl.family(), tmpl.input()), content_hash,
                 from_counts(tensor_vector(tensors, "meta.pretrain_correct", n), test)};
  base.model = adopt_tensors(tmpl, strip_extras(std::move(tensors)));
  return base;
}

BaseModel Runner::pretrain(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Dataset& data = dataset(cfg.dataset);
  const ModelGraph tmpl = build_model(cfg.model, data.input_spec());

  if (cfg.base_hash) {
    const auto hashes = split_list(*cfg.base_hash);
    const auto pos = std::find(cfg.seeds.begin(), cfg.seeds.end(), seed) - cfg.seeds.begin();
    if (hashes.size() != cfg.seeds.size() || pos >= static_cast<long>(cfg.seeds.size()))
      throw ConfigError("base.hash must list one hash per seed");
    return load_base(hashes[static_cast<std::size_t>(pos)], tmpl);
  }

  const std::string recipe = pretrain_recipe_key(cfg, seed);
  const fs::path ref = options_.work_dir / "bases" / (recipe + ".ref");
  if (fs::exists(ref)) {
    std::string hash = read_bytes(ref);
    while (!hash.empty() && std::isspace(static_cast<unsigned char>(hash.back()))) hash.pop_back();
    return load_base(hash, tmpl);
  }

  ModelGraph model = tmpl;
  init_parameters(model, derive_seed("init", seed));
  const ExperimentPlan plan = cfg.plan();
  OptimizerState opt{0.0f, cfg.momentum, cfg.weight_decay, {}};
  const auto acc = train(model, opt, plan.pretrain, {0, plan.prune_epoch}, data, cfg, seed, "pretrain");

  TensorMap tensors = model.params();
  tensors["meta.pretrain_epochs"] = Tensor({1}, static_cast<float>(acc.size()));
  tensors["meta.test_size"] = Tensor({1}, static_cast<float>(data.test_size()));
  tensors["meta.pretrain_correct"] = vector_tensor(to_counts(acc, data.test_size()));
  const std::string bytes = serialize_tensors(tensors);
  const std::string hash = sha256_hex(bytes);
  write_bytes(options_.work_dir / "bases" / (hash + ".ckpt"), bytes);
  write_bytes(ref, hash + "\n");
  return load_base(hash, tmpl);
}

PrunedModel Runner::prune(const ExperimentConfig& cfg, const BaseModel& base, std::uint64_t seed) {
  PruneConfig pc = cfg.prune;
  pc.seed = derive_seed("rank", seed);
  PrunedModel out{ModelGraph(base.model.family(), base.model.input()), plan(base.model, pc), 0.0};
  out.model = rebuild_small_dense(base.model, out.keep);
  out.accuracy = evaluate(out.model, dataset(cfg.dataset));
  return out;
}

RunRecord Runner::run(const Manifest& manifest, std::uint64_t seed) {
  const ExperimentConfig cfg = resolve(manifest);
  if (cfg.pipeline == Pipeline::Scratch) return run_scratch(manifest, seed);
  if (cfg.extend_epochs == 0) return run_prune_finetune(manifest, seed);
  Manifest original = manifest;
  original.erase("ft.extend");
  const RunRecord base = run_prune_finetune(original, seed);
  return extend_finetune(original, base, cfg.extend_epochs);
}

RunRecord Runner::run_scratch(const Manifest& manifest, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = resolve(manifest);
  if (cfg.pipeline != Pipeline::Scratch) throw ConfigError("run_scratch needs pipeline = scratch");
  const Dataset& data = dataset(cfg.dataset);
  const ModelGraph dense = build_model(cfg.model, data.input_spec());
  // Fresh init on the reduced shapes, never a slice of a dense init.
  ModelGraph model = prune_architecture(dense, cfg.prune);
  init_parameters(model, derive_seed("init", seed));

  OptimizerState opt{0.0f, cfg.momentum, cfg.weight_decay, {}};
  RunRecord rec;
  rec.manifest_hash = manifest.hash();
  rec.seed = seed;
  PhaseCurve curve{"scratch", cfg.scratch,
                   train(model, opt, cfg.scratch, {0, cfg.scratch.total_epochs()}, data, cfg, seed, "scratch")};
  rec.final_accuracy = curve.accuracy.empty() ? evaluate(model, data) : curve.accuracy.back();
  rec.trainability = curve.accuracy.empty() ? rec.final_accuracy
                                            : trainability_accuracy(curve.accuracy, cfg.scratch.first_stage_length());
  rec.phases.push_back(std::move(curve));
  rec.total_epochs = cfg.scratch.total_epochs();
  rec.total_training_macs = static_cast<double>(rec.total_epochs) * per_sample_macs(model) *
                            static_cast<double>(data.train_size());
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

fs::path Runner::snapshot_path(const std::string& manifest_hash, std::uint64_t seed) const {
  return options_.work_dir / "snapshots" / (manifest_hash + "-" + std::to_string(seed) + ".ckpt");
}

RunRecord Runner::run_prune_finetune(const Manifest& manifest, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = resolve(manifest);
  if (cfg.pipeline != Pipeline::PruneFinetune) throw ConfigError("run_prune_finetune needs pipeline = prune-finetune");
  if (cfg.extend_epochs != 0) return run(manifest, seed);
  const Dataset& data = dataset(cfg.dataset);
  const ExperimentPlan plan = cfg.plan();

  const BaseModel base = pretrain(cfg, seed);
  PrunedModel pruned = prune(cfg, base, seed);

  RunRecord rec;
  rec.manifest_hash = manifest.hash();
  rec.seed = seed;
  rec.base_model_hash = base.content_hash;
  rec.phases.push_back({"pretrain", plan.pretrain, base.pretrain_acc});
  rec.post_prune_accuracy = pruned.accuracy;

  // Finetuning starts from a fresh optimizer state.
  OptimizerState opt{0.0f, cfg.momentum, cfg.weight_decay, {}};
  const int first = plan.finetune.first_stage_length();
  std::vector<double> acc = train(pruned.model, opt, plan.finetune, {0, first}, data, cfg, seed, "finetune");

  if (plan.finetune.kind() == ScheduleKind::StepDecade) {
    TensorMap snap = pruned.model.params();
    for (const auto& [name, v] : opt.velocity) snap[kVelocityPrefix + name] = v;
    snap["meta.first_stage_epochs"] = Tensor({1}, static_cast<float>(acc.size()));
    snap["meta.test_size"] = Tensor({1}, static_cast<float>(data.test_size()));
    snap["meta.first_stage_correct"] = vector_tensor(to_counts(acc, data.test_size()));
    write_bytes(snapshot_path(rec.manifest_hash, seed), serialize_tensors(snap));
  }

  const auto rest = train(pruned.model, opt, plan.finetune, {first, plan.finetune.total_epochs()}, data, cfg, seed,
                          "finetune");
  acc.insert(acc.end(), rest.begin(), rest.end());
  rec.final_accuracy = acc.empty() ? pruned.accuracy : acc.back();
  rec.trainability = acc.empty() ? pruned.accuracy : trainability_accuracy(acc, first);
  rec.phases.push_back({"finetune", plan.finetune, std::move(acc)});
  rec.total_epochs = plan.total_epochs();
  rec.total_training_macs = (plan.pretrain.total_epochs() * per_sample_macs(base.model) +
                             plan.finetune.total_epochs() * per_sample_macs(pruned.model)) *
                            static_cast<double>(data.train_size());
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunRecord Runner::extend_finetune(const Manifest& manifest, const RunRecord& original, int extra) {
  if (extra < 0) throw ConfigError("extra epochs must be non-negative");
  if (extra == 0) return original;
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = resolve(manifest);
  if (cfg.pipeline != Pipeline::PruneFinetune) throw ConfigError("extension needs a prune-finetune run");
  if (cfg.finetune_kind == FinetuneKind::Cosine) throw ConfigError("first-stage extension is unsupported for cosine finetuning");
  if (original.manifest_hash != manifest.hash()) throw ConfigError("record does not belong to this manifest");
  const auto* ft = original.find_phase("finetune");
  if (!ft) throw ConfigError("record has no finetune phase");

  const Dataset& data = dataset(cfg.dataset);
  const ExperimentPlan plan = cfg.plan();
  const LRSchedule extended = plan.finetune.extend_first_stage(extra);

  const fs::path snap_file = snapshot_path(original.manifest_hash, original.seed);
  if (!fs::exists(snap_file)) throw Error("missing first-stage snapshot " + snap_file.string());
  TensorMap snap = load_checkpoint(snap_file);
  const int first = plan.finetune.first_stage_length();
  if (static_cast<int>(snap.at("meta.first_stage_epochs")[0]) != first)
    throw FormatError("snapshot first-stage length does not match the manifest", 0);

  OptimizerState opt{0.0f, cfg.momentum, cfg.weight_decay, {}};
  for (const auto& [name, t] : snap)
    if (name.rfind(kVelocityPrefix, 0) == 0) opt.velocity[name.substr(std::string(kVelocityPrefix).size())] = t;
  const ModelGraph tmpl = prune_architecture(build_model(cfg.model, data.input_spec()), cfg.prune);
  ModelGraph model = adopt_tensors(tmpl, strip_extras(std::move(snap)));

  std::vector<double> acc(ft->accuracy.begin(), ft->accuracy.begin() + first);
  const auto more = train(model, opt, extended, {first, extended.total_epochs()}, data, cfg, original.seed, "finetune");
  acc.insert(acc.end(), more.begin(), more.end());

  Manifest extended_manifest = manifest;
  extended_manifest.set("ft.extend", std::to_string(extra));
  RunRecord rec = original;
  rec.manifest_hash = extended_manifest.hash();
  for (auto& p : rec.phases)
    if (p.phase == "finetune") p = {"finetune", extended, acc};
  rec.final_accuracy = acc.back();
  rec.trainability = trainability_accuracy(acc, extended.first_stage_length());
  rec.total_epochs = original.total_epochs + extra;
  rec.total_training_macs = original.total_training_macs +
                            extra * per_sample_macs(model) * static_cast<double>(data.train_size());
  rec.wall_seconds = original.wall_seconds +
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<RunRecord> Runner::run_all(const Manifest& manifest, const fs::path& results) {
  const ExperimentConfig cfg = resolve(manifest);
  std::vector<RunRecord> out;
  for (auto seed : cfg.seeds) {
    out.push_back(run(manifest, seed));
    if (!results.empty()) append_results(results, out.back(), cfg.name);
  }
  return out;
}

XvalResult Runner::cross_validate(const Manifest& a, const Manifest& b, const fs::path& results) {
  const ExperimentConfig ca = resolve(a), cb = resolve(b);
  if (ca.seeds.empty() || cb.seeds.empty()) throw ConfigError("cross-validation needs at least one seed");
  if (ca.pipeline != Pipeline::PruneFinetune || cb.pipeline != Pipeline::PruneFinetune)
    throw ConfigError("cross-validation compares prune-finetune manifests");

  auto with_recipe = [](const Manifest& alg, const Manifest& recipe, const std::string& label) {
    Manifest m = alg;
    for (const auto& [k, v] : alg.entries())
      if (k.rfind("ft.", 0) == 0) m.erase(k);
    for (const auto& [k, v] : recipe.entries())
      if (k.rfind("ft.", 0) == 0) m.set(k, v);
    m.set("name", label);
    return m;
  };
  const Manifest* algs[2] = {&a, &b};
  static const char* labels[2][2] = {{"A+FT_A", "A+FT_B"}, {"B+FT_A", "B+FT_B"}};
  XvalResult out;
  for (int i = 0; i < 2; ++i)
    for (int r = 0; r < 2; ++r) {
      const Manifest m = with_recipe(*algs[i], *algs[r], labels[i][r]);
      const auto runs = run_all(m, results);
      std::vector<double> finals;
      for (const auto& rr : runs) finals.push_back(rr.final_accuracy);
      out.grid.cell[i][r] = summarize(finals);
      out.runs.insert(out.runs.end(), runs.begin(), runs.end());
    }
  out.verdict = decide_cross_validation(out.grid);
  return out;
}

}  // namespace prunebench
