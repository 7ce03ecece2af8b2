#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prunebench/dataset.hpp"
#include "prunebench/planner.hpp"
#include "prunebench/pruner.hpp"
#include "prunebench/schedule.hpp"

namespace prunebench {

// Declarative experiment description: one "key = value" per line, '#'
// comments. Recognised keys:
//
//   name                 free-form label (not hashed)
//   dataset              DatasetSpec text, e.g. synthetic:classes=10,train=2000
//   model                zoo name
//   pipeline             scratch | prune-finetune
//   seeds                comma-separated integers
//   batch_size, momentum, weight_decay
//   scratch.epochs       total epochs of the scratch/pretraining schedule
//   scratch.init_lr, scratch.final_lr   halving-rule synthesis inputs
//   scratch.schedule     explicit "0:1e-1,30:1e-2,..." (overrides synthesis)
//   prune.ratio          uniform ratio
//   prune.stage_ratios   per-stage vector
//   prune.criterion      l1 | random
//   prune.epoch          P in P{p}F{f}
//   ft.kind              step | cosine
//   ft.init_lr, ft.epochs
//   ft.extend            extra epochs inserted into the first finetune stage
//   base.hash            content hash of a cached pretrained model to reuse
//   plan.<layer>         kept indices written into run manifests (not hashed)
class Manifest {
 public:
  Manifest() = default;

  static Manifest parse(const std::string& text);
  static Manifest load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value);
  void erase(const std::string& key) { entries_.erase(key); }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  // Sorted "key=value\n" lines without the unhashed keys.
  std::string canonical() const;
  std::string hash() const;  // SHA-256 hex of canonical()

  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
};

enum class Pipeline { Scratch, PruneFinetune };

struct ExperimentConfig {
  std::string name;
  DatasetSpec dataset;
  std::string model;
  Pipeline pipeline = Pipeline::PruneFinetune;
  std::vector<std::uint64_t> seeds{1};
  std::size_t batch_size = 64;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  LRSchedule scratch;
  PruneConfig prune;
  int prune_epoch = 0;
  FinetuneKind finetune_kind = FinetuneKind::Step;
  double finetune_init_lr = 0.0;
  int finetune_epochs = 0;
  int extend_epochs = 0;
  std::optional<std::string> base_hash;

  // Pretrain/finetune schedules of a prune-finetune pipeline.
  ExperimentPlan plan() const;
  // Finetune schedule including any first-stage extension.
  LRSchedule effective_finetune() const;
};

ExperimentConfig resolve(const Manifest& manifest);

// Identity of the pretrained model a manifest would produce for `seed`.
std::string pretrain_recipe_key(const ExperimentConfig& cfg, std::uint64_t seed);

SetupFacts setup_facts(const Manifest& manifest);
SetupClass classify_setup(const Manifest& a, const Manifest& b);

}  // namespace prunebench
