#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "prunebench/dataset.hpp"
#include "prunebench/manifest.hpp"
#include "prunebench/metrics.hpp"
#include "prunebench/nn.hpp"
#include "prunebench/pruner.hpp"
#include "prunebench/run_record.hpp"

namespace prunebench {

struct RunnerOptions {
  std::filesystem::path work_dir = "prunebench-work";  // base models and snapshots
  std::ostream* log = nullptr;                         // per-epoch progress when set
  std::size_t eval_batch = 500;
};

// Pretrained model as stored in the base cache.
struct BaseModel {
  ModelGraph model;
  std::string content_hash;          // SHA-256 of the checkpoint bytes
  std::vector<double> pretrain_acc;  // per-epoch curve of the pretraining prefix
};

struct PrunedModel {
  ModelGraph model;
  KeepPlan keep;
  double accuracy = 0.0;  // right after the rebuild, before any finetuning
};

// 2x2 cross-validation grid: cell[alg][recipe], alg/recipe 0 = A, 1 = B.
struct XvalGrid {
  std::array<std::array<Summary, 2>, 2> cell{};
};

struct XvalVerdict {
  std::string kind;    // "consistent winner", "tie", "synergy"
  std::string winner;  // "A"/"B" for a consistent winner, "A+FT_B" style pair for synergy
  std::string to_string() const;
};

// X beats Y under a recipe when its mean exceeds Y's by more than the noise
// margin sqrt(std_X^2 + std_Y^2).
XvalVerdict decide_cross_validation(const XvalGrid& grid);

struct XvalResult {
  XvalGrid grid;
  XvalVerdict verdict;
  std::vector<RunRecord> runs;
};

class Runner {
 public:
  explicit Runner(RunnerOptions options = {});

  // Dispatches on the pipeline kind (and ft.extend for prune-finetune).
  RunRecord run(const Manifest& manifest, std::uint64_t seed);
  RunRecord run_scratch(const Manifest& manifest, std::uint64_t seed);
  RunRecord run_prune_finetune(const Manifest& manifest, std::uint64_t seed);

  // Resumes `original` from the snapshot taken at the end of its first
  // finetune LR stage, trains `extra` more epochs at that LR, then replays the
  // later stages. The result belongs to the manifest with ft.extend = extra.
  RunRecord extend_finetune(const Manifest& manifest, const RunRecord& original, int extra);

  // All seeds of the manifest; rows are appended to `results` when non-empty.
  std::vector<RunRecord> run_all(const Manifest& manifest, const std::filesystem::path& results = {});

  // Runs A+FT_A, A+FT_B, B+FT_A, B+FT_B; FT_X are the ft.* keys of manifest X.
  XvalResult cross_validate(const Manifest& a, const Manifest& b, const std::filesystem::path& results = {});

  // Cached pretraining to the prune epoch (or lookup by base.hash).
  BaseModel pretrain(const ExperimentConfig& cfg, std::uint64_t seed);
  PrunedModel prune(const ExperimentConfig& cfg, const BaseModel& base, std::uint64_t seed);

  const Dataset& dataset(const DatasetSpec& spec);
  // Top-1 test accuracy in percent, eval-mode batchnorm.
  double evaluate(const ModelGraph& model, const Dataset& data) const;

 private:
  struct EpochRange {
    int begin = 0, end = 0;
  };
  std::vector<double> train(ModelGraph& model, OptimizerState& opt, const LRSchedule& schedule, EpochRange range,
                            const Dataset& data, const ExperimentConfig& cfg, std::uint64_t seed,
                            const std::string& phase);
  std::filesystem::path snapshot_path(const std::string& manifest_hash, std::uint64_t seed) const;
  BaseModel load_base(const std::string& content_hash, const ModelGraph& tmpl) const;
  void log(const std::string& line) const;

  RunnerOptions options_;
  std::map<std::string, std::unique_ptr<Dataset>> datasets_;
};

}  // namespace prunebench
