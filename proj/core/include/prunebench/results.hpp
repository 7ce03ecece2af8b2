#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prunebench/metrics.hpp"
#include "prunebench/run_record.hpp"

namespace prunebench {

// Results CSV. Header: manifest_hash,seed,epoch,phase,lr,test_acc
//
// Curve rows use 1-based epochs within a phase. The post-prune accuracy is a
// "prune" row at epoch 0 with lr "-". Every run ends with one summary row:
//   <hash>,<seed>,-,summary,-,<final_acc>,T=<..>,total_epochs=<..>,total_MACs=<..>,name=<..>
inline constexpr const char* kResultsHeader = "manifest_hash,seed,epoch,phase,lr,test_acc";

struct CurveRow {
  std::string manifest_hash;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string phase;
  std::string lr;
  double accuracy = 0.0;
};

struct SummaryRow {
  std::string manifest_hash;
  std::uint64_t seed = 0;
  std::string name;
  double final_accuracy = 0.0;
  double trainability = 0.0;
  long total_epochs = 0;
  double total_training_macs = 0.0;
};

struct ResultsTable {
  std::vector<CurveRow> curves;
  std::vector<SummaryRow> summaries;
};

// Rows for one run, without the header.
std::string format_run_rows(const RunRecord& run, const std::string& name);

// Appends one run, writing the header first when the file is new or empty.
void append_results(const std::filesystem::path& file, const RunRecord& run, const std::string& name);

ResultsTable parse_results(const std::string& text);
ResultsTable read_results(const std::filesystem::path& file);

// One line per manifest: name, hash prefix, n, final accuracy and T as
// mean±std, total epochs and MACs.
std::string render_report(const ResultsTable& table);

// Per-epoch mean accuracy per (manifest, phase) with an lr_decay marker
// column (1 on the first epoch of every LR stage after the first).
std::string render_curves_csv(const ResultsTable& table);

}  // namespace prunebench
