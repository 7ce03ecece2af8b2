#include "prunebench/results.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "prunebench/error.hpp"

namespace prunebench {
namespace {

std::string fixed(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string macs_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, int line) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw FormatError("results line " + std::to_string(line) + ": bad number '" + s + "'", 0);
  }
}

}  // namespace

std::string format_run_rows(const RunRecord& run, const std::string& name) {
  std::ostringstream os;
  const std::string prefix = run.manifest_hash + "," + std::to_string(run.seed) + ",";
  for (const auto& phase : run.phases) {
    if (phase.phase == "finetune" && run.post_prune_accuracy)
      os << prefix << "0,prune,-," << fixed(*run.post_prune_accuracy) << "\n";
    for (std::size_t e = 0; e < phase.accuracy.size(); ++e)
      os << prefix << (e + 1) << "," << phase.phase << "," << format_lr(phase.schedule.lr_at(static_cast<int>(e)))
         << "," << fixed(phase.accuracy[e]) << "\n";
  }
  if (run.post_prune_accuracy && !run.find_phase("finetune"))
    os << prefix << "0,prune,-," << fixed(*run.post_prune_accuracy) << "\n";
  os << prefix << "-,summary,-," << fixed(run.final_accuracy) << ",T=" << fixed(run.trainability)
     << ",total_epochs=" << run.total_epochs << ",total_MACs=" << macs_text(run.total_training_macs)
     << ",name=" << name << "\n";
  return os.str();
}

void append_results(const std::filesystem::path& file, const RunRecord& run, const std::string& name) {
  const bool fresh = !std::filesystem::exists(file) || std::filesystem::file_size(file) == 0;
  std::ofstream f(file, std::ios::app);
  if (!f) throw Error("cannot open results file '" + file.string() + "'");
  if (fresh) f << kResultsHeader << "\n";
  f << format_run_rows(run, name);
}

ResultsTable parse_results(const std::string& text) {
  ResultsTable table;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line == kResultsHeader) continue;
    auto cols = split(line, ',');
    if (cols.size() < 6) throw FormatError("results line " + std::to_string(lineno) + ": expected 6 columns", 0);
    const std::uint64_t seed = std::strtoull(cols[1].c_str(), nullptr, 10);
    if (cols[3] == "summary") {
      SummaryRow s;
      s.manifest_hash = cols[0];
      s.seed = seed;
      s.final_accuracy = to_double(cols[5], lineno);
      for (std::size_t i = 6; i < cols.size(); ++i) {
        auto eq = cols[i].find('=');
        if (eq == std::string::npos) continue;
        const std::string key = cols[i].substr(0, eq), value = cols[i].substr(eq + 1);
        if (key == "T") s.trainability = to_double(value, lineno);
        else if (key == "total_epochs") s.total_epochs = static_cast<long>(to_double(value, lineno));
        else if (key == "total_MACs") s.total_training_macs = to_double(value, lineno);
        else if (key == "name") s.name = value;
      }
      table.summaries.push_back(std::move(s));
    } else {
      CurveRow r;
      r.manifest_hash = cols[0];
      r.seed = seed;
      r.epoch = static_cast<int>(to_double(cols[2], lineno));
      r.phase = cols[3];
      r.lr = cols[4];
      r.accuracy = to_double(cols[5], lineno);
      table.curves.push_back(std::move(r));
    }
  }
  return table;
}

ResultsTable read_results(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw Error("cannot open results file '" + file.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_results(ss.str());
}

std::string render_report(const ResultsTable& table) {
  struct Group {
    std::string name;
    std::vector<double> final_acc, trainability;
    long epochs = 0;
    double macs = 0.0;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  for (const auto& s : table.summaries) {
    auto [it, inserted] = groups.try_emplace(s.manifest_hash);
    if (inserted) order.push_back(s.manifest_hash);
    Group& g = it->second;
    if (g.name.empty()) g.name = s.name;
    g.final_acc.push_back(s.final_accuracy);
    g.trainability.push_back(s.trainability);
    g.epochs = s.total_epochs;
    g.macs = s.total_training_macs;
  }
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-28s %-12s %3s  %-16s %-16s %8s %13s\n", "name", "manifest", "n", "final_acc",
                "T", "epochs", "train_MACs");
  os << buf;
  for (const auto& hash : order) {
    const Group& g = groups.at(hash);
    const Summary fa = summarize(g.final_acc), tr = summarize(g.trainability);
    const std::string fa_text = fixed(fa.mean, 2) + "±" + fixed(fa.std, 2);
    const std::string tr_text = fixed(tr.mean, 2) + "±" + fixed(tr.std, 2);
    std::snprintf(buf, sizeof buf, "%-28s %-12s %3zu  %-17s %-17s %8ld %13s\n",
                  g.name.empty() ? "-" : g.name.c_str(), hash.substr(0, 12).c_str(), fa.n, fa_text.c_str(),
                  tr_text.c_str(), g.epochs, macs_text(g.macs).c_str());
    os << buf;
  }
  return os.str();
}

std::string render_curves_csv(const ResultsTable& table) {
  struct Key {
    std::string hash;
    int phase_rank;
    std::string phase;
    int epoch;
    auto operator<=>(const Key&) const = default;
  };
  struct Acc {
    std::string lr;
    std::vector<double> values;
  };
  std::map<Key, Acc> cells;
  std::map<std::string, std::string> names;
  for (const auto& s : table.summaries)
    if (!names.count(s.manifest_hash)) names[s.manifest_hash] = s.name;
  for (const auto& r : table.curves) {
    const int rank = r.phase == "pretrain" ? 0 : r.phase == "prune" ? 1 : r.phase == "finetune" ? 2 : 3;
    Acc& a = cells[{r.manifest_hash, rank, r.phase, r.epoch}];
    a.lr = r.lr;
    a.values.push_back(r.accuracy);
  }
  std::ostringstream os;
  os << "manifest_hash,name,phase,epoch,lr,lr_decay,mean_acc,std_acc,n\n";
  std::string prev_hash, prev_phase, prev_lr;
  for (const auto& [key, acc] : cells) {
    const bool same_series = key.hash == prev_hash && key.phase == prev_phase;
    const bool decay = same_series && key.epoch > 1 && acc.lr != prev_lr && prev_lr != "-";
    const Summary s = summarize(acc.values);
    os << key.hash << "," << names[key.hash] << "," << key.phase << "," << key.epoch << "," << acc.lr << ","
       << (decay ? 1 : 0) << "," << fixed(s.mean) << "," << fixed(s.std) << "," << s.n << "\n";
    prev_hash = key.hash;
    prev_phase = key.phase;
    prev_lr = acc.lr;
  }
  return os.str();
}

}  // namespace prunebench
