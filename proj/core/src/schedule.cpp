#include "prunebench/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "prunebench/error.hpp"

namespace prunebench {

std::string format_lr(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive, got " + std::to_string(lr));
  // Six significant digits absorb float round-off (0.01f prints as 1e-2).
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5e", lr);
  std::string text = buf;
  const auto e = text.find('e');
  std::string m = text.substr(0, e);
  if (m.find('.') != std::string::npos) {
    while (m.back() == '0') m.pop_back();
    if (m.back() == '.') m.pop_back();
  }
  return m + "e" + std::to_string(std::stoi(text.substr(e + 1)));
}

bool same_lr(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(std::fabs(a), std::fabs(b)); }

LRSchedule::LRSchedule(ScheduleKind kind, std::vector<LRStage> stages, int total_epochs, double final_lr)
    : kind_(kind), stages_(std::move(stages)), total_epochs_(total_epochs), final_lr_(final_lr) {
  validate();
}

LRSchedule LRSchedule::step(std::vector<LRStage> stages, int total_epochs) {
  const double last = stages.empty() ? 0.0 : stages.back().lr;
  return LRSchedule(ScheduleKind::StepDecade, std::move(stages), total_epochs, last);
}

LRSchedule LRSchedule::cosine(int total_epochs, double init_lr, double min_lr) {
  return LRSchedule(ScheduleKind::Cosine, {{0, init_lr}}, total_epochs, min_lr);
}

LRSchedule LRSchedule::empty() { return LRSchedule(); }

LRSchedule LRSchedule::parse_step(const std::string& text, int total_epochs) {
  std::vector<LRStage> stages;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto colon = tok.find(':');
    if (colon == std::string::npos) throw ConfigError("schedule entry '" + tok + "' is not start:lr");
    char* end = nullptr;
    const std::string start_s = tok.substr(0, colon), lr_s = tok.substr(colon + 1);
    const long start = std::strtol(start_s.c_str(), &end, 10);
    if (end == start_s.c_str() || *end != '\0') throw ConfigError("bad stage start '" + start_s + "'");
    const double lr = std::strtod(lr_s.c_str(), &end);
    if (end == lr_s.c_str() || *end != '\0') throw ConfigError("bad stage LR '" + lr_s + "'");
    stages.push_back({static_cast<int>(start), lr});
  }
  return step(std::move(stages), total_epochs);
}

void LRSchedule::validate() const {
  if (total_epochs_ < 0) throw ConfigError("schedule total epochs must be non-negative");
  if (total_epochs_ == 0) {
    if (!stages_.empty()) throw ConfigError("empty schedule cannot have stages");
    return;
  }
  if (stages_.empty() || stages_.front().start_epoch != 0) throw ConfigError("schedule must start at epoch 0");
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (!(stages_[i].lr > 0.0)) throw ConfigError("schedule LRs must be positive");
    if (stages_[i].start_epoch >= total_epochs_)
      throw ConfigError("stage start " + std::to_string(stages_[i].start_epoch) + " not before total " +
                        std::to_string(total_epochs_));
    if (i > 0) {
      if (stages_[i].start_epoch <= stages_[i - 1].start_epoch)
        throw ConfigError("stage starts must be strictly increasing");
      if (kind_ == ScheduleKind::StepDecade && !same_lr(stages_[i].lr, stages_[i - 1].lr * 0.1))
        throw ConfigError("step schedule LRs must fall by exactly x0.1 per stage");
    }
  }
  if (kind_ == ScheduleKind::Cosine) {
    if (stages_.size() != 1) throw ConfigError("cosine schedule has a single stage");
    if (!(final_lr_ > 0.0 && final_lr_ < stages_[0].lr))
      throw ConfigError("cosine schedule needs init_lr > min_lr > 0");
  }
}

double LRSchedule::lr_at(int epoch) const {
  if (epoch < 0 || epoch >= total_epochs_)
    throw ConfigError("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(total_epochs_));
  if (kind_ == ScheduleKind::Cosine) {
    const double init = stages_[0].lr;
    return final_lr_ + 0.5 * (init - final_lr_) *
                           (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / total_epochs_));
  }
  double lr = stages_.front().lr;
  for (const auto& s : stages_)
    if (s.start_epoch <= epoch) lr = s.lr;
  return lr;
}

std::vector<int> LRSchedule::stage_lengths() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const int end = i + 1 < stages_.size() ? stages_[i + 1].start_epoch : total_epochs_;
    out.push_back(end - stages_[i].start_epoch);
  }
  return out;
}

int LRSchedule::first_stage_length() const {
  if (is_empty()) return 0;
  if (kind_ == ScheduleKind::Cosine) {
    const double threshold = stages_[0].lr / 10.0;
    for (int e = 0; e < total_epochs_; ++e)
      if (lr_at(e) < threshold) return e;
    return total_epochs_;
  }
  return stage_lengths().front();
}

LRSchedule LRSchedule::prefix(int epochs) const {
  if (epochs < 0 || epochs > total_epochs_)
    throw ConfigError("prefix of " + std::to_string(epochs) + " epochs exceeds schedule of " +
                      std::to_string(total_epochs_));
  if (epochs == 0) return empty();
  if (kind_ == ScheduleKind::Cosine)
    throw ConfigError("prefix of a cosine schedule is not a cosine schedule");
  std::vector<LRStage> kept;
  for (const auto& s : stages_)
    if (s.start_epoch < epochs) kept.push_back(s);
  return step(std::move(kept), epochs);
}

LRSchedule LRSchedule::extend_first_stage(int extra) const {
  if (kind_ != ScheduleKind::StepDecade) throw ConfigError("only step schedules can be extended");
  if (extra < 0) throw ConfigError("extension must be non-negative");
  std::vector<LRStage> st = stages_;
  for (std::size_t i = 1; i < st.size(); ++i) st[i].start_epoch += extra;
  return LRSchedule(ScheduleKind::StepDecade, std::move(st), total_epochs_ + extra, final_lr_);
}

std::string LRSchedule::to_string() const {
  if (is_empty()) return "";
  if (kind_ == ScheduleKind::Cosine) return "cosine:" + format_lr(stages_[0].lr) + "->" + format_lr(final_lr_);
  std::string out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(stages_[i].start_epoch) + ":" + format_lr(stages_[i].lr);
  }
  return out;
}

bool operator==(const LRSchedule& a, const LRSchedule& b) {
  if (a.kind_ != b.kind_ || a.total_epochs_ != b.total_epochs_ || a.stages_.size() != b.stages_.size()) return false;
  if (a.total_epochs_ > 0 && !same_lr(a.final_lr_, b.final_lr_)) return false;
  for (std::size_t i = 0; i < a.stages_.size(); ++i)
    if (a.stages_[i].start_epoch != b.stages_[i].start_epoch || !same_lr(a.stages_[i].lr, b.stages_[i].lr))
      return false;
  return true;
}

LRSchedule synthesize_step_schedule(int total_epochs, double init_lr, double final_lr, int stage_cap) {
  if (!(init_lr > 0.0) || !(final_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (stage_cap < 1) throw ConfigError("stage cap must be at least 1");
  const double ratio = init_lr / final_lr;
  const double decades_f = std::round(std::log10(ratio));
  if (decades_f < 0.0 || std::fabs(std::pow(10.0, decades_f) - ratio) > 1e-9 * ratio)
    throw ConfigError("init_lr/final_lr must be a power of 10 >= 1, got " + format_lr(init_lr) + "/" +
                      format_lr(final_lr));
  const int stages = static_cast<int>(decades_f) + 1;
  if (total_epochs < stages)
    throw ConfigError(std::to_string(total_epochs) + " epochs cannot hold " + std::to_string(stages) + " LR stages");

  std::vector<LRStage> out;
  int start = 0, remaining = total_epochs;
  for (int i = 0; i < stages; ++i) {
    const double lr = init_lr * std::pow(10.0, -i);
    const int len = i + 1 == stages ? remaining : std::min(stage_cap, (remaining + 1) / 2);
    if (len < 1)
      throw ConfigError(std::to_string(total_epochs) + " epochs leave LR stage " + std::to_string(i + 1) +
                        " empty under the halving rule");
    out.push_back({start, lr});
    start += len;
    remaining -= len;
  }
  return LRSchedule(ScheduleKind::StepDecade, std::move(out), total_epochs, final_lr);
}

LRSchedule synthesize_cosine_schedule(int total_epochs, double init_lr, double min_lr) {
  if (total_epochs < 1) throw ConfigError("cosine schedule needs at least one epoch");
  return LRSchedule::cosine(total_epochs, init_lr, min_lr);
}

}  // namespace prunebench
