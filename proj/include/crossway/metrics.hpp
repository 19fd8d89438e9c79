// Per-iteration metrics CSV: append-only, flushed per row, formatted with
// round-trip-exact doubles so the file re-parses to the emitting values.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/trainer.hpp"

namespace crossway {

inline constexpr const char* kMetricsHeader =
    "iteration,env_steps,model_steps,mean_ep_reward,mean_ep_len,policy_loss,"
    "value_loss,kl,clip_frac,lr,wallclock_s";

inline std::string format_metrics_row(const IterationReport& r) {
  auto g = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::string row;
  row += std::to_string(r.iteration);
  row += ",";
  row += std::to_string(r.env_steps);
  row += ",";
  row += std::to_string(r.model_steps);
  for (double v : {r.mean_ep_reward, r.mean_ep_len, r.policy_loss, r.value_loss,
                   r.kl, r.clip_frac, r.lr, r.wallclock_s}) {
    row += ",";
    row += g(v);
  }
  return row;
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path, bool append = false)
      : path_(path) {
    const bool write_header = !append || !std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) {
      throw std::runtime_error("metrics: cannot open " + path.string());
    }
    if (write_header) {
      out_ << kMetricsHeader << "\n";
      out_.flush();
    }
  }

  void write(const IterationReport& report) {
    out_ << format_metrics_row(report) << "\n";
    out_.flush();
    if (!out_) {
      throw std::runtime_error("metrics: write failed on " + path_.string());
    }
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline std::vector<IterationReport> parse_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("metrics: cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics: missing or unexpected header in " +
                             path.string());
  }
  std::vector<IterationReport> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 11) {
      throw std::runtime_error("metrics: malformed row '" + line + "'");
    }
    IterationReport r;
    r.iteration = std::stoll(cells[0]);
    r.env_steps = std::stoll(cells[1]);
    r.model_steps = std::stoll(cells[2]);
    r.mean_ep_reward = std::stod(cells[3]);
    r.mean_ep_len = std::stod(cells[4]);
    r.policy_loss = std::stod(cells[5]);
    r.value_loss = std::stod(cells[6]);
    r.kl = std::stod(cells[7]);
    r.clip_frac = std::stod(cells[8]);
    r.lr = std::stod(cells[9]);
    r.wallclock_s = std::stod(cells[10]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace crossway
