#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "neurossm/common.hpp"
#include "neurossm/train.hpp"

namespace neurossm {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

// Sample standard deviation; zero for a single observation.
inline MeanSd mean_sd(std::span<const double> xs) {
  MeanSd out;
  out.n = xs.size();
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

}  // namespace detail

// One row per (variant, fraction, seed, split). AUC is blank when undefined.
inline void write_run_records_csv(std::span<const RunRecord> records,
                                  const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("report: cannot write '" + path.string() + "'");
  os << "variant,fraction,seed,split,accuracy,macro_f1,auc\n";
  for (const auto& rec : records) {
    os << rec.variant << ',' << rec.fraction << ',' << rec.seed << ','
       << rec.split << ',' << detail::fmt_double(rec.report.accuracy) << ','
       << detail::fmt_double(rec.report.macro_f1) << ',';
    if (rec.report.auc) os << detail::fmt_double(*rec.report.auc);
    os << '\n';
  }
}

// mean ± sd per (variant, fraction, split) cell, aggregated over seeds.
inline nlohmann::json summarize_run_records(
    std::span<const RunRecord> records) {
  std::map<std::tuple<std::string, std::size_t, std::string>,
           std::vector<const RunRecord*>>
      cells;
  for (const auto& rec : records)
    cells[{rec.variant, rec.fraction, rec.split}].push_back(&rec);

  nlohmann::json out;
  out["cells"] = nlohmann::json::array();
  for (const auto& [key, rows] : cells) {
    const auto& [variant, fraction, split] = key;
    std::vector<double> acc, f1, auc;
    for (const RunRecord* r : rows) {
      acc.push_back(r->report.accuracy);
      f1.push_back(r->report.macro_f1);
      if (r->report.auc) auc.push_back(*r->report.auc);
    }
    nlohmann::json cell;
    cell["variant"] = variant;
    cell["fraction"] = fraction;
    cell["split"] = split;
    cell["n_runs"] = rows.size();
    auto pack = [](const detail::MeanSd& ms) {
      return nlohmann::json{{"mean", ms.mean}, {"sd", ms.sd}, {"n", ms.n}};
    };
    cell["accuracy"] = pack(detail::mean_sd(acc));
    cell["macro_f1"] = pack(detail::mean_sd(f1));
    if (!auc.empty()) cell["auc"] = pack(detail::mean_sd(auc));
    out["cells"].push_back(cell);
  }
  return out;
}

inline void write_summary_json(std::span<const RunRecord> records,
                               const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("report: cannot write '" + path.string() + "'");
  os << summarize_run_records(records).dump(2) << '\n';
}

inline void write_loss_trace_csv(std::span<const double> trace,
                                 const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("report: cannot write '" + path.string() + "'");
  os << "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    os << i << ',' << detail::fmt_double(trace[i]) << '\n';
}

}  // namespace neurossm
