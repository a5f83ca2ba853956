#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurossm/common.hpp"
#include "neurossm/data.hpp"
#include "neurossm/model.hpp"
#include "neurossm/rng.hpp"

namespace neurossm {

// Benchmark configuration. The default measures a single stream per scale
// (differential disabled) so the instrumented counts line up one-to-one with
// the per-scale cost model K·expand·N·d_state·T; the dual-stream factor is a
// constant 2x and can be measured by flipping `differential`.
struct BenchConfig {
  std::size_t n_rois = 64;
  std::vector<std::size_t> tau_set{1, 2, 3};
  std::size_t d_state = 2;
  std::size_t d_conv = 1;
  std::size_t expand = 3;
  std::size_t n_classes = 2;
  bool differential = false;
  std::size_t repeats = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 17;
};

// One measurement row. Stages:
//   scan       — recurrence updates: flops are state-update multiply-adds,
//                peak_bytes the summed carry-buffer bytes of one forward,
//                wall time accumulated inside the scan loops.
//   projection — dense and convolution multiply-adds with their wall time.
//   total      — whole-forward wall time, total flops, peak transient
//                tensor allocation.
struct BenchSample {
  std::string stage;
  std::size_t t_len = 0;
  std::size_t n_rois = 0;
  std::string tau_set;
  std::size_t d_state = 0;
  std::size_t expand = 0;
  std::size_t repeat = 0;
  std::uint64_t wall_time_ns = 0;
  std::uint64_t flops = 0;
  std::int64_t peak_bytes = 0;
};

namespace detail {

inline std::string tau_set_str(const std::vector<std::size_t>& taus) {
  std::ostringstream os;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (i) os << '|';
    os << taus[i];
  }
  return os.str();
}

inline ModelConfig bench_model_config(const BenchConfig& cfg,
                                      std::size_t n_rois) {
  ModelConfig mc;
  mc.n_rois = n_rois;
  mc.n_classes = cfg.n_classes;
  mc.tau_set = cfg.tau_set;
  mc.d_state = cfg.d_state;
  mc.d_conv = cfg.d_conv;
  mc.expand = cfg.expand;
  mc.enable_differential = cfg.differential;
  mc.seed = cfg.seed;
  return mc;
}

inline void bench_point(const BenchConfig& cfg, std::size_t t_len,
                        std::size_t n_rois, std::vector<BenchSample>& out) {
  const ModelConfig mc = bench_model_config(cfg, n_rois);
  const NeuroSsmModel model = NeuroSsmModel::init(mc);

  Rng rng = Rng(cfg.seed).derive("bench-input");
  std::vector<double> input(t_len * n_rois);
  for (double& v : input) v = rng.normal();
  const Tensor x = Tensor::from_data({t_len, n_rois}, std::move(input));

  NoGradGuard no_grad;
  CheckedModeGuard unchecked(false);
  auto& inst = instrumentation();
  inst.enabled = true;

  for (std::size_t w = 0; w < cfg.warmup; ++w) (void)model.forward(x);

  const std::string taus = tau_set_str(cfg.tau_set);
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    inst.reset_counters();
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.forward(x);
    const auto t1 = std::chrono::steady_clock::now();
    const auto total_ns = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());

    BenchSample base;
    base.t_len = t_len;
    base.n_rois = n_rois;
    base.tau_set = taus;
    base.d_state = cfg.d_state;
    base.expand = cfg.expand;
    base.repeat = r;

    BenchSample scan = base;
    scan.stage = "scan";
    scan.wall_time_ns = inst.scan_ns;
    scan.flops = inst.scan_madds;
    scan.peak_bytes = inst.scan_state_bytes_total;
    out.push_back(scan);

    BenchSample proj = base;
    proj.stage = "projection";
    proj.wall_time_ns = inst.proj_ns;
    proj.flops = inst.proj_madds;
    proj.peak_bytes = 0;
    out.push_back(proj);

    BenchSample total = base;
    total.stage = "total";
    total.wall_time_ns = total_ns;
    total.flops = inst.scan_madds + inst.proj_madds;
    total.peak_bytes = inst.alloc_bytes_peak;
    out.push_back(total);
  }
  inst.enabled = false;
}

}  // namespace detail

// Closed-form scan multiply-add count for one forward pass:
//   streams · Σ_k 2 · d_inner,k · d_state · floor(T/τ_k)
// with d_inner,k = expand · τ_k · N. Exactly linear in T whenever every τ_k
// divides T, and exactly linear in N always.
inline std::uint64_t expected_scan_madds(const BenchConfig& cfg,
                                         std::size_t t_len,
                                         std::size_t n_rois) {
  const std::uint64_t streams = cfg.differential ? 2 : 1;
  std::uint64_t total = 0;
  for (std::size_t tau : cfg.tau_set) {
    const std::uint64_t d_inner = cfg.expand * tau * n_rois;
    total += 2ULL * d_inner * cfg.d_state * (t_len / tau);
  }
  return streams * total;
}

// Closed-form carry-buffer bytes per forward: streams · Σ_k 8 · d_inner,k ·
// d_state. Independent of T; the recurrence carries only h.
inline std::int64_t expected_scan_state_bytes(const BenchConfig& cfg,
                                              std::size_t n_rois) {
  const std::int64_t streams = cfg.differential ? 2 : 1;
  std::int64_t total = 0;
  for (std::size_t tau : cfg.tau_set)
    total += static_cast<std::int64_t>(8 * cfg.expand * tau * n_rois *
                                       cfg.d_state);
  return streams * total;
}

// Forward-only timing across sequence lengths at fixed width.
inline std::vector<BenchSample> sweep_T(
    const BenchConfig& cfg,
    const std::vector<std::size_t>& t_values = {256, 512, 1024, 2048, 4096}) {
  if (t_values.empty()) throw ContractError("sweep_T: no sequence lengths");
  std::vector<BenchSample> out;
  for (std::size_t t : t_values) detail::bench_point(cfg, t, cfg.n_rois, out);
  return out;
}

// Forward-only timing across widths at fixed sequence length.
inline std::vector<BenchSample> sweep_N(
    const BenchConfig& cfg,
    const std::vector<std::size_t>& n_values = {50, 100, 200, 400},
    std::size_t t_len = 256) {
  if (n_values.empty()) throw ContractError("sweep_N: no widths");
  std::vector<BenchSample> out;
  for (std::size_t n : n_values) detail::bench_point(cfg, t_len, n, out);
  return out;
}

// Least-squares slope of log(y) against log(x).
inline double fit_loglog_exponent(std::span<const double> xs,
                                  std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ContractError("fit: need at least two points");
  double mean_x = 0.0, mean_y = 0.0;
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw ContractError("fit: values must be positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
    mean_x += lx[i];
    mean_y += ly[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mean_x) * (ly[i] - mean_y);
    sxx += (lx[i] - mean_x) * (lx[i] - mean_x);
  }
  return sxy / sxx;
}

struct StageFit {
  std::string stage;
  std::string axis;  // "T" or "N"
  double flop_exponent = 0.0;
  double wall_exponent = 0.0;
  bool state_bytes_constant = true;
};

struct ScalingSummary {
  std::vector<StageFit> fits;
  double wall_ratio_largest_to_smallest = 0.0;  // total stage, median times
};

namespace detail {

inline std::uint64_t median_u64(std::vector<std::uint64_t> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace detail

// Recomputes fits from raw samples alone; the written report carries nothing
// the CSV does not.
inline ScalingSummary summarize_samples(std::span<const BenchSample> samples,
                                        const std::string& axis = "T") {
  if (samples.empty()) throw ContractError("summary: empty sweep");
  const bool axis_t = axis == "T";
  std::map<std::string,
           std::map<std::size_t, std::vector<const BenchSample*>>>
      by_stage;
  for (const auto& s : samples)
    by_stage[s.stage][axis_t ? s.t_len : s.n_rois].push_back(&s);

  ScalingSummary summary;
  for (const auto& [stage, points] : by_stage) {
    StageFit fit;
    fit.stage = stage;
    fit.axis = axis;
    std::vector<double> xs, flops, walls;
    std::int64_t first_bytes = -1;
    for (const auto& [x, rows] : points) {
      xs.push_back(static_cast<double>(x));
      std::vector<std::uint64_t> wall_reps;
      for (const auto* r : rows) wall_reps.push_back(r->wall_time_ns);
      walls.push_back(
          static_cast<double>(std::max<std::uint64_t>(1, detail::median_u64(wall_reps))));
      flops.push_back(static_cast<double>(rows.front()->flops));
      if (stage == "scan") {
        if (first_bytes < 0) first_bytes = rows.front()->peak_bytes;
        if (rows.front()->peak_bytes != first_bytes)
          fit.state_bytes_constant = false;
      }
    }
    if (xs.size() >= 2) {
      fit.flop_exponent = fit_loglog_exponent(xs, flops);
      fit.wall_exponent = fit_loglog_exponent(xs, walls);
    }
    if (stage == "total")
      summary.wall_ratio_largest_to_smallest = walls.back() / walls.front();
    summary.fits.push_back(fit);
  }
  return summary;
}

inline void write_bench_csv(std::span<const BenchSample> samples,
                            const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("bench: cannot write '" + path.string() + "'");
  os << "stage,T,N,tau_set,d_state,expand,repeat,wall_time_ns,flops,"
        "peak_bytes\n";
  for (const auto& s : samples) {
    os << s.stage << ',' << s.t_len << ',' << s.n_rois << ',' << s.tau_set
       << ',' << s.d_state << ',' << s.expand << ',' << s.repeat << ','
       << s.wall_time_ns << ',' << s.flops << ',' << s.peak_bytes << '\n';
  }
}

inline std::vector<BenchSample> read_bench_csv(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("bench: cannot open '" + path.string() + "'");
  std::vector<BenchSample> out;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string tok;
    BenchSample s;
    std::getline(ls, s.stage, ',');
    std::getline(ls, tok, ',');
    s.t_len = std::stoull(tok);
    std::getline(ls, tok, ',');
    s.n_rois = std::stoull(tok);
    std::getline(ls, s.tau_set, ',');
    std::getline(ls, tok, ',');
    s.d_state = std::stoull(tok);
    std::getline(ls, tok, ',');
    s.expand = std::stoull(tok);
    std::getline(ls, tok, ',');
    s.repeat = std::stoull(tok);
    std::getline(ls, tok, ',');
    s.wall_time_ns = std::stoull(tok);
    std::getline(ls, tok, ',');
    s.flops = std::stoull(tok);
    std::getline(ls, tok, ',');
    s.peak_bytes = std::stoll(tok);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("bench: '" + path.string() + "' has no rows");
  return out;
}

// Raw CSV, fitted exponents with pass/fail against the declared bands, and
// plot-ready two-column files (axis value vs median wall time / flops).
inline void emit_scaling_report(std::span<const BenchSample> samples,
                                const std::filesystem::path& out_dir,
                                const std::string& axis = "T") {
  if (samples.empty()) throw ContractError("report: empty sweep");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  write_bench_csv(samples, out_dir / "bench_raw.csv");

  const ScalingSummary summary = summarize_samples(samples, axis);
  nlohmann::json js;
  js["axis"] = axis;
  js["fits"] = nlohmann::json::array();
  for (const auto& fit : summary.fits) {
    nlohmann::json f;
    f["stage"] = fit.stage;
    f["flop_exponent"] = fit.flop_exponent;
    f["wall_exponent"] = fit.wall_exponent;
    if (fit.stage == "scan") {
      f["state_bytes_constant"] = fit.state_bytes_constant;
      f["state_bytes_pass"] = fit.state_bytes_constant;
    }
    if (fit.stage == "total") {
      f["wall_exponent_band"] = {0.85, 1.25};
      f["wall_exponent_pass"] =
          fit.wall_exponent >= 0.85 && fit.wall_exponent <= 1.25;
    }
    js["fits"].push_back(f);
  }
  js["wall_ratio_largest_to_smallest"] =
      summary.wall_ratio_largest_to_smallest;
  std::ofstream os(out_dir / "bench_summary.json");
  os << js.dump(2) << '\n';

  // Plot data: one file per stage, axis value vs median wall ns and flops.
  std::map<std::string, std::map<std::size_t, std::vector<std::uint64_t>>>
      walls;
  std::map<std::string, std::map<std::size_t, std::uint64_t>> flops;
  const bool axis_t = axis == "T";
  for (const auto& s : samples) {
    const std::size_t x = axis_t ? s.t_len : s.n_rois;
    walls[s.stage][x].push_back(s.wall_time_ns);
    flops[s.stage][x] = s.flops;
  }
  for (auto& [stage, points] : walls) {
    std::ofstream wt(out_dir / ("plot_" + stage + "_wall.dat"));
    for (auto& [x, reps] : points)
      wt << x << ' ' << detail::median_u64(reps) << '\n';
    std::ofstream fl(out_dir / ("plot_" + stage + "_flops.dat"));
    for (auto& [x, f] : flops[stage]) fl << x << ' ' << f << '\n';
  }
}

}  // namespace neurossm
