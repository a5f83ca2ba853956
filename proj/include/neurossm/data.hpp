#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "neurossm/common.hpp"
#include "neurossm/rng.hpp"
#include "neurossm/tensor.hpp"

namespace neurossm {

// One subject's scan: T x N z-scored series plus labeling identity. group_id
// is the unit of split disjointness and defaults to subject_id.
struct BoldSequence {
  Tensor series;
  std::size_t label = 0;
  std::string subject_id;
  std::string group_id;
};

// Development/test partition plus 5 inner (train, val) folds over dev.
// Identities are indices into the originating dataset vector.
struct SplitPlan {
  std::vector<std::size_t> dev_indices;
  std::vector<std::size_t> test_indices;
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
      folds;
};

// Generator recipe for the synthetic tasks: a shared low-frequency sinusoid
// over a random ROI subset, class-dependent brief transients, Gaussian noise.
// Classes may differ in trend frequency, transient rate, or both.
struct SyntheticSpec {
  std::size_t n_classes = 3;
  std::size_t n_rois = 16;
  std::size_t length = 240;
  std::vector<double> trend_freqs;     // cycles per sequence, one per class
  std::vector<double> transient_rate;  // events per ROI per step, per class
  std::size_t transient_width = 2;
  double noise_sd = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_classes < 2) throw ContractError("synthetic: n_classes must be >= 2");
    if (n_rois == 0 || length == 0)
      throw ContractError("synthetic: n_rois and length must be positive");
    if (trend_freqs.size() != n_classes || transient_rate.size() != n_classes)
      throw ContractError(
          "synthetic: trend_freqs and transient_rate need one entry per class");
    if (transient_width == 0)
      throw ContractError("synthetic: transient_width must be positive");
    if (noise_sd < 0.0)
      throw ContractError("synthetic: noise_sd must be non-negative");
  }
};

namespace detail {

// In-place per-column z-score with population sd. Constant columns map to
// zeros; near-constant ROIs do occur in parcellated data.
inline void zscore_columns(std::vector<double>& data, std::size_t t_len,
                           std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mean += data[t * n + c];
    mean /= static_cast<double>(t_len);
    double var = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double d = data[t * n + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(t_len);
    if (var < 1e-24) {
      for (std::size_t t = 0; t < t_len; ++t) data[t * n + c] = 0.0;
    } else {
      const double inv_sd = 1.0 / std::sqrt(var);
      for (std::size_t t = 0; t < t_len; ++t)
        data[t * n + c] = (data[t * n + c] - mean) * inv_sd;
    }
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t') ++end;
  return *end == '\0';
}

// Numeric matrix from one per-subject CSV (rows = time, cols = ROIs,
// optional single header row).
inline std::pair<std::vector<double>, std::pair<std::size_t, std::size_t>>
read_series_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("data: cannot open series file '" + path.string() + "'");
  std::vector<double> values;
  std::size_t n_cols = 0, n_rows = 0, line_no = 0;
  std::string line;
  bool first_content_line = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto toks = split_csv_line(line);
    if (first_content_line) {
      double probe;
      if (!parse_double(toks[0], probe)) continue;  // header row
    }
    first_content_line = false;
    if (n_cols == 0) n_cols = toks.size();
    if (toks.size() != n_cols)
      throw DataError("data: '" + path.string() + "' line " +
                      std::to_string(line_no) + " has " +
                      std::to_string(toks.size()) + " columns, expected " +
                      std::to_string(n_cols));
    for (std::size_t c = 0; c < toks.size(); ++c) {
      double v;
      if (!parse_double(toks[c], v))
        throw DataError("data: non-numeric cell in '" + path.string() +
                        "' at row " + std::to_string(line_no) + ", column " +
                        std::to_string(c + 1));
      values.push_back(v);
    }
    ++n_rows;
  }
  if (n_rows == 0)
    throw DataError("data: '" + path.string() + "' contains no samples");
  return {std::move(values), {n_rows, n_cols}};
}

}  // namespace detail

// Loads a manifest (header `path,label,subject_id,group_id`; group_id
// optional) and its per-subject CSVs. Every ROI column is z-scored; labels
// map to contiguous indices in sorted label order. Relative series paths
// resolve against the manifest's directory.
inline std::vector<BoldSequence> ingest_csv(
    const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is)
    throw DataError("data: cannot open manifest '" + manifest_path.string() +
                    "'");
  struct Row {
    std::filesystem::path path;
    std::string label, subject, group;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto toks = detail::split_csv_line(line);
    if (line_no == 1 && !toks.empty() && toks[0] == "path") continue;
    if (toks.size() < 3)
      throw DataError("data: manifest line " + std::to_string(line_no) +
                      " needs at least path,label,subject_id");
    Row row;
    row.path = toks[0];
    if (row.path.is_relative()) row.path = manifest_path.parent_path() / row.path;
    row.label = toks[1];
    row.subject = toks[2];
    row.group = (toks.size() >= 4 && !toks[3].empty()) ? toks[3] : toks[2];
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw DataError("data: manifest '" + manifest_path.string() + "' is empty");

  std::map<std::string, std::size_t> label_ids;
  for (const auto& row : rows) label_ids.emplace(row.label, 0);
  std::size_t next = 0;
  for (auto& [label, id] : label_ids) id = next++;

  std::vector<BoldSequence> out;
  out.reserve(rows.size());
  std::optional<std::size_t> n_rois;
  for (const auto& row : rows) {
    auto [values, dims] = detail::read_series_csv(row.path);
    const auto [t_len, n] = dims;
    if (!n_rois) n_rois = n;
    if (n != *n_rois)
      throw DataError("data: '" + row.path.string() + "' has " +
                      std::to_string(n) + " ROIs, expected " +
                      std::to_string(*n_rois));
    detail::zscore_columns(values, t_len, n);
    BoldSequence seq;
    seq.series = Tensor::from_data({t_len, n}, std::move(values));
    seq.label = label_ids.at(row.label);
    seq.subject_id = row.subject;
    seq.group_id = row.group;
    out.push_back(std::move(seq));
  }
  return out;
}

// Deterministic synthetic dataset. Per sequence: one class-frequency sinusoid
// with random phase shared across a random ROI subset, sign-symmetric brief
// transients at the class rate, Gaussian noise, then per-column z-scoring.
inline std::vector<BoldSequence> make_synthetic(const SyntheticSpec& spec,
                                                std::size_t n_per_class) {
  spec.validate();
  if (n_per_class == 0)
    throw ContractError("synthetic: n_per_class must be positive");
  const std::size_t t_len = spec.length, n = spec.n_rois;
  // The trend dominates the raw amplitude budget; transients are small but
  // sharp, so differencing exposes them while the raw view buries them.
  constexpr double kTrendAmp = 3.0;
  constexpr double kTransientAmp = 1.6;
  Rng base = Rng(spec.seed).derive("synth");
  // ROI trend polarities are a fixed property of the generated cohort, drawn
  // once per spec. Signed loadings keep the shared trend out of the cross-ROI
  // common mode, which per-token normalization would cancel.
  std::vector<double> roi_sign(n);
  {
    Rng sign_rng = Rng(spec.seed).derive("roi-signs");
    for (std::size_t c = 0; c < n; ++c)
      roi_sign[c] = sign_rng.bernoulli(0.5) ? 1.0 : -1.0;
  }
  std::vector<BoldSequence> out;
  out.reserve(spec.n_classes * n_per_class);
  for (std::size_t cls = 0; cls < spec.n_classes; ++cls) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng = base.derive("seq", cls * n_per_class + i);
      std::vector<double> x(t_len * n, 0.0);

      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::vector<bool> active(n, false);
      bool any = false;
      for (std::size_t c = 0; c < n; ++c) {
        active[c] = rng.bernoulli(0.85);
        any = any || active[c];
      }
      if (!any) active[static_cast<std::size_t>(rng.below(n))] = true;
      const double freq = spec.trend_freqs[cls];
      for (std::size_t c = 0; c < n; ++c) {
        // Off-subset ROIs keep a weak trend coupling; a pure-noise channel
        // would z-score into a spurious fast-varying unit-variance signal.
        const double coupling = active[c] ? 1.0 : 0.25;
        const double amp =
            kTrendAmp * coupling * rng.uniform(0.8, 1.2) * roi_sign[c];
        for (std::size_t t = 0; t < t_len; ++t)
          x[t * n + c] +=
              amp * std::sin(2.0 * std::numbers::pi * freq *
                                 static_cast<double>(t) /
                                 static_cast<double>(t_len) +
                             phase);
      }

      // Transients are brief sign-alternating bursts: fast microstructure
      // that rescaled tokens and first differences expose far better than a
      // token-instantaneous view does.
      const double rate = spec.transient_rate[cls];
      if (rate > 0.0) {
        for (std::size_t c = 0; c < n; ++c) {
          for (std::size_t t = 0; t < t_len; ++t) {
            if (!rng.bernoulli(rate)) continue;
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            for (std::size_t w = 0; w < spec.transient_width && t + w < t_len;
                 ++w)
              x[(t + w) * n + c] +=
                  (w % 2 == 0 ? sign : -sign) * kTransientAmp;
          }
        }
      }

      if (spec.noise_sd > 0.0)
        for (double& v : x) v += spec.noise_sd * rng.normal();

      detail::zscore_columns(x, t_len, n);
      BoldSequence seq;
      seq.series = Tensor::from_data({t_len, n}, std::move(x));
      seq.label = cls;
      seq.subject_id =
          "synth_c" + std::to_string(cls) + "_s" + std::to_string(i);
      seq.group_id = seq.subject_id;
      out.push_back(std::move(seq));
    }
  }
  return out;
}

// Contiguous training-time crop, start uniform on [0, T - crop_len]. The
// evaluation path never crops; test sequences keep their full length.
inline Tensor random_crop(const Tensor& x, std::size_t crop_len, Rng& rng) {
  const std::size_t t_len = x.rows(), n = x.cols();
  if (crop_len == 0) throw ContractError("random_crop: crop_len must be positive");
  if (crop_len > t_len)
    throw ContractError("random_crop: crop_len exceeds sequence length");
  const std::size_t start =
      static_cast<std::size_t>(rng.below(t_len - crop_len + 1));
  auto xv = x.values();
  std::vector<double> out(xv.begin() + start * n,
                          xv.begin() + (start + crop_len) * n);
  return Tensor::from_data({crop_len, n}, std::move(out));
}

namespace detail {

struct GroupInfo {
  std::string id;
  std::size_t label;
  std::vector<std::size_t> sample_indices;
};

inline std::vector<GroupInfo> collect_groups(
    const std::vector<BoldSequence>& data) {
  std::map<std::string, GroupInfo> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& g = groups[data[i].group_id];
    if (g.sample_indices.empty()) {
      g.id = data[i].group_id;
      g.label = data[i].label;
    }
    g.sample_indices.push_back(i);
  }
  std::vector<GroupInfo> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) out.push_back(std::move(g));
  return out;
}

}  // namespace detail

// Stratified-by-label, grouped-by-subject split: 20% of each class's groups
// go to test, the rest form dev; dev groups are dealt round-robin into
// n_folds validation folds per class. Group identities never straddle a
// partition boundary.
inline SplitPlan make_split(const std::vector<BoldSequence>& data,
                            double test_frac, std::size_t n_folds,
                            std::uint64_t seed) {
  if (data.empty()) throw DataError("split: dataset is empty");
  if (!(test_frac > 0.0 && test_frac < 1.0))
    throw ContractError("split: test_frac must be in (0, 1)");
  if (n_folds < 2) throw ContractError("split: n_folds must be >= 2");

  auto groups = detail::collect_groups(data);
  std::map<std::size_t, std::vector<std::size_t>> by_class;  // group indices
  for (std::size_t g = 0; g < groups.size(); ++g)
    by_class[groups[g].label].push_back(g);

  Rng rng = Rng(seed).derive("split");
  SplitPlan plan;
  plan.folds.resize(n_folds);
  std::vector<std::vector<std::size_t>> fold_val_groups(n_folds);
  std::vector<std::size_t> dev_groups;

  for (auto& [label, group_ids] : by_class) {
    rng.shuffle(group_ids);
    const std::size_t n_class = group_ids.size();
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_frac * static_cast<double>(n_class)));
    n_test = std::min(n_test, n_class - 1);
    const std::size_t n_dev = n_class - n_test;
    if (n_dev < n_folds)
      throw DataError("split: class " + std::to_string(label) + " has only " +
                      std::to_string(n_dev) +
                      " development subjects; need at least " +
                      std::to_string(n_folds) + " for " +
                      std::to_string(n_folds) + "-fold cross-validation");
    for (std::size_t i = 0; i < n_test; ++i) {
      for (std::size_t s : groups[group_ids[i]].sample_indices)
        plan.test_indices.push_back(s);
    }
    for (std::size_t i = n_test; i < n_class; ++i) {
      dev_groups.push_back(group_ids[i]);
      fold_val_groups[(i - n_test) % n_folds].push_back(group_ids[i]);
    }
  }

  for (std::size_t g : dev_groups)
    for (std::size_t s : groups[g].sample_indices)
      plan.dev_indices.push_back(s);

  for (std::size_t f = 0; f < n_folds; ++f) {
    auto& [train_idx, val_idx] = plan.folds[f];
    for (std::size_t g : dev_groups) {
      const bool in_val =
          std::find(fold_val_groups[f].begin(), fold_val_groups[f].end(), g) !=
          fold_val_groups[f].end();
      for (std::size_t s : groups[g].sample_indices)
        (in_val ? val_idx : train_idx).push_back(s);
    }
  }

  std::sort(plan.dev_indices.begin(), plan.dev_indices.end());
  std::sort(plan.test_indices.begin(), plan.test_indices.end());
  for (auto& [train_idx, val_idx] : plan.folds) {
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Flat key=value synthetic-spec files and dataset emission
// ---------------------------------------------------------------------------

// Keys: n_classes, n_rois, length, trend_freqs (comma-separated per class),
// transient_rate (comma-separated per class), transient_width, noise_sd,
// seed, and optionally n_per_class for the synth command.
inline std::map<std::string, std::string> read_kv_file(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto pos = line.find('=');
    if (pos == std::string::npos)
      throw DataError("config: expected key=value in '" + path.string() +
                      "', got '" + line + "'");
    kv[line.substr(0, pos)] = line.substr(pos + 1);
  }
  return kv;
}

inline SyntheticSpec synthetic_spec_from_entries(
    const std::map<std::string, std::string>& kv) {
  SyntheticSpec spec;
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  auto parse_list = [](const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
    return out;
  };
  if (auto v = get("n_classes")) spec.n_classes = std::stoull(*v);
  if (auto v = get("n_rois")) spec.n_rois = std::stoull(*v);
  if (auto v = get("length")) spec.length = std::stoull(*v);
  if (auto v = get("trend_freqs")) spec.trend_freqs = parse_list(*v);
  if (auto v = get("transient_rate")) spec.transient_rate = parse_list(*v);
  if (auto v = get("transient_width")) spec.transient_width = std::stoull(*v);
  if (auto v = get("noise_sd")) spec.noise_sd = std::stod(*v);
  if (auto v = get("seed")) spec.seed = std::stoull(*v);
  spec.validate();
  return spec;
}

// Writes one dataset as per-subject CSVs plus a manifest, in the exact format
// ingest_csv reads back.
inline void write_dataset_csv(const std::vector<BoldSequence>& data,
                              const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream manifest(out_dir / "manifest.csv");
  if (!manifest)
    throw DataError("data: cannot write manifest under '" + out_dir.string() +
                    "'");
  manifest << "path,label,subject_id,group_id\n";
  for (const auto& seq : data) {
    const std::string fname = seq.subject_id + ".csv";
    std::ofstream os(out_dir / fname);
    if (!os)
      throw DataError("data: cannot write series file '" + fname + "'");
    const std::size_t t_len = seq.series.rows(), n = seq.series.cols();
    char buf[64];
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t c = 0; c < n; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", seq.series.at(t, c));
        os << (c ? "," : "") << buf;
      }
      os << '\n';
    }
    manifest << fname << ',' << seq.label << ',' << seq.subject_id << ','
             << seq.group_id << '\n';
  }
}

}  // namespace neurossm
