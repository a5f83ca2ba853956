#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neurossm/common.hpp"

namespace neurossm {

struct PredictionRecord {
  std::size_t true_label = 0;
  std::vector<double> probs;
};

// Per-split evaluation. Metrics are recomputable from per_sample alone; auc
// is absent (not zero) when the split contains a single class.
struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> auc;
  std::vector<PredictionRecord> per_sample;
  std::uint64_t seed = 0;
  std::string split;
};

namespace metrics {

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties resolve to the lowest index
  return best;
}

inline double accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ContractError("accuracy: no samples");
  std::size_t correct = 0;
  for (const auto& r : records)
    if (argmax(r.probs) == r.true_label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

// Unweighted mean of per-class F1. A class with no true and no predicted
// positives contributes zero.
inline double macro_f1(std::span<const PredictionRecord> records,
                       std::size_t n_classes) {
  if (records.empty()) throw ContractError("macro_f1: no samples");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0),
      fn(n_classes, 0);
  for (const auto& r : records) {
    const std::size_t pred = argmax(r.probs);
    if (pred == r.true_label) {
      ++tp[r.true_label];
    } else {
      ++fp[pred];
      ++fn[r.true_label];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double denom =
        static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    total += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  return total / static_cast<double>(n_classes);
}

// Rank-statistic AUC for binary scores with midranks on ties:
// AUC = (R_pos - P(P+1)/2) / (P*Q).
inline std::optional<double> binary_auc(std::span<const double> scores,
                                        std::span<const std::uint8_t> positives) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t p = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (positives[k]) {
      rank_sum += rank[k];
      ++p;
    }
  }
  const std::size_t q = n - p;
  if (p == 0 || q == 0) return std::nullopt;
  return (rank_sum - 0.5 * static_cast<double>(p) *
                         static_cast<double>(p + 1)) /
         (static_cast<double>(p) * static_cast<double>(q));
}

// Binary: AUC of the positive-class score. Multiclass: macro one-vs-rest,
// skipping classes absent from the truth.
inline std::optional<double> auc(std::span<const PredictionRecord> records,
                                 std::size_t n_classes) {
  if (records.empty()) throw ContractError("auc: no samples");
  if (n_classes == 2) {
    std::vector<double> scores;
    std::vector<std::uint8_t> positives;
    for (const auto& r : records) {
      scores.push_back(r.probs[1]);
      positives.push_back(r.true_label == 1 ? 1 : 0);
    }
    return binary_auc(scores, positives);
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> scores;
    std::vector<std::uint8_t> positives;
    for (const auto& r : records) {
      scores.push_back(r.probs[c]);
      positives.push_back(r.true_label == c ? 1 : 0);
    }
    if (auto one = binary_auc(scores, positives)) {
      total += *one;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  return total / static_cast<double>(counted);
}

}  // namespace metrics

inline EvalReport make_report(std::vector<PredictionRecord> per_sample,
                              std::size_t n_classes, std::uint64_t seed,
                              std::string split) {
  EvalReport report;
  report.accuracy = metrics::accuracy(per_sample);
  report.macro_f1 = metrics::macro_f1(per_sample, n_classes);
  report.auc = metrics::auc(per_sample, n_classes);
  report.per_sample = std::move(per_sample);
  report.seed = seed;
  report.split = std::move(split);
  return report;
}

// Two-sided Wilcoxon signed-rank test with midranks. Exact tail probabilities
// (dynamic program over doubled ranks) for n <= 20, normal approximation with
// continuity and tie corrections above. Returns (W+, p). Zero differences are
// dropped first; if none remain the test is vacuous and p = 1.
inline std::pair<double, double> wilcoxon_signed_rank(
    std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("wilcoxon: inputs must have equal length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n == 0) {
    std::fprintf(stderr,
                 "wilcoxon: all differences are zero; p-value is vacuous\n");
    return {0.0, 1.0};
  }
  if (n < 5)
    throw ContractError(
        "wilcoxon: need at least 5 non-zero differences, have " +
        std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });
  std::vector<double> rank(n, 0.0);
  std::vector<std::size_t> tie_sizes;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
      ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }

  double w_plus = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (diffs[k] > 0.0) w_plus += rank[k];

  double p;
  if (n <= 20) {
    // Midranks are multiples of 1/2, so doubled ranks are exact integers.
    std::vector<std::uint64_t> doubled(n);
    std::uint64_t total2 = 0;
    for (std::size_t k = 0; k < n; ++k) {
      doubled[k] = static_cast<std::uint64_t>(std::llround(2.0 * rank[k]));
      total2 += doubled[k];
    }
    std::vector<double> count(total2 + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t s = total2 + 1; s-- > doubled[k];)
        count[s] += count[s - doubled[k]];
    }
    const double scale = std::ldexp(1.0, -static_cast<int>(n));  // 2^-n
    const std::uint64_t w2 =
        static_cast<std::uint64_t>(std::llround(2.0 * w_plus));
    double p_le = 0.0, p_ge = 0.0;
    for (std::size_t s = 0; s <= total2; ++s) {
      if (s <= w2) p_le += count[s];
      if (s >= w2) p_ge += count[s];
    }
    p = std::min(1.0, 2.0 * std::min(p_le, p_ge) * scale);
  } else {
    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    double tie_term = 0.0;
    for (std::size_t t : tie_sizes) {
      const double td = static_cast<double>(t);
      tie_term += td * td * td - td;
    }
    const double sigma2 =
        nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double sigma = std::sqrt(sigma2);
    double z = w_plus - mu;
    z -= 0.5 * (z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0));  // continuity
    z /= sigma;
    p = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return {w_plus, p};
}

}  // namespace neurossm
