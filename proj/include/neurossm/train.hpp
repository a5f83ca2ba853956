#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "neurossm/common.hpp"
#include "neurossm/data.hpp"
#include "neurossm/metrics.hpp"
#include "neurossm/model.hpp"
#include "neurossm/rng.hpp"
#include "neurossm/tensor.hpp"

namespace neurossm {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 5e-4;  // the reference protocol never states a rate for this
                     // model; this default matches the closest raw-signal
                     // baseline and is exposed as a flag
  double weight_decay = 4e-5;
  std::optional<std::size_t> crop_len;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool decoupled_weight_decay = true;
  std::size_t threads = 1;  // parallelism across independent runs only
};

// Mean over the batch of -log softmax(logits)[label], log-sum-exp stabilized.
// Gradient is (softmax - onehot) / batch.
inline Tensor cross_entropy(const Tensor& logits,
                            std::span<const std::size_t> labels) {
  if (logits.ndim() != 2)
    throw ShapeError("cross_entropy: expects [batch x classes] logits");
  const std::size_t batch = logits.rows(), n_classes = logits.cols();
  if (labels.size() != batch)
    throw ShapeError("cross_entropy: one label per logits row required");
  for (std::size_t lbl : labels)
    if (lbl >= n_classes)
      throw ContractError("cross_entropy: label " + std::to_string(lbl) +
                          " out of range for " + std::to_string(n_classes) +
                          " classes");
  auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(batch * n_classes);
  auto labels_copy =
      std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = lv.data() + i * n_classes;
    double max_logit = row[0];
    for (std::size_t c = 1; c < n_classes; ++c)
      max_logit = std::max(max_logit, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c)
      denom += std::exp(row[c] - max_logit);
    const double lse = max_logit + std::log(denom);
    for (std::size_t c = 0; c < n_classes; ++c)
      (*probs)[i * n_classes + c] = std::exp(row[c] - lse);
    loss += lse - row[labels[i]];
  }
  loss /= static_cast<double>(batch);
  return autodiff::make_op(
      {1}, {loss}, {logits},
      [batch, n_classes, probs, labels_copy](detail::TensorImpl& self) {
        auto& pl = *self.parents[0];
        const double g = self.grad[0] / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t c = 0; c < n_classes; ++c) {
            const double one_hot = c == (*labels_copy)[i] ? 1.0 : 0.0;
            pl.grad[i * n_classes + c] +=
                g * ((*probs)[i * n_classes + c] - one_hot);
          }
        }
      },
      "cross_entropy");
}

// Adam with bias correction. Weight decay is decoupled by default: applied
// directly to the parameters before the moment update, never through the
// gradients; a flag switches to coupled L2.
struct AdamState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;
  std::uint64_t step = 0;
};

inline void adam_step(AdamState& state, std::span<NamedParam> params,
                      const TrainConfig& cfg) {
  if (state.slots.empty()) {
    state.slots.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t n = params[i].tensor.numel();
      state.slots[i].m.assign(n, 0.0);
      state.slots[i].v.assign(n, 0.0);
    }
  }
  if (state.slots.size() != params.size())
    throw ContractError("adam: state does not match the parameter list");
  state.step += 1;
  const double bc1 =
      1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 =
      1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    auto theta = t.raw_values();
    auto& slot = state.slots[i];
    if (slot.m.size() != theta.size())
      throw ContractError("adam: moment buffers do not match '" +
                          params[i].name + "'");
    const bool has_grad = t.has_grad();
    auto grad = t.grad();
    if (cfg.decoupled_weight_decay && cfg.weight_decay != 0.0) {
      const double shrink = 1.0 - cfg.lr * cfg.weight_decay;
      for (double& v : theta) v *= shrink;
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double g = has_grad ? grad[j] : 0.0;
      if (!cfg.decoupled_weight_decay) g += cfg.weight_decay * theta[j];
      slot.m[j] = cfg.adam_beta1 * slot.m[j] + (1.0 - cfg.adam_beta1) * g;
      slot.v[j] = cfg.adam_beta2 * slot.v[j] + (1.0 - cfg.adam_beta2) * g * g;
      const double m_hat = slot.m[j] / bc1;
      const double v_hat = slot.v[j] / bc2;
      theta[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
    t.zero_grad();
  }
}

struct TrainResult {
  std::vector<double> loss_trace;  // one entry per optimizer step
};

// Epochs of shuffled mini-batches with optional per-sample random cropping.
// Shuffle and crop randomness run on separate named streams keyed by epoch,
// so their draw counts do not interact. Aborts on non-finite loss.
inline TrainResult train(NeuroSsmModel& model,
                         const std::vector<BoldSequence>& data,
                         std::span<const std::size_t> indices,
                         const TrainConfig& cfg) {
  if (indices.empty()) throw DataError("train: no training samples");
  if (cfg.epochs == 0 || cfg.batch_size == 0)
    throw ContractError("train: epochs and batch_size must be positive");

  auto params = model.named_parameters();
  AdamState state;
  TrainResult result;
  const Rng base(cfg.seed);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = base.derive("shuffle", epoch);
    Rng crop_rng = base.derive("crop", epoch);
    std::vector<std::size_t> order(indices.begin(), indices.end());
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<Tensor> logit_rows;
      std::vector<std::size_t> labels;
      logit_rows.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const BoldSequence& sample = data[order[k]];
        Tensor x = sample.series;
        if (cfg.crop_len && *cfg.crop_len < x.rows())
          x = random_crop(x, *cfg.crop_len, crop_rng);
        logit_rows.push_back(model.forward(x));
        labels.push_back(sample.label);
      }
      Tensor loss = cross_entropy(stack_rows(logit_rows), labels);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw DivergenceError("train: non-finite loss at epoch " +
                              std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start));
      result.loss_trace.push_back(loss_value);
      backward(loss);
      adam_step(state, params, cfg);
    }
  }
  return result;
}

// Full-length evaluation (never crops).
inline EvalReport evaluate(const NeuroSsmModel& model,
                           const std::vector<BoldSequence>& data,
                           std::span<const std::size_t> indices,
                           std::uint64_t seed, std::string split) {
  if (indices.empty()) throw DataError("evaluate: no samples");
  std::vector<PredictionRecord> records;
  records.reserve(indices.size());
  for (std::size_t idx : indices) {
    PredictionRecord rec;
    rec.true_label = data[idx].label;
    const Tensor probs = model.predict_proba(data[idx].series);
    rec.probs.assign(probs.values().begin(), probs.values().end());
    records.push_back(std::move(rec));
  }
  return make_report(std::move(records), model.config().n_classes, seed,
                     std::move(split));
}

// One protocol run row; the report writers consume these directly.
struct RunRecord {
  std::string variant;
  std::size_t fraction = 100;  // percent of development subjects used
  std::uint64_t seed = 0;
  std::string split;
  EvalReport report;
};

namespace detail {

// Runs tasks over a small worker pool. Ambient checked/grad modes propagate
// into the workers; results land in caller-owned slots so aggregation order
// is fixed regardless of scheduling.
inline void run_parallel(std::size_t n_tasks, std::size_t n_threads,
                         const std::function<void(std::size_t)>& task) {
  n_threads = std::max<std::size_t>(1, std::min(n_threads, n_tasks));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  const bool checked = checked_mode();
  const bool grads = grad_mode();
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    checked_mode() = checked;
    grad_mode() = grads;
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) break;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index) {
  return Rng(seed).derive(name, index).root();
}

// Train a fresh model and evaluate it on one index set.
inline EvalReport run_cell(const ModelConfig& model_cfg,
                           const TrainConfig& train_cfg,
                           const std::vector<BoldSequence>& data,
                           std::span<const std::size_t> train_idx,
                           std::span<const std::size_t> eval_idx,
                           std::uint64_t cell_seed, const std::string& split) {
  ModelConfig mc = model_cfg;
  mc.seed = derive_seed(cell_seed, "model", 0);
  TrainConfig tc = train_cfg;
  tc.seed = derive_seed(cell_seed, "train", 0);
  NeuroSsmModel model = NeuroSsmModel::init(mc);
  train(model, data, train_idx, tc);
  return evaluate(model, data, eval_idx, cell_seed, split);
}

}  // namespace detail

struct CrossvalResult {
  std::vector<RunRecord> records;  // per-candidate fold rows plus final test
  std::size_t selected_candidate = 0;
  ModelConfig selected_config;
  EvalReport test_report;
};

// 5-fold group cross-validation over the development split, selection by mean
// validation accuracy (ties break toward the smaller model, then the earlier
// candidate), one final retrain on full dev and a single test evaluation.
inline CrossvalResult crossval(const std::vector<BoldSequence>& data,
                               const std::vector<ModelConfig>& candidates,
                               const TrainConfig& train_cfg,
                               double test_frac = 0.2,
                               std::size_t n_folds = 5) {
  if (candidates.empty()) throw ContractError("crossval: no candidates");
  const SplitPlan plan =
      make_split(data, test_frac, n_folds, train_cfg.seed);

  struct Cell {
    std::size_t candidate, fold;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < candidates.size(); ++c)
    for (std::size_t f = 0; f < n_folds; ++f) cells.push_back({c, f});
  std::vector<EvalReport> reports(cells.size());

  detail::run_parallel(
      cells.size(), train_cfg.threads, [&](std::size_t i) {
        const auto [c, f] = cells[i];
        const std::uint64_t cell_seed = detail::derive_seed(
            train_cfg.seed, "crossval", c * 1000 + f);
        reports[i] = detail::run_cell(candidates[c], train_cfg, data,
                                      plan.folds[f].first,
                                      plan.folds[f].second, cell_seed, "val");
      });

  CrossvalResult result;
  std::vector<double> mean_val_acc(candidates.size(), 0.0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [c, f] = cells[i];
    mean_val_acc[c] += reports[i].accuracy / static_cast<double>(n_folds);
    result.records.push_back({"candidate" + std::to_string(c) + ".fold" +
                                  std::to_string(f),
                              100, reports[i].seed, "val", reports[i]});
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const double diff = mean_val_acc[c] - mean_val_acc[best];
    if (diff > 0.0 ||
        (diff == 0.0 && param_count(candidates[c]) < param_count(candidates[best])))
      best = c;
  }
  result.selected_candidate = best;
  result.selected_config = candidates[best];

  const std::uint64_t final_seed =
      detail::derive_seed(train_cfg.seed, "crossval-final", best);
  result.test_report =
      detail::run_cell(candidates[best], train_cfg, data, plan.dev_indices,
                       plan.test_indices, final_seed, "test");
  result.records.push_back({"candidate" + std::to_string(best) + ".final", 100,
                            final_seed, "test", result.test_report});
  return result;
}

// Training indices for one learning-curve cell: subject-level subsampling of
// the development set, stratified by class. Nested by construction: for a
// fixed seed index, every class uses one shuffled order and a larger fraction
// only extends the prefix, so the 5% subset is contained in the 10% subset.
inline std::vector<std::size_t> curve_subset_indices(
    const std::vector<BoldSequence>& data, const SplitPlan& plan,
    std::size_t fraction, std::size_t seed_idx, std::uint64_t seed) {
  auto groups = detail::collect_groups(data);
  std::map<std::size_t, std::vector<std::size_t>> dev_by_class;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const bool in_dev =
        std::binary_search(plan.dev_indices.begin(), plan.dev_indices.end(),
                           groups[g].sample_indices.front());
    if (in_dev) dev_by_class[groups[g].label].push_back(g);
  }
  std::vector<std::size_t> train_idx;
  for (const auto& [label, class_groups] : dev_by_class) {
    std::vector<std::size_t> order = class_groups;
    Rng(seed).derive("subsample", seed_idx * 10007 + label).shuffle(order);
    const std::size_t n_take = static_cast<std::size_t>(
        std::llround(static_cast<double>(fraction) / 100.0 *
                     static_cast<double>(order.size())));
    if (n_take == 0)
      throw DataError("learning_curve: fraction " + std::to_string(fraction) +
                      "% leaves class " + std::to_string(label) +
                      " without subjects");
    for (std::size_t k = 0; k < n_take; ++k)
      for (std::size_t idx : groups[order[k]].sample_indices)
        train_idx.push_back(idx);
  }
  std::sort(train_idx.begin(), train_idx.end());
  return train_idx;
}

// Learning curve: the test set stays fixed and every cell retrains from
// scratch on its subject subset.
inline std::vector<RunRecord> learning_curve(
    const std::vector<BoldSequence>& data, const ModelConfig& model_cfg,
    const TrainConfig& train_cfg,
    const std::vector<std::size_t>& fractions = {5, 10, 20, 50, 100},
    std::size_t n_seeds = 5) {
  if (fractions.empty()) throw ContractError("learning_curve: no fractions");
  const SplitPlan plan = make_split(data, 0.2, 5, train_cfg.seed);

  struct Cell {
    std::size_t fraction_idx, seed_idx;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < n_seeds; ++s)
    for (std::size_t fi = 0; fi < fractions.size(); ++fi)
      cells.push_back({fi, s});
  std::vector<RunRecord> records(cells.size());

  detail::run_parallel(cells.size(), train_cfg.threads, [&](std::size_t i) {
    const auto [fi, s] = cells[i];
    const std::size_t fraction = fractions[fi];
    const auto train_idx =
        curve_subset_indices(data, plan, fraction, s, train_cfg.seed);
    const std::uint64_t cell_seed =
        detail::derive_seed(train_cfg.seed, "curve", s * 1000 + fraction);
    EvalReport report = detail::run_cell(model_cfg, train_cfg, data, train_idx,
                                         plan.test_indices, cell_seed, "test");
    records[i] = {"curve", fraction, static_cast<std::uint64_t>(s), "test",
                  std::move(report)};
  });
  return records;
}

struct GridVariant {
  std::string name;
  ModelConfig config;
};

// The nine ablation rows: the four multiscale/differential combinations and
// the five tau-set sweeps. The full model appears in both families and is
// reported in both, matching the published table structure.
inline std::vector<GridVariant> ablation_variants(const ModelConfig& base) {
  std::vector<GridVariant> variants;
  auto with = [&](bool multiscale, bool differential,
                  std::vector<std::size_t> taus) {
    ModelConfig cfg = base;
    cfg.enable_multiscale = multiscale;
    cfg.enable_differential = differential;
    cfg.tau_set = std::move(taus);
    return cfg;
  };
  variants.push_back({"table2_M0_D0", with(false, false, {1})});
  variants.push_back({"table2_M1_D0", with(true, false, base.tau_set)});
  variants.push_back({"table2_M0_D1", with(false, true, {1})});
  variants.push_back({"table2_M1_D1", with(true, true, base.tau_set)});
  for (std::size_t max_tau = 1; max_tau <= 5; ++max_tau) {
    std::vector<std::size_t> taus;
    for (std::size_t t = 1; t <= max_tau; ++t) taus.push_back(t);
    std::string name = "tau";
    for (std::size_t t : taus) name += "_" + std::to_string(t);
    variants.push_back({std::move(name), with(true, true, std::move(taus))});
  }
  return variants;
}

// Runs every variant for n_seeds seeds: train on dev, evaluate once on test,
// split fixed across the whole grid.
inline std::vector<RunRecord> ablation_grid(
    const std::vector<BoldSequence>& data, const ModelConfig& base_cfg,
    const TrainConfig& train_cfg, std::size_t n_seeds = 5) {
  const auto variants = ablation_variants(base_cfg);
  const SplitPlan plan = make_split(data, 0.2, 5, train_cfg.seed);

  struct Cell {
    std::size_t variant, seed;
  };
  std::vector<Cell> cells;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::size_t s = 0; s < n_seeds; ++s) cells.push_back({v, s});
  std::vector<RunRecord> records(cells.size());

  detail::run_parallel(cells.size(), train_cfg.threads, [&](std::size_t i) {
    const auto [v, s] = cells[i];
    const std::uint64_t cell_seed =
        detail::derive_seed(train_cfg.seed, "ablate", v * 1000 + s);
    EvalReport report =
        detail::run_cell(variants[v].config, train_cfg, data,
                         plan.dev_indices, plan.test_indices, cell_seed,
                         "test");
    records[i] = {variants[v].name, 100, static_cast<std::uint64_t>(s), "test",
                  std::move(report)};
  });
  return records;
}

}  // namespace neurossm
