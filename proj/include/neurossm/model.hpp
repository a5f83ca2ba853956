#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "neurossm/block.hpp"
#include "neurossm/common.hpp"
#include "neurossm/rng.hpp"
#include "neurossm/ssm.hpp"
#include "neurossm/tensor.hpp"

namespace neurossm {

struct ModelConfig {
  std::size_t n_rois = 0;
  std::size_t n_classes = 2;
  std::size_t num_layers = 1;
  std::vector<std::size_t> tau_set{1, 2, 3};
  std::size_t d_state = 2;
  std::size_t d_conv = 1;
  std::size_t expand = 3;
  bool share_kernel = true;
  bool enable_multiscale = true;
  bool enable_differential = true;
  double eps = 1e-5;
  std::uint64_t seed = 0;

  // Disabling the multiscale stream collapses the bank to the single tau=1
  // scale; disabling the differential stream drops the V path entirely.
  std::vector<std::size_t> effective_tau_set() const {
    if (!enable_multiscale) return {1};
    return tau_set;
  }

  std::size_t max_tau() const {
    std::size_t m = 1;
    for (std::size_t t : effective_tau_set()) m = std::max(m, t);
    return m;
  }

  void validate() const {
    if (n_rois == 0) throw ContractError("config: n_rois must be positive");
    if (n_classes < 2) throw ContractError("config: n_classes must be >= 2");
    if (num_layers == 0)
      throw ContractError("config: num_layers must be positive");
    if (tau_set.empty())
      throw ContractError("config: tau_set must be non-empty");
    for (std::size_t i = 0; i < tau_set.size(); ++i) {
      if (tau_set[i] == 0)
        throw ContractError("config: tau values must be positive");
      if (i > 0 && tau_set[i] <= tau_set[i - 1])
        throw ContractError("config: tau_set must be strictly increasing");
    }
    if (d_state == 0 || d_conv == 0 || expand == 0)
      throw ContractError("config: d_state, d_conv, expand must be positive");
    if (eps <= 0.0) throw ContractError("config: eps must be positive");
  }
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

namespace detail {

struct LayerParams {
  Tensor ln_in_gain, ln_in_bias;
  Tensor ln_out_gain, ln_out_bias;
  std::vector<MsdSsbParams> blocks;  // one per scale
};

inline void collect_linear(std::vector<NamedParam>& out, const std::string& prefix,
                           const LinearMap& map) {
  out.push_back({prefix + ".weight", map.weight});
  if (map.bias.defined()) out.push_back({prefix + ".bias", map.bias});
}

inline void collect_kernel(std::vector<NamedParam>& out,
                           const std::string& prefix,
                           const SsmKernelParams& k) {
  out.push_back({prefix + ".raw_lambda", k.raw_lambda});
  collect_linear(out, prefix + ".w_delta", k.w_delta);
  collect_linear(out, prefix + ".w_beta", k.w_beta);
  collect_linear(out, prefix + ".w_gamma", k.w_gamma);
  collect_linear(out, prefix + ".w_z", k.w_z);
  collect_linear(out, prefix + ".w_out", k.w_out);
}

}  // namespace detail

// Full classifier: input LN, bank of multiscale differential blocks summed
// across scales, output LN + GELU, repeated num_layers times, then temporal
// mean pooling and a linear head.
class NeuroSsmModel {
 public:
  static NeuroSsmModel init(const ModelConfig& cfg) {
    cfg.validate();
    NeuroSsmModel model;
    model.cfg_ = cfg;
    Rng rng = Rng(cfg.seed).derive("init");
    const std::size_t n = cfg.n_rois;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      detail::LayerParams layer;
      layer.ln_in_gain = Tensor::ones({n}).set_requires_grad(true);
      layer.ln_in_bias = Tensor::zeros({n}).set_requires_grad(true);
      layer.ln_out_gain = Tensor::ones({n}).set_requires_grad(true);
      layer.ln_out_bias = Tensor::zeros({n}).set_requires_grad(true);
      for (std::size_t tau : cfg.effective_tau_set()) {
        ScaleConfig sc;
        sc.tau = tau;
        sc.n_rois = n;
        sc.expand = cfg.expand;
        sc.d_conv = cfg.d_conv;
        sc.d_state = cfg.d_state;
        sc.share_kernel = cfg.share_kernel;
        layer.blocks.push_back(
            MsdSsbParams::init(sc, cfg.enable_differential, rng));
      }
      model.layers_.push_back(std::move(layer));
    }
    model.head_ = init::linear(n, cfg.n_classes, true, rng);
    return model;
  }

  const ModelConfig& config() const { return cfg_; }

  // Logits for one sequence. Input rows are expected to be z-scored (not
  // enforced). Requires T >= max tau.
  Tensor forward(const Tensor& x) const {
    if (x.ndim() != 2 || x.cols() != cfg_.n_rois)
      throw ShapeError("forward: expected a [T x n_rois] input");
    if (x.rows() < cfg_.max_tau())
      throw ContractError("forward: sequence shorter than the largest tau");
    Tensor b = x;
    for (const auto& layer : layers_) {
      Tensor normed =
          layer_norm(b, layer.ln_in_gain, layer.ln_in_bias, cfg_.eps);
      Tensor z;
      for (const auto& block : layer.blocks) {
        Tensor zk = msd_ssb_forward(block, normed);
        z = z.defined() ? add(z, zk) : zk;
      }
      b = gelu(layer_norm(z, layer.ln_out_gain, layer.ln_out_bias, cfg_.eps));
    }
    Tensor pooled = mean_rows(b);
    return apply(head_, pooled);
  }

  // Class probabilities via max-subtracted softmax. Evaluation-only value
  // path; no graph is recorded.
  Tensor predict_proba(const Tensor& x) const {
    NoGradGuard no_grad;
    Tensor logits = forward(x);
    return softmax_vec(logits);
  }

  static Tensor softmax_vec(const Tensor& logits) {
    auto lv = logits.values();
    double max_logit = lv[0];
    for (double v : lv) max_logit = std::max(max_logit, v);
    std::vector<double> p(lv.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
      p[i] = std::exp(lv[i] - max_logit);
      denom += p[i];
    }
    for (double& v : p) v /= denom;
    return Tensor::from_data({lv.size()}, std::move(p));
  }

  // Unique learnable tensors in deterministic traversal order. Shared dual-
  // stream kernels appear once, under a ".kernel" prefix.
  std::vector<NamedParam> named_parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const std::string lp = "layer" + std::to_string(l);
      out.push_back({lp + ".ln_in.gain", layer.ln_in_gain});
      out.push_back({lp + ".ln_in.bias", layer.ln_in_bias});
      for (const auto& block : layer.blocks) {
        const std::string bp =
            lp + ".tau" + std::to_string(block.cfg.tau);
        detail::collect_linear(out, bp + ".rescaled.proj.value",
                               block.proj_rescaled.value);
        detail::collect_linear(out, bp + ".rescaled.proj.gate",
                               block.proj_rescaled.gate);
        out.push_back({bp + ".rescaled.conv", block.conv_rescaled});
        if (block.differential) {
          detail::collect_linear(out, bp + ".diff.proj.value",
                                 block.proj_diff.value);
          detail::collect_linear(out, bp + ".diff.proj.gate",
                                 block.proj_diff.gate);
          out.push_back({bp + ".diff.conv", block.conv_diff});
        }
        const bool shared =
            block.differential && block.cfg.share_kernel;
        if (shared) {
          detail::collect_kernel(out, bp + ".kernel", block.kernel_rescaled);
        } else {
          detail::collect_kernel(out, bp + ".kernel_rescaled",
                                 block.kernel_rescaled);
          if (block.differential)
            detail::collect_kernel(out, bp + ".kernel_diff",
                                   block.kernel_diff);
        }
      }
      out.push_back({lp + ".ln_out.gain", layer.ln_out_gain});
      out.push_back({lp + ".ln_out.bias", layer.ln_out_bias});
    }
    detail::collect_linear(out, "head", head_);
    return out;
  }

  // Walker-based parameter count (sums unique tensor sizes).
  std::size_t parameter_count() const {
    std::size_t total = 0;
    std::unordered_set<const void*> seen;
    for (const auto& p : named_parameters())
      if (seen.insert(p.tensor.impl().get()).second) total += p.tensor.numel();
    return total;
  }

  std::vector<detail::LayerParams>& layers() { return layers_; }
  const std::vector<detail::LayerParams>& layers() const { return layers_; }
  LinearMap& head() { return head_; }
  const LinearMap& head() const { return head_; }

 private:
  ModelConfig cfg_;
  std::vector<detail::LayerParams> layers_;
  LinearMap head_;
};

// Closed-form learnable-scalar count. Per layer and scale with d_k = tau*N,
// d_i = expand*d_k, S = d_state, W = d_conv, streams = 1 or 2:
//   projections: streams * 2 * (d_k*d_i + d_i)
//   convolution: streams * d_i*W
//   kernel (x1 shared, x2 otherwise):
//     d_i*S (raw_lambda) + d_i^2 + d_i (w_delta) + 2*d_i*S (w_beta, w_gamma)
//     + d_i^2 (w_z) + d_i*d_k (w_out)
// plus 4N per layer for the two norms, and N*C + C for the head.
inline std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_rois;
  const std::size_t streams = cfg.enable_differential ? 2 : 1;
  std::size_t per_layer = 4 * n;
  for (std::size_t tau : cfg.effective_tau_set()) {
    const std::size_t d_k = tau * n;
    const std::size_t d_i = cfg.expand * d_k;
    const std::size_t s = cfg.d_state;
    per_layer += streams * 2 * (d_k * d_i + d_i);
    per_layer += streams * d_i * cfg.d_conv;
    const std::size_t kernel = d_i * s + (d_i * d_i + d_i) + 2 * d_i * s +
                               d_i * d_i + d_i * d_k;
    const std::size_t kernel_copies =
        (cfg.enable_differential && !cfg.share_kernel) ? 2 : 1;
    per_layer += kernel_copies * kernel;
  }
  return cfg.num_layers * per_layer + n * cfg.n_classes + cfg.n_classes;
}

}  // namespace neurossm
