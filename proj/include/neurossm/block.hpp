#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "neurossm/common.hpp"
#include "neurossm/rng.hpp"
#include "neurossm/ssm.hpp"
#include "neurossm/tensor.hpp"

namespace neurossm {

// Per-scale geometry: a step size tau groups tau consecutive tokens into one
// wider token of width d_k = tau * n_rois, expanded to d_inner inside the
// block.
struct ScaleConfig {
  std::size_t tau = 1;
  std::size_t n_rois = 0;
  std::size_t expand = 3;
  std::size_t d_conv = 1;
  std::size_t d_state = 2;
  bool share_kernel = true;

  std::size_t d_k() const { return tau * n_rois; }
  std::size_t d_inner() const { return expand * d_k(); }
};

// Gated linear projection (value and gate affine pairs, d_k -> d_inner).
struct GatedProjection {
  LinearMap value;
  LinearMap gate;
};

inline Tensor gated_project(const GatedProjection& proj, const Tensor& r) {
  return mul(apply(proj.value, r), silu(apply(proj.gate, r)));
}

// Groups every tau consecutive tokens into one token: [T × N] becomes
// [floor(T/tau) × tau*N]; the trailing T mod tau tokens are dropped. With
// row-major storage the grouping is exactly a truncate-and-reshape.
inline Tensor rescale(const Tensor& x, std::size_t tau) {
  if (x.ndim() != 2) throw ShapeError("rescale: expects 2-D input");
  if (tau == 0) throw ContractError("rescale: tau must be positive");
  const std::size_t t_len = x.rows(), n = x.cols();
  if (t_len < tau)
    throw ContractError("rescale: sequence length " + std::to_string(t_len) +
                        " is shorter than tau " + std::to_string(tau));
  const std::size_t t_out = t_len / tau;
  Tensor kept = (t_out * tau == t_len) ? x : take_rows(x, t_out * tau);
  return reshape(kept, {t_out, tau * n});
}

// First-order backward difference with a zero first row.
inline Tensor difference(const Tensor& xk) {
  if (xk.ndim() != 2) throw ShapeError("difference: expects 2-D input");
  const std::size_t t_len = xk.rows(), d = xk.cols();
  auto xv = xk.values();
  std::vector<double> out(t_len * d, 0.0);
  for (std::size_t t = 1; t < t_len; ++t)
    for (std::size_t c = 0; c < d; ++c)
      out[t * d + c] = xv[t * d + c] - xv[(t - 1) * d + c];
  return autodiff::make_op(
      xk.shape(), std::move(out), {xk},
      [t_len, d](detail::TensorImpl& self) {
        auto& p = *self.parents[0];
        const double* g = self.grad.data();
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            if (t >= 1) acc += g[t * d + c];
            if (t + 1 < t_len) acc -= g[(t + 1) * d + c];
            p.grad[t * d + c] += acc;
          }
        }
      },
      "difference");
}

// Depthwise causal 1-D convolution with left zero padding of d_conv - 1.
// kernel is [d_inner × d_conv]; tap d_conv-1 multiplies the current token.
inline Tensor depthwise_conv(const Tensor& kernel, const Tensor& x) {
  if (kernel.ndim() != 2 || x.ndim() != 2)
    throw ShapeError("depthwise_conv: expects 2-D kernel and input");
  const std::size_t d = x.cols(), width = kernel.cols(), t_len = x.rows();
  if (kernel.rows() != d)
    throw ShapeError("depthwise_conv: kernel channels must match input width");
  if (width == 0) throw ContractError("depthwise_conv: d_conv must be >= 1");
  auto kv = kernel.values();
  auto xv = x.values();
  std::vector<double> out(t_len * d, 0.0);
  {
    detail::ProjTimer timer(static_cast<std::uint64_t>(t_len) * d * width);
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          const std::ptrdiff_t src =
              static_cast<std::ptrdiff_t>(t) -
              static_cast<std::ptrdiff_t>(width - 1 - j);
          if (src >= 0)
            acc += kv[c * width + j] * xv[static_cast<std::size_t>(src) * d + c];
        }
        out[t * d + c] = acc;
      }
    }
  }
  return autodiff::make_op(
      x.shape(), std::move(out), {kernel, x},
      [t_len, d, width](detail::TensorImpl& self) {
        auto& pk = *self.parents[0];
        auto& px = *self.parents[1];
        const double* g = self.grad.data();
        detail::ProjTimer timer(2ULL * t_len * d * width);
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t c = 0; c < d; ++c) {
            const double g_tc = g[t * d + c];
            for (std::size_t j = 0; j < width; ++j) {
              const std::ptrdiff_t src =
                  static_cast<std::ptrdiff_t>(t) -
                  static_cast<std::ptrdiff_t>(width - 1 - j);
              if (src < 0) continue;
              const std::size_t si = static_cast<std::size_t>(src) * d + c;
              pk.grad[c * width + j] += g_tc * px.data[si];
              px.grad[si] += g_tc * pk.data[c * width + j];
            }
          }
        }
      },
      "depthwise_conv");
}

// Learnable state of one multiscale differential block. Projections and
// convolutions are stream-specific; the SSM kernel is shared between the two
// streams when share_kernel is set (same tensor handles, one grad buffer).
struct MsdSsbParams {
  ScaleConfig cfg;
  bool differential = true;
  GatedProjection proj_rescaled;
  GatedProjection proj_diff;
  Tensor conv_rescaled;  // [d_inner × d_conv]
  Tensor conv_diff;
  SsmKernelParams kernel_rescaled;
  SsmKernelParams kernel_diff;

  static MsdSsbParams init(const ScaleConfig& cfg, bool differential,
                           Rng& rng) {
    MsdSsbParams p;
    p.cfg = cfg;
    p.differential = differential;
    const std::size_t d_k = cfg.d_k(), d_inner = cfg.d_inner();
    p.proj_rescaled.value = init::linear(d_k, d_inner, true, rng);
    p.proj_rescaled.gate = init::linear(d_k, d_inner, true, rng);
    p.conv_rescaled = init_conv(d_inner, cfg.d_conv, rng);
    p.kernel_rescaled =
        SsmKernelParams::init(d_inner, cfg.d_state, d_k, rng);
    if (differential) {
      p.proj_diff.value = init::linear(d_k, d_inner, true, rng);
      p.proj_diff.gate = init::linear(d_k, d_inner, true, rng);
      p.conv_diff = init_conv(d_inner, cfg.d_conv, rng);
      p.kernel_diff = cfg.share_kernel
                          ? p.kernel_rescaled
                          : SsmKernelParams::init(d_inner, cfg.d_state, d_k,
                                                  rng);
    }
    return p;
  }

 private:
  static Tensor init_conv(std::size_t d_inner, std::size_t d_conv, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_conv));
    std::vector<double> k(d_inner * d_conv);
    for (double& v : k) v = rng.uniform(-bound, bound);
    return Tensor::from_data({d_inner, d_conv}, std::move(k))
        .set_requires_grad(true);
  }
};

// One scale of the block: rescale, dual-stream projection/convolution/SSM,
// additive fusion, reshape back to T × N. When T is not a multiple of tau the
// dropped tail rows come back as zeros so every scale agrees on the output
// shape.
inline Tensor msd_ssb_forward(const MsdSsbParams& params, const Tensor& x) {
  const std::size_t t_len = x.rows(), n = x.cols();
  const std::size_t tau = params.cfg.tau;
  Tensor xr = rescale(x, tau);

  Tensor u = ssm_forward(
      params.kernel_rescaled,
      depthwise_conv(params.conv_rescaled,
                     gated_project(params.proj_rescaled, xr)));
  Tensor z = u;
  if (params.differential) {
    Tensor v = ssm_forward(
        params.kernel_diff,
        depthwise_conv(params.conv_diff,
                       gated_project(params.proj_diff, difference(xr))));
    z = add(u, v);
  }

  const std::size_t kept_rows = (t_len / tau) * tau;
  Tensor unpacked = reshape(z, {kept_rows, n});
  return kept_rows == t_len ? unpacked : pad_rows(unpacked, t_len);
}

}  // namespace neurossm
