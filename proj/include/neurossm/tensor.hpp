#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "neurossm/common.hpp"

namespace neurossm {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// One node of the recorded graph. `backward` reads this node's grad and
// accumulates into the parents' grads (all grad buffers are allocated by the
// engine before the reverse sweep runs).
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until needed; else same length as data
  bool requires_grad = false;
  bool consumed = false;  // a backward pass already ran through this node

  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward;

  TensorImpl(Shape s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor: shape " + shape_str(shape) +
                       " does not match buffer of " +
                       std::to_string(data.size()));
    auto& inst = instrumentation();
    if (inst.enabled) {
      tracked_bytes =
          static_cast<std::int64_t>(data.capacity() * sizeof(double));
      inst.alloc_bytes_current += tracked_bytes;
      inst.alloc_bytes_peak =
          std::max(inst.alloc_bytes_peak, inst.alloc_bytes_current);
    }
  }

  ~TensorImpl() {
    if (tracked_bytes != 0)
      instrumentation().alloc_bytes_current -= tracked_bytes;
  }

  TensorImpl(const TensorImpl&) = delete;
  TensorImpl& operator=(const TensorImpl&) = delete;

  std::int64_t tracked_bytes = 0;
};

inline void ensure_grad(TensorImpl& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
}

inline void check_finite(const std::vector<double>& buf, const char* op) {
  if (!checked_mode()) return;
  for (double v : buf) {
    if (!std::isfinite(v))
      throw ContractError(std::string(op) + ": non-finite value produced");
  }
}

}  // namespace detail

// Dense row-major f64 tensor with an optional gradient slot. Value-semantic
// handle; copies share the underlying node. Tensors without a recorded graph
// are immutable from the library's point of view and safe to share across
// threads; graph recording and backward are single-threaded per graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data) {
    auto t = Tensor(std::make_shared<detail::TensorImpl>(std::move(shape),
                                                         std::move(data)));
    detail::check_finite(t.impl_->data, "from_data");
    return t;
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = detail::shape_numel(shape);
    return Tensor(std::make_shared<detail::TensorImpl>(
        std::move(shape), std::vector<double>(n, 0.0)));
  }

  static Tensor full(Shape shape, double value) {
    const std::size_t n = detail::shape_numel(shape);
    return Tensor(std::make_shared<detail::TensorImpl>(
        std::move(shape), std::vector<double>(n, value)));
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor scalar(double value) { return from_data({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t ndim() const { return impl_->shape.size(); }

  // 2-D accessors; a 1-D tensor acts as a single row.
  std::size_t rows() const {
    return impl_->shape.size() >= 2 ? impl_->shape[0] : 1;
  }
  std::size_t cols() const {
    return impl_->shape.size() >= 2 ? impl_->shape[1] : impl_->shape[0];
  }

  // Span accessors are lvalue-only: a span into a temporary tensor would
  // dangle as soon as the handle releases its buffer.
  std::span<const double> values() const& {
    return {impl_->data.data(), impl_->data.size()};
  }
  std::span<const double> values() const&& = delete;

  // Mutable access for leaves (parameter updates). Mutating a tensor that is
  // part of a recorded graph invalidates that graph's saved values.
  std::span<double> raw_values() & {
    return {impl_->data.data(), impl_->data.size()};
  }
  std::span<double> raw_values() && = delete;

  double item() const {
    if (numel() != 1) throw ContractError("item: tensor is not scalar");
    return impl_->data[0];
  }

  double at(std::size_t r, std::size_t c) const {
    return impl_->data[r * cols() + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const& {
    return {impl_->grad.data(), impl_->grad.size()};
  }
  std::span<const double> grad() const&& = delete;
  void zero_grad() { impl_->grad.clear(); }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace autodiff {

// Builds a graph node. `backward` may assume its own grad and every parent's
// grad buffer exist. Recording is skipped when grad mode is off or no parent
// requires grad, so value-only forwards never pay for the graph.
inline Tensor make_op(Shape shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(detail::TensorImpl&)> backward,
                      const char* op_name) {
  detail::check_finite(data, op_name);
  auto node =
      std::make_shared<detail::TensorImpl>(std::move(shape), std::move(data));
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  if (grad_mode() && needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.impl());
    node->backward = std::move(backward);
  }
  return Tensor(node);
}

// Reverse sweep from a scalar root in exact reverse topological order.
// Gradients accumulate additively into leaves, so separate backward passes
// over graphs sharing parameters sum their contributions. A graph is consumed
// by the sweep; running backward twice through the same nodes is rejected.
inline void backward(const Tensor& root) {
  if (root.numel() != 1) throw ContractError("backward: root must be a scalar");
  auto* root_impl = root.impl().get();
  if (root_impl->consumed)
    throw ContractError(
        "backward: graph already consumed; recompute the forward pass first");

  // Iterative post-order DFS: parents precede children in `order`.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  struct Frame {
    detail::TensorImpl* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  seen.insert(root_impl);
  stack.push_back({root_impl, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (detail::TensorImpl* node : order) detail::ensure_grad(*node);
  root_impl->grad[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (node->backward) node->backward(*node);
    node->consumed = true;
  }
  // Release graph metadata; leaf grads stay in place for the optimizer.
  for (detail::TensorImpl* node : order) {
    node->backward = nullptr;
    if (!node->parents.empty()) {
      node->parents.clear();
      node->grad.clear();  // intermediate grads are no longer needed
    }
  }
}

}  // namespace autodiff

namespace detail {

// Plain GEMM kernels accumulating into c. These carry the projection-stage
// instrumentation used by the complexity report.
inline void gemm_nn_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[m×n] += a[m×k] · b[n×k]^T
inline void gemm_nt_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[m×n] += a[k×m]^T · b[k×n]
inline void gemm_tn_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

struct ProjTimer {
  std::chrono::steady_clock::time_point start;
  bool active;
  std::uint64_t madds;
  explicit ProjTimer(std::uint64_t op_madds)
      : active(instrumentation().enabled), madds(op_madds) {
    if (active) start = std::chrono::steady_clock::now();
  }
  ~ProjTimer() {
    if (!active) return;
    auto& inst = instrumentation();
    inst.proj_madds += madds;
    inst.proj_ns += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now() - start)
            .count());
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() > 2 || b.ndim() != 2)
    throw ShapeError("matmul: expects 2-D operands");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions disagree, " +
                     detail::shape_str(a.shape()) + " vs " +
                     detail::shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  {
    detail::ProjTimer timer(static_cast<std::uint64_t>(m) * k * n);
    detail::gemm_nn_acc(a.values().data(), b.values().data(), out.data(), m, k,
                        n);
  }
  Shape out_shape = a.ndim() == 1 ? Shape{n} : Shape{m, n};
  return autodiff::make_op(
      std::move(out_shape), std::move(out), {a, b},
      [m, k, n](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        detail::ProjTimer timer(2ULL * m * k * n);
        // dA += dC · B^T ; dB += A^T · dC
        detail::gemm_nt_acc(self.grad.data(), pb.data.data(), pa.grad.data(),
                            m, n, k);
        detail::gemm_tn_acc(pa.data.data(), self.grad.data(), pb.grad.data(),
                            k, m, n);
      },
      "matmul");
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with single-axis broadcasting: shapes equal, b a
// vector matching a's trailing dimension (row broadcast), or b scalar.
// ---------------------------------------------------------------------------

namespace detail {

enum class BinOp { Add, Sub, Mul };

inline Tensor binary_op(BinOp op, const Tensor& a, const Tensor& b,
                        const char* name) {
  const std::size_t an = a.numel(), bn = b.numel();
  enum class Mode { Full, Row, Scalar } mode;
  if (a.shape() == b.shape()) {
    mode = Mode::Full;
  } else if (bn == 1) {
    mode = Mode::Scalar;
  } else if (a.ndim() == 2 && b.ndim() <= 2 && b.rows() == 1 &&
             bn == a.cols()) {
    mode = Mode::Row;
  } else {
    throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) +
                     " are not broadcastable");
  }
  const std::size_t cols = (mode == Mode::Row) ? a.cols() : 1;
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(an);
  for (std::size_t i = 0; i < an; ++i) {
    const double bi = (mode == Mode::Full)     ? bv[i]
                      : (mode == Mode::Scalar) ? bv[0]
                                               : bv[i % cols];
    switch (op) {
      case BinOp::Add: out[i] = av[i] + bi; break;
      case BinOp::Sub: out[i] = av[i] - bi; break;
      case BinOp::Mul: out[i] = av[i] * bi; break;
    }
  }
  return autodiff::make_op(
      a.shape(), std::move(out), {a, b},
      [op, mode, cols, an](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        const double* adata = pa.data.data();
        const double* bdata = pb.data.data();
        for (std::size_t i = 0; i < an; ++i) {
          const std::size_t bi = (mode == Mode::Full)     ? i
                                 : (mode == Mode::Scalar) ? 0
                                                          : i % cols;
          switch (op) {
            case BinOp::Add:
              pa.grad[i] += g[i];
              pb.grad[bi] += g[i];
              break;
            case BinOp::Sub:
              pa.grad[i] += g[i];
              pb.grad[bi] -= g[i];
              break;
            case BinOp::Mul:
              pa.grad[i] += g[i] * bdata[bi];
              pb.grad[bi] += g[i] * adata[i];
              break;
          }
        }
      },
      name);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(detail::BinOp::Add, a, b, "add");
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(detail::BinOp::Sub, a, b, "sub");
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(detail::BinOp::Mul, a, b, "mul");
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_val(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Exact erf form: gelu(x) = x/2 · (1 + erf(x/√2)).
inline double gelu_val(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

template <typename Fwd, typename Grad>
Tensor unary_op(const Tensor& a, Fwd fwd, Grad grad_from_input,
                const char* name) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return autodiff::make_op(
      a.shape(), std::move(out), {a},
      [grad_from_input](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.data.size(); ++i)
          pa.grad[i] += self.grad[i] * grad_from_input(pa.data[i]);
      },
      name);
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return detail::sigmoid_val(x); },
      [](double x) {
        const double s = detail::sigmoid_val(x);
        return s * (1.0 - s);
      },
      "sigmoid");
}

inline Tensor silu(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return x * detail::sigmoid_val(x); },
      [](double x) {
        const double s = detail::sigmoid_val(x);
        return s * (1.0 + x * (1.0 - s));
      },
      "silu");
}

inline Tensor gelu(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return detail::gelu_val(x); },
      [](double x) { return detail::gelu_grad(x); }, "gelu");
}

inline Tensor softplus(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return detail::softplus_val(x); },
      [](double x) { return detail::sigmoid_val(x); }, "softplus");
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); }, "exp");
}

inline Tensor neg(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return -x; }, [](double) { return -1.0; }, "neg");
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Per-row layer normalization over the feature dimension with population
// variance (divide by d), then affine gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps) {
  if (x.ndim() != 2) throw ShapeError("layer_norm: expects 2-D input");
  const std::size_t t_len = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm: gain/bias must have length of the feature dim");
  if (d == 0) throw ContractError("layer_norm: feature dimension must be >= 1");
  if (eps < 0.0) throw ContractError("layer_norm: eps must be non-negative");

  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> out(t_len * d);
  auto xhat = std::make_shared<std::vector<double>>(t_len * d);
  auto inv_std = std::make_shared<std::vector<double>>(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = xv.data() + t * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = row[c] - mean;
      var += diff * diff;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[t] = istd;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * istd;
      (*xhat)[t * d + c] = xh;
      out[t * d + c] = gv[c] * xh + bv[c];
    }
  }
  return autodiff::make_op(
      x.shape(), std::move(out), {x, gain, bias},
      [t_len, d, xhat, inv_std](detail::TensorImpl& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const double* g = self.grad.data();
        for (std::size_t t = 0; t < t_len; ++t) {
          const double* grow = g + t * d;
          const double* xhrow = xhat->data() + t * d;
          const double istd = (*inv_std)[t];
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double dxh = grow[c] * pg.data[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhrow[c];
            pg.grad[c] += grow[c] * xhrow[c];
            pb.grad[c] += grow[c];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          for (std::size_t c = 0; c < d; ++c) {
            const double dxh = grow[c] * pg.data[c];
            px.grad[t * d + c] +=
                istd * (dxh - mean_dxh - xhrow[c] * mean_dxh_xh);
          }
        }
      },
      "layer_norm");
}

// ---------------------------------------------------------------------------
// Reductions and structural ops
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return autodiff::make_op(
      {1}, {total}, {a},
      [](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        const double g = self.grad[0];
        for (double& gv : pa.grad) gv += g;
      },
      "sum");
}

// Column means of a 2-D tensor (mean over the time axis).
inline Tensor mean_rows(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("mean_rows: expects 2-D input");
  const std::size_t t_len = a.rows(), d = a.cols();
  auto av = a.values();
  std::vector<double> out(d, 0.0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < d; ++c) out[c] += av[t * d + c];
  for (std::size_t c = 0; c < d; ++c) out[c] /= static_cast<double>(t_len);
  return autodiff::make_op(
      {d}, std::move(out), {a},
      [t_len, d](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        const double inv = 1.0 / static_cast<double>(t_len);
        for (std::size_t t = 0; t < t_len; ++t)
          for (std::size_t c = 0; c < d; ++c)
            pa.grad[t * d + c] += self.grad[c] * inv;
      },
      "mean_rows");
}

// Stacks equal-length vectors into a [k × d] matrix.
inline Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows given");
  const std::size_t d = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  std::vector<Tensor> parents;
  parents.reserve(rows.size());
  for (const Tensor& r : rows) {
    if (r.numel() != d)
      throw ShapeError("stack_rows: rows must have equal length");
    auto rv = r.values();
    out.insert(out.end(), rv.begin(), rv.end());
    parents.push_back(r);
  }
  const std::size_t k = rows.size();
  return autodiff::make_op(
      {k, d}, std::move(out), std::move(parents),
      [k, d](detail::TensorImpl& self) {
        for (std::size_t i = 0; i < k; ++i) {
          auto& p = *self.parents[i];
          for (std::size_t c = 0; c < d; ++c)
            p.grad[c] += self.grad[i * d + c];
        }
      },
      "stack_rows");
}

// First `n` rows of a 2-D tensor.
inline Tensor take_rows(const Tensor& a, std::size_t n) {
  if (a.ndim() != 2) throw ShapeError("take_rows: expects 2-D input");
  if (n > a.rows()) throw ShapeError("take_rows: more rows than available");
  const std::size_t d = a.cols();
  auto av = a.values();
  std::vector<double> out(av.begin(), av.begin() + n * d);
  return autodiff::make_op(
      {n, d}, std::move(out), {a},
      [n, d](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < n * d; ++i) pa.grad[i] += self.grad[i];
      },
      "take_rows");
}

// Zero-pads a 2-D tensor with extra rows up to `total_rows`.
inline Tensor pad_rows(const Tensor& a, std::size_t total_rows) {
  if (a.ndim() != 2) throw ShapeError("pad_rows: expects 2-D input");
  if (total_rows < a.rows())
    throw ShapeError("pad_rows: target has fewer rows than input");
  const std::size_t d = a.cols(), n = a.rows();
  auto av = a.values();
  std::vector<double> out(total_rows * d, 0.0);
  std::copy(av.begin(), av.end(), out.begin());
  return autodiff::make_op(
      {total_rows, d}, std::move(out), {a},
      [n, d](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < n * d; ++i) pa.grad[i] += self.grad[i];
      },
      "pad_rows");
}

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (detail::shape_numel(new_shape) != a.numel())
    throw ShapeError("reshape: element count mismatch");
  auto av = a.values();
  std::vector<double> out(av.begin(), av.end());
  return autodiff::make_op(
      std::move(new_shape), std::move(out), {a},
      [](detail::TensorImpl& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i];
      },
      "reshape");
}

inline void backward(const Tensor& loss) { autodiff::backward(loss); }

}  // namespace neurossm
