#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kigan/error.hpp"

namespace kigan {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Value-semantics handle over shared storage. Data is written once by the op
// that creates the tensor; gradients accumulate in-place during backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(numel(t.impl_->shape), 0.0);
    t.set_requires_grad(requires_grad);
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw_dimension("tensor: shape " + shape_str(shape) + " does not match " +
                      std::to_string(data.size()) + " values");
    for (double v : data)
      if (!std::isfinite(v)) throw_numeric("tensor: non-finite value in constructor");
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.set_requires_grad(requires_grad);
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t ndim() const { return impl_->shape.size(); }

  std::span<double> values() { return impl_->data; }
  std::span<const double> values() const { return impl_->data; }
  double item() const {
    if (size() != 1) throw_dimension("tensor: item() on non-scalar " + shape_str(shape()));
    return impl_->data[0];
  }
  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * dim(1) + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on && impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  }
  std::span<double> grad() { return impl_->grad; }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

  // Identity of the underlying storage; used by tests.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  static std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::shared_ptr<Impl> impl_;
};

// Ordered record of backward closures for one forward pass. Single-use:
// build a fresh tape per forward, call backward once, discard.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    if (recording_) ops_.push_back(std::move(backward_fn));
  }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  std::size_t op_count() const { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse order.
  void backward(Tensor loss) {
    if (loss.size() != 1) throw_dimension("tape backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.grad()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool recording_ = true;
};

namespace detail {

inline void ensure_finite(const char* op, const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) throw_numeric(std::string(op) + ": produced non-finite value");
}

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

inline Tensor make_result(Tape& tape, Shape shape, const std::initializer_list<const Tensor*> inputs) {
  bool needs_grad = false;
  if (tape.recording())
    for (const Tensor* in : inputs) needs_grad |= in->requires_grad();
  return Tensor::zeros(std::move(shape), needs_grad);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(Tape& tape, Tensor a, Tensor b) {
  if (!detail::same_shape(a, b))
    throw_dimension("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = detail::make_result(tape, a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.at(i) + b.at(i);
  detail::ensure_finite("add", out);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.requires_grad()) a.grad()[i] += out.grad()[i];
        if (b.requires_grad()) b.grad()[i] += out.grad()[i];
      }
    });
  return out;
}

inline Tensor add(Tape& tape, Tensor a, double b) {
  Tensor out = detail::make_result(tape, a.shape(), {&a});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.at(i) + b;
  detail::ensure_finite("add", out);
  if (out.requires_grad())
    tape.record([a, out]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i) a.grad()[i] += out.grad()[i];
    });
  return out;
}

inline Tensor sub(Tape& tape, Tensor a, Tensor b) {
  if (!detail::same_shape(a, b))
    throw_dimension("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = detail::make_result(tape, a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.at(i) - b.at(i);
  detail::ensure_finite("sub", out);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.requires_grad()) a.grad()[i] += out.grad()[i];
        if (b.requires_grad()) b.grad()[i] -= out.grad()[i];
      }
    });
  return out;
}

inline Tensor sub(Tape& tape, double a, Tensor b) {
  Tensor out = detail::make_result(tape, b.shape(), {&b});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a - b.at(i);
  detail::ensure_finite("sub", out);
  if (out.requires_grad())
    tape.record([b, out]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i) b.grad()[i] -= out.grad()[i];
    });
  return out;
}

inline Tensor mul(Tape& tape, Tensor a, Tensor b) {
  if (!detail::same_shape(a, b))
    throw_dimension("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = detail::make_result(tape, a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.at(i) * b.at(i);
  detail::ensure_finite("mul", out);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.requires_grad()) a.grad()[i] += out.grad()[i] * b.at(i);
        if (b.requires_grad()) b.grad()[i] += out.grad()[i] * a.at(i);
      }
    });
  return out;
}

inline Tensor mul(Tape& tape, Tensor a, double b) {
  Tensor out = detail::make_result(tape, a.shape(), {&a});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.at(i) * b;
  detail::ensure_finite("mul", out);
  if (out.requires_grad())
    tape.record([a, b, out]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i) a.grad()[i] += out.grad()[i] * b;
    });
  return out;
}

inline Tensor neg(Tape& tape, Tensor a) { return mul(tape, a, -1.0); }

namespace detail {

// Function pointers (not closures) so the recorded lambda only captures
// trivially copyable state; `aux` carries the one scalar knob some ops need.
using UnaryFwd = double (*)(double x, double aux);
using UnaryBwd = double (*)(double x, double y, double aux);

inline Tensor unary_op(const char* name, Tape& tape, Tensor a, UnaryFwd fwd,
                       UnaryBwd dfdx_from_xy, double aux = 0.0) {
  Tensor out = make_result(tape, a.shape(), {&a});
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = fwd(a.at(i), aux);
  ensure_finite(name, out);
  if (out.requires_grad())
    tape.record([a, out, dfdx_from_xy, aux]() mutable {
      for (std::size_t i = 0; i < out.size(); ++i)
        a.grad()[i] += out.grad()[i] * dfdx_from_xy(a.at(i), out.at(i), aux);
    });
  return out;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Tensor tanh(Tape& tape, Tensor a) {
  return detail::unary_op(
      "tanh", tape, a, [](double x, double) { return std::tanh(x); },
      [](double, double y, double) { return 1.0 - y * y; });
}

inline Tensor sigmoid(Tape& tape, Tensor a) {
  return detail::unary_op(
      "sigmoid", tape, a, [](double x, double) { return detail::stable_sigmoid(x); },
      [](double, double y, double) { return y * (1.0 - y); });
}

inline Tensor relu(Tape& tape, Tensor a) {
  return detail::unary_op(
      "relu", tape, a, [](double x, double) { return x > 0.0 ? x : 0.0; },
      [](double x, double, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(Tape& tape, Tensor a) {
  return detail::unary_op(
      "exp", tape, a, [](double x, double) { return std::exp(x); },
      [](double, double y, double) { return y; });
}

inline Tensor log(Tape& tape, Tensor a) {
  return detail::unary_op(
      "log", tape, a, [](double x, double) { return std::log(x); },
      [](double x, double, double) { return 1.0 / x; });
}

// max(x, floor); subgradient 0 on the clamped side.
inline Tensor clamp_min(Tape& tape, Tensor a, double floor) {
  return detail::unary_op(
      "clamp_min", tape, a, [](double x, double f) { return x < f ? f : x; },
      [](double x, double, double f) { return x < f ? 0.0 : 1.0; }, floor);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// [m x k] * [k x n] -> [m x n], or [m x k] * [k] -> [m].
inline Tensor matmul(Tape& tape, Tensor a, Tensor b) {
  if (a.ndim() != 2) throw_dimension("matmul: left operand must be 2-D, got " + shape_str(a.shape()));
  const bool vec = b.ndim() == 1;
  if (!vec && b.ndim() != 2)
    throw_dimension("matmul: right operand must be 1-D or 2-D, got " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1);
  const std::size_t kb = vec ? b.dim(0) : b.dim(0);
  const std::size_t n = vec ? 1 : b.dim(1);
  if (k != kb)
    throw_dimension("matmul: inner dimensions disagree " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

  Tensor out = detail::make_result(tape, vec ? Shape{m} : Shape{m, n}, {&a, &b});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i * k + p) * b.at(p * n + j);
      out.values()[i * n + j] = acc;
    }
  detail::ensure_finite("matmul", out);
  if (out.requires_grad())
    tape.record([a, b, out, m, k, n]() mutable {
      // dA = dC * B^T, dB = A^T * dC
      if (a.requires_grad())
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += out.grad()[i * n + j] * b.at(p * n + j);
            a.grad()[i * k + p] += acc;
          }
      if (b.requires_grad())
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a.at(i * k + p) * out.grad()[i * n + j];
            b.grad()[p * n + j] += acc;
          }
    });
  return out;
}

// Numerically stable softmax along `axis` (0 for 1-D; 0 or 1 for 2-D).
inline Tensor softmax(Tape& tape, Tensor x, std::size_t axis = 0) {
  if (x.ndim() == 0 || x.size() == 0) throw_dimension("softmax: empty input");
  if (axis >= x.ndim())
    throw_dimension("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));

  // View the tensor as `groups` independent vectors of length `len` with
  // stride `stride` along the reduction axis.
  std::size_t len, stride, groups;
  if (x.ndim() == 1) {
    len = x.dim(0); stride = 1; groups = 1;
  } else if (x.ndim() == 2) {
    if (axis == 0) { len = x.dim(0); stride = x.dim(1); groups = x.dim(1); }
    else           { len = x.dim(1); stride = 1;        groups = x.dim(0); }
  } else {
    throw_dimension("softmax: only 1-D/2-D supported, got " + shape_str(x.shape()));
  }
  if (len == 0) throw_dimension("softmax: empty reduction axis");

  Tensor out = detail::make_result(tape, x.shape(), {&x});
  // Group g starts at g (column-major reduction) or g * len (row-major).
  const std::size_t group_step = (x.ndim() == 2 && axis == 0) ? 1 : len;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * group_step;
    double mx = x.at(base);
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x.at(base + i * stride));
    double denom = 0.0;
    for (std::size_t i = 0; i < len; ++i) denom += std::exp(x.at(base + i * stride) - mx);
    for (std::size_t i = 0; i < len; ++i)
      out.values()[base + i * stride] = std::exp(x.at(base + i * stride) - mx) / denom;
  }
  detail::ensure_finite("softmax", out);
  if (out.requires_grad())
    tape.record([x, out, len, stride, groups, group_step]() mutable {
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t base = g * group_step;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i)
          dot += out.grad()[base + i * stride] * out.at(base + i * stride);
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t idx = base + i * stride;
          x.grad()[idx] += out.at(idx) * (out.grad()[idx] - dot);
        }
      }
    });
  return out;
}

// Column-wise max over the rows of [n x d] -> [d]. Backward routes each
// column's gradient to the lowest-index row attaining the maximum.
inline Tensor max_pool_rows(Tape& tape, Tensor x) {
  if (x.ndim() != 2) throw_dimension("max_pool_rows: need 2-D input, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw_dimension("max_pool_rows: empty input (no rows)");

  Tensor out = detail::make_result(tape, {d}, {&x});
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = x.at(0, j);
    for (std::size_t i = 1; i < n; ++i)
      if (x.at(i, j) > best) { best = x.at(i, j); argmax[j] = i; }
    out.values()[j] = best;
  }
  detail::ensure_finite("max_pool_rows", out);
  if (out.requires_grad())
    tape.record([x, out, argmax, d]() mutable {
      for (std::size_t j = 0; j < d; ++j) x.grad()[argmax[j] * d + j] += out.grad()[j];
    });
  return out;
}

// Row `index` of a [v x d] table; gradient accumulates only into that row.
inline Tensor embedding_lookup(Tape& tape, Tensor table, std::size_t index) {
  if (table.ndim() != 2) throw_dimension("embedding_lookup: need 2-D table, got " + shape_str(table.shape()));
  const std::size_t v = table.dim(0), d = table.dim(1);
  if (index >= v)
    throw_index("embedding_lookup: index " + std::to_string(index) + " out of range for " +
                std::to_string(v) + " rows");
  Tensor out = detail::make_result(tape, {d}, {&table});
  for (std::size_t j = 0; j < d; ++j) out.values()[j] = table.at(index, j);
  if (out.requires_grad())
    tape.record([table, out, index, d]() mutable {
      for (std::size_t j = 0; j < d; ++j) table.grad()[index * d + j] += out.grad()[j];
    });
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

inline Tensor concat(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw_dimension("concat: no inputs");
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    if (p.ndim() != 1) throw_dimension("concat: need 1-D inputs, got " + shape_str(p.shape()));
    total += p.size();
    needs_grad |= p.requires_grad();
  }
  Tensor out = Tensor::zeros({total}, tape.recording() && needs_grad);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i) out.values()[off + i] = p.at(i);
    off += p.size();
  }
  if (out.requires_grad()) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape.record([held, out]() mutable {
      std::size_t off = 0;
      for (Tensor& p : held) {
        if (p.requires_grad())
          for (std::size_t i = 0; i < p.size(); ++i) p.grad()[i] += out.grad()[off + i];
        off += p.size();
      }
    });
  }
  return out;
}

inline Tensor concat(Tape& tape, std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat(tape, std::span<const Tensor>(v));
}

inline Tensor slice(Tape& tape, Tensor x, std::size_t offset, std::size_t len) {
  if (x.ndim() != 1) throw_dimension("slice: need 1-D input, got " + shape_str(x.shape()));
  if (offset + len > x.size())
    throw_index("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
                ") exceeds length " + std::to_string(x.size()));
  Tensor out = detail::make_result(tape, {len}, {&x});
  for (std::size_t i = 0; i < len; ++i) out.values()[i] = x.at(offset + i);
  if (out.requires_grad())
    tape.record([x, out, offset, len]() mutable {
      for (std::size_t i = 0; i < len; ++i) x.grad()[offset + i] += out.grad()[i];
    });
  return out;
}

// Row `i` of a 2-D tensor as a 1-D view copy.
inline Tensor row(Tape& tape, Tensor x, std::size_t i) {
  if (x.ndim() != 2) throw_dimension("row: need 2-D input, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (i >= n) throw_index("row: index " + std::to_string(i) + " out of range for " + std::to_string(n));
  Tensor out = detail::make_result(tape, {d}, {&x});
  for (std::size_t j = 0; j < d; ++j) out.values()[j] = x.at(i, j);
  if (out.requires_grad())
    tape.record([x, out, i, d]() mutable {
      for (std::size_t j = 0; j < d; ++j) x.grad()[i * d + j] += out.grad()[j];
    });
  return out;
}

// Elementwise multiply by a scalar tensor (shape {1}), gradient to both.
inline Tensor scale(Tape& tape, Tensor x, Tensor s) {
  if (s.size() != 1) throw_dimension("scale: scalar operand must have one element");
  Tensor out = detail::make_result(tape, x.shape(), {&x, &s});
  const double sv = s.at(0);
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = x.at(i) * sv;
  detail::ensure_finite("scale", out);
  if (out.requires_grad())
    tape.record([x, s, out]() mutable {
      const double sv = s.at(0);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (x.requires_grad()) x.grad()[i] += out.grad()[i] * sv;
        if (s.requires_grad()) s.grad()[0] += out.grad()[i] * x.at(i);
      }
    });
  return out;
}

inline Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) throw_dimension("stack_rows: no inputs");
  const std::size_t d = rows.front().size();
  bool needs_grad = false;
  for (const Tensor& r : rows) {
    if (r.ndim() != 1 || r.size() != d)
      throw_dimension("stack_rows: rows must be 1-D of equal length");
    needs_grad |= r.requires_grad();
  }
  Tensor out = Tensor::zeros({rows.size(), d}, tape.recording() && needs_grad);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.values()[i * d + j] = rows[i].at(j);
  if (out.requires_grad()) {
    std::vector<Tensor> held(rows.begin(), rows.end());
    tape.record([held, out, d]() mutable {
      for (std::size_t i = 0; i < held.size(); ++i)
        if (held[i].requires_grad())
          for (std::size_t j = 0; j < d; ++j) held[i].grad()[j] += out.grad()[i * d + j];
    });
  }
  return out;
}

inline Tensor sum(Tape& tape, Tensor x) {
  Tensor out = detail::make_result(tape, {1}, {&x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  detail::ensure_finite("sum", out);
  if (out.requires_grad())
    tape.record([x, out]() mutable {
      for (std::size_t i = 0; i < x.size(); ++i) x.grad()[i] += out.grad()[0];
    });
  return out;
}

inline Tensor mean(Tape& tape, Tensor x) {
  if (x.size() == 0) throw_dimension("mean: empty input");
  return mul(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

// Euclidean distance ||a - b||_2 over flattened tensors, fused so the
// backward is well-defined (zero) at coincident inputs.
inline Tensor l2_distance(Tape& tape, Tensor a, Tensor b) {
  if (!detail::same_shape(a, b))
    throw_dimension("l2_distance: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = detail::make_result(tape, {1}, {&a, &b});
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.at(i) - b.at(i);
    acc += d * d;
  }
  const double dist = std::sqrt(acc);
  out.values()[0] = dist;
  detail::ensure_finite("l2_distance", out);
  if (out.requires_grad())
    tape.record([a, b, out, dist]() mutable {
      if (dist <= 0.0) return;
      const double g = out.grad()[0] / dist;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.at(i) - b.at(i);
        if (a.requires_grad()) a.grad()[i] += g * d;
        if (b.requires_grad()) b.grad()[i] -= g * d;
      }
    });
  return out;
}

// Copies values into a fresh constant tensor, cutting the gradient chain.
inline Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), false);
}

}  // namespace kigan
