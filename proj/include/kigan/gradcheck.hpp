#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kigan/tensor.hpp"

namespace kigan {

// Relative error with a unit floor: exact for O(1) gradients, absolute for
// tiny ones, so finite-difference noise on near-zero coordinates does not
// drown the comparison.
inline double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool ok() const { return max_rel_err < tolerance; }
};

// Compares tape gradients of a scalar-valued function against central finite
// differences over every coordinate of every leaf. Returns the max relative
// error. `f` must rebuild the forward pass from the current leaf values.
inline double grad_check_leaves(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> leaves,
                                double h = 1e-5) {
  for (Tensor& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  Tape tape;
  Tensor loss = f(tape);
  if (loss.size() != 1) throw_dimension("grad_check: function must be scalar-valued");
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (Tensor& leaf : leaves)
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

  auto eval = [&]() {
    Tape t;
    t.set_recording(false);
    return f(t).item();
  };

  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto x = leaves[l].values();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double f_plus = eval();
      x[i] = saved - h;
      const double f_minus = eval();
      x[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      worst = std::max(worst, grad_rel_error(analytic[l][i], numeric));
    }
  }
  return worst;
}

// Single-tensor form: f maps one input tensor to a scalar.
inline double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                         double h = 1e-5) {
  return grad_check_leaves([&f, x](Tape& tape) { return f(tape, x); }, {x}, h);
}

}  // namespace kigan
