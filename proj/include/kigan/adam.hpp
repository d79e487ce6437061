#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "kigan/tensor.hpp"

namespace kigan {

// Bias-corrected Adam over a fixed parameter list. Moment buffers are laid
// out parameter-by-parameter in registration order.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const std::vector<Tensor>& params, double lr) {
    learning_rate = lr;
    step = 0;
    m.clear();
    v.clear();
    for (const Tensor& p : params) {
      m.emplace_back(p.size(), 0.0);
      v.emplace_back(p.size(), 0.0);
    }
  }
};

// One update using the gradients currently stored on the parameters.
inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.size() != params.size())
    throw_dimension("adam_step: state tracks " + std::to_string(state.m.size()) +
                    " parameters, got " + std::to_string(params.size()));
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p];
    if (state.m[p].size() != t.size())
      throw_dimension("adam_step: moment buffer size mismatch for parameter " + std::to_string(p));
    auto g = t.grad();
    auto x = t.values();
    for (std::size_t i = 0; i < t.size(); ++i) {
      state.m[p][i] = state.beta1 * state.m[p][i] + (1.0 - state.beta1) * g[i];
      state.v[p][i] = state.beta2 * state.v[p][i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = state.m[p][i] / bc1;
      const double v_hat = state.v[p][i] / bc2;
      x[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace kigan
