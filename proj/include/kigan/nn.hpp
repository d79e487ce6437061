#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "kigan/rng.hpp"
#include "kigan/tensor.hpp"

namespace kigan {

// Named parameter registry. Registration order is the canonical order for
// optimizer state, checkpoints, and gradient checks.
class ParamSet {
 public:
  Tensor add(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    names_.push_back(name);
    params_.push_back(t);
    return t;
  }

  std::size_t count() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return params_; }
  const std::vector<Tensor>& tensors() const { return params_; }

  Tensor find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return params_[i];
    throw_index("ParamSet: no parameter named '" + name + "'");
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (Tensor& t : params_) t.zero_grad();
  }

  void set_requires_grad(bool on) {
    for (Tensor& t : params_) t.set_requires_grad(on);
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), consumed in row-major order.
inline Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

// y = W x + b
struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    weight = ps.add(name + ".weight", init_uniform(rng, {out, in}, in));
    bias = ps.add(name + ".bias", init_uniform(rng, {out}, in));
  }

  Tensor apply(Tape& tape, const Tensor& x) const {
    return add(tape, matmul(tape, weight, x), bias);
  }

  Tensor apply_relu(Tape& tape, const Tensor& x) const {
    return relu(tape, apply(tape, x));
  }
};

// Single LSTM cell. Gates packed as rows [i; f; g; o] of the [4h x *]
// weight matrices, standard gated update:
//   i,f,o = sigmoid(...), g = tanh(...), c' = f*c + i*g, h' = o*tanh(c').
struct LstmParams {
  Tensor w_input;   // [4h x d_in]
  Tensor w_hidden;  // [4h x h]
  Tensor bias;      // [4h]
  std::size_t hidden = 0;

  LstmParams() = default;
  LstmParams(ParamSet& ps, const std::string& name, std::size_t d_in, std::size_t d_h, Rng& rng)
      : hidden(d_h) {
    w_input = ps.add(name + ".w_input", init_uniform(rng, {4 * d_h, d_in}, d_in));
    w_hidden = ps.add(name + ".w_hidden", init_uniform(rng, {4 * d_h, d_h}, d_h));
    bias = ps.add(name + ".bias", init_uniform(rng, {4 * d_h}, d_h));
  }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

inline LstmState lstm_zero_state(std::size_t d_h) {
  return {Tensor::zeros({d_h}), Tensor::zeros({d_h})};
}

inline LstmState lstm_step(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& c,
                           const LstmParams& p) {
  const std::size_t d_h = p.hidden;
  if (h.size() != d_h || c.size() != d_h)
    throw_dimension("lstm_step: state size mismatch, expected " + std::to_string(d_h));
  Tensor pre = add(tape, add(tape, matmul(tape, p.w_input, x), matmul(tape, p.w_hidden, h)), p.bias);
  Tensor gi = sigmoid(tape, slice(tape, pre, 0, d_h));
  Tensor gf = sigmoid(tape, slice(tape, pre, d_h, d_h));
  Tensor gg = tanh(tape, slice(tape, pre, 2 * d_h, d_h));
  Tensor go = sigmoid(tape, slice(tape, pre, 3 * d_h, d_h));
  Tensor c_next = add(tape, mul(tape, gf, c), mul(tape, gi, gg));
  Tensor h_next = mul(tape, go, tanh(tape, c_next));
  return {h_next, c_next};
}

// Runs an embedding + LSTM encoder over a sequence and returns the final
// hidden state. `embed` maps each raw input vector to the cell input.
template <typename EmbedFn>
Tensor run_lstm_encoder(Tape& tape, std::span<const Tensor> sequence, const LstmParams& cell,
                        EmbedFn embed, const char* what) {
  LstmState st = lstm_zero_state(cell.hidden);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    try {
      st = lstm_step(tape, embed(tape, sequence[t]), st.h, st.c, cell);
    } catch (const error& e) {
      if (e.kind() == error_kind::numeric)
        throw_numeric(std::string(what) + " at step " + std::to_string(t) + ": " + e.what());
      throw;
    }
  }
  return st.h;
}

}  // namespace kigan
