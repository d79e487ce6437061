#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kigan/gan.hpp"
#include "kigan/gradcheck.hpp"

namespace kigan {

inline GradCheckResult check_gradient(std::string name, const std::function<Tensor(Tape&)>& f,
                                      std::vector<Tensor> leaves, double h, double tolerance) {
  GradCheckResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  r.max_rel_err = grad_check_leaves(f, std::move(leaves), h);
  return r;
}

// Reduced-width configuration for the end-to-end check: every component of
// the full model is present, the layer widths are just small enough to keep
// the finite-difference sweep fast.
inline ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.d_h = 16;
  cfg.d_a = 8;
  cfg.d_t = 8;
  cfg.d_size = 8;
  cfg.d_embed = 8;
  cfg.d_e = 8;
  cfg.d_p = 16;
  cfg.d_z = 8;
  cfg.attn_hidden = 16;
  cfg.pool_hidden = 32;
  cfg.disc_hidden = 8;
  cfg.obs_len = 12;
  cfg.pred_len = 12;
  return cfg;
}

inline SceneWindow gradcheck_scene(const ModelConfig& cfg) {
  Rng rng(4242);
  SceneWindow w;
  w.obs_len = cfg.obs_len;
  w.pred_len = cfg.pred_len;
  for (int a = 0; a < 2; ++a) {
    WindowAgent ag;
    ag.agent_id = "g" + std::to_string(a);
    ag.cls = a == 0 ? AgentClass::car : AgentClass::bus;
    ag.length_m = a == 0 ? 4.5 : 11.0;
    ag.width_m = a == 0 ? 1.8 : 2.6;
    Vec2 pos{rng.uniform(-15, 15), rng.uniform(-15, 15)};
    Vec2 vel{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    for (int t = 0; t < cfg.obs_len; ++t) {
      ag.obs_pos.push_back(pos);
      ag.obs_vel.push_back(vel);
      ag.obs_acc.push_back({rng.normal() * 0.3, rng.normal() * 0.3});
      pos = pos + Vec2{vel.x * 0.5, vel.y * 0.5};
      vel = vel + Vec2{rng.normal() * 0.1, rng.normal() * 0.1};
    }
    for (int t = 0; t < cfg.pred_len; ++t) {
      ag.fut_pos.push_back(pos);
      pos = pos + Vec2{vel.x * 0.5, vel.y * 0.5};
    }
    ag.anchor = ag.obs_pos.back();
    w.agents.push_back(std::move(ag));
  }
  for (int t = 0; t < cfg.obs_len + cfg.pred_len; ++t)
    w.signal_codes.push_back(1 + t % 5);
  return w;
}

// Finite-difference checks for every primitive operation at 1e-6 relative
// (lstm_step at 1e-5; it chains eight primitives).
inline std::vector<GradCheckResult> primitive_gradchecks() {
  std::vector<GradCheckResult> out;
  Rng rng(99);
  auto randn = [&rng](Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.values()) v = rng.normal();
    return t;
  };

  {
    Tensor x = randn({5}), w = randn({5});
    out.push_back(check_gradient(
        "elementwise.add", [=](Tape& tp) { return sum(tp, mul(tp, add(tp, x, w), w)); }, {x, w},
        1e-5, 1e-6));
    out.push_back(check_gradient(
        "elementwise.sub", [=](Tape& tp) { return sum(tp, mul(tp, sub(tp, x, w), w)); }, {x, w},
        1e-5, 1e-6));
    out.push_back(check_gradient(
        "elementwise.mul", [=](Tape& tp) { return sum(tp, mul(tp, mul(tp, x, w), w)); }, {x, w},
        1e-5, 1e-6));
    out.push_back(check_gradient(
        "elementwise.tanh", [=](Tape& tp) { return sum(tp, mul(tp, tanh(tp, x), w)); }, {x}, 1e-5,
        1e-6));
    out.push_back(check_gradient(
        "elementwise.sigmoid", [=](Tape& tp) { return sum(tp, mul(tp, sigmoid(tp, x), w)); }, {x},
        1e-5, 1e-6));
  }
  // relu away from the kink
  {
    Tensor x = Tensor::from({4}, {0.5, -1.2, 2.0, -0.3});
    Tensor w = randn({4});
    out.push_back(check_gradient(
        "elementwise.relu", [=](Tape& tp) { return sum(tp, mul(tp, relu(tp, x), w)); }, {x}, 1e-5,
        1e-6));
  }
  {
    Tensor x = randn({4});
    out.push_back(check_gradient(
        "elementwise.exp", [=](Tape& tp) { return sum(tp, exp(tp, x)); }, {x}, 1e-5, 1e-6));
  }
  {
    Tensor x = Tensor::from({4}, {0.5, 1.5, 2.5, 0.9});
    out.push_back(check_gradient(
        "elementwise.log", [=](Tape& tp) { return sum(tp, log(tp, x)); }, {x}, 1e-5, 1e-6));
  }
  {
    Tensor a = randn({3, 4}), b = randn({4, 2}), w = randn({3, 2});
    out.push_back(check_gradient(
        "matmul",
        [=](Tape& tp) {
          Tensor flat_w = Tensor::from({6}, std::vector<double>(w.values().begin(), w.values().end()));
          Tensor prod = matmul(tp, a, b);
          // weighted sum over entries keeps the check non-degenerate
          Tensor weighted = mul(tp, concat(tp, {row(tp, prod, 0), row(tp, prod, 1), row(tp, prod, 2)}),
                                flat_w);
          return sum(tp, weighted);
        },
        {a, b}, 1e-5, 1e-6));
  }
  {
    Tensor x = randn({6}), w = randn({6});
    out.push_back(check_gradient(
        "softmax", [=](Tape& tp) { return sum(tp, mul(tp, softmax(tp, x), w)); }, {x}, 1e-5, 1e-6));
  }
  {
    Tensor x = randn({4, 3}), w = randn({3});
    out.push_back(check_gradient(
        "max_pool_rows", [=](Tape& tp) { return sum(tp, mul(tp, max_pool_rows(tp, x), w)); }, {x},
        1e-5, 1e-6));
  }
  {
    Tensor table = randn({5, 4}), w = randn({4});
    out.push_back(check_gradient(
        "embedding_lookup",
        [=](Tape& tp) { return sum(tp, mul(tp, embedding_lookup(tp, table, 2), w)); }, {table},
        1e-5, 1e-6));
  }
  {
    ParamSet ps;
    Rng lrng(7);
    LstmParams cell(ps, "cell", 3, 4, lrng);
    Tensor x = randn({3}), h = randn({4}), c = randn({4}), w = randn({8});
    out.push_back(check_gradient(
        "lstm_step",
        [=](Tape& tp) {
          auto st = lstm_step(tp, x, h, c, cell);
          return sum(tp, mul(tp, concat(tp, {st.h, st.c}), w));
        },
        {x, h, c, cell.w_input, cell.w_hidden, cell.bias}, 1e-5, 1e-5));
  }
  return out;
}

// Full generator path (encoders + pooling + decoder + variety loss), checked
// over every parameter on a 2-agent scene.
inline GradCheckResult generator_gradcheck() {
  const ModelConfig cfg = gradcheck_model_config();
  GeneratorModel gen(cfg, 515);
  SceneWindow w = gradcheck_scene(cfg);
  std::vector<Tensor> noise;
  for (std::size_t a = 0; a < w.agents.size(); ++a)
    noise.push_back(sample_noise(77, {a}, cfg.d_z));

  auto f = [&](Tape& tape) {
    auto scene = generate(tape, w, gen, noise);
    Tensor acc;
    for (std::size_t i = 0; i < w.agents.size(); ++i) {
      std::vector<std::vector<Tensor>> samples = {scene.futures[i]};
      Tensor v = variety_loss(tape, w.agents[i].fut_pos, samples);
      acc = acc.defined() ? add(tape, acc, v) : v;
    }
    return acc;
  };
  GradCheckResult r;
  r.name = "generator.end_to_end";
  r.tolerance = 1e-4;
  r.max_rel_err = grad_check_leaves(f, gen.params.tensors(), 1e-5);
  return r;
}

inline std::vector<GradCheckResult> run_verification_suite() {
  std::vector<GradCheckResult> out = primitive_gradchecks();
  out.push_back(generator_gradcheck());
  return out;
}

}  // namespace kigan
