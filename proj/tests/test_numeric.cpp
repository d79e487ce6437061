#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "kigan/adam.hpp"
#include "kigan/gradcheck.hpp"
#include "kigan/nn.hpp"
#include "kigan/rng.hpp"
#include "kigan/tensor.hpp"

using namespace kigan;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("elementwise basics") {
  Tape tp;
  Tensor a = Tensor::from({3}, {1, 2, 3});
  Tensor b = Tensor::from({3}, {4, 5, 6});
  Tensor m = mul(tp, a, b);
  CHECK(m.at(0) == 4.0);
  CHECK(m.at(1) == 10.0);
  CHECK(m.at(2) == 18.0);

  Tensor z = add(tp, a, 0.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(z.at(i) == a.at(i));

  Tensor c = Tensor::from({2}, {1, 2});
  CHECK_THROWS_AS(add(tp, a, c), error);
  try {
    add(tp, a, c);
  } catch (const error& e) {
    CHECK(e.kind() == error_kind::dimension);
  }
}

TEST_CASE("tanh gradient vs finite differences") {
  Tensor x = Tensor::scalar(0.5);
  const double err = grad_check([](Tape& tp, const Tensor& in) { return tanh(tp, in); }, x, 1e-5);
  CHECK(err < 1e-6);

  // Analytic derivative 1 - tanh(0.5)^2.
  Tape tp;
  Tensor xr = Tensor::scalar(0.5, true);
  Tensor y = tanh(tp, xr);
  tp.backward(y);
  CHECK(xr.grad()[0] == doctest::Approx(0.7864477329659274).epsilon(1e-12));
}

TEST_CASE("matmul identity and hand arithmetic") {
  Tape tp;
  Rng rng(7);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor ai = matmul(tp, a, eye);
  for (std::size_t i = 0; i < 9; ++i) CHECK(ai.at(i) == doctest::Approx(a.at(i)).epsilon(1e-15));

  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor v = Tensor::from({2, 1}, {5, 6});
  Tensor mv = matmul(tp, m, v);
  CHECK(mv.at(0) == 17.0);
  CHECK(mv.at(1) == 39.0);

  Tensor bad = Tensor::from({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(matmul(tp, m, bad), error);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 2});
  const double err_a = grad_check_leaves(
      [&](Tape& tp) { return sum(tp, matmul(tp, a, b)); }, {a}, 1e-5);
  CHECK(err_a < 1e-6);
  const double err_b = grad_check_leaves(
      [&](Tape& tp) { return sum(tp, matmul(tp, a, b)); }, {b}, 1e-5);
  CHECK(err_b < 1e-6);
}

TEST_CASE("softmax values and stability") {
  Tape tp;
  Tensor u = softmax(tp, Tensor::from({3}, {0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor big = softmax(tp, Tensor::from({2}, {1000, 1000}));
  CHECK(big.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(big.at(1) == doctest::Approx(0.5).epsilon(1e-15));

  // Long-double evaluation of exp/sum as the independent reference.
  const long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
  const long double denom = e1 + e2 + e3;
  Tensor s = softmax(tp, Tensor::from({3}, {1, 2, 3}));
  CHECK(s.at(0) == doctest::Approx(static_cast<double>(e1 / denom)).epsilon(1e-10));
  CHECK(s.at(1) == doctest::Approx(static_cast<double>(e2 / denom)).epsilon(1e-10));
  CHECK(s.at(2) == doctest::Approx(static_cast<double>(e3 / denom)).epsilon(1e-10));
  CHECK(s.at(0) == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s.at(1) == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s.at(2) == doctest::Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("softmax sums to one along the axis") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Tape tp;
    Tensor x = random_tensor(rng, {5});
    for (double& v : x.values()) v *= 50.0;
    Tensor s = softmax(tp, x);
    double total = 0.0;
    for (double v : s.values()) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  // 2-D, axis 0: each column sums to one.
  Tape tp;
  Rng rng2(4);
  Tensor m = random_tensor(rng2, {4, 3});
  Tensor s = softmax(tp, m, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) total += s.at(i, j);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax gradient vs finite differences") {
  Rng rng(13);
  Tensor x = random_tensor(rng, {5});
  Tensor w = random_tensor(rng, {5});
  const double err = grad_check_leaves(
      [&](Tape& tp) { return sum(tp, mul(tp, softmax(tp, x), w)); }, {x}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("max_pool_rows") {
  Tape tp;
  Tensor m = Tensor::from({2, 2}, {1, 5, 3, 2});
  Tensor p = max_pool_rows(tp, m);
  CHECK(p.at(0) == 3.0);
  CHECK(p.at(1) == 5.0);

  Tensor single = Tensor::from({1, 3}, {7, 8, 9});
  Tensor ps = max_pool_rows(tp, single);
  for (std::size_t j = 0; j < 3; ++j) CHECK(ps.at(j) == single.at(0, j));

  CHECK_THROWS_AS(max_pool_rows(tp, Tensor::zeros({0, 3})), error);

  // Tie routes gradient to the lowest row index.
  Tape tg;
  Tensor tie = Tensor::from({2, 1}, {4, 4}, true);
  Tensor pooled = max_pool_rows(tg, tie);
  tg.backward(sum(tg, pooled));
  CHECK(tie.grad()[0] == 1.0);
  CHECK(tie.grad()[1] == 0.0);
}

TEST_CASE("max_pool_rows gradient vs finite differences") {
  Rng rng(17);
  Tensor x = random_tensor(rng, {4, 3});
  Tensor w = random_tensor(rng, {3});
  const double err = grad_check_leaves(
      [&](Tape& tp) { return sum(tp, mul(tp, max_pool_rows(tp, x), w)); }, {x}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("embedding lookup") {
  Tape tp;
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor row = embedding_lookup(tp, eye, 1);
  CHECK(row.at(0) == 0.0);
  CHECK(row.at(1) == 1.0);
  CHECK(row.at(2) == 0.0);

  Tensor again = embedding_lookup(tp, eye, 1);
  for (std::size_t j = 0; j < 3; ++j) CHECK(again.at(j) == row.at(j));

  CHECK_THROWS_AS(embedding_lookup(tp, eye, 3), error);

  Rng rng(5);
  Tensor table = random_tensor(rng, {4, 3});
  table.set_requires_grad(true);
  Tape tg;
  tg.backward(sum(tg, embedding_lookup(tg, table, 2)));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(table.grad()[r * 3 + c] == (r == 2 ? 1.0 : 0.0));
}

TEST_CASE("lstm_step zero fixed point and gate identity") {
  ParamSet ps;
  Rng rng(1);
  LstmParams cell;
  cell.hidden = 4;
  cell.w_input = ps.add("w_input", Tensor::zeros({16, 3}));
  cell.w_hidden = ps.add("w_hidden", Tensor::zeros({16, 4}));
  cell.bias = ps.add("bias", Tensor::zeros({16}));

  Tape tp;
  auto st = lstm_step(tp, Tensor::zeros({3}), Tensor::zeros({4}), Tensor::zeros({4}), cell);
  for (double v : st.h.values()) CHECK(v == 0.0);
  for (double v : st.c.values()) CHECK(v == 0.0);

  // Large negative output-gate bias forces h' ~ 0 whatever c' is.
  ParamSet ps2;
  Rng rng2(2);
  LstmParams gated(ps2, "cell", 3, 4, rng2);
  for (std::size_t i = 12; i < 16; ++i) gated.bias.values()[i] = -60.0;
  Tape tp2;
  Rng rng3(3);
  auto st2 = lstm_step(tp2, random_tensor(rng3, {3}), random_tensor(rng3, {4}),
                       random_tensor(rng3, {4}), gated);
  for (double v : st2.h.values()) CHECK(std::abs(v) < 1e-20);
}

TEST_CASE("lstm_step full Jacobian vs finite differences") {
  ParamSet ps;
  Rng rng(23);
  LstmParams cell(ps, "cell", 3, 4, rng);
  Tensor x = random_tensor(rng, {3});
  Tensor h = random_tensor(rng, {4});
  Tensor c = random_tensor(rng, {4});

  double worst = 0.0;
  for (std::size_t coord = 0; coord < 8; ++coord) {
    auto f = [&, coord](Tape& tp) {
      auto st = lstm_step(tp, x, h, c, cell);
      Tensor both = concat(tp, {st.h, st.c});
      return slice(tp, both, coord, 1);
    };
    std::vector<Tensor> leaves = {x, h, c, cell.w_input, cell.w_hidden, cell.bias};
    worst = std::max(worst, grad_check_leaves(f, leaves, 1e-5));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("adam fixed point and first step") {
  std::vector<Tensor> params = {Tensor::from({2}, {1.0, -2.0}, true)};
  AdamState st;
  st.init(params, 0.001);

  // Zero gradient leaves parameters unchanged.
  params[0].zero_grad();
  adam_step(params, st);
  CHECK(params[0].at(0) == 1.0);
  CHECK(params[0].at(1) == -2.0);

  // First step with g=1 moves by ~ -lr.
  std::vector<Tensor> p2 = {Tensor::scalar(0.0, true)};
  AdamState st2;
  st2.init(p2, 0.001);
  p2[0].grad()[0] = 1.0;
  adam_step(p2, st2);
  CHECK(p2[0].at(0) == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam minimizes x^2 and matches the scalar reference") {
  // Independent scalar-reference Adam.
  double rx = 1.0, rm = 0.0, rv = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;

  std::vector<Tensor> params = {Tensor::scalar(1.0, true)};
  AdamState st;
  st.init(params, lr);

  for (int step = 1; step <= 100; ++step) {
    // Library side: loss = x^2 via the tape.
    params[0].zero_grad();
    Tape tp;
    Tensor loss = mul(tp, params[0], params[0]);
    tp.backward(loss);
    adam_step(params, st);

    // Reference side.
    const double g = 2.0 * rx;
    rm = b1 * rm + (1 - b1) * g;
    rv = b2 * rv + (1 - b2) * g * g;
    const double mh = rm / (1 - std::pow(b1, step));
    const double vh = rv / (1 - std::pow(b2, step));
    rx -= lr * mh / (std::sqrt(vh) + eps);

    CHECK(params[0].at(0) == doctest::Approx(rx).epsilon(1e-12));
  }
  CHECK(std::abs(params[0].at(0)) < 0.05);
}

TEST_CASE("grad_check on analytic cases") {
  Tensor x = Tensor::scalar(3.0);
  const double err = grad_check(
      [](Tape& tp, const Tensor& in) { return mul(tp, in, in); }, x, 1e-5);
  CHECK(err < 1e-7);

  Tape tp;
  Tensor xr = Tensor::scalar(3.0, true);
  Tensor y = mul(tp, xr, xr);
  tp.backward(y);
  CHECK(xr.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

  // sum(softmax(x)) is constant; gradient vanishes everywhere.
  Rng rng(29);
  Tensor z = random_tensor(rng, {6});
  z.set_requires_grad(true);
  Tape tc;
  tc.backward(sum(tc, softmax(tc, z)));
  for (double g : z.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("planted wrong backward rule is reported by name") {
  // A fake op whose forward is y = 2x but whose recorded backward claims 3.
  Tensor x = Tensor::scalar(1.25);
  auto broken = [](Tape& tp, Tensor in) {
    Tensor out = Tensor::zeros({1}, true);
    out.values()[0] = 2.0 * in.at(0);
    tp.record([in, out]() mutable {
      if (in.requires_grad()) in.grad()[0] += 3.0 * out.grad()[0];
    });
    return out;
  };
  GradCheckResult r;
  r.name = "planted_bad_backward";
  r.tolerance = 1e-6;
  r.max_rel_err = grad_check_leaves([&](Tape& tp) { return broken(tp, x); }, {x}, 1e-5);
  CHECK(!r.ok());
  CHECK(r.max_rel_err > 0.3);  // claims 3, truth 2
  CHECK(r.name == "planted_bad_backward");
}

TEST_CASE("composite tape gradients match finite differences") {
  Rng rng(31);
  Tensor x = random_tensor(rng, {4});
  Tensor w = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {3});
  auto f = [&](Tape& tp) {
    Tensor hidden = tanh(tp, add(tp, matmul(tp, w, x), b));
    Tensor gates = sigmoid(tp, hidden);
    return l2_distance(tp, gates, softmax(tp, hidden));
  };
  const double err = grad_check_leaves(f, {x, w, b}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("structural ops round trip and differentiate") {
  Rng rng(37);
  Tensor a = random_tensor(rng, {3});
  Tensor b = random_tensor(rng, {2});
  Tape tp;
  Tensor cat = concat(tp, {a, b});
  CHECK(cat.size() == 5);
  Tensor back_a = slice(tp, cat, 0, 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back_a.at(i) == a.at(i));

  Tensor w = random_tensor(rng, {5});
  const double err = grad_check_leaves(
      [&](Tape& t) { return sum(t, mul(t, concat(t, {a, b}), w)); }, {a, b}, 1e-5);
  CHECK(err < 1e-6);

  std::vector<Tensor> rows = {a, random_tensor(rng, {3})};
  const double err2 = grad_check_leaves(
      [&](Tape& t) { return sum(t, max_pool_rows(t, stack_rows(t, rows))); }, {rows[0], rows[1]},
      1e-5);
  CHECK(err2 < 1e-6);
}

TEST_CASE("non-finite values surface as numeric errors naming the op") {
  Tape tp;
  Tensor huge = Tensor::from({1}, {1e300});
  try {
    exp(tp, huge);
    CHECK(false);
  } catch (const error& e) {
    CHECK(e.kind() == error_kind::numeric);
    CHECK(std::string(e.what()).find("exp") != std::string::npos);
  }

  try {
    log(tp, Tensor::from({1}, {0.0}));
    CHECK(false);
  } catch (const error& e) {
    CHECK(e.kind() == error_kind::numeric);
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }

  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), error);
}

TEST_CASE("operations are bit-deterministic") {
  auto run = []() {
    Rng rng(99);
    Tensor x = random_tensor(rng, {6});
    Tensor w = random_tensor(rng, {6, 6});
    Tape tp;
    Tensor y = softmax(tp, tanh(tp, matmul(tp, w, x)));
    return std::vector<double>(y.values().begin(), y.values().end());
  };
  auto first = run();
  auto second = run();
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("l2_distance handles coincident inputs") {
  Tensor a = Tensor::from({3}, {1, 2, 3}, true);
  Tensor b = Tensor::from({3}, {1, 2, 3});
  Tape tp;
  Tensor d = l2_distance(tp, a, b);
  CHECK(d.item() == 0.0);
  tp.backward(d);
  for (double g : a.grad()) CHECK(g == 0.0);

  Tensor c = Tensor::from({2}, {3, 4});
  Tensor z = Tensor::from({2}, {0, 0});
  Tape tp2;
  CHECK(l2_distance(tp2, c, z).item() == doctest::Approx(5.0).epsilon(1e-15));
}
