#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.h"
#include "hvp/graph.h"
#include "hvp/nn.h"
#include "hvp/rng.h"

using namespace hvp;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

}  // namespace

TEST_CASE("elementwise op values") {
  Tape t;
  Value a = t.input(Tensor({3}, {1.0, -2.0, 0.5}));
  Value b = t.input(Tensor({3}, {2.0, 3.0, -1.0}));
  Value s = add(a, b);
  CHECK(s.val()[0] == doctest::Approx(3.0));
  CHECK(mul(a, b).val()[1] == doctest::Approx(-6.0));
  CHECK(sub(a, b).val()[2] == doctest::Approx(1.5));
  CHECK(affine(a, 2.0, 1.0).val()[0] == doctest::Approx(3.0));
  CHECK(sigmoid(t.scalar_input(0.0)).val()[0] == doctest::Approx(0.5));
  CHECK(tanh_(t.scalar_input(0.0)).val()[0] == doctest::Approx(0.0));
  CHECK(sum(a).val()[0] == doctest::Approx(-0.5));
  CHECK(mean(a).val()[0] == doctest::Approx(-0.5 / 3.0));
  CHECK(dot(a, b).val()[0] == doctest::Approx(2.0 - 6.0 - 0.5));
}

TEST_CASE("matvec against Eigen-free reference") {
  Tape t;
  Value w = t.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Value x = t.input(Tensor({3}, {1, 0, -1}));
  Value y = matvec(w, x);
  CHECK(y.val()[0] == doctest::Approx(-2.0));
  CHECK(y.val()[1] == doctest::Approx(-2.0));
  Value z = matvec_t(w, t.input(Tensor({2}, {1, 1})));
  CHECK(z.val()[0] == doctest::Approx(5.0));
  CHECK(z.val()[1] == doctest::Approx(7.0));
  CHECK(z.val()[2] == doctest::Approx(9.0));
}

TEST_CASE("gradcheck composite vector network") {
  Rng rng(7);
  Param w1("w1", random_tensor({5, 4}, rng, 0.5));
  Param b1("b1", random_tensor({5}, rng, 0.2));
  Param w2("w2", random_tensor({5}, rng, 0.5));
  Tensor x = random_tensor({4}, rng);

  auto build = [&](Tape& t) {
    Value xi = t.input(x);
    Value h = tanh_(add(matvec(t.use(w1), xi), t.use(b1)));
    Value g = sigmoid(h);
    Value m = mul(h, g);
    Value out = dot(t.use(w2), m);
    return mul(out, out);
  };

  ParamList ps = {&w1, &b1, &w2};
  auto objective = [&]() {
    Tape t;
    return build(t).scalar();
  };
  auto compute = [&]() {
    zero_grads(ps);
    Tape t;
    Value loss = build(t);
    auto gm = t.backward(loss);
    t.accumulate_param_grads(gm);
  };
  Rng pick(3);
  auto res = test::finite_diff_check(objective, compute, ps, 6, pick, 1e-5);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck concat slice sqrt recip smul") {
  Rng rng(17);
  Param a("a", random_tensor({6}, rng, 0.4));
  Param b("b", random_tensor({3}, rng, 0.4));

  auto build = [&](Tape& t) {
    Value av = t.use(a);
    Value bv = t.use(b);
    Value c = concat(av, bv);
    Value s = slice(c, 2, 5);
    Value q = sqrt_(add(mul(s, s), affine(s, 0.0, 0.1)));
    Value r = recip(affine(q, 1.0, 1.0));
    Value sc = mean(r);
    return sum(smul(sc, q));
  };

  ParamList ps = {&a, &b};
  auto objective = [&]() {
    Tape t;
    return build(t).scalar();
  };
  auto compute = [&]() {
    zero_grads(ps);
    Tape t;
    auto gm = t.backward(build(t));
    t.accumulate_param_grads(gm);
  };
  Rng pick(4);
  auto res = test::finite_diff_check(objective, compute, ps, 5, pick, 1e-5);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck conv upsample cmul path") {
  Rng rng(23);
  Conv2d conv("conv", 2, 3, 3, 2, 1, rng);
  Conv2d conv2("conv2", 3, 2, 3, 1, 1, rng);
  Tensor x = random_tensor({2, 8, 8}, rng, 0.5);
  Tensor target = random_tensor({2, 8, 8}, rng, 0.3);

  auto build = [&](Tape& t) {
    Value xi = t.input(x);
    Value h = leaky_relu(conv(t, xi), 0.1);   // [3,4,4]
    Value u = upsample2(h);                   // [3,8,8]
    Value y = conv2(t, u);                    // [2,8,8]
    Value m = sigmoid(slice(reshape(y, {2 * 8 * 8}), 0, 8 * 8));
    Value mi = reshape(m, {1, 8, 8});
    Value z = cmul(xi, mi);
    return mse(z, t.input(target));
  };

  ParamList ps;
  conv.params(ps);
  conv2.params(ps);
  auto objective = [&]() {
    Tape t;
    return build(t).scalar();
  };
  auto compute = [&]() {
    zero_grads(ps);
    Tape t;
    auto gm = t.backward(build(t));
    t.accumulate_param_grads(gm);
  };
  Rng pick(9);
  auto res = test::finite_diff_check(objective, compute, ps, 5, pick, 1e-5);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("gradcheck LSTM unrolled three steps") {
  Rng rng(31);
  LSTMCell cell("lstm", 3, 4, rng);
  Dense head("head", 4, 1, rng);
  std::vector<Tensor> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(random_tensor({3}, rng, 0.8));

  auto build = [&](Tape& t) {
    auto st = cell.zero_state(t);
    Value acc = t.scalar_input(0.0);
    for (auto& x : xs) {
      st = cell.step(t, t.input(x), st);
      acc = add(acc, head(t, st.h));
    }
    return mul(acc, acc);
  };

  ParamList ps;
  cell.params(ps);
  head.params(ps);
  auto objective = [&]() {
    Tape t;
    return build(t).scalar();
  };
  auto compute = [&]() {
    zero_grads(ps);
    Tape t;
    auto gm = t.backward(build(t));
    t.accumulate_param_grads(gm);
  };
  Rng pick(11);
  auto res = test::finite_diff_check(objective, compute, ps, 5, pick, 1e-5);
  CHECK(res.max_rel_err < 1e-6);
}

// Gradient penalty style double-backward: d/dtheta of (||d f/d x|| - 1)^2.
TEST_CASE("second-order gradcheck through input gradient norm") {
  Rng rng(41);
  Param w("w", random_tensor({4, 4}, rng, 0.6));
  Param v("v", random_tensor({4}, rng, 0.6));
  Tensor x = random_tensor({4}, rng);

  auto build = [&](Tape& t) {
    Value xi = t.input(x, true);
    Value h = tanh_(matvec(t.use(w), xi));
    Value score = dot(t.use(v), h);
    auto gm = t.backward(score);
    Value gx = gm.grad(xi);
    Value norm = sqrt_(dot(gx, gx));
    Value pen = sub(norm, t.scalar_input(1.0));
    return add(score, mul(pen, pen));
  };

  ParamList ps = {&w, &v};
  auto objective = [&]() {
    Tape t;
    return build(t).scalar();
  };
  auto compute = [&]() {
    zero_grads(ps);
    Tape t;
    Value loss = build(t);
    auto gm = t.backward(loss);
    t.accumulate_param_grads(gm);
  };
  Rng pick(13);
  auto res = test::finite_diff_check(objective, compute, ps, 8, pick, 1e-5);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("tape reset reclaims nodes") {
  Tape t;
  t.input(Tensor({64}));
  CHECK(t.num_nodes() == 1);
  t.reset();
  CHECK(t.num_nodes() == 0);
  CHECK(t.live_bytes() == 0);
}
