#include <doctest.h>

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "fpnr/autodiff.hpp"
#include "fpnr/common.hpp"
#include "fpnr/rng.hpp"
#include "oracles.hpp"

using namespace fpnr;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

void check_close(double got, double want, double rel) {
  CHECK(std::abs(got - want) <= rel * std::max(1.0, std::abs(want)));
}

// Analytic gradient of `p` for the loss built by `build`, checked coordinate
// by coordinate against central differences of the rebuilt forward pass.
void check_param_gradient(Parameter& p, const std::function<Var(Graph&)>& build,
                          double tol = 1e-4) {
  Graph g;
  Var loss = build(g);
  g.backward(loss);
  std::vector<double> analytic(p.grad.data(), p.grad.data() + p.grad.size());
  auto eval = [&build]() {
    Graph fresh;
    Var l = build(fresh);
    return fresh.value(l)[0];
  };
  for (std::int64_t i = 0; i < p.value.size(); ++i) {
    const double fd = oracle::finite_difference(p.value, i, eval);
    check_close(analytic[static_cast<std::size_t>(i)], fd, tol);
  }
}

// Same check for a non-parameter graph input.
void check_input_gradient(Tensor& x, const std::function<Var(Graph&, Var)>& build,
                          double tol = 1e-4) {
  Graph g;
  Var xv = g.variable(x);
  Var loss = build(g, xv);
  g.backward(loss);
  const Tensor* grad = g.grad(xv);
  REQUIRE(grad != nullptr);
  std::vector<double> analytic(grad->data(), grad->data() + grad->size());
  auto eval = [&]() {
    Graph fresh;
    Var fx = fresh.variable(x);
    Var l = build(fresh, fx);
    return fresh.value(l)[0];
  };
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double fd = oracle::finite_difference(x, i, eval);
    check_close(analytic[static_cast<std::size_t>(i)], fd, tol);
  }
}

ConvSpec random_conv_spec(Rng& rng, int& h, int& w) {
  while (true) {
    ConvSpec s;
    s.in_channels = 1 + static_cast<int>(rng.uniform_int(3));
    s.out_channels = 1 + static_cast<int>(rng.uniform_int(3));
    const int k = rng.uniform_int(2) == 0 ? 1 : 3;
    s.kernel_h = k;
    s.kernel_w = k;
    s.dilation = 1 + static_cast<int>(rng.uniform_int(2));
    s.stride = 1 + static_cast<int>(rng.uniform_int(2));
    s.padding = static_cast<int>(rng.uniform_int(3));
    h = 4 + static_cast<int>(rng.uniform_int(4));
    w = 4 + static_cast<int>(rng.uniform_int(4));
    if (s.out_extent_h(h) >= 1 && s.out_extent_w(w) >= 1) return s;
  }
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 with pad 1 sums nine ones at the center") {
  Graph g;
  Parameter w(Tensor({1, 1, 3, 3}, 1.0));
  Parameter b(Tensor({1}));
  ConvSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 1;
  spec.padding = 1;
  Var out = g.conv2d(g.input(Tensor({1, 1, 3, 3}, 1.0)), w, b, spec);
  CHECK(g.value(out).at(0, 0, 1, 1) == 9.0);
  CHECK(g.value(out).at(0, 0, 0, 0) == 4.0);
}

TEST_CASE("conv2d centered delta kernel preserves the input at any dilation") {
  Rng rng(5);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  for (int dilation : {1, 2}) {
    Graph g;
    Tensor wt({1, 1, 3, 3});
    wt.at(0, 0, 1, 1) = 1.0;
    Parameter w(wt);
    Parameter b(Tensor({1}));
    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    spec.dilation = dilation;
    spec.padding = dilation;
    Var out = g.conv2d(g.input(x), w, b, spec);
    CHECK(oracle::max_abs_diff(g.value(out), x) == 0.0);
  }
}

TEST_CASE("conv2d with dilation 2 matches the direct-summation oracle") {
  Rng rng(7);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  Parameter w(random_tensor({3, 2, 3, 3}, rng));
  Parameter b(random_tensor({3}, rng));
  ConvSpec spec;
  spec.in_channels = 2;
  spec.out_channels = 3;
  spec.dilation = 2;
  spec.padding = 2;
  Graph g;
  Var out = g.conv2d(g.input(x), w, b, spec);
  CHECK(oracle::relative_error(g.value(out), oracle::conv2d(x, w.value, b.value, spec)) < 1e-6);
}

TEST_CASE("conv2d matches the oracle on 50 random instances") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    int h = 0, w = 0;
    ConvSpec spec = random_conv_spec(rng, h, w);
    Tensor x = random_tensor({1 + static_cast<int>(rng.uniform_int(2)), spec.in_channels, h, w}, rng);
    Parameter wt(random_tensor({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}, rng));
    Parameter b(random_tensor({spec.out_channels}, rng));
    Graph g;
    Var out = g.conv2d(g.input(x), wt, b, spec);
    CHECK(oracle::relative_error(g.value(out), oracle::conv2d(x, wt.value, b.value, spec)) < 1e-6);
  }
}

TEST_CASE("conv2d names offending dimensions on mismatch") {
  Graph g;
  Parameter w(Tensor({1, 2, 3, 3}));
  Parameter b(Tensor({1}));
  ConvSpec spec;
  spec.in_channels = 3;
  spec.out_channels = 1;
  try {
    g.conv2d(g.input(Tensor({1, 3, 4, 4})), w, b, spec);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("pixel_shuffle unrolls four channels into a 2x2 block") {
  Graph g;
  Tensor x({1, 4, 1, 1}, std::vector<double>{10, 20, 30, 40});
  Var out = g.pixel_shuffle(g.input(x), 2);
  const Tensor& y = g.value(out);
  CHECK(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(y.at(0, 0, 0, 0) == 10);
  CHECK(y.at(0, 0, 0, 1) == 20);
  CHECK(y.at(0, 0, 1, 0) == 30);
  CHECK(y.at(0, 0, 1, 1) == 40);
}

TEST_CASE("pixel_shuffle with r=1 is the identity") {
  Rng rng(19);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Graph g;
  Var out = g.pixel_shuffle(g.input(x), 1);
  CHECK(oracle::max_abs_diff(g.value(out), x) == 0.0);
}

TEST_CASE("pixel_shuffle matches the index-map oracle and inverts exactly") {
  Rng rng(23);
  Tensor x = random_tensor({1, 8, 3, 3}, rng);
  Graph g;
  Var out = g.pixel_shuffle(g.input(x), 2);
  CHECK(oracle::max_abs_diff(g.value(out), oracle::pixel_shuffle(x, 2)) == 0.0);
  CHECK(oracle::max_abs_diff(oracle::pixel_unshuffle(g.value(out), 2), x) == 0.0);

  for (int trial = 0; trial < 50; ++trial) {
    const int r = 1 + static_cast<int>(rng.uniform_int(3));
    const int c = (1 + static_cast<int>(rng.uniform_int(3))) * r * r;
    Tensor t = random_tensor({1 + static_cast<int>(rng.uniform_int(2)), c,
                              1 + static_cast<int>(rng.uniform_int(4)),
                              1 + static_cast<int>(rng.uniform_int(4))},
                             rng);
    Graph g2;
    Var o2 = g2.pixel_shuffle(g2.input(t), r);
    CHECK(oracle::max_abs_diff(g2.value(o2), oracle::pixel_shuffle(t, r)) == 0.0);
    CHECK(oracle::max_abs_diff(oracle::pixel_unshuffle(g2.value(o2), r), t) == 0.0);
  }
}

TEST_CASE("pixel_shuffle rejects channel counts not divisible by r squared") {
  Graph g;
  CHECK_THROWS_AS(g.pixel_shuffle(g.input(Tensor({1, 6, 2, 2})), 2), Error);
}

TEST_CASE("max_pool2 hand case and oracle equivalence") {
  Graph g;
  Var out = g.max_pool2(g.input(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})));
  CHECK(g.value(out).shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(g.value(out)[0] == 4.0);

  Graph g2;
  Var c = g2.max_pool2(g2.input(Tensor({1, 2, 4, 4}, 3.5)));
  for (std::int64_t i = 0; i < g2.value(c).size(); ++i) CHECK(g2.value(c)[i] == 3.5);

  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({1 + static_cast<int>(rng.uniform_int(2)),
                              1 + static_cast<int>(rng.uniform_int(3)),
                              2 + static_cast<int>(rng.uniform_int(6)),
                              2 + static_cast<int>(rng.uniform_int(6))},
                             rng);
    Graph g3;
    Var o = g3.max_pool2(g3.input(x));
    CHECK(oracle::max_abs_diff(g3.value(o), oracle::max_pool2(x)) == 0.0);
  }
}

TEST_CASE("global_avg_pool hand case and oracle equivalence") {
  Graph g;
  Var out = g.global_avg_pool(g.input(Tensor({1, 1, 2, 2}, std::vector<double>{0, 2, 4, 6})));
  CHECK(g.value(out)[0] == 3.0);

  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({1 + static_cast<int>(rng.uniform_int(3)),
                              1 + static_cast<int>(rng.uniform_int(4)),
                              1 + static_cast<int>(rng.uniform_int(5)),
                              1 + static_cast<int>(rng.uniform_int(5))},
                             rng);
    Graph g2;
    Var o = g2.global_avg_pool(g2.input(x));
    CHECK(oracle::relative_error(g2.value(o), oracle::global_avg_pool(x)) < 1e-6);
  }
}

TEST_CASE("dense affine map examples and oracle equivalence") {
  Graph g;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Parameter w(eye);
  Parameter b(Tensor({3}));
  Rng rng(37);
  Tensor x = random_tensor({2, 3}, rng);
  Var out = g.dense(g.input(x), w, b);
  CHECK(oracle::max_abs_diff(g.value(out), x) == 0.0);

  Graph g2;
  Parameter wz(Tensor({3, 2}));
  Parameter bz(Tensor({2}, std::vector<double>{5.0, -1.0}));
  Var o2 = g2.dense(g2.input(x), wz, bz);
  for (int n = 0; n < 2; ++n) {
    CHECK(g2.value(o2).at(n, 0) == 5.0);
    CHECK(g2.value(o2).at(n, 1) == -1.0);
  }

  for (int trial = 0; trial < 50; ++trial) {
    const int batch = 1 + static_cast<int>(rng.uniform_int(3));
    const int nin = 1 + static_cast<int>(rng.uniform_int(5));
    const int nout = 1 + static_cast<int>(rng.uniform_int(5));
    Tensor xt = random_tensor({batch, nin}, rng);
    Parameter wt(random_tensor({nin, nout}, rng));
    Parameter bt(random_tensor({nout}, rng));
    Graph g3;
    Var o = g3.dense(g3.input(xt), wt, bt);
    CHECK(oracle::relative_error(g3.value(o), oracle::dense(xt, wt.value, bt.value)) < 1e-6);
  }
}

TEST_CASE("activations follow their definitions") {
  Graph g;
  Tensor x({1, 4}, std::vector<double>{-1.0, 2.0, 0.0, -0.5});
  const Tensor& r = g.value(g.activate(g.input(x), Activation::relu));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);
  CHECK(r[2] == 0.0);
  CHECK(r[3] == 0.0);

  const Tensor& s = g.value(g.activate(g.input(Tensor({1, 1})), Activation::sigmoid));
  CHECK(s[0] == 0.5);

  Rng rng(41);
  Tensor batch = random_tensor({4, 8}, rng, 3.0);
  const Tensor& sb = g.value(g.activate(g.input(batch), Activation::sigmoid));
  for (std::int64_t i = 0; i < sb.size(); ++i) {
    CHECK(sb[i] > 0.0);
    CHECK(sb[i] < 1.0);
  }

  const Tensor& lin = g.value(g.activate(g.input(batch), Activation::linear));
  CHECK(oracle::max_abs_diff(lin, batch) == 0.0);
}

TEST_CASE("concat_channels keeps argument order and splits back") {
  Graph g;
  Tensor a({2, 1, 2, 2}, 1.5);
  Tensor b({2, 2, 2, 2}, -2.0);
  const std::array<Var, 2> xs{g.input(a), g.input(b)};
  const Tensor& c = g.value(g.concat_channels(xs));
  CHECK(c.shape() == std::vector<int>{2, 3, 2, 2});
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        CHECK(c.at(n, 0, y, x) == 1.5);
        CHECK(c.at(n, 1, y, x) == -2.0);
        CHECK(c.at(n, 2, y, x) == -2.0);
      }

  const std::array<Var, 1> one{g.input(a)};
  CHECK(oracle::max_abs_diff(g.value(g.concat_channels(one)), a) == 0.0);
}

TEST_CASE("elementwise identities and channel broadcast") {
  Rng rng(43);
  Tensor x = random_tensor({2, 2, 3, 3}, rng);
  Graph g;
  Var xv = g.input(x);
  CHECK(oracle::max_abs_diff(g.value(g.mul(xv, g.input(Tensor({2, 2, 3, 3}, 1.0)))), x) == 0.0);
  CHECK(oracle::max_abs_diff(g.value(g.add(xv, g.input(Tensor({2, 2, 3, 3})))), x) == 0.0);

  Tensor ones({1, 2, 2, 2}, 1.0);
  Tensor chan({1, 2}, std::vector<double>{2.0, 3.0});
  Graph g2;
  const Tensor& scaled = g2.value(g2.mul_channel(g2.input(ones), g2.input(chan)));
  for (int y = 0; y < 2; ++y)
    for (int xx = 0; xx < 2; ++xx) {
      CHECK(scaled.at(0, 0, y, xx) == 2.0);
      CHECK(scaled.at(0, 1, y, xx) == 3.0);
    }
}

TEST_CASE("backward of sum(w * x) with constant x reproduces x as the gradient") {
  Rng rng(47);
  Tensor x = random_tensor({2, 5}, rng);
  Parameter w(random_tensor({2, 5}, rng));
  Graph g;
  Var loss = g.sum(g.mul(g.param(w), g.input(x)));
  g.backward(loss);
  CHECK(oracle::max_abs_diff(w.grad, x) == 0.0);
}

TEST_CASE("backward twice on one recording is a stale-tape error") {
  Graph g;
  Parameter w(Tensor({2}, 1.0));
  Var loss = g.sum(g.param(w));
  g.backward(loss);
  try {
    g.backward(loss);
    FAIL("expected stale-tape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::stale_tape);
  }
}

TEST_CASE("backward requires a scalar loss") {
  Graph g;
  Parameter w(Tensor({3}, 1.0));
  Var v = g.param(w);
  CHECK_THROWS_AS(g.backward(v), Error);
}

TEST_CASE("parameters off the loss path keep zero gradients") {
  Rng rng(53);
  Parameter used(random_tensor({4}, rng));
  Parameter unused(random_tensor({4}, rng));
  unused.grad.fill(99.0);
  Graph g;
  g.param(unused);
  Var loss = g.sum(g.param(used));
  g.backward(loss);
  for (std::int64_t i = 0; i < unused.grad.size(); ++i) CHECK(unused.grad[i] == 0.0);
  for (std::int64_t i = 0; i < used.grad.size(); ++i) CHECK(used.grad[i] == 1.0);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(59);
  Tensor x = random_tensor({1, 2, 6, 6}, rng);
  Parameter w(random_tensor({3, 2, 3, 3}, rng));
  Parameter b(random_tensor({3}, rng));
  ConvSpec spec;
  spec.in_channels = 2;
  spec.out_channels = 3;
  spec.dilation = 2;
  spec.padding = 2;
  Tensor target = random_tensor({1, 3, 6, 6}, rng);
  auto build = [&](Graph& g) {
    return g.mse_loss(g.conv2d(g.input(x), w, b, spec), target);
  };
  check_param_gradient(w, build);
  check_param_gradient(b, build);
  check_input_gradient(x, [&](Graph& g, Var xv) { return g.mse_loss(g.conv2d(xv, w, b, spec), target); });
}

TEST_CASE("strided conv2d gradients match finite differences") {
  Rng rng(61);
  Tensor x = random_tensor({2, 1, 7, 7}, rng);
  Parameter w(random_tensor({2, 1, 3, 3}, rng));
  Parameter b(random_tensor({2}, rng));
  ConvSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 2;
  spec.stride = 2;
  spec.padding = 1;
  Tensor target = random_tensor({2, 2, 4, 4}, rng);
  auto build = [&](Graph& g) {
    return g.mse_loss(g.conv2d(g.input(x), w, b, spec), target);
  };
  check_param_gradient(w, build);
  check_param_gradient(b, build);
}

TEST_CASE("dense gradients match finite differences") {
  Rng rng(67);
  Tensor x = random_tensor({3, 4}, rng);
  Parameter w(random_tensor({4, 5}, rng));
  Parameter b(random_tensor({5}, rng));
  Tensor target = random_tensor({3, 5}, rng);
  auto build = [&](Graph& g) { return g.mse_loss(g.dense(g.input(x), w, b), target); };
  check_param_gradient(w, build);
  check_param_gradient(b, build);
  check_input_gradient(x, [&](Graph& g, Var xv) { return g.mse_loss(g.dense(xv, w, b), target); });
}

TEST_CASE("max_pool2 routes gradients to the argmax") {
  Rng rng(71);
  Tensor x = random_tensor({1, 2, 5, 6}, rng);
  Tensor target = random_tensor({1, 2, 3, 3}, rng);
  check_input_gradient(x, [&](Graph& g, Var xv) { return g.mse_loss(g.max_pool2(xv), target); });

  Graph g;
  Var xv = g.variable(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  g.backward(g.sum(g.max_pool2(xv)));
  const Tensor* grad = g.grad(xv);
  REQUIRE(grad != nullptr);
  CHECK((*grad)[0] == 0.0);
  CHECK((*grad)[3] == 1.0);
}

TEST_CASE("global_avg_pool and pixel_shuffle gradients match finite differences") {
  Rng rng(73);
  Tensor x = random_tensor({2, 2, 3, 4}, rng);
  Tensor target = random_tensor({2, 2}, rng);
  check_input_gradient(x, [&](Graph& g, Var xv) { return g.mse_loss(g.global_avg_pool(xv), target); });

  Tensor xs = random_tensor({1, 8, 3, 3}, rng);
  Tensor ts = random_tensor({1, 2, 6, 6}, rng);
  check_input_gradient(xs, [&](Graph& g, Var xv) { return g.mse_loss(g.pixel_shuffle(xv, 2), ts); });
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(79);
  Tensor x({2, 6});
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double mag = 0.5 + 1.5 * rng.uniform();
    x[i] = rng.uniform_int(2) == 0 ? -mag : mag;
  }
  Tensor target = random_tensor({2, 6}, rng);
  for (Activation act : {Activation::relu, Activation::sigmoid, Activation::linear}) {
    check_input_gradient(x, [&](Graph& g, Var xv) { return g.mse_loss(g.activate(xv, act), target); });
  }
}

TEST_CASE("elementwise and concat gradients match finite differences") {
  Rng rng(83);
  Tensor a = random_tensor({1, 2, 3, 3}, rng);
  Tensor b = random_tensor({1, 2, 3, 3}, rng);
  Tensor chan = random_tensor({1, 2}, rng);
  Tensor target = random_tensor({1, 2, 3, 3}, rng);

  for (EwOp op : {EwOp::add, EwOp::mul}) {
    check_input_gradient(a, [&](Graph& g, Var av) {
      return g.mse_loss(g.elementwise(av, g.input(b), op), target);
    });
    check_input_gradient(b, [&](Graph& g, Var bv) {
      return g.mse_loss(g.elementwise(g.input(a), bv, op), target);
    });
    check_input_gradient(a, [&](Graph& g, Var av) {
      return g.mse_loss(g.elementwise(av, g.input(chan), op, Broadcast::channel_scalar), target);
    });
    check_input_gradient(chan, [&](Graph& g, Var cv) {
      return g.mse_loss(g.elementwise(g.input(a), cv, op, Broadcast::channel_scalar), target);
    });
  }

  Tensor concat_target = random_tensor({1, 4, 3, 3}, rng);
  check_input_gradient(a, [&](Graph& g, Var av) {
    const std::array<Var, 2> xs{av, g.input(b)};
    return g.mse_loss(g.concat_channels(xs), concat_target);
  });
}

TEST_CASE("scale and sum gradients match finite differences") {
  Rng rng(89);
  Tensor x = random_tensor({2, 3}, rng);
  check_input_gradient(x, [&](Graph& g, Var xv) { return g.sum(g.scale(xv, -2.5)); });
  Tensor target = random_tensor({2, 3}, rng);
  check_input_gradient(x, [&](Graph& g, Var xv) { return g.mse_loss(g.scale(xv, 0.25), target, 3.0); });
}
