#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "permrnn/rng.hpp"
#include "permrnn/tape.hpp"

using namespace permrnn;

TEST_CASE("matvec basics") {
  Tape tape;
  SUBCASE("identity") {
    Var m = tape.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    Var v = tape.constant(Tensor::vector({1, 2, 3}));
    const Tensor& out = tape.matvec(m, v).value();
    CHECK(out.data == std::vector<double>{1, 2, 3});
  }
  SUBCASE("row of twos") {
    Var m = tape.constant(Tensor::matrix(1, 3, {2, 2, 2}));
    Var v = tape.constant(Tensor::vector({1, 0, 1}));
    CHECK(tape.matvec(m, v).item() == 4.0);
  }
  SUBCASE("zero matrix annihilates") {
    Var m = tape.constant(Tensor::zeros({2, 3}));
    Var v = tape.constant(Tensor::vector({5, -7, 11}));
    CHECK(tape.matvec(m, v).value().data == std::vector<double>{0, 0});
  }
  SUBCASE("shape mismatch names both shapes") {
    Var m = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var v = tape.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_WITH_AS(tape.matvec(m, v), doctest::Contains("[2x3]"), std::invalid_argument);
  }
}

TEST_CASE("relu definition and subgradient") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({-1, 0, 2}));
  CHECK(tape.relu(x).value().data == std::vector<double>{0, 0, 2});

  Var pos = tape.constant(Tensor::vector({5}));
  CHECK(tape.relu(pos).item() == 5.0);

  Var neg = tape.constant(Tensor::vector({-3, -0.5, -100}));
  CHECK(tape.relu(neg).value().data == std::vector<double>{0, 0, 0});

  // subgradient at 0 is 0
  Tensor leaf = Tensor::vector({0.0});
  leaf.requires_grad = true;
  Tape t2;
  Var loss = t2.sum(t2.relu(t2.leaf(leaf)));
  leaf.zero_grad();
  t2.backward(loss);
  CHECK(leaf.grad[0] == 0.0);
}

TEST_CASE("elementwise ops") {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1, 2}));
  Var b = tape.constant(Tensor::vector({3, 4}));
  CHECK(tape.add(a, b).value().data == std::vector<double>{4, 6});
  CHECK(tape.sub(a, b).value().data == std::vector<double>{-2, -2});
  CHECK(tape.mul(a, b).value().data == std::vector<double>{3, 8});
  CHECK(tape.sum(tape.constant(Tensor::vector({1, 2, 3}))).item() == 6.0);
  CHECK(tape.mean(tape.constant(Tensor::vector({1, 2, 3}))).item() == 2.0);
  CHECK(tape.square(tape.constant(Tensor::vector({-2}))).item() == 4.0);
  CHECK(tape.abs(tape.constant(Tensor::vector({-2.5}))).item() == 2.5);
  CHECK_THROWS_AS(tape.add(a, tape.constant(Tensor::vector({1, 2, 3}))), std::invalid_argument);
}

TEST_CASE("backward analytic derivatives") {
  SUBCASE("d sum(x^2) = 2x") {
    Tensor x = Tensor::vector({1, 2});
    x.requires_grad = true;
    Tape tape;
    Var loss = tape.sum(tape.square(tape.leaf(x)));
    x.zero_grad();
    tape.backward(loss);
    CHECK(x.grad == std::vector<double>{2, 4});
  }
  SUBCASE("relu subgradient mask") {
    Tensor x = Tensor::vector({-1, 3});
    x.requires_grad = true;
    Tape tape;
    Var loss = tape.sum(tape.relu(tape.leaf(x)));
    x.zero_grad();
    tape.backward(loss);
    CHECK(x.grad == std::vector<double>{0, 1});
  }
  SUBCASE("product rule") {
    Tensor a = Tensor::vector({2});
    Tensor b = Tensor::vector({5});
    a.requires_grad = b.requires_grad = true;
    Tape tape;
    Var loss = tape.sum(tape.mul(tape.leaf(a), tape.leaf(b)));
    a.zero_grad();
    b.zero_grad();
    tape.backward(loss);
    CHECK(a.grad[0] == 5.0);
    CHECK(b.grad[0] == 2.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    Var v = tape.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
  }
}

TEST_CASE("backward accumulates across calls and is linear") {
  Tensor x = Tensor::vector({1.5, -2.0});
  x.requires_grad = true;

  // two separate backward passes accumulate
  Tape t1;
  Var l1 = t1.sum(t1.square(t1.leaf(x)));
  Tape t2;
  Var l2 = t2.sum(t2.abs(t2.leaf(x)));
  x.zero_grad();
  t1.backward(l1);
  t2.backward(l2);
  const std::vector<double> separate = x.grad;

  // one pass over the summed loss
  Tape t3;
  Var combined = t3.add(t3.sum(t3.square(t3.leaf(x))), t3.sum(t3.abs(t3.leaf(x))));
  x.zero_grad();
  t3.backward(combined);
  CHECK(x.grad == separate);
}

TEST_CASE("forward results are identical across repeated runs") {
  Rng rng(17);
  Tensor w = Tensor::zeros({4, 4});
  for (double& v : w.data) v = rng.normal();
  Tensor x = Tensor::vector({0.1, -0.2, 0.3, 0.7});

  auto run = [&]() {
    Tape tape;
    return tape.sum(tape.tanh(tape.matvec(tape.constant(w), tape.constant(x)))).item();
  };
  const double first = run();
  for (int i = 0; i < 5; ++i) CHECK(run() == first);
}

TEST_CASE("grad_check on a quadratic") {
  Tensor p = Tensor::vector({0.3, -1.2, 2.0});
  p.requires_grad = true;
  auto forward = [&](Tape& tape) {
    return tape.sum(tape.square(tape.leaf(p)));
  };
  CHECK(grad_check(forward, {&p}, 1e-5) <= 1e-6);
}

TEST_CASE("grad_check on a constant closure") {
  Tensor p = Tensor::vector({1.0});
  p.requires_grad = true;
  auto forward = [&](Tape& tape) {
    (void)tape.leaf(p);
    return tape.constant(3.5);
  };
  CHECK(grad_check(forward, {&p}, 1e-5) == 0.0);
}

TEST_CASE("grad_check across all differentiable op kinds") {
  Rng rng(23);
  Tensor w = Tensor::matrix(3, 3, std::vector<double>(9));
  for (double& v : w.data) v = rng.uniform(-1, 1);
  Tensor b = Tensor::vector({0.3, -0.2, 0.5});
  Tensor x = Tensor::vector({0.7, -0.4, 1.1});
  w.requires_grad = b.requires_grad = x.requires_grad = true;

  auto forward = [&](Tape& tape) {
    Var h = tape.add(tape.matvec(tape.leaf(w), tape.leaf(x)), tape.leaf(b));
    Var t = tape.tanh(h);
    Var s = tape.sigmoid(h);
    Var sp = tape.softplus(h);
    Var mixed = tape.add(tape.mul(t, s), tape.scale(sp, 0.25));
    return tape.add(tape.mean(tape.square(mixed)), tape.sum(tape.abs(mixed)));
  };
  CHECK(grad_check(forward, {&w, &b, &x}, 1e-5) <= 1e-6);
}

TEST_CASE("grad_check near relu stays accurate away from kinks") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor w = Tensor::matrix(4, 2, std::vector<double>(8));
    for (double& v : w.data) v = rng.uniform(-1.5, 1.5);
    Tensor x = Tensor::vector({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    w.requires_grad = x.requires_grad = true;

    auto forward = [&](Tape& tape) {
      return tape.sum(tape.relu(tape.matvec(tape.leaf(w), tape.leaf(x))));
    };
    // keep probes away from kinks: |pre-activation| > 1e-3
    Tape probe;
    forward(probe);
    if (probe.min_abs_relu_input() <= 1e-3) continue;
    CHECK(grad_check(forward, {&w, &x}, 1e-5) <= 1e-4);
  }
}

TEST_CASE("sigmoid and softplus stay finite for extreme inputs") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({-1e6, -50, 0, 50, 1e6}));
  for (double v : tape.sigmoid(x).value().data) CHECK(std::isfinite(v));
  for (double v : tape.softplus(x).value().data) CHECK(std::isfinite(v));
  CHECK(tape.sigmoid(x).value().data[0] == 0.0);
  CHECK(tape.sigmoid(x).value().data[4] == 1.0);
  CHECK(tape.softplus(x).value().data[0] == 0.0);
  CHECK(tape.softplus(x).value().data[4] == 1e6);
}
