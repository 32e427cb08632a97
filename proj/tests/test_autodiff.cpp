#include <algorithm>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "pcmorph/autodiff.hpp"
#include "pcmorph/rng.hpp"

using namespace pcmorph;
using ad::Tape;
using ad::Tensor;
using ad::ValueId;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  for (double& v : t.data) v = rng.uniform(-2.0, 2.0);
  return t;
}

}  // namespace

TEST_CASE("tanh at zero: value 0, gradient 1") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor::scalar(0.0));
  const ValueId y = tape.tanh(x);
  CHECK(tape.value(y).data[0] == 0.0);
  tape.backward(tape.sum(y));
  CHECK(tape.grad(x).data[0] == 1.0);
}

TEST_CASE("matmul: hand-checked forward") {
  Tape tape;
  Tensor a(2, 2);
  a.data = {1, 2, 3, 4};
  Tensor b(2, 1);
  b.data = {1, 1};
  const ValueId c = tape.matmul(tape.leaf(a), tape.leaf(b));
  CHECK(tape.value(c).data[0] == 3.0);
  CHECK(tape.value(c).data[1] == 7.0);
}

TEST_CASE("mean_rows: permutation-invariant value") {
  Rng rng(1);
  Tensor t = random_tensor(rng, 6, 4);
  Tensor t_perm = t;
  for (std::size_t i = 0; i < 6; ++i)
    std::memcpy(&t_perm.data[i * 4], &t.data[(5 - i) * 4], 4 * sizeof(double));
  Tape tape;
  const Tensor a = tape.value(tape.mean_rows(tape.leaf(t)));
  const Tensor b = tape.value(tape.mean_rows(tape.leaf(t_perm)));
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(std::fabs(a.data[j] - b.data[j]) <= 1e-15);
}

TEST_CASE("backward: sum of squares") {
  Tape tape;
  Tensor w(1, 3);
  w.data = {1, 2, 3};
  const ValueId leaf = tape.leaf(w);
  tape.backward(tape.sum(tape.square(leaf)));
  CHECK(tape.grad(leaf).data[0] == 2.0);
  CHECK(tape.grad(leaf).data[1] == 4.0);
  CHECK(tape.grad(leaf).data[2] == 6.0);
}

TEST_CASE("backward: fan-out accumulates") {
  Tape tape;
  const ValueId w = tape.leaf(Tensor::scalar(1.5));
  tape.backward(tape.sum(tape.add(w, w)));
  CHECK(tape.grad(w).data[0] == 2.0);
}

TEST_CASE("backward: untouched leaves get zero gradient") {
  Tape tape;
  const ValueId used = tape.leaf(Tensor::scalar(2.0));
  const ValueId unused = tape.leaf(Tensor::scalar(7.0));
  tape.backward(tape.square(used));
  CHECK(tape.grad(used).data[0] == 4.0);
  CHECK(tape.grad(unused).data[0] == 0.0);
}

TEST_CASE("backward: requires a scalar loss") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor(2, 2));
  CHECK_THROWS_AS(tape.backward(x), InvalidArgument);
}

TEST_CASE("backward: deterministic, repeatable on one tape") {
  Rng rng(5);
  Tape tape;
  const ValueId a = tape.leaf(random_tensor(rng, 4, 5));
  const ValueId b = tape.leaf(random_tensor(rng, 5, 3));
  const ValueId loss = tape.mean(tape.tanh(tape.matmul(a, b)));
  tape.backward(loss);
  const std::vector<double> first = tape.grad(a).data;
  tape.backward(loss);
  CHECK(std::memcmp(first.data(), tape.grad(a).data.data(),
                    first.size() * sizeof(double)) == 0);
}

TEST_CASE("shape mismatches name the op and shapes") {
  Tape tape;
  const ValueId a = tape.leaf(Tensor(2, 3));
  const ValueId b = tape.leaf(Tensor(3, 2));
  try {
    tape.add(a, b);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.matmul(a, a), InvalidArgument);
}

TEST_CASE("non-finite forward values raise") {
  Tape tape;
  Tensor big(1, 1);
  big.data = {1e308};
  const ValueId x = tape.leaf(big);
  CHECK_THROWS_AS(tape.square(x), NumericalError);  // overflows to inf
  Tensor nan_in(1, 1);
  nan_in.data = {std::nan("")};
  CHECK_THROWS_AS(tape.leaf(nan_in), NumericalError);
}

TEST_CASE("relu gradient at zero is zero") {
  Tape tape;
  Tensor t(1, 3);
  t.data = {-1.0, 0.0, 2.0};
  const ValueId x = tape.leaf(t);
  tape.backward(tape.sum(tape.relu(x)));
  CHECK(tape.grad(x).data[0] == 0.0);
  CHECK(tape.grad(x).data[1] == 0.0);
  CHECK(tape.grad(x).data[2] == 1.0);
}

TEST_CASE("mean_rows backward: permuting rows permutes row gradients") {
  Rng rng(6);
  Tensor t = random_tensor(rng, 5, 3);
  Tensor weights = random_tensor(rng, 1, 3);

  const auto grads_for = [&](const Tensor& input) {
    Tape tape;
    const ValueId x = tape.leaf(input);
    const ValueId w = tape.leaf(weights);
    tape.backward(tape.sum(tape.mul(tape.mean_rows(x), w)));
    return tape.grad(x).data;
  };

  const auto base = grads_for(t);
  Tensor t_perm = t;
  std::swap_ranges(t_perm.data.begin(), t_perm.data.begin() + 3,
                   t_perm.data.begin() + 12);  // swap rows 0 and 4
  const auto perm = grads_for(t_perm);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(perm[0 * 3 + j] == base[4 * 3 + j]);
    CHECK(perm[4 * 3 + j] == base[0 * 3 + j]);
  }
}

TEST_CASE("two-layer mlp gradient matches finite differences") {
  Rng rng(7);
  const Tensor x = random_tensor(rng, 3, 4);
  std::vector<Tensor> params = {random_tensor(rng, 4, 5),
                                random_tensor(rng, 1, 5),
                                random_tensor(rng, 5, 2),
                                random_tensor(rng, 1, 2)};

  const auto eval = [&](const std::vector<Tensor>& p,
                        std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<ValueId> ids;
    for (const Tensor& t : p) ids.push_back(tape.leaf(t));
    const ValueId xin = tape.leaf(x);
    const ValueId h = tape.tanh(tape.add(tape.matmul(xin, ids[0]),
                                         tape.broadcast_rows(ids[1], 3)));
    const ValueId out = tape.add(tape.matmul(h, ids[2]),
                                 tape.broadcast_rows(ids[3], 3));
    const ValueId loss = tape.mean(tape.square(out));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (ValueId id : ids) grads->push_back(tape.grad(id));
    }
    return tape.value(loss).data[0];
  };

  std::vector<Tensor> analytic;
  eval(params, &analytic);
  const double err = ad::grad_check(
      [&](const std::vector<Tensor>& p) { return eval(p, nullptr); }, params,
      analytic, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("relu network gradient matches finite differences away from kinks") {
  Rng rng(17);
  // Inputs and weights sized so every preactivation is far from zero
  // relative to the probe epsilon.
  const Tensor x = random_tensor(rng, 4, 3);
  std::vector<Tensor> params = {random_tensor(rng, 3, 6),
                                random_tensor(rng, 6, 2)};

  const auto eval = [&](const std::vector<Tensor>& p,
                        std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<ValueId> ids;
    for (const Tensor& t : p) ids.push_back(tape.leaf(t));
    const ValueId h = tape.relu(tape.matmul(tape.leaf(x), ids[0]));
    const ValueId loss = tape.mean(tape.square(tape.matmul(h, ids[1])));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (ValueId id : ids) grads->push_back(tape.grad(id));
    }
    return tape.value(loss).data[0];
  };

  // Regenerate until all preactivations clear the kink by > 10 * eps.
  for (int attempt = 0; attempt < 100; ++attempt) {
    Tape probe;
    const Tensor pre = probe.value(probe.matmul(probe.leaf(x),
                                                probe.leaf(params[0])));
    bool clear = true;
    for (double v : pre.data)
      if (std::fabs(v) <= 1e-3) clear = false;
    if (clear) break;
    params[0] = random_tensor(rng, 3, 6);
  }

  std::vector<Tensor> analytic;
  eval(params, &analytic);
  const double err = ad::grad_check(
      [&](const std::vector<Tensor>& p) { return eval(p, nullptr); }, params,
      analytic, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("grad_check: epsilon range and corrupted-gradient detection") {
  const auto f = [](const std::vector<Tensor>& p) {
    double s = 0.0;
    for (double v : p[0].data) s += v * v;
    return s;
  };
  std::vector<Tensor> params = {Tensor::row({1.0, -2.0, 0.5})};
  Tensor grad(1, 3);
  grad.data = {2.0, -4.0, 1.0};

  CHECK(ad::grad_check(f, params, {grad}, 1e-5) <= 1e-9);  // quadratic: exact
  CHECK_THROWS_AS(ad::grad_check(f, params, {grad}, 1e-8), InvalidArgument);
  CHECK_THROWS_AS(ad::grad_check(f, params, {grad}, 1e-2), InvalidArgument);

  // Negative control: a wrong analytic gradient must be flagged.
  Tensor corrupted = grad;
  corrupted.data[1] += 0.25;
  CHECK(ad::grad_check(f, params, {corrupted}, 1e-5) > 1e-3);
}

TEST_CASE("gather and concat round shapes correctly") {
  Rng rng(8);
  Tape tape;
  const ValueId a = tape.leaf(random_tensor(rng, 4, 3));
  const ValueId g = tape.gather_rows(a, {3, 3, 0});
  CHECK(tape.value(g).rows() == 3);
  CHECK(tape.value(g).cols() == 3);
  CHECK_THROWS_AS(tape.gather_rows(a, {4}), InvalidArgument);

  const ValueId b = tape.leaf(random_tensor(rng, 4, 2));
  const ValueId cc = tape.concat_cols(a, b);
  CHECK(tape.value(cc).cols() == 5);
  const ValueId row = tape.leaf(random_tensor(rng, 1, 2));
  CHECK_THROWS_AS(tape.broadcast_rows(a, 3), InvalidArgument);
  CHECK(tape.value(tape.broadcast_rows(row, 6)).rows() == 6);
}
