#include <cmath>
#include <vector>

#include "doctest.h"
#include "seannet/tensor.hpp"
#include "support/oracles.hpp"

using namespace seannet;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity and hand arithmetic") {
  Tape tape;
  ValueId eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  ValueId x = tape.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
  CHECK(tape.value(tape.matmul(eye, x)).data == std::vector<double>{3, 4, 5, 6});

  ValueId a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  ValueId b = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  CHECK(tape.value(tape.matmul(a, b)).data == std::vector<double>{3, 7});

  CHECK_THROWS_AS(tape.matmul(a, tape.constant(Tensor::matrix(3, 1, {1, 1, 1}))),
                  ShapeError);
}

TEST_CASE("relu basics") {
  Tape tape;
  ValueId x = tape.constant(Tensor::vector({-3, -0.5, -1e-9}));
  CHECK(tape.value(tape.relu(x)).data == std::vector<double>{0, 0, 0});

  ValueId y = tape.constant(Tensor::vector({-1, 0.5, 2}));
  ValueId once = tape.relu(y);
  ValueId twice = tape.relu(once);
  CHECK(tape.value(once).data == tape.value(twice).data);
}

TEST_CASE("cosine endpoints") {
  Tape tape;
  ValueId v = tape.constant(Tensor::vector({1, 2, 3}));
  ValueId neg = tape.constant(Tensor::vector({-1, -2, -3}));
  CHECK(tape.value(tape.cosine(v, v)).data[0] == doctest::Approx(1.0));
  CHECK(tape.value(tape.cosine(v, neg)).data[0] == doctest::Approx(-1.0));

  ValueId e1 = tape.constant(Tensor::vector({1, 0}));
  ValueId e2 = tape.constant(Tensor::vector({0, 1}));
  CHECK(tape.value(tape.cosine(e1, e2)).data[0] == doctest::Approx(0.0));

  ValueId zero = tape.constant(Tensor::vector({0, 0}));
  CHECK_THROWS_AS(tape.cosine(e1, zero), DomainError);
}

TEST_CASE("dropout modes") {
  Rng rng(7);
  {
    Tape tape;
    ValueId x = tape.constant(Tensor::vector({1, 2, 3, 4}));
    CHECK(tape.value(tape.dropout(x, 0.0, Mode::kTrain, rng)).data ==
          std::vector<double>{1, 2, 3, 4});
    CHECK(tape.value(tape.dropout(x, 0.5, Mode::kEval, rng)).data ==
          std::vector<double>{1, 2, 3, 4});
  }
  {
    // p=0.2 over 1e5 entries: zero fraction 0.2 ± 0.01, survivor mean kept.
    const std::size_t n = 100000;
    Tape tape;
    ValueId x = tape.constant(Tensor({n}, std::vector<double>(n, 1.0)));
    Rng drop(123);
    const Tensor& out = tape.value(tape.dropout(x, 0.2, Mode::kTrain, drop));
    std::size_t zeros = 0;
    double sum = 0.0;
    for (double v : out.data) {
      if (v == 0.0) ++zeros;
      sum += v;
    }
    CHECK(std::abs(double(zeros) / double(n) - 0.2) < 0.01);
    CHECK(std::abs(sum / double(n) - 1.0) < 0.02);
  }
}

TEST_CASE("backward: sum of leaf gives ones; repeatable with zero_grad") {
  Tape tape;
  ValueId w = tape.leaf(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}), true);
  ValueId loss = tape.sum(w);
  tape.backward(loss);
  std::vector<double> first(tape.grad(w).begin(), tape.grad(w).end());
  CHECK(first == std::vector<double>(6, 1.0));

  tape.zero_grad();
  tape.backward(loss);
  std::vector<double> second(tape.grad(w).begin(), tape.grad(w).end());
  CHECK(first == second);

  ValueId vec = tape.leaf(Tensor::vector({1, 2}), true);
  CHECK_THROWS_AS(tape.backward(vec), UsageError);
}

namespace {

// Scalar probe loss over the matmul output, rebuilt per evaluation.
double matmul_probe(const Tensor& a, const Tensor& b, const Tensor& probe) {
  Tape tape;
  ValueId out = tape.matmul(tape.leaf(a, true), tape.leaf(b, true));
  ValueId loss = tape.sum(tape.matmul(tape.reshape(out, {1, 15}),
                                      tape.constant(Tensor({15, 1}, probe.data))));
  return tape.value(loss).data[0];
}

}  // namespace

TEST_CASE("matmul gradient vs central differences") {
  Rng rng(42);
  Tensor a = Tensor::zeros({5, 4});
  Tensor b = Tensor::zeros({4, 3});
  Tensor probe = Tensor::zeros({15});
  for (double& v : a.data) v = rng.normal();
  for (double& v : b.data) v = rng.normal();
  for (double& v : probe.data) v = rng.normal();

  Tape tape;
  ValueId av = tape.leaf(a, true);
  ValueId bv = tape.leaf(b, true);
  ValueId out = tape.matmul(av, bv);
  ValueId loss = tape.sum(tape.matmul(tape.reshape(out, {1, 15}),
                                      tape.constant(Tensor({15, 1}, probe.data))));
  tape.backward(loss);

  auto eval = [&]() { return matmul_probe(a, b, probe); };
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double fd = oracle::central_difference(eval, &a.data[i], 1e-5);
    worst = std::max(worst, oracle::relative_error(tape.grad(av)[i], fd));
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double fd = oracle::central_difference(eval, &b.data[i], 1e-5);
    worst = std::max(worst, oracle::relative_error(tape.grad(bv)[i], fd));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(43);
  Tensor x = Tensor::zeros({40});
  for (double& v : x.data) {
    do {
      v = rng.normal();
    } while (std::abs(v) <= 1e-3);
  }
  Tensor probe = Tensor::zeros({40});
  for (double& v : probe.data) v = rng.normal();

  auto eval = [&]() {
    Tape tape;
    ValueId xv = tape.leaf(x, true);
    ValueId loss = tape.sum(tape.matmul(tape.reshape(tape.relu(xv), {1, 40}),
                                        tape.constant(Tensor({40, 1}, probe.data))));
    return tape.value(loss).data[0];
  };

  Tape tape;
  ValueId xv = tape.leaf(x, true);
  ValueId loss = tape.sum(tape.matmul(tape.reshape(tape.relu(xv), {1, 40}),
                                      tape.constant(Tensor({40, 1}, probe.data))));
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = oracle::central_difference(eval, &x.data[i], 1e-5);
    worst = std::max(worst, oracle::relative_error(tape.grad(xv)[i], fd));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("cosine gradient vs central differences") {
  Rng rng(44);
  Tensor a = Tensor::zeros({12});
  Tensor b = Tensor::zeros({12});
  for (double& v : a.data) v = rng.normal();
  for (double& v : b.data) v = rng.normal();

  auto eval = [&]() {
    Tape tape;
    return tape
        .value(tape.cosine(tape.leaf(a, true), tape.leaf(b, true)))
        .data[0];
  };

  Tape tape;
  ValueId av = tape.leaf(a, true);
  ValueId bv = tape.leaf(b, true);
  tape.backward(tape.cosine(av, bv));

  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst,
                     oracle::relative_error(
                         tape.grad(av)[i],
                         oracle::central_difference(eval, &a.data[i], 1e-5)));
  for (std::size_t i = 0; i < b.size(); ++i)
    worst = std::max(worst,
                     oracle::relative_error(
                         tape.grad(bv)[i],
                         oracle::central_difference(eval, &b.data[i], 1e-5)));
  CHECK(worst < 1e-5);
}

TEST_CASE("composite cosine(Wx, y) gradient") {
  Rng rng(45);
  Tensor w = Tensor::zeros({6, 8});
  Tensor x = Tensor::zeros({8, 1});
  Tensor y = Tensor::zeros({6});
  for (double& v : w.data) v = rng.normal();
  for (double& v : x.data) v = rng.normal();
  for (double& v : y.data) v = rng.normal();

  auto eval = [&]() {
    Tape tape;
    ValueId wv = tape.leaf(w, true);
    ValueId xv = tape.constant(x);
    ValueId yv = tape.constant(y);
    ValueId prod = tape.flatten(tape.matmul(wv, xv));
    return tape.value(tape.cosine(prod, yv)).data[0];
  };

  Tape tape;
  ValueId wv = tape.leaf(w, true);
  ValueId prod = tape.flatten(tape.matmul(wv, tape.constant(x)));
  tape.backward(tape.cosine(prod, tape.constant(y)));

  Rng pick(46);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto i = static_cast<std::size_t>(pick.uniform_int(std::ssize(w.data)));
    const double fd = oracle::central_difference(eval, &w.data[i], 1e-5);
    worst = std::max(worst, oracle::relative_error(tape.grad(wv)[i], fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gather/scatter/concat/add_row shapes and gradients") {
  Tape tape;
  ValueId m = tape.leaf(Tensor::matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}), true);
  ValueId g = tape.gather_rows(m, {0, 2});
  CHECK(tape.value(g).data == std::vector<double>{1, 2, 5, 6});

  ValueId s = tape.scatter_rows(g, {1, 3}, 4);
  CHECK(tape.value(s).data == std::vector<double>{0, 0, 1, 2, 0, 0, 5, 6});

  ValueId bias = tape.leaf(Tensor::vector({10, 20}), true);
  ValueId with_bias = tape.add_row(s, bias);
  tape.backward(tape.sum(with_bias));
  CHECK(tape.grad(bias)[0] == doctest::Approx(4.0));
  CHECK(tape.grad(bias)[1] == doctest::Approx(4.0));
  // Only gathered rows receive gradient.
  CHECK(tape.grad(m)[0] == doctest::Approx(1.0));
  CHECK(tape.grad(m)[2] == doctest::Approx(0.0));
  CHECK(tape.grad(m)[4] == doctest::Approx(1.0));
}

TEST_CASE("dropout gradient matches mask") {
  Tensor x = Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8});
  auto run = [&](std::uint64_t seed) {
    Tape tape;
    Rng rng(seed);
    ValueId xv = tape.leaf(x, true);
    ValueId d = tape.dropout(xv, 0.5, Mode::kTrain, rng);
    tape.backward(tape.sum(d));
    std::vector<double> out(tape.value(d).data);
    std::vector<double> grad(tape.grad(xv).begin(), tape.grad(xv).end());
    return std::pair(out, grad);
  };
  auto [out1, grad1] = run(99);
  auto [out2, grad2] = run(99);
  CHECK(out1 == out2);  // deterministic per seed
  CHECK(grad1 == grad2);
  for (std::size_t i = 0; i < out1.size(); ++i) {
    if (out1[i] == 0.0)
      CHECK(grad1[i] == 0.0);
    else
      CHECK(grad1[i] == doctest::Approx(2.0));  // 1/(1-p)
  }
}

TEST_SUITE_END();
