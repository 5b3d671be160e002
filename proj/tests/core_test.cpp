#include <cmath>
#include <numbers>

#include "doctest.h"
#include "recall/core/grad_check.hpp"
#include "recall/core/ops.hpp"
#include "recall/core/rng.hpp"

using namespace recall;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Fixed random weights turn any tensor-valued op into a scalar for grad_check.
Var<double> weighted_sum(Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(y.shape());
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
  return ops::sum(ops::mul(y, y.tape->constant(w)));
}

}  // namespace

TEST_CASE("matmul identity and hand-computed product") {
  Tape<double> tape;
  Tensor<double> eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Rng rng(3);
  Tensor<double> b = random_tensor({3, 4}, rng);
  auto prod = ops::matmul(tape.constant(eye), tape.constant(b));
  CHECK(tape.tensor(prod).data == b.data);

  auto a2 = tape.constant(Shape{2, 2}, {1, 2, 3, 4});
  auto b2 = tape.constant(Shape{2, 1}, {0, 1});
  auto c2 = ops::matmul(a2, b2);
  CHECK(c2.shape() == Shape{2, 1});
  CHECK(c2.value()[0] == 2.0);
  CHECK(c2.value()[1] == 4.0);
}

TEST_CASE("matmul matches triple loop oracle") {
  Rng rng(11);
  Tensor<double> a = random_tensor({5, 7}, rng);
  Tensor<double> b = random_tensor({7, 3}, rng);
  Tape<double> tape;
  auto c = ops::matmul(tape.constant(a), tape.constant(b));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double ref = 0;
      for (std::size_t k = 0; k < 7; ++k) ref += a.at(i, k) * b.at(k, j);
      CHECK(std::abs(c.value()[i * 3 + j] - ref) <= 1e-12);
    }
  }
}

TEST_CASE("matmul rejects mismatched inner extents") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(Shape{2, 3}));
  auto b = tape.constant(Tensor<double>(Shape{2, 3}));
  CHECK_THROWS_AS(ops::matmul(a, b), ContractViolation);
}

TEST_CASE("softmax examples") {
  Tape<double> tape;
  auto s1 = ops::softmax(tape.constant(Shape{2}, {0, 0}), 0);
  CHECK(s1.value()[0] == doctest::Approx(0.5));
  auto s2 = ops::softmax(tape.constant(Shape{2}, {1000, 1000}), 0);
  CHECK(s2.value()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(s2.value()[1]));
  auto s3 = ops::softmax(tape.constant(Shape{2}, {0, std::log(3.0)}), 0);
  CHECK(s3.value()[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s3.value()[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> x = random_tensor({4, 9}, rng, -30.0, 30.0);
    Tensor<double> shifted = x;
    for (std::size_t r = 0; r < 4; ++r) {
      const double c = rng.uniform(-100.0, 100.0);
      for (std::size_t j = 0; j < 9; ++j) shifted.at(r, j) += c;
    }
    Tape<double> tape;
    auto y = ops::softmax(tape.constant(x), 1);
    auto z = ops::softmax(tape.constant(shifted), 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        total += y.value()[r * 9 + j];
        CHECK(y.value()[r * 9 + j] >= 0.0);
        CHECK(std::abs(y.value()[r * 9 + j] - z.value()[r * 9 + j]) <= 1e-9);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax along a non-final axis") {
  Tape<double> tape;
  auto y = ops::softmax(tape.constant(Shape{2, 2}, {0, 1, std::log(3.0), 1}), 0);
  CHECK(y.value()[0] == doctest::Approx(0.25));
  CHECK(y.value()[2] == doctest::Approx(0.75));
  CHECK(y.value()[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(ops::softmax(tape.constant(Shape{2}, {0, 0}), 1), ContractViolation);
}

TEST_CASE("cross entropy masked: uniform floor and two-token floor") {
  const std::size_t V = 200;
  Tape<double> tape;
  auto uniform = tape.constant(Tensor<double>(Shape{1, V}));
  std::vector<std::int32_t> tgt{17};
  std::vector<std::uint8_t> mask{1};
  auto l1 = ops::cross_entropy_masked(uniform, tgt, mask);
  CHECK(l1.loss.item() == doctest::Approx(std::log(200.0)).epsilon(1e-12));
  CHECK(l1.loss.item() == doctest::Approx(5.2983).epsilon(1e-4));

  Tensor<double> two(Shape{2, V});
  two.at(0, 5) = 1000.0;  // probability ~1 on the target
  auto l2 = ops::cross_entropy_masked(tape.constant(two), std::vector<std::int32_t>{5, 9},
                                      std::vector<std::uint8_t>{1, 1});
  CHECK(std::abs(l2.loss.item() - 2.65) < 0.005);
}

TEST_CASE("cross entropy masked: empty mask and invalid targets") {
  Tape<double> tape;
  auto logits = tape.constant(Tensor<double>(Shape{3, 4}, 0.5));
  auto r = ops::cross_entropy_masked(logits, std::vector<std::int32_t>{0, 1, 2}, std::vector<std::uint8_t>{0, 0, 0});
  CHECK(r.empty_mask);
  CHECK(r.loss.item() == 0.0);
  CHECK_THROWS_AS(
      ops::cross_entropy_masked(logits, std::vector<std::int32_t>{0, 9, 2}, std::vector<std::uint8_t>{0, 1, 0}),
      ContractViolation);
  // Out-of-range ids are tolerated where masked out.
  CHECK_NOTHROW(
      ops::cross_entropy_masked(logits, std::vector<std::int32_t>{0, 9, 2}, std::vector<std::uint8_t>{1, 0, 0}));
}

TEST_CASE("cross entropy masked ignores logits at masked-out rows") {
  Rng rng(21);
  Tensor<double> a = random_tensor({5, 6}, rng, -3, 3);
  Tensor<double> b = a;
  for (std::size_t j = 0; j < 6; ++j) {
    b.at(1, j) = rng.uniform(-50, 50);
    b.at(3, j) = rng.uniform(-50, 50);
  }
  std::vector<std::int32_t> tgt{1, 2, 3, 4, 5};
  std::vector<std::uint8_t> mask{1, 0, 1, 0, 1};
  Tape<double> tape;
  auto la = ops::cross_entropy_masked(tape.constant(a), tgt, mask);
  auto lb = ops::cross_entropy_masked(tape.constant(b), tgt, mask);
  CHECK(la.loss.item() == lb.loss.item());
}

TEST_CASE("grad_check analytic and constant cases") {
  ScalarFn square_sum = [](Tape<double>&, Var<double> x) { return ops::sum(ops::mul(x, x)); };
  auto r = grad_check(square_sum, Tensor<double>(Shape{2}, {1.0, 2.0}));
  CHECK(r.gradient[0] == doctest::Approx(2.0));
  CHECK(r.gradient[1] == doctest::Approx(4.0));
  CHECK(r.max_rel_error <= 1e-8);

  ScalarFn constant = [](Tape<double>& t, Var<double>) { return t.constant(Shape{1}, {3.5}); };
  auto rc = grad_check(constant, Tensor<double>(Shape{3}, {1.0, 2.0, 3.0}));
  for (double g : rc.gradient) CHECK(g == 0.0);
  CHECK(rc.max_rel_error == 0.0);
}

TEST_CASE("grad_check names the primitive that produced a non-finite value") {
  ScalarFn bad = [](Tape<double>&, Var<double> x) { return ops::sum(ops::log(x)); };
  try {
    grad_check(bad, Tensor<double>(Shape{2}, {1.0, -1.0}));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("every primitive passes finite-difference checks") {
  Rng rng(1234);
  auto check = [&](const char* name, const ScalarFn& f, Shape shape, double lo = -1.0, double hi = 1.0) {
    for (int trial = 0; trial < 5; ++trial) {
      Tensor<double> x = random_tensor(shape, rng, lo, hi);
      auto r = grad_check(f, x);
      INFO(name << " trial " << trial << " worst index " << r.worst_index);
      CHECK(r.max_rel_error <= 1e-4);
    }
  };
  const std::uint64_t ws = 99;
  Tensor<double> other = random_tensor({3, 4}, rng);
  Tensor<double> weight = random_tensor({4, 5}, rng);
  Tensor<double> gain = random_tensor({4}, rng, 0.5, 1.5);
  Tensor<double> bias = random_tensor({4}, rng);

  check("add", [&](Tape<double>& t, Var<double> x) { return weighted_sum(ops::add(x, t.constant(other)), ws); },
        {3, 4});
  check("sub", [&](Tape<double>& t, Var<double> x) { return weighted_sum(ops::sub(t.constant(other), x), ws); },
        {3, 4});
  check("mul", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::mul(x, x), ws); }, {3, 4});
  check("scale", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::scale(x, 2.5), ws); }, {3, 4});
  check("add_bias", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::add_bias(t.constant(other), x), ws);
  }, {4});
  check("mul_scalar", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::mul_scalar(t.constant(other), ops::reshape(ops::sum(x), Shape{1})), ws);
  }, {2});
  check("exp", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::exp(x), ws); }, {3, 4});
  check("log", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::log(x), ws); }, {3, 4}, 0.5, 2.0);
  check("silu", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::silu(x), ws); }, {3, 4}, -3, 3);
  check("sigmoid", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::sigmoid(x), ws); }, {3, 4}, -3, 3);
  check("tanh", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::tanh(x), ws); }, {3, 4}, -2, 2);
  check("softplus", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::softplus(x), ws); }, {3, 4}, -4, 4);
  check("gelu", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::gelu(x), ws); }, {3, 4}, -3, 3);
  check("matmul(left)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::matmul(x, t.constant(weight)), ws);
  }, {2, 3, 4});
  check("matmul(right)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::matmul(t.constant(other), x), ws);
  }, {4, 5});
  check("rms_norm(x)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::rms_norm(x, t.constant(gain)), ws);
  }, {3, 4});
  check("rms_norm(w)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::rms_norm(t.constant(other), x), ws);
  }, {4});
  const std::vector<std::int32_t> ids{2, 0, 2, 4, 1, 2};
  check("embedding", [&](Tape<double>&, Var<double> x) {
    return weighted_sum(ops::embedding(x, ids, Shape{2, 3}), ws);
  }, {5, 3});
  Tensor<double> kernel = random_tensor({4, 3}, rng);
  Tensor<double> conv_x = random_tensor({2, 5, 4}, rng);
  check("causal_conv1d(x)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::causal_conv1d(x, t.constant(kernel), t.constant(bias)), ws);
  }, {2, 5, 4});
  check("causal_conv1d(kernel)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::causal_conv1d(t.constant(conv_x), x, t.constant(bias)), ws);
  }, {4, 3});
  check("causal_conv1d(bias)", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::causal_conv1d(t.constant(conv_x), t.constant(kernel), x), ws);
  }, {4});
  check("transpose", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::transpose(x), ws); }, {3, 5});
  check("reshape", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::reshape(x, Shape{5, 3}), ws); },
        {3, 5});
  check("slice_last", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::slice_last(x, 1, 4), ws); },
        {2, 3, 5});
  check("concat_last", [&](Tape<double>& t, Var<double> x) {
    return weighted_sum(ops::concat_last<double>({x, t.constant(other), ops::scale(x, -2.0)}), ws);
  }, {3, 2});
  check("repeat_last", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::repeat_last(x, 3), ws); },
        {2, 3});
  check("softmax(last)", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::softmax(x, 1), ws); },
        {3, 4}, -2, 2);
  check("softmax(first)", [&](Tape<double>&, Var<double> x) { return weighted_sum(ops::softmax(x, 0), ws); },
        {3, 4}, -2, 2);
  check("mean", [&](Tape<double>&, Var<double> x) { return ops::mean(ops::mul(x, x)); }, {3, 4});
  const std::vector<std::int32_t> tgt{1, 3, 0};
  const std::vector<std::uint8_t> mask{1, 0, 1};
  check("cross_entropy_masked", [&](Tape<double>&, Var<double> x) {
    return ops::cross_entropy_masked(x, tgt, mask).loss;
  }, {3, 4}, -2, 2);
}

TEST_CASE("cross entropy of a one-layer model passes grad_check") {
  Rng rng(77);
  Tensor<double> inputs = random_tensor({6, 5}, rng);
  const std::vector<std::int32_t> tgt{0, 3, 2, 6, 1, 4};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 1};
  ScalarFn f = [&](Tape<double>& t, Var<double> w) {
    return ops::cross_entropy_masked(ops::matmul(t.constant(inputs), w), tgt, mask).loss;
  };
  auto r = grad_check(f, random_tensor({5, 7}, rng));
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("reshape and transpose round trips are bitwise identity") {
  Rng rng(8);
  Tensor<double> x = random_tensor({4, 6}, rng);
  Tape<double> tape;
  auto v = tape.constant(x);
  auto tt = ops::transpose(ops::transpose(v));
  auto rr = ops::reshape(ops::reshape(v, Shape{2, 12}), Shape{4, 6});
  CHECK(tape.tensor(tt).data == x.data);
  CHECK(tape.tensor(rr).data == x.data);
  CHECK(tt.shape() == x.shape);
}

TEST_CASE("parameters bound to the tape receive accumulated gradients") {
  Tensor<double> p(Shape{2}, {1.0, -2.0});
  for (int round = 0; round < 2; ++round) {
    Tape<double> tape;
    auto v = tape.parameter(p);
    tape.backward(ops::sum(ops::mul(v, v)));
  }
  CHECK(p.grad[0] == doctest::Approx(4.0));
  CHECK(p.grad[1] == doctest::Approx(-8.0));
}

TEST_CASE("embedding rejects out-of-range ids") {
  Tape<double> tape;
  auto table = tape.constant(Tensor<double>(Shape{3, 2}));
  std::vector<std::int32_t> ids{0, 3};
  CHECK_THROWS_AS(ops::embedding(table, ids, Shape{2}), ContractViolation);
}

TEST_CASE("rng distributions are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.below(7) == b.below(7));
    CHECK(a.normal() == b.normal());
  }
  Rng c(1);
  double mean = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = c.normal();
    mean += z;
    sq += z * z;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}
