#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "testutil.hpp"
#include "vqr/tensor.hpp"

using namespace vqr;
using ad::Shape;
using testutil::max_rel_fd_error;
using testutil::rand_leaf;
using testutil::rand_leaf_no_zero;
using testutil::weighted_sum;

TEST_CASE("matmul identity and fixed product") {
  Rng rng(7);
  Tensor a = rand_leaf(rng, {2, 2});
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tape tape;
  Tensor c = ad::matmul(tape, a, eye);
  for (int i = 0; i < 4; ++i) CHECK(c[i] == a[i]);

  Tensor m = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor v = Tensor::from_values({2, 1}, {5, 6});
  Tensor p = ad::matmul(tape, m, v);
  CHECK(p[0] == 17.0);
  CHECK(p[1] == 39.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  Tape tape;
  try {
    ad::matmul(tape, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient vs central differences") {
  Rng rng(11);
  Tensor a = rand_leaf(rng, {3, 4});
  Tensor b = rand_leaf(rng, {4, 2});
  Tensor coeffs = rand_leaf(rng, {3, 2}, -1, 1, false);
  const double err = max_rel_fd_error(
      [&](Tape& t) { return weighted_sum(t, ad::matmul(t, a, b), coeffs); }, {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("softmax basics") {
  Tape tape;
  Tensor x = Tensor::from_values({2}, {0, 0});
  Tensor y = ad::softmax(tape, x, 0);
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));

  // frozen against a long-double direct evaluation of exp normalization
  Tensor z = ad::softmax(tape, Tensor::from_values({3}, {1, 2, 3}), 0);
  long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
  long double zz = e1 + e2 + e3;
  CHECK(z[0] == doctest::Approx(static_cast<double>(e1 / zz)).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(static_cast<double>(e2 / zz)).epsilon(1e-12));
  CHECK(z[2] == doctest::Approx(static_cast<double>(e3 / zz)).epsilon(1e-12));
  CHECK(z[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(z[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(z[2] == doctest::Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("softmax shift invariance and axis normalization") {
  Rng rng(3);
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x = rand_leaf(rng, {4, 3}, -2, 2, false);
    const double c = rng.uniform(-5, 5);
    std::vector<double> shifted = x.to_vector();
    for (auto& v : shifted) v += c;
    Tensor xs = Tensor::from_values({4, 3}, shifted);
    for (ad::Index axis : {0, 1}) {
      Tape tape;
      Tensor y = ad::softmax(tape, x, axis);
      Tensor ys = ad::softmax(tape, xs, axis);
      for (int i = 0; i < 12; ++i) {
        CHECK(y[i] >= 0.0);
        CHECK(y[i] == doctest::Approx(ys[i]).epsilon(1e-12));
      }
      // sums to one along the axis
      ad::Index outer = axis == 0 ? 3 : 4;
      for (ad::Index o = 0; o < outer; ++o) {
        double s = 0;
        for (ad::Index e = 0; e < (axis == 0 ? 4 : 3); ++e)
          s += axis == 0 ? y[e * 3 + o] : y[o * 3 + e];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
  Tape tape;
  CHECK_THROWS_AS(ad::softmax(tape, Tensor::zeros({2, 2}), 2), ParameterError);
}

TEST_CASE("cross entropy fixed values") {
  Tape tape;
  Tensor uniform = Tensor::zeros({1, 4});
  for (int target = 0; target < 4; ++target) {
    Tape t2;
    Tensor l = ad::cross_entropy(t2, uniform, {target});
    CHECK(l.value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  Tensor sat = Tensor::from_values({1, 2}, {50, -50});
  Tensor l = ad::cross_entropy(tape, sat, {0});
  CHECK(l.value() >= 0.0);
  CHECK(l.value() < 1e-12);
  CHECK_THROWS_AS(ad::cross_entropy(tape, sat, {2}), IndexError);
  CHECK_THROWS_AS(ad::cross_entropy(tape, sat, {-1}), IndexError);
}

TEST_CASE("cross entropy gradient vs central differences") {
  Rng rng(13);
  Tensor logits = rand_leaf(rng, {2, 3});
  const double err = max_rel_fd_error(
      [&](Tape& t) { return ad::cross_entropy(t, logits, {2, 0}); }, {logits});
  CHECK(err < 1e-6);
}

TEST_CASE("backward analytic identities") {
  Rng rng(5);
  Tensor w = rand_leaf(rng, {3, 2});

  Tape t1;
  t1.backward(ad::sum(t1, w));
  for (double g : w.grad()) CHECK(g == 1.0);
  w.zero_grad();

  Tape t2;
  Tensor loss = ad::scale(t2, ad::sum(t2, ad::mul(t2, w, w)), 0.5);
  t2.backward(loss);
  auto g = w.grad();
  for (int i = 0; i < 6; ++i) CHECK(g[static_cast<std::size_t>(i)] == doctest::Approx(w[i]).epsilon(1e-15));
}

TEST_CASE("gradients of unreached tensors are zero") {
  Rng rng(17);
  Tensor used = rand_leaf(rng, {4});
  Tensor unused = rand_leaf(rng, {4});
  Tape tape;
  tape.backward(ad::sum(tape, used));
  CHECK(used.has_grad());
  CHECK_FALSE(unused.has_grad());
  for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("shared parent accumulates once per path") {
  Rng rng(19);
  Tensor x = rand_leaf(rng, {3});
  Tape tape;
  Tensor y = ad::add(tape, x, x);
  tape.backward(ad::sum(tape, y));
  for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("tape is single use") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  Tensor loss = ad::sum(tape, x);
  tape.backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  CHECK_THROWS_AS(ad::sum(tape, x), ContractError);
}

TEST_CASE("backward rejects non-scalar and foreign losses") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tape tape;
  Tensor y = ad::add(tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);  // not scalar
  Tape other;
  Tensor loss = ad::sum(tape, x);
  CHECK_THROWS_AS(other.backward(loss), ContractError);  // wrong tape
  CHECK_THROWS_AS(other.backward(Tensor::scalar(1.0)), ContractError);  // leaf
}

TEST_CASE("ops refuse operands from another tape") {
  Tensor x = Tensor::from_values({2}, {1, 2}, true);
  Tape t1, t2;
  Tensor mid = ad::scale(t1, x, 2.0);
  CHECK_THROWS_AS(ad::sum(t2, mid), ContractError);
}

TEST_CASE("forward is bitwise deterministic") {
  Rng rng(23);
  Tensor a = rand_leaf(rng, {4, 4});
  Tensor b = rand_leaf(rng, {4, 4});
  auto run = [&]() {
    Tape tape;
    Tensor y = ad::softmax(tape, ad::matmul(tape, ad::sigmoid(tape, a), ad::tanh(tape, b)), 1);
    return y.to_vector();
  };
  auto r1 = run(), r2 = run();
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("elementwise and structural ops pass the finite-difference oracle") {
  Rng rng(29);
  const double tol = 1e-4;  // project-wide gradient-check bound

  Tensor a = rand_leaf(rng, {3, 4});
  Tensor b = rand_leaf(rng, {3, 4});
  Tensor c34 = rand_leaf(rng, {3, 4}, -1, 1, false);

  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::add(t, a, b), c34); }, {a, b}) < tol);
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::sub(t, a, b), c34); }, {a, b}) < tol);
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::mul(t, a, b), c34); }, {a, b}) < tol);
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::scale(t, a, -1.7), c34); }, {a}) < tol);
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::sigmoid(t, a), c34); }, {a}) < tol);
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::tanh(t, a), c34); }, {a}) < tol);

  Tensor nz = rand_leaf_no_zero(rng, {3, 4});
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::relu(t, nz), c34); }, {nz}) < tol);

  Tensor v = rand_leaf(rng, {4});
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::add_rowwise(t, a, v), c34); },
                         {a, v}) < tol);

  Tensor c64 = rand_leaf(rng, {6, 4}, -1, 1, false);
  CHECK(max_rel_fd_error(
            [&](Tape& t) { return weighted_sum(t, ad::concat(t, {a, b}, 0), c64); }, {a, b}) < tol);
  Tensor c38 = rand_leaf(rng, {3, 8}, -1, 1, false);
  CHECK(max_rel_fd_error(
            [&](Tape& t) { return weighted_sum(t, ad::concat(t, {a, b}, 1), c38); }, {a, b}) < tol);

  Tensor c24 = rand_leaf(rng, {2, 4}, -1, 1, false);
  CHECK(max_rel_fd_error(
            [&](Tape& t) { return weighted_sum(t, ad::slice(t, a, 0, 1, 2), c24); }, {a}) < tol);
  Tensor c32 = rand_leaf(rng, {3, 2}, -1, 1, false);
  CHECK(max_rel_fd_error(
            [&](Tape& t) { return weighted_sum(t, ad::slice(t, a, 1, 2, 2), c32); }, {a}) < tol);

  Tensor c12 = rand_leaf(rng, {12}, -1, 1, false);
  CHECK(max_rel_fd_error(
            [&](Tape& t) { return weighted_sum(t, ad::reshape(t, a, {12}), c12); }, {a}) < tol);

  CHECK(max_rel_fd_error([&](Tape& t) { return ad::sum(t, a); }, {a}) < tol);
  CHECK(max_rel_fd_error([&](Tape& t) { return ad::mean(t, a); }, {a}) < tol);

  for (ad::Index axis : {0, 1})
    CHECK(max_rel_fd_error(
              [&, axis](Tape& t) { return weighted_sum(t, ad::softmax(t, a, axis), c34); }, {a}) < tol);

  Tensor table = rand_leaf(rng, {5, 3});
  Tensor c43 = rand_leaf(rng, {4, 3}, -1, 1, false);
  CHECK(max_rel_fd_error(
            [&](Tape& t) { return weighted_sum(t, ad::embed_rows(t, table, {3, 0, 3, 1}), c43); },
            {table}) < tol);

  // dropout-with-given-mask is mul with a constant mask operand
  Tensor mask = Tensor::from_values({3, 4}, [&] {
    std::vector<double> m(12);
    for (auto& x : m) x = rng.bernoulli(0.4) ? 0.0 : 2.0;
    return m;
  }());
  CHECK(max_rel_fd_error([&](Tape& t) { return weighted_sum(t, ad::mul(t, a, mask), c34); }, {a}) < tol);
}

TEST_CASE("embed_rows repeated id sums upstream gradients") {
  Tensor table = Tensor::from_values({4, 2}, {0, 1, 2, 3, 4, 5, 6, 7}, true);
  Tape tape;
  Tensor out = ad::embed_rows(tape, table, {3, 3});
  tape.backward(ad::sum(tape, out));
  auto g = table.grad();
  CHECK(g[6] == 2.0);
  CHECK(g[7] == 2.0);
  CHECK(g[0] == 0.0);
  Tape t2;
  CHECK_THROWS_AS(ad::embed_rows(t2, table, {4}), IndexError);
}

TEST_CASE("forward ops keep finite values on bounded inputs") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor a = rand_leaf(rng, {4, 5});
    Tensor b = rand_leaf(rng, {4, 5});
    Tape tape;
    Tensor y = ad::softmax(tape, ad::relu(tape, ad::mul(tape, ad::tanh(tape, a), ad::sigmoid(tape, b))), 1);
    for (double x : y.to_vector()) CHECK(std::isfinite(x));
  }
}

TEST_CASE("slice and concat reject bad arguments") {
  Tensor a = Tensor::zeros({3, 4});
  Tape tape;
  CHECK_THROWS_AS(ad::slice(tape, a, 0, 2, 2), IndexError);
  CHECK_THROWS_AS(ad::slice(tape, a, 3, 0, 1), ParameterError);
  CHECK_THROWS_AS(ad::concat(tape, {a, Tensor::zeros({3, 3})}, 0), DimensionError);
  CHECK_THROWS_AS(ad::concat(tape, std::vector<Tensor>{}, 0), InputError);
  CHECK_THROWS_AS(ad::reshape(tape, a, {5, 2}), DimensionError);
}
