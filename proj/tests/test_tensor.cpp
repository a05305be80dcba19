#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "memlen/tensor.hpp"

using namespace memlen;
using nn::MatX;
using nn::Tape;
using Md = MatX<double>;

namespace {

Md randm(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Md m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = 2.0 * nn::rng_uniform01(rng) - 1.0;
  return m;
}

// Central finite difference of a scalar-valued graph wrt one leaf.
template <typename F>
void check_grad(F build, Md x0, double tol = 1e-7) {
  Tape<double> tape;
  int x = tape.leaf(x0);
  int loss = build(tape, x);
  tape.backward(loss);
  Md g = tape.grad(x);
  REQUIRE(g.rows() == x0.rows());
  const double h = 1e-6;
  for (int i = 0; i < x0.rows(); ++i)
    for (int j = 0; j < x0.cols(); ++j) {
      Md xp = x0, xm = x0;
      xp(i, j) += h;
      xm(i, j) -= h;
      Tape<double> tp, tm;
      double fp = tp.val(build(tp, tp.leaf(xp)))(0, 0);
      double fm = tm.val(build(tm, tm.leaf(xm)))(0, 0);
      CHECK(g(i, j) == doctest::Approx((fp - fm) / (2 * h)).epsilon(tol).scale(1.0));
    }
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
  Tape<double> tape;
  Md a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  int c = tape.matmul(tape.leaf(a), tape.leaf(b));
  Md expect(2, 2);
  expect << 19, 22, 43, 50;
  CHECK(tape.val(c) == expect);

  check_grad(
      [](Tape<double>& t, int x) {
        return t.sum_all(t.matmul(x, t.constant(randm(3, 2, 1))));
      },
      randm(2, 3, 0));
}

TEST_CASE("elementwise and reduction gradients") {
  Md x0 = randm(3, 4, 2);
  check_grad([](Tape<double>& t, int x) { return t.sum_all(t.tanh_(x)); }, x0);
  check_grad([](Tape<double>& t, int x) { return t.sum_all(t.sigmoid_(x)); }, x0);
  check_grad([](Tape<double>& t, int x) { return t.mean_all(t.mul(x, x)); }, x0);
  check_grad(
      [](Tape<double>& t, int x) {
        return t.sum_all(t.mul(t.relu(x), t.constant(randm(3, 4, 3))));
      },
      x0);
  check_grad(
      [](Tape<double>& t, int x) {
        return t.sum_all(t.mul(t.softmax_rows(x), t.constant(randm(3, 4, 4))));
      },
      x0);
}

TEST_CASE("softmax rows are distributions") {
  Tape<double> tape;
  int y = tape.softmax_rows(tape.leaf(randm(5, 7, 9)));
  for (int i = 0; i < 5; ++i) {
    CHECK(tape.val(y).row(i).sum() == doctest::Approx(1.0));
    CHECK(tape.val(y).row(i).minCoeff() > 0);
  }
}

TEST_CASE("layer norm normalizes and differentiates") {
  Tape<double> tape;
  Md x0 = randm(4, 8, 11);
  int g1 = tape.constant(Md::Ones(1, 8)), b0 = tape.constant(Md::Zero(1, 8));
  int y = tape.layer_norm(tape.leaf(x0), g1, b0);
  for (int i = 0; i < 4; ++i) {
    CHECK(tape.val(y).row(i).mean() == doctest::Approx(0.0));
    double var = tape.val(y).row(i).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  check_grad(
      [](Tape<double>& t, int x) {
        return t.sum_all(t.mul(
            t.layer_norm(x, t.constant(randm(1, 8, 12)), t.constant(randm(1, 8, 13))),
            t.constant(randm(4, 8, 14))));
      },
      x0, 1e-5);
}

TEST_CASE("dropout: identity off, unbiased and scaled on") {
  Tape<double> tape;
  Md x0 = Md::Ones(6, 5);
  int x = tape.leaf(x0);
  CHECK(tape.val(tape.dropout(x, 0.5, nullptr, false)) == x0);
  CHECK(tape.val(tape.dropout(x, 0.0, nullptr, true)) == x0);

  std::mt19937_64 rng(21);
  double sum = 0;
  int n = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Md& v = tape.val(tape.dropout(x, 0.3, &rng, true));
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) {
        CHECK((v(i, j) == 0.0 || v(i, j) == doctest::Approx(1.0 / 0.7)));
        sum += v(i, j);
        ++n;
      }
  }
  CHECK(sum / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("slice / concat / stack round trips") {
  Tape<double> tape;
  Md a = randm(3, 4, 30), b = randm(3, 2, 31);
  int ca = tape.leaf(a), cb = tape.leaf(b);
  int cat = tape.concat_cols(ca, cb);
  CHECK(tape.val(tape.slice_cols(cat, 0, 4)) == a);
  CHECK(tape.val(tape.slice_cols(cat, 4, 2)) == b);

  int st = tape.stack_rows({ca, ca});
  CHECK(tape.val(tape.slice_rows(st, 3, 3)) == a);

  check_grad(
      [&](Tape<double>& t, int x) {
        int two = t.concat_cols(x, t.constant(b));
        return t.sum_all(t.mul(t.slice_cols(two, 1, 4), t.constant(randm(3, 4, 32))));
      },
      a);
}

TEST_CASE("embed gathers rows and routes gradients") {
  Tape<double> tape;
  Md table = randm(4, 3, 40);
  int tb = tape.leaf(table);
  int e = tape.embed({2, 0, 2}, tb);
  CHECK(tape.val(e).row(0) == table.row(2));
  CHECK(tape.val(e).row(1) == table.row(0));
  int loss = tape.sum_all(e);
  tape.backward(loss);
  Md g = tape.grad(tb);
  CHECK(g(2, 0) == doctest::Approx(2.0));  // row 2 used twice
  CHECK(g(0, 0) == doctest::Approx(1.0));
  CHECK(g(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("causal attention: strict causality and single-step identity") {
  const int T = 5, B = 2, D = 6, H = 2;
  Tape<double> tape;
  // qkv layout: rows t*B+b, cols 3*D (q | k | v).
  Md qkv = randm(T * B, 3 * D, 50);
  int out = tape.causal_attention(tape.leaf(qkv), H, T, B, 0.0, nullptr, false);
  CHECK(tape.rows(out) == T * B);
  CHECK(tape.cols(out) == D);

  // Step 0 attends only to itself: output equals its value slice.
  for (int b = 0; b < B; ++b)
    CHECK((tape.val(out).row(b) - qkv.block(b, 2 * D, 1, D)).cwiseAbs().maxCoeff() <
          1e-12);

  // Perturbing the last step leaves every earlier output untouched.
  Md qkv2 = qkv;
  qkv2.row((T - 1) * B) += Md::Ones(1, 3 * D);
  Tape<double> tape2;
  int out2 = tape2.causal_attention(tape2.leaf(qkv2), H, T, B, 0.0, nullptr, false);
  for (int t = 0; t < T - 1; ++t)
    for (int b = 0; b < B; ++b)
      CHECK((tape.val(out).row(t * B + b) - tape2.val(out2).row(t * B + b))
                .cwiseAbs()
                .maxCoeff() == 0.0);
}

TEST_CASE("causal attention gradient") {
  const int T = 3, B = 2, D = 4;
  check_grad(
      [&](Tape<double>& t, int x) {
        int o = t.causal_attention(x, 2, T, B, 0.0, nullptr, false);
        return t.sum_all(t.mul(o, t.constant(randm(T * B, D, 60))));
      },
      randm(T * B, 3 * D, 61), 1e-6);
}

TEST_CASE("backward demands a scalar") {
  Tape<double> tape;
  int x = tape.leaf(randm(2, 2, 70));
  CHECK_THROWS_AS(tape.backward(x), ValidationError);
}

TEST_CASE("sinusoid table matches the closed form") {
  Md p = nn::sinusoid_table<double>(4, 6);
  CHECK(p.rows() == 4);
  CHECK(p.cols() == 6);
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 3; ++i) {
      double freq = std::pow(10000.0, -2.0 * i / 6.0);
      CHECK(p(t, 2 * i) == doctest::Approx(std::sin(t * freq)));
      CHECK(p(t, 2 * i + 1) == doctest::Approx(std::cos(t * freq)));
    }
}
