#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "psis/dopri5.hpp"
#include "psis/expr.hpp"
#include "random_expr.hpp"

using namespace psis;
using namespace psis::sym;

namespace {

double at(const Expr& e, std::vector<double> x, double t = 0.0) { return eval(e, {x, t}); }

const Expr x1 = Expr::var(1), x2 = Expr::var(2), x3 = Expr::var(3), t = Expr::time();

}  // namespace

TEST_SUITE("expr") {

TEST_CASE("eval basics") {
  CHECK(at(x1 * t, {2.0, 0.0}, 3.0) == 6.0);
  CHECK(at(sign(Expr::constant(0.0)), {}) == 0.0);
  CHECK(at(atan(Expr::constant(1.0)), {}) == doctest::Approx(0.7853981633974483).epsilon(1e-15));
  CHECK(at(abs(x1) + sign(x2), {-3.0, -0.5}) == 2.0);
  CHECK(at(pow(x1, 3.0), {-2.0}) == -8.0);
  CHECK(at(exp(log(x1)), {2.5}) == doctest::Approx(2.5));
}

TEST_CASE("singular evaluation reports the node") {
  try {
    at(Expr::binary(Op::Div, x1, x2 - 1.0), {1.0, 1.0});
    FAIL("expected an evaluation error");
  } catch (const EvalError& e) {
    CHECK(e.op() == Op::Div);
  }
  try {
    at(log(x1), {-1.0});
    FAIL("expected an evaluation error");
  } catch (const EvalError& e) {
    CHECK(e.op() == Op::Ln);
  }
  CHECK_THROWS_AS(at(pow(x1, 0.5), {-1.0}), EvalError);
  CHECK_THROWS_AS(at(exp(x1), {1000.0}), EvalError);
}

TEST_CASE("partial derivative table") {
  CHECK(partial(x1 * t, Wrt::state(1)) == t);
  const Expr d = partial(atan(x2), Wrt::state(2));
  for (double v : {-2.0, 0.0, 0.3, 5.0}) CHECK(at(d, {0.0, v}) == doctest::Approx(1.0 / (v * v + 1.0)));
  const double tp = 0.5;
  const Expr dt = partial(pow(tp - t, 3.0), Wrt::time());
  for (double tv : {0.0, 0.1, 0.4}) {
    CHECK(at(dt, {}, tv) == doctest::Approx(-3.0 * (tp - tv) * (tp - tv)).epsilon(1e-14));
  }
  CHECK(partial(sign(x1), Wrt::state(1)) == Expr::constant(0.0));
  const Expr dabs = partial(abs(x1 * x1 - 1.0), Wrt::state(1));
  CHECK(at(dabs, {0.5}) == doctest::Approx(-1.0));
  CHECK(at(dabs, {2.0}) == doctest::Approx(4.0));
  CHECK(partial(x3, Wrt::state(2)) == Expr::constant(0.0));
}

TEST_CASE("lie derivative along the chain") {
  CHECK(lie_derivative(x1, 2) == x2);
  const Expr c = Expr::constant(0.15);
  CHECK(lie_derivative(simplify(c - c), 3) == Expr::constant(0.0));
  const double tp = 0.5;
  const Expr e = -3.0 * (x1 - 0.15) / (tp - t);
  const Expr l = lie_derivative(e, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-2.0, 2.0), dt(0.0, 0.49);
  for (int i = 0; i < 50; ++i) {
    const double a = d(rng), b = d(rng), tv = dt(rng);
    const double s = tp - tv, z1 = a - 0.15;
    const double want = -3.0 * b / s - 3.0 * z1 / (s * s);
    CHECK(at(l, {a, b}, tv) == doctest::Approx(want).epsilon(1e-13));
  }
  CHECK_THROWS_AS(lie_derivative(x2, 2), StructureError);
  CHECK_NOTHROW(lie_derivative(x2, 3));
}

TEST_CASE("simplify rules") {
  CHECK(simplify(x1 * 1.0 + 0.0) == x1);
  CHECK(simplify(Expr::constant(2.0) * Expr::constant(3.0)) == Expr::constant(6.0));
  CHECK(simplify(x2 - x2) == Expr::constant(0.0));
  CHECK(simplify(x1 * 0.0) == Expr::constant(0.0));
  CHECK(simplify(0.0 / (x1 + 2.0)) == Expr::constant(0.0));
  CHECK(simplify(-(-x1)) == x1);
  // folding that would produce a non-finite value is left alone
  const Expr bad = Expr::binary(Op::Div, Expr::constant(1.0), Expr::constant(0.0));
  CHECK(simplify(bad).op() == Op::Div);
}

TEST_CASE("simplify preserves values") {
  testing::RandomExpr gen(11, 3);
  std::uniform_real_distribution<double> d(-1.0, 1.0), dt(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Expr e = gen(5);
    const Expr s = simplify(e);
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> x{d(gen.rng()), d(gen.rng()), d(gen.rng())};
      const double tv = dt(gen.rng());
      const double a = eval(e, {x, tv}), b = eval(s, {x, tv});
      REQUIRE(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("partials match central differences") {
  testing::RandomExpr gen(2024, 3);
  std::uniform_real_distribution<double> d(-1.0, 1.0), dt(0.05, 0.95);
  int checked = 0;
  for (int k = 0; k < 150; ++k) {
    const Expr e = gen(6);
    const std::vector<double> x{d(gen.rng()), d(gen.rng()), d(gen.rng())};
    const double tv = dt(gen.rng());
    for (int j = 0; j <= 3; ++j) {
      const Wrt w = j == 0 ? Wrt::time() : Wrt::state(j);
      const double exact = eval(partial(e, w), {x, tv});
      const double base = j == 0 ? tv : x[static_cast<std::size_t>(j - 1)];
      const double h = 1e-6 * (std::abs(base) + 1.0);
      auto shifted = [&](double delta) {
        std::vector<double> y = x;
        double ty = tv;
        if (j == 0) ty += delta; else y[static_cast<std::size_t>(j - 1)] += delta;
        return eval(e, {y, ty});
      };
      const double fd = (shifted(h) - shifted(-h)) / (2.0 * h);
      CHECK(std::abs(exact - fd) <= 1e-6 * std::max(1.0, std::abs(exact)));
      ++checked;
    }
  }
  CHECK(checked == 600);
}

TEST_CASE("lie derivative matches differentiation along open-loop runs") {
  const int n = 3;
  testing::RandomExpr gen(99, n - 1);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int run = 0; run < 20; ++run) {
    const Expr e = gen(4);
    const Expr l = lie_derivative(e, n);
    Dopri5 solver([](double, std::span<const double> y, std::span<double> dy) {
      dy[0] = y[1];
      dy[1] = y[2];
      dy[2] = 0.0;
    }, {1e-12, 1e-14, 0.01, 0.0});
    const std::vector<double> x0{d(gen.rng()), d(gen.rng()), d(gen.rng())};
    solver.reset(0.0, x0);
    std::vector<double> a(n), b(n);
    while (solver.t() < 0.8) {
      solver.step(0.8);
      const double tm = 0.5 * (solver.t_prev() + solver.t());
      const double h = 1e-4 * (solver.t() - solver.t_prev());
      solver.dense(tm - h, a);
      solver.dense(tm + h, b);
      const double fd = (eval(e, {b, tm + h}) - eval(e, {a, tm - h})) / (2.0 * h);
      std::vector<double> m(n);
      solver.dense(tm, m);
      const double want = eval(l, {m, tm});
      CHECK(std::abs(fd - want) <= 1e-5 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("printer") {
  CHECK(to_string(x1 * t) == "x1 * t");
  CHECK(to_string((x1 + 1.0) * x2) == "(x1 + 1) * x2");
  const Expr s = 0.5 - t;
  const Alias alias{s, "(T_p - t)"};
  const std::vector<Alias> aliases{alias};
  CHECK(to_string(x2 / s, aliases) == "x2 / (T_p - t)");
}

TEST_CASE("program evaluates every root like the tree walker") {
  testing::RandomExpr gen(5, 3);
  std::vector<Expr> roots;
  for (int k = 0; k < 12; ++k) roots.push_back(gen(5));
  roots.push_back(roots[0] * roots[1]);
  const Program prog(roots);
  CHECK(prog.outputs() == roots.size());
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> out(roots.size());
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> x{d(gen.rng()), d(gen.rng()), d(gen.rng())};
    prog.eval(x, 0.3, out);
    for (std::size_t r = 0; r < roots.size(); ++r) {
      CHECK(out[r] == doctest::Approx(eval(roots[r], {x, 0.3})).epsilon(1e-14));
    }
  }
}

TEST_CASE("structural equality and sharing") {
  const Expr a = sin(x1) * (t + 2.0);
  const Expr b = sin(Expr::var(1)) * (Expr::time() + 2.0);
  CHECK(a == b);
  CHECK(a.hash() == b.hash());
  CHECK_FALSE(a == sin(x1) * (t + 3.0));
  CHECK(max_state_index(a * x3) == 3);
  CHECK(dag_size(a + a) <= dag_size(a) + 1);
}

}
