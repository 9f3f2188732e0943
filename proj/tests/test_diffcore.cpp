#include "doctest.h"

#include "fekan/jet.hpp"
#include "fekan/random.hpp"

#include <cmath>
#include <functional>
#include <memory>

using namespace fekan;

namespace {

bool close(double a, double b, double rtol, double atol = 0.0) {
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

// Random expression over two inputs, evaluable both on jets and on doubles.
struct Expr {
  int op = 0;  // 0 input, 1 const, 2 add, 3 mul, 4 sin, 5 cos, 6 exp, 7 tanh, 8 relu_pow
  int axis = 0;
  int power = 2;
  double c = 0.0;
  std::unique_ptr<Expr> a, b;

  [[nodiscard]] double eval(const Eigen::VectorXd& x, bool& near_kink) const {
    switch (op) {
      case 0: return x[axis];
      case 1: return c;
      case 2: return a->eval(x, near_kink) + b->eval(x, near_kink);
      case 3: return a->eval(x, near_kink) * b->eval(x, near_kink);
      case 4: return std::sin(a->eval(x, near_kink));
      case 5: return std::cos(a->eval(x, near_kink));
      case 6: return std::exp(a->eval(x, near_kink));
      case 7: return std::tanh(a->eval(x, near_kink));
      default: {
        const double v = a->eval(x, near_kink);
        if (std::abs(v) < 1e-2) near_kink = true;
        return v > 0 ? std::pow(v, power) : 0.0;
      }
    }
  }

  [[nodiscard]] Jet jet(const std::vector<Jet>& x) const {
    switch (op) {
      case 0: return x[axis];
      case 1: return Jet::constant(c, x[0].dims());
      case 2: return a->jet(x) + b->jet(x);
      case 3: return a->jet(x) * b->jet(x);
      case 4: return jets::sin(a->jet(x));
      case 5: return jets::cos(a->jet(x));
      case 6: return jets::exp(a->jet(x));
      case 7: return jets::tanh(a->jet(x));
      default: return jets::relu_pow(a->jet(x), power);
    }
  }
};

std::unique_ptr<Expr> random_expr(Rng& rng, int depth) {
  auto e = std::make_unique<Expr>();
  if (depth == 0) {
    if (rng.uniform() < 0.75) {
      e->op = 0;
      e->axis = static_cast<int>(rng.index(2));
    } else {
      e->op = 1;
      e->c = rng.uniform(-1, 1);
    }
    return e;
  }
  e->op = 2 + static_cast<int>(rng.index(7));
  e->power = 2 + static_cast<int>(rng.index(2));
  e->a = random_expr(rng, depth - 1);
  if (e->op == 2 || e->op == 3) e->b = random_expr(rng, depth - 1);
  return e;
}

}  // namespace

TEST_CASE("jet_add examples") {
  const Jet a = Jet::seed(1, 0, 2), b = Jet::seed(2, 1, 2);
  const Jet s = jet_add(a, b);
  CHECK(s.value == 3);
  CHECK(s.grad[0] == 1);
  CHECK(s.grad[1] == 1);
  CHECK(s.diag2.isZero());

  const Jet z = Jet::constant(0, 2);
  const Jet az = a + z;
  CHECK(az.value == a.value);
  CHECK((az.grad == a.grad).all());
  CHECK((az.diag2 == a.diag2).all());

  const Jet x = Jet::seed(3, 0, 1);
  const Jet xx = x + x;
  CHECK(xx.value == 6);
  CHECK(xx.grad[0] == 2);
  CHECK(xx.diag2[0] == 0);
}

TEST_CASE("jet_mul examples") {
  const Jet x = Jet::seed(3, 0, 1);
  const Jet sq = jet_mul(x, x);
  CHECK(sq.value == 9);
  CHECK(sq.grad[0] == 6);
  CHECK(sq.diag2[0] == 2);

  const Jet one = Jet::constant(1, 2);
  const Jet a = Jet::seed(0.7, 1, 2);
  const Jet a1 = a * one;
  CHECK(a1.value == a.value);
  CHECK((a1.grad == a.grad).all());

  const Jet p = Jet::seed(2, 0, 2) * Jet::seed(5, 1, 2);
  CHECK(p.value == 10);
  CHECK(p.grad[0] == 5);
  CHECK(p.grad[1] == 2);
  CHECK(p.diag2.isZero());
}

TEST_CASE("dimension mismatch is rejected") {
  CHECK_THROWS_AS(jet_add(Jet::seed(1, 0, 1), Jet::seed(1, 0, 2)), DimensionMismatch);
  CHECK_THROWS_AS(jet_mul(Jet::seed(1, 0, 1), Jet::seed(1, 0, 2)), DimensionMismatch);
  CHECK_THROWS_AS(Jet::seed(1, 2, 2), DimensionMismatch);
  CHECK_THROWS_AS(Jet(0.0, 5), DimensionMismatch);
}

TEST_CASE("seed jets are exact") {
  for (int d = 1; d <= kMaxJetDims; ++d) {
    for (int i = 0; i < d; ++i) {
      const Jet s = Jet::seed(0.125, i, d);
      CHECK(s.value == 0.125);
      for (int m = 0; m < d; ++m) {
        CHECK(s.grad[m] == (m == i ? 1.0 : 0.0));
        CHECK(s.diag2[m] == 0.0);
      }
    }
  }
}

TEST_CASE("jet_univariate examples") {
  const Jet x0 = Jet::seed(0, 0, 1);
  const Jet s = jet_univariate(x0, [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); },
                               [](double v) { return -std::sin(v); });
  CHECK(s.value == 0);
  CHECK(s.grad[0] == 1);
  CHECK(s.diag2[0] == 0);

  const Jet e = jets::exp(x0);
  CHECK(e.value == 1);
  CHECK(e.grad[0] == 1);
  CHECK(e.diag2[0] == 1);

  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
  const Jet xj = Jet::seed(0.7, 0, 1);
  const Jet f = jets::sin(xj * xj);
  const auto fd = fd_check([](const Eigen::VectorXd& v) { return std::sin(v[0] * v[0]); }, x, 1e-4);
  CHECK(close(f.grad[0], fd.grad[0], 0, 1e-6));
  CHECK(close(f.diag2[0], fd.diag2[0], 0, 1e-6));
}

TEST_CASE("jet_univariate rejects non-finite values and reports the argument") {
  const Jet x = Jet::seed(-1, 0, 1);
  try {
    (void)jet_univariate(x, [](double v) { return std::log(v); }, [](double v) { return 1 / v; },
                         [](double v) { return -1 / (v * v); });
    FAIL("expected NonFiniteValue");
  } catch (const NonFiniteValue& e) {
    CHECK(e.offending() == -1);
  }
}

TEST_CASE("fd_check examples") {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.0);
  const auto sq = fd_check([](const Eigen::VectorXd& v) { return v[0] * v[0]; }, x, 1e-4);
  CHECK(close(sq.grad[0], 6, 0, 1e-6));
  CHECK(close(sq.diag2[0], 2, 0, 1e-4));
  const auto c = fd_check([](const Eigen::VectorXd&) { return 4.2; }, x, 1e-4);
  CHECK(c.grad[0] == 0);
  CHECK(c.diag2[0] == 0);
  CHECK_THROWS_AS(fd_check([](const Eigen::VectorXd&) { return 0.0; }, x, 0.0), std::invalid_argument);
}

TEST_CASE("chain rule agrees with finite differences on random composites") {
  Rng rng(2024);
  int checked = 0;
  while (checked < 1000) {
    const auto e = random_expr(rng, 1 + static_cast<int>(rng.index(3)));
    Eigen::VectorXd x(2);
    x << rng.uniform(-1, 1), rng.uniform(-1, 1);
    bool kink = false;
    const double v = e->eval(x, kink);
    if (kink || !std::isfinite(v) || std::abs(v) > 1e3) continue;
    bool kink_fd = false;
    for (int i = 0; i < 2; ++i) {
      for (double dx : {-2e-4, 2e-4}) {
        Eigen::VectorXd xp = x;
        xp[i] += dx;
        (void)e->eval(xp, kink_fd);
      }
    }
    if (kink_fd) continue;
    const Jet j = e->jet({Jet::seed(x[0], 0, 2), Jet::seed(x[1], 1, 2)});
    const auto fd = fd_check([&](const Eigen::VectorXd& p) {
      bool k = false;
      return e->eval(p, k);
    }, x, 1e-4);
    CHECK(j.value == v);
    const double scale = 1.0 + std::abs(v);
    for (int i = 0; i < 2; ++i) {
      CHECK(close(j.grad[i], fd.grad[i], 1e-5, 1e-5 * scale));
      CHECK(close(j.diag2[i], fd.diag2[i], 1e-5, 1e-5 * scale * 10));
    }
    ++checked;
  }
}

TEST_CASE("jet_mul is commutative and associative") {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    Jet a(rng.uniform(-2, 2), 3), b(rng.uniform(-2, 2), 3), c(rng.uniform(-2, 2), 3);
    for (int m = 0; m < 3; ++m) {
      a.grad[m] = rng.uniform(-1, 1);
      b.grad[m] = rng.uniform(-1, 1);
      c.grad[m] = rng.uniform(-1, 1);
      a.diag2[m] = rng.uniform(-1, 1);
      b.diag2[m] = rng.uniform(-1, 1);
      c.diag2[m] = rng.uniform(-1, 1);
    }
    const Jet ab = a * b, ba = b * a;
    CHECK(ab.value == ba.value);
    CHECK((ab.grad == ba.grad).all());
    CHECK((ab.diag2 == ba.diag2).all());
    const Jet l = (a * b) * c, r = a * (b * c);
    CHECK(close(l.value, r.value, 4e-16, 1e-15));
    for (int m = 0; m < 3; ++m) {
      CHECK(close(l.grad[m], r.grad[m], 1e-14, 1e-14));
      CHECK(close(l.diag2[m], r.diag2[m], 1e-14, 1e-14));
    }
  }
}
