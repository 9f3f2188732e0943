#pragma once

// Second-order forward jets: a scalar together with its gradient and the
// pure (diagonal) second derivatives with respect to the input coordinates.
// Mixed partials are deliberately not representable.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace fekan {

/// Maximum number of input coordinates a jet can carry (x, y, z, t).
inline constexpr int kMaxJetDims = 4;

template <typename Scalar>
using JetArray = Eigen::Array<Scalar, Eigen::Dynamic, 1, 0, kMaxJetDims, 1>;

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteValue : public std::domain_error {
 public:
  NonFiniteValue(const std::string& what, double offending)
      : std::domain_error(what), offending_(offending) {}
  [[nodiscard]] double offending() const { return offending_; }

 private:
  double offending_;
};

template <typename Scalar>
struct Jet2 {
  Scalar value{0};
  JetArray<Scalar> grad;
  JetArray<Scalar> diag2;

  Jet2() = default;
  Jet2(Scalar v, int dims) : value(v), grad(JetArray<Scalar>::Zero(dims)), diag2(JetArray<Scalar>::Zero(dims)) {
    if (dims < 1 || dims > kMaxJetDims) throw DimensionMismatch("jet dimension must be in [1, 4]");
  }

  [[nodiscard]] int dims() const { return static_cast<int>(grad.size()); }

  /// Constant jet: zero derivatives.
  static Jet2 constant(Scalar v, int dims) { return Jet2(v, dims); }

  /// Seed jet for input coordinate `axis`: value x, grad e_axis, diag2 0.
  static Jet2 seed(Scalar x, int axis, int dims) {
    Jet2 j(x, dims);
    if (axis < 0 || axis >= dims) throw DimensionMismatch("seed axis out of range");
    j.grad[axis] = Scalar(1);
    return j;
  }
};

using Jet = Jet2<double>;

namespace detail {
template <typename Scalar>
void require_same_dims(const Jet2<Scalar>& a, const Jet2<Scalar>& b) {
  if (a.dims() != b.dims()) {
    std::ostringstream os;
    os << "jet dimension mismatch: " << a.dims() << " vs " << b.dims();
    throw DimensionMismatch(os.str());
  }
}
}  // namespace detail

template <typename Scalar>
Jet2<Scalar> jet_add(const Jet2<Scalar>& a, const Jet2<Scalar>& b) {
  detail::require_same_dims(a, b);
  Jet2<Scalar> r = a;
  r.value += b.value;
  r.grad += b.grad;
  r.diag2 += b.diag2;
  return r;
}

template <typename Scalar>
Jet2<Scalar> jet_mul(const Jet2<Scalar>& a, const Jet2<Scalar>& b) {
  detail::require_same_dims(a, b);
  Jet2<Scalar> r = a;
  r.value = a.value * b.value;
  r.grad = a.value * b.grad + b.value * a.grad;
  r.diag2 = (a.value * b.diag2 + b.value * a.diag2) + Scalar(2) * a.grad * b.grad;
  return r;
}

template <typename Scalar>
Jet2<Scalar> jet_scale(const Jet2<Scalar>& a, Scalar s) {
  Jet2<Scalar> r = a;
  r.value *= s;
  r.grad *= s;
  r.diag2 *= s;
  return r;
}

/// Lift from the value and the first two derivatives of f at a.value.
template <typename Scalar>
Jet2<Scalar> jet_lift(const Jet2<Scalar>& a, Scalar f0, Scalar f1, Scalar f2) {
  Jet2<Scalar> r = a;
  r.value = f0;
  r.grad = f1 * a.grad;
  r.diag2 = f2 * a.grad.square() + f1 * a.diag2;
  return r;
}

/// Chain rule through a univariate function given f, f' and f''.
template <typename Scalar, typename F, typename F1, typename F2>
Jet2<Scalar> jet_univariate(const Jet2<Scalar>& a, F&& f, F1&& f1, F2&& f2) {
  const Scalar x = a.value;
  const Scalar v0 = f(x), v1 = f1(x), v2 = f2(x);
  for (Scalar v : {v0, v1, v2}) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NonFiniteValue("non-finite value in jet_univariate", static_cast<double>(x));
    }
  }
  return jet_lift(a, v0, v1, v2);
}

template <typename Scalar>
Jet2<Scalar> operator+(const Jet2<Scalar>& a, const Jet2<Scalar>& b) { return jet_add(a, b); }
template <typename Scalar>
Jet2<Scalar> operator*(const Jet2<Scalar>& a, const Jet2<Scalar>& b) { return jet_mul(a, b); }

namespace jets {

template <typename Scalar>
Jet2<Scalar> sin(const Jet2<Scalar>& a) {
  using std::cos, std::sin;
  const Scalar s = sin(a.value), c = cos(a.value);
  return jet_lift(a, s, c, -s);
}

template <typename Scalar>
Jet2<Scalar> cos(const Jet2<Scalar>& a) {
  using std::cos, std::sin;
  const Scalar s = sin(a.value), c = cos(a.value);
  return jet_lift(a, c, -s, -c);
}

template <typename Scalar>
Jet2<Scalar> exp(const Jet2<Scalar>& a) {
  using std::exp;
  const Scalar e = exp(a.value);
  return jet_lift(a, e, e, e);
}

template <typename Scalar>
Jet2<Scalar> tanh(const Jet2<Scalar>& a) {
  using std::tanh;
  const Scalar t = tanh(a.value);
  const Scalar d = Scalar(1) - t * t;
  return jet_lift(a, t, d, Scalar(-2) * t * d);
}

/// max(0, x)^n for n >= 2 (twice differentiable away from 0).
template <typename Scalar>
Jet2<Scalar> relu_pow(const Jet2<Scalar>& a, int n) {
  using std::pow;
  const Scalar x = a.value;
  if (x <= Scalar(0)) return jet_lift(a, Scalar(0), Scalar(0), Scalar(0));
  return jet_lift(a, pow(x, n), n * pow(x, n - 1), n * (n - 1) * pow(x, n - 2));
}

}  // namespace jets

/// Central finite differences of f along each coordinate axis.
struct FdDerivatives {
  Eigen::VectorXd grad;
  Eigen::VectorXd diag2;
};

inline FdDerivatives fd_check(const std::function<double(const Eigen::VectorXd&)>& f,
                              const Eigen::VectorXd& x, double h) {
  if (!(h > 0)) throw std::invalid_argument("fd_check: step must be positive");
  const Eigen::Index d = x.size();
  FdDerivatives out{Eigen::VectorXd(d), Eigen::VectorXd(d)};
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(xp), fm = f(xm);
    out.grad[i] = (fp - fm) / (2 * h);
    out.diag2[i] = (fp - 2 * f0 + fm) / (h * h);
  }
  return out;
}

}  // namespace fekan
