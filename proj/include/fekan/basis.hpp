#pragma once

// Univariate basis families used on KAN edges.

#include "fekan/jet.hpp"

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

namespace fekan {

enum class BasisKind { Spline, Fourier, Chebyshev, Rbf, Relu, HRelu, WaveletDoG };

std::string_view to_string(BasisKind kind);
BasisKind basis_kind_from_string(std::string_view name);

/// One of the seven basis families and its internal parameters. Only the
/// fields relevant to `kind` are read.
struct BasisSpec {
  BasisKind kind = BasisKind::Spline;
  int k = 3;    // polynomial order (Spline, Chebyshev, Relu, HRelu)
  int G = 5;    // grid size (Spline, Relu, HRelu)
  int N = 10;   // Fourier term count
  int n_f = 10; // Rbf center count
  int n = 3;    // HRelu power
  double domain_lo = -1.0;
  double domain_hi = 1.0;

  static BasisSpec spline(int G, int k) { return {.kind = BasisKind::Spline, .k = k, .G = G}; }
  static BasisSpec fourier(int N) { return {.kind = BasisKind::Fourier, .N = N}; }
  static BasisSpec chebyshev(int k) { return {.kind = BasisKind::Chebyshev, .k = k}; }
  static BasisSpec rbf(int n_f) { return {.kind = BasisKind::Rbf, .n_f = n_f}; }
  static BasisSpec relu(int G, int k) { return {.kind = BasisKind::Relu, .k = k, .G = G}; }
  static BasisSpec hrelu(int G, int k, int n) { return {.kind = BasisKind::HRelu, .k = k, .G = G, .n = n}; }
  static BasisSpec wavelet() { return {.kind = BasisKind::WaveletDoG}; }

  [[nodiscard]] BasisSpec with_domain(double lo, double hi) const {
    BasisSpec s = *this;
    s.domain_lo = lo;
    s.domain_hi = hi;
    return s;
  }

  [[nodiscard]] int cardinality() const;
  /// Throws std::invalid_argument when the parameters violate the family's invariants.
  void validate() const;

  bool operator==(const BasisSpec&) const = default;
};

struct BasisValues {
  Eigen::VectorXd phi;
  Eigen::VectorXd dphi;
  Eigen::VectorXd d2phi;
};

/// Uniform knots on [lo, hi] extended by k knots on each side.
Eigen::VectorXd spline_knots(int G, int k, double lo, double hi);

/// Precomputed evaluator for the hot path. Each evaluation writes `support()`
/// consecutive basis functions starting at the returned index, for derivative
/// orders 0..max_order, laid out as out[order * support() + b]. Non-finite
/// inputs are not rejected here; they propagate.
class BasisEvaluator {
 public:
  explicit BasisEvaluator(const BasisSpec& spec);

  [[nodiscard]] const BasisSpec& spec() const { return spec_; }
  [[nodiscard]] int cardinality() const { return card_; }
  [[nodiscard]] int support() const { return support_; }

  int evaluate(double x, int max_order, double* out) const;

 private:
  int eval_spline(double x, int max_order, double* out) const;
  int eval_fourier(double x, int max_order, double* out) const;
  int eval_chebyshev(double x, int max_order, double* out) const;
  int eval_rbf(double x, int max_order, double* out) const;
  int eval_relu(double x, int max_order, double* out) const;
  int eval_wavelet(double x, int max_order, double* out) const;

  BasisSpec spec_;
  int card_ = 0;
  int support_ = 0;
  Eigen::VectorXd knots_;
};

/// Dense evaluation of all basis functions with first and second derivatives.
BasisValues eval_basis(const BasisSpec& spec, double x);

/// Chain-rule lift of eval_basis to a jet argument.
std::vector<Jet> eval_basis_jet(const BasisSpec& spec, const Jet& x);

/// Derivative-of-Gaussian mother wavelet psi(z) = -z exp(-z^2/2) and its
/// derivatives up to order 4 (out[0..max_order]).
void dog_wavelet(double z, int max_order, double* out);

/// silu(x) = x * sigmoid(x) and derivatives up to order 3.
void silu_derivs(double x, int max_order, double* out);

}  // namespace fekan
