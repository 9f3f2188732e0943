#include "fekan/basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fekan {

namespace {

constexpr int kMaxSplineOrder = 10;

double clamp_to(double x, double lo, double hi, bool& outside) {
  outside = x < lo || x > hi;
  return std::clamp(x, lo, hi);
}

void zero_derivatives(double* out, int support, int max_order) {
  for (int o = 1; o <= max_order; ++o) std::fill_n(out + o * support, support, 0.0);
}

}  // namespace

std::string_view to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::Spline: return "spline";
    case BasisKind::Fourier: return "fourier";
    case BasisKind::Chebyshev: return "chebyshev";
    case BasisKind::Rbf: return "rbf";
    case BasisKind::Relu: return "relu";
    case BasisKind::HRelu: return "hrelu";
    case BasisKind::WaveletDoG: return "wavelet";
  }
  throw std::invalid_argument("unsupported basis kind");
}

BasisKind basis_kind_from_string(std::string_view name) {
  for (auto k : {BasisKind::Spline, BasisKind::Fourier, BasisKind::Chebyshev, BasisKind::Rbf,
                 BasisKind::Relu, BasisKind::HRelu, BasisKind::WaveletDoG}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unsupported basis kind: " + std::string(name));
}

int BasisSpec::cardinality() const {
  switch (kind) {
    case BasisKind::Spline:
    case BasisKind::Relu:
    case BasisKind::HRelu: return G + k;
    case BasisKind::Fourier: return 2 * N + 1;
    case BasisKind::Chebyshev: return k + 1;
    case BasisKind::Rbf: return n_f;
    case BasisKind::WaveletDoG: return 1;
  }
  throw std::invalid_argument("unsupported basis kind");
}

void BasisSpec::validate() const {
  if (!(domain_lo < domain_hi)) throw std::invalid_argument("basis domain must satisfy lo < hi");
  switch (kind) {
    case BasisKind::Spline:
      if (G < 1 || k < 1) throw std::invalid_argument("spline basis needs G >= 1 and k >= 1");
      if (k > kMaxSplineOrder) throw std::invalid_argument("spline order too large");
      break;
    case BasisKind::Relu:
    case BasisKind::HRelu:
      if (G < 1 || k < 0) throw std::invalid_argument("relu basis needs G >= 1 and k >= 0");
      if (kind == BasisKind::HRelu && n < 2) throw std::invalid_argument("hrelu basis needs n >= 2");
      break;
    case BasisKind::Fourier:
      if (N < 0) throw std::invalid_argument("fourier basis needs N >= 0");
      break;
    case BasisKind::Chebyshev:
      if (k < 0) throw std::invalid_argument("chebyshev basis needs k >= 0");
      break;
    case BasisKind::Rbf:
      if (n_f < 2) throw std::invalid_argument("rbf basis needs N_f >= 2");
      break;
    case BasisKind::WaveletDoG: break;
  }
}

Eigen::VectorXd spline_knots(int G, int k, double lo, double hi) {
  if (G < 1 || k < 1) throw std::invalid_argument("spline_knots: need G >= 1 and k >= 1");
  if (!(lo < hi)) throw std::invalid_argument("spline_knots: need lo < hi");
  const double h = (hi - lo) / G;
  Eigen::VectorXd t(G + 2 * k + 1);
  for (int i = 0; i < t.size(); ++i) t[i] = lo + (i - k) * h;
  // Pin the interior endpoints exactly.
  t[k] = lo;
  t[k + G] = hi;
  return t;
}

void silu_derivs(double x, int max_order, double* out) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  const double q = s * (1.0 - s);
  out[0] = x * s;
  if (max_order >= 1) out[1] = s + x * q;
  const double q1 = q * (1.0 - 2.0 * s);
  if (max_order >= 2) out[2] = 2.0 * q + x * q1;
  if (max_order >= 3) {
    const double q2 = q * (1.0 - 2.0 * s) * (1.0 - 2.0 * s) - 2.0 * q * q;
    out[3] = 3.0 * q1 + x * q2;
  }
}

void dog_wavelet(double z, int max_order, double* out) {
  // psi^(m)(z) = -(-1)^m He_{m+1}(z) exp(-z^2/2), He = probabilists' Hermite.
  const double e = std::exp(-0.5 * z * z);
  const double z2 = z * z;
  out[0] = -z * e;
  if (max_order >= 1) out[1] = (z2 - 1.0) * e;
  if (max_order >= 2) out[2] = -(z2 * z - 3.0 * z) * e;
  if (max_order >= 3) out[3] = (z2 * z2 - 6.0 * z2 + 3.0) * e;
  if (max_order >= 4) out[4] = -(z2 * z2 * z - 10.0 * z2 * z + 15.0 * z) * e;
}

BasisEvaluator::BasisEvaluator(const BasisSpec& spec) : spec_(spec) {
  spec_.validate();
  card_ = spec_.cardinality();
  switch (spec_.kind) {
    case BasisKind::Spline:
      support_ = spec_.k + 1;
      knots_ = spline_knots(spec_.G, spec_.k, spec_.domain_lo, spec_.domain_hi);
      break;
    case BasisKind::Relu:
    case BasisKind::HRelu: support_ = std::min(spec_.k + 1, card_); break;
    default: support_ = card_; break;
  }
}

int BasisEvaluator::evaluate(double x, int max_order, double* out) const {
  switch (spec_.kind) {
    case BasisKind::Spline: return eval_spline(x, max_order, out);
    case BasisKind::Fourier: return eval_fourier(x, max_order, out);
    case BasisKind::Chebyshev: return eval_chebyshev(x, max_order, out);
    case BasisKind::Rbf: return eval_rbf(x, max_order, out);
    case BasisKind::Relu:
    case BasisKind::HRelu: return eval_relu(x, max_order, out);
    case BasisKind::WaveletDoG: return eval_wavelet(x, max_order, out);
  }
  throw std::invalid_argument("unsupported basis kind");
}

// Uniform knots: with s the position inside the knot span, the degree-d
// functions on the span obey N[d][r] = ((s + d - r) N[d-1][r-1] + (r + 1 - s) N[d-1][r]) / d,
// and the m-th derivative of a degree-p function is the m-th backward
// difference of the degree p-m functions divided by h^m.
int BasisEvaluator::eval_spline(double x, int max_order, double* out) const {
  const int p = spec_.k;
  const int G = spec_.G;
  const int S = support_;
  if (std::isnan(x)) {
    std::fill_n(out, S * (max_order + 1), x);
    return 0;
  }
  bool outside = false;
  const double u = clamp_to(x, spec_.domain_lo, spec_.domain_hi, outside);
  const double h = (spec_.domain_hi - spec_.domain_lo) / G;
  const double pos = (u - spec_.domain_lo) / h;
  int cell = static_cast<int>(std::floor(pos));
  cell = std::clamp(cell, 0, G - 1);
  const double t = pos - cell;

  std::array<std::array<double, kMaxSplineOrder + 1>, kMaxSplineOrder + 1> N;
  N[0][0] = 1.0;
  for (int d = 1; d <= p; ++d) {
    const double inv = 1.0 / d;
    N[d][0] = (1.0 - t) * N[d - 1][0] * inv;
    for (int r = 1; r < d; ++r) N[d][r] = ((t + d - r) * N[d - 1][r - 1] + (r + 1 - t) * N[d - 1][r]) * inv;
    N[d][d] = t * N[d - 1][d - 1] * inv;
  }
  for (int r = 0; r <= p; ++r) out[r] = N[p][r];

  if (max_order >= 1) {
    if (outside) {
      zero_derivatives(out, S, max_order);
      return cell;
    }
    const double ih = 1.0 / h;
    double scale = 1.0;
    for (int m = 1; m <= max_order; ++m) {
      scale *= ih;
      double* o = out + m * S;
      if (m > p) {
        std::fill_n(o, S, 0.0);
        continue;
      }
      const auto& L = N[p - m];
      const int top = p - m;
      for (int r = 0; r <= p; ++r) {
        // sum_i (-1)^i C(m, i) L[r + i - m]
        double acc = 0.0, binom = 1.0;
        for (int i = 0; i <= m; ++i) {
          const int idx = r + i - m;
          if (idx >= 0 && idx <= top) acc += ((i & 1) ? -binom : binom) * L[idx];
          binom = binom * (m - i) / (i + 1);
        }
        o[r] = acc * scale;
      }
    }
  }
  return cell;
}

int BasisEvaluator::eval_fourier(double x, int max_order, double* out) const {
  const double lo = spec_.domain_lo, hi = spec_.domain_hi;
  const double scale = 2.0 / (hi - lo);
  const double xc = (2.0 * x - lo - hi) / (hi - lo);
  const int S = support_;
  out[0] = 1.0;
  for (int o = 1; o <= max_order; ++o) out[o * S] = 0.0;
  for (int j = 1; j <= spec_.N; ++j) {
    const double w = j * std::numbers::pi;
    const double c = std::cos(w * xc), s = std::sin(w * xc);
    const int ic = 2 * j - 1, is = 2 * j;
    out[ic] = c;
    out[is] = s;
    const double ws = w * scale;
    // d^m cos = ws^m cos(. + m pi/2), d^m sin = ws^m sin(. + m pi/2)
    double f = 1.0;
    for (int o = 1; o <= max_order; ++o) {
      f *= ws;
      switch (o % 4) {
        case 1: out[o * S + ic] = -f * s; out[o * S + is] = f * c; break;
        case 2: out[o * S + ic] = -f * c; out[o * S + is] = -f * s; break;
        case 3: out[o * S + ic] = f * s; out[o * S + is] = -f * c; break;
        default: out[o * S + ic] = f * c; out[o * S + is] = f * s; break;
      }
    }
  }
  return 0;
}

// phi_j(x) = cos(j * acos(tanh x)). Derivatives follow the chain through
// acos literally, so a saturated tanh (|t| == 1 in floating point) yields a
// non-finite derivative exactly as in reference implementations.
int BasisEvaluator::eval_chebyshev(double x, int max_order, double* out) const {
  const int S = support_;
  const double t = std::tanh(x);
  const double theta = std::acos(t);
  for (int j = 0; j <= spec_.k; ++j) out[j] = std::cos(j * theta);
  if (max_order < 1) return 0;

  const double one_m = 1.0 - t * t;
  const double t1 = one_m;
  const double t2 = -2.0 * t * t1;
  const double t3 = -2.0 * t1 * t1 - 2.0 * t * t2;
  const double root = std::sqrt(one_m);
  const double a1 = -1.0 / root;
  const double a2 = -t / (one_m * root);
  const double a3 = -(1.0 + 2.0 * t * t) / (one_m * one_m * root);
  const double th1 = a1 * t1;
  const double th2 = a2 * t1 * t1 + a1 * t2;
  const double th3 = a3 * t1 * t1 * t1 + 3.0 * a2 * t1 * t2 + a1 * t3;
  for (int j = 0; j <= spec_.k; ++j) {
    const double c = std::cos(j * theta), s = std::sin(j * theta);
    const double jj = j;
    out[S + j] = -jj * s * th1;
    if (max_order >= 2) out[2 * S + j] = -jj * jj * c * th1 * th1 - jj * s * th2;
    if (max_order >= 3) {
      out[3 * S + j] = jj * jj * jj * s * th1 * th1 * th1 - 3.0 * jj * jj * c * th1 * th2 - jj * s * th3;
    }
  }
  return 0;
}

int BasisEvaluator::eval_rbf(double x, int max_order, double* out) const {
  const int S = support_;
  const double lo = spec_.domain_lo, hi = spec_.domain_hi;
  bool outside = false;
  const double xc = clamp_to(x, lo, hi, outside);
  const double h = (hi - lo) / (spec_.n_f - 1);
  for (int j = 0; j < spec_.n_f; ++j) {
    const double c = (j == spec_.n_f - 1) ? hi : lo + j * h;
    const double u = (xc - c) / h;
    const double e = std::exp(-u * u);
    out[j] = e;
    if (max_order >= 1) out[S + j] = outside ? 0.0 : -2.0 * u * e / h;
    if (max_order >= 2) out[2 * S + j] = outside ? 0.0 : (4.0 * u * u - 2.0) * e / (h * h);
    if (max_order >= 3) out[3 * S + j] = outside ? 0.0 : (12.0 * u - 8.0 * u * u * u) * e / (h * h * h);
  }
  return 0;
}

// Phase b covers [s_b, e_b] with s_b = lo + (b - k) * span / G and width
// (k + 1) * span / G; phi_b = q^n with q the normalized bump
// (x - s)(e - x) * 4 / (e - s)^2. Relu is the n = 2 case.
int BasisEvaluator::eval_relu(double x, int max_order, double* out) const {
  const int S = support_;
  const int G = spec_.G, k = spec_.k;
  const int n = spec_.kind == BasisKind::Relu ? 2 : spec_.n;
  const double lo = spec_.domain_lo, hi = spec_.domain_hi;
  bool outside = false;
  const double xc = clamp_to(x, lo, hi, outside);
  const double w0 = (hi - lo) / G;
  const double width = (k + 1) * w0;
  const double norm = 4.0 / (width * width);
  int first = static_cast<int>(std::floor((xc - lo) / w0));
  first = std::clamp(first, 0, std::max(0, card_ - S));
  for (int i = 0; i < S; ++i) {
    const int b = first + i;
    const double s = lo + (b - k) * w0;
    const double e = s + width;
    double v[4] = {0.0, 0.0, 0.0, 0.0};
    if (xc > s && xc < e) {
      const double q = (xc - s) * (e - xc) * norm;
      const double q1 = (e + s - 2.0 * xc) * norm;
      const double q2 = -2.0 * norm;
      const double qn2 = std::pow(q, n - 2);
      v[0] = qn2 * q * q;
      v[1] = n * qn2 * q * q1;
      v[2] = n * (n - 1) * qn2 * q1 * q1 + n * qn2 * q * q2;
      v[3] = 3.0 * n * (n - 1) * qn2 * q1 * q2;
      if (n >= 3) v[3] += n * (n - 1) * (n - 2) * std::pow(q, n - 3) * q1 * q1 * q1;
    }
    out[i] = v[0];
    for (int o = 1; o <= max_order; ++o) out[o * S + i] = outside ? 0.0 : v[o];
  }
  return first;
}

int BasisEvaluator::eval_wavelet(double x, int max_order, double* out) const {
  double d[5];
  dog_wavelet(x, max_order, d);
  for (int o = 0; o <= max_order; ++o) out[o] = d[o];
  return 0;
}

BasisValues eval_basis(const BasisSpec& spec, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("eval_basis: non-finite input");
  const BasisEvaluator ev(spec);
  const int S = ev.support(), C = ev.cardinality();
  std::vector<double> buf(static_cast<std::size_t>(3 * S));
  const int first = ev.evaluate(x, 2, buf.data());
  BasisValues bv{Eigen::VectorXd::Zero(C), Eigen::VectorXd::Zero(C), Eigen::VectorXd::Zero(C)};
  for (int b = 0; b < S; ++b) {
    bv.phi[first + b] = buf[b];
    bv.dphi[first + b] = buf[S + b];
    bv.d2phi[first + b] = buf[2 * S + b];
  }
  return bv;
}

std::vector<Jet> eval_basis_jet(const BasisSpec& spec, const Jet& x) {
  const BasisValues bv = eval_basis(spec, x.value);
  std::vector<Jet> out;
  out.reserve(static_cast<std::size_t>(bv.phi.size()));
  for (Eigen::Index b = 0; b < bv.phi.size(); ++b) {
    out.push_back(jet_univariate(
        x, [&](double) { return bv.phi[b]; }, [&](double) { return bv.dphi[b]; },
        [&](double) { return bv.d2phi[b]; }));
  }
  return out;
}

}  // namespace fekan
