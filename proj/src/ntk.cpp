#include "fekan/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fekan {

Eigen::MatrixXd parameter_jacobian(const FekanModel& model, const Eigen::MatrixXd& points) {
  if (model.output_dims() != 1) throw DimensionMismatch("NTK needs a scalar-output model");
  if (points.cols() != model.input_dims()) throw DimensionMismatch("NTK points do not match the model inputs");
  const Eigen::MatrixXd pts = points.transpose();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(points.rows(), model.param_count());
  Workspace ws;
  Eigen::VectorXd row(model.param_count());
  const double one = 1.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    row.setZero();
    model.eval(pts.col(i).data(), 0, true, ws);
    model.pullback(ws, &one, nullptr, nullptr, row.data());
    J.row(i) = row.transpose();
  }
  return J;
}

NtkMatrix ntk_matrix(const FekanModel& model, const Eigen::MatrixXd& points, double tau) {
  if (points.rows() > kMaxNtkPoints) throw std::invalid_argument("NTK point sets are capped at 128 points");
  const Eigen::MatrixXd J = parameter_jacobian(model, points);
  const Eigen::Index n = J.rows();
  NtkMatrix out;
  out.points = points;
  out.tau = tau;
  out.K.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = J.row(i).dot(J.row(j));
      out.K(i, j) = v;
      out.K(j, i) = v;
    }
  }
  return out;
}

Spectrum eigen_spectrum(const Eigen::MatrixXd& K, bool with_vectors) {
  if (K.rows() != K.cols()) throw std::invalid_argument("eigen_spectrum: matrix is not square");
  const Eigen::Index n = K.rows();
  const double scale = K.norm();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1e-300))
    throw std::invalid_argument("eigen_spectrum: matrix is not symmetric");
  Eigen::MatrixXd A = 0.5 * (K + K.transpose());
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
  auto off = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += A(i, j) * A(i, j);
    return std::sqrt(s);
  };
  const double tol = 1e-12 * scale;
  for (int sweep = 0; sweep < 100 && off() > tol; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        // rotation zeroing A(p, q)
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return A(a, a) > A(b, b); });
  Spectrum out;
  out.values.resize(n);
  if (with_vectors) out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = A(order[i], order[i]);
    if (with_vectors) out.vectors.col(i) = V.col(order[i]);
  }
  return out;
}

double acr(const Spectrum& s) {
  if (s.values.size() == 0) throw std::invalid_argument("acr: empty spectrum");
  return s.values.mean();
}

std::vector<DriftPoint> ntk_drift(const std::vector<std::pair<double, FekanModel>>& checkpoints,
                                  const Eigen::MatrixXd& points) {
  if (checkpoints.size() < 2) throw std::invalid_argument("ntk_drift needs at least two checkpoints");
  std::vector<NtkMatrix> ks;
  for (const auto& [tau, model] : checkpoints) ks.push_back(ntk_matrix(model, points, tau));
  std::vector<DriftPoint> out;
  for (const auto& k : ks) {
    DriftPoint d;
    d.spectrum = eigen_spectrum(k.K, false);
    d.spectrum.tau = k.tau;
    d.frobenius_to_final = (k.K - ks.back().K).norm();
    out.push_back(std::move(d));
  }
  return out;
}

Eigen::VectorXd predicted_error_decay(const Eigen::MatrixXd& K, double eta, double tau, const Eigen::VectorXd& y) {
  if (eta < 0.0) throw std::invalid_argument("predicted_error_decay: negative learning rate");
  if (y.size() != K.rows()) throw DimensionMismatch("predicted_error_decay: y does not match K");
  const Spectrum s = eigen_spectrum(K, true);
  const Eigen::VectorXd proj = (s.vectors.transpose() * y).cwiseAbs();
  Eigen::VectorXd out(proj.size());
  for (Eigen::Index i = 0; i < proj.size(); ++i) out[i] = std::exp(-eta * std::max(s.values[i], 0.0) * tau) * proj[i];
  return out;
}

double normalized_mid_eigenvalue(const Spectrum& s) {
  if (s.values.size() == 0) throw std::invalid_argument("empty spectrum");
  const double top = s.values[0];
  if (!(top > 0.0)) return 0.0;
  return s.values[s.values.size() / 2] / top;
}

SpectralBiasComparison compare_spectral_bias(const Spectrum& kan, const Spectrum& fekan) {
  SpectralBiasComparison c;
  c.kan = normalized_mid_eigenvalue(kan);
  c.fekan = normalized_mid_eigenvalue(fekan);
  c.fekan_slower_decay = c.fekan > c.kan;
  return c;
}

std::string spectrum_csv(const std::vector<Spectrum>& spectra) {
  std::string out = "tau,index,eigenvalue\n";
  char buf[128];
  for (const auto& s : spectra) {
    for (Eigen::Index i = 0; i < s.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%td,%.17g\n", s.tau, static_cast<std::ptrdiff_t>(i), s.values[i]);
      out += buf;
    }
  }
  return out;
}

void write_spectrum_csv(const std::string& path, const std::vector<Spectrum>& spectra) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << spectrum_csv(spectra);
}

}  // namespace fekan
