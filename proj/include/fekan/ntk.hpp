#pragma once

// Empirical neural tangent kernel of scalar-output models, its spectrum,
// drift across checkpoints and the kernel-predicted error decay.

#include "fekan/model.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace fekan {

inline constexpr int kMaxNtkPoints = 128;

struct NtkMatrix {
  Eigen::MatrixXd K;       // N x N, exactly symmetric
  Eigen::MatrixXd points;  // N x input_dims
  double tau = 0.0;        // epoch tag
};

struct Spectrum {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns match values; empty when not requested
  double tau = 0.0;
};

/// Rows are d f(x_i) / d theta for a scalar-output model.
Eigen::MatrixXd parameter_jacobian(const FekanModel& model, const Eigen::MatrixXd& points);

/// K_ij = <d f(x_i)/d theta, d f(x_j)/d theta>. Rejects multi-output models
/// and more than kMaxNtkPoints points.
NtkMatrix ntk_matrix(const FekanModel& model, const Eigen::MatrixXd& points, double tau = 0.0);

/// Cyclic Jacobi eigensolver; stops when the off-diagonal Frobenius norm is
/// below 1e-12 ||K||_F. Throws std::invalid_argument when K is not square or
/// is asymmetric beyond 1e-10 relative.
Spectrum eigen_spectrum(const Eigen::MatrixXd& K, bool with_vectors = true);

/// Average convergence rate: the mean eigenvalue.
double acr(const Spectrum& s);

struct DriftPoint {
  Spectrum spectrum;
  double frobenius_to_final = 0.0;  // ||K(tau) - K(tau_final)||_F
};

/// Spectra of the kernel at each (tau, model) checkpoint and the Frobenius
/// distance of each kernel to the last one. Needs at least two checkpoints.
std::vector<DriftPoint> ntk_drift(const std::vector<std::pair<double, FekanModel>>& checkpoints,
                                  const Eigen::MatrixXd& points);

/// Componentwise |Q^T (f(tau) - y)| = exp(-eta lambda_i tau) |Q^T y| for
/// gradient flow from f(0) = 0, in the eigenbasis of K (descending order).
Eigen::VectorXd predicted_error_decay(const Eigen::MatrixXd& K, double eta, double tau, const Eigen::VectorXd& y);

/// lambda_i / lambda_1 at i = N/2 (0-based index N/2).
double normalized_mid_eigenvalue(const Spectrum& s);

struct SpectralBiasComparison {
  double kan = 0.0;    // normalized mid eigenvalue
  double fekan = 0.0;
  bool fekan_slower_decay = false;
};
SpectralBiasComparison compare_spectral_bias(const Spectrum& kan, const Spectrum& fekan);

/// CSV rows tau,index,eigenvalue.
std::string spectrum_csv(const std::vector<Spectrum>& spectra);
void write_spectrum_csv(const std::string& path, const std::vector<Spectrum>& spectra);

}  // namespace fekan
