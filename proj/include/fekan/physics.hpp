#pragma once

// Targets, ODE/PDE problem definitions, collocation sampling and the
// physics-informed loss. Residuals are pointwise functions of the model's
// output jets (value, first and pure second input derivatives) and also
// report their Jacobian so the loss can be pulled back into the model.

#include "fekan/model.hpp"
#include "fekan/separable.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fekan {

// ---------------------------------------------------------------- targets

struct HighFreqTarget {
  double w1 = 350.0;
  double w2 = 6000.0;
  double w3 = 150.0;
  double breakpoint = 0.01;
};

/// 20 sin(2 pi w1 x) + 1.5 sin(2 pi w2 x) + 70 below the breakpoint,
/// 10 sin(2 pi w3 x) + 30 from it on.
double target_eval(const HighFreqTarget& t, double x);

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& s, const LorenzParams& p = {});

using OdeRhs = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Classical RK4. Row i of the result is the state after i steps.
Eigen::MatrixXd integrate_rk4(const OdeRhs& rhs, const Eigen::VectorXd& state0, double dt, int steps);

// ------------------------------------------------------------- residuals

/// Output jets of a model at one point: v[o], g[o * dims + m], h[o * dims + m].
struct PointJets {
  int outputs = 1;
  int dims = 0;
  const double* v = nullptr;
  const double* g = nullptr;
  const double* h = nullptr;
};

inline constexpr int kMaxComponents = 3;
inline constexpr int kMaxOutputs = 3;

/// d r_c / d (v, g, h); zeroed by the caller before each residual call.
struct ResidualJacobian {
  int outputs = 1;
  int dims = 0;
  std::array<double, kMaxComponents * kMaxOutputs> dv{};
  std::array<double, kMaxComponents * kMaxOutputs * kMaxJetDims> dg{}, dh{};

  double& v(int c, int o) { return dv[c * kMaxOutputs + o]; }
  double& g(int c, int o, int m) { return dg[(c * kMaxOutputs + o) * kMaxJetDims + m]; }
  double& h(int c, int o, int m) { return dh[(c * kMaxOutputs + o) * kMaxJetDims + m]; }
  [[nodiscard]] double v(int c, int o) const { return dv[c * kMaxOutputs + o]; }
  [[nodiscard]] double g(int c, int o, int m) const { return dg[(c * kMaxOutputs + o) * kMaxJetDims + m]; }
  [[nodiscard]] double h(int c, int o, int m) const { return dh[(c * kMaxOutputs + o) * kMaxJetDims + m]; }
};

/// Writes residual components r[0..components) at x; fills jac when non-null.
using PointResidual = std::function<void(const double* x, const PointJets& u, double* r, ResidualJacobian* jac)>;
/// Writes `outputs` values at x.
using PointField = std::function<void(const double* x, double* out)>;

struct Face {
  int axis = 0;
  bool upper = false;

  bool operator==(const Face&) const = default;
};

struct PdeProblem {
  std::string name;
  int dims = 1;                    // raw input coordinates, time last when present
  std::optional<int> time_axis;
  int outputs = 1;
  Eigen::VectorXd lo, hi;

  int residual_components = 1;
  PointResidual residual;

  /// Dirichlet faces in the order used by the phase protocol; bc_value gives u there.
  std::vector<Face> dirichlet_faces;
  PointField bc_value;
  /// Axes with periodic value and first-derivative matching.
  std::vector<int> periodic_axes;

  /// Initial state u(x, t0) and optionally u_t(x, t0).
  PointField ic_value;
  PointField ic_rate;

  PointField exact;    // closed-form solution when known
  PointField forcing;  // source term q / f when present (diagnostics)

  int n_res = 1000;
  int n_bc = 100;  // per Dirichlet face, or pairs per periodic axis
  int n_ic = 100;
  double lambda_res = 1.0;
  double lambda_bc = 1.0;
  double lambda_ic = 1.0;
};

/// Fixed collocation sets for one run.
struct Batches {
  Eigen::MatrixXd res;                    // n_res x dims
  std::vector<Eigen::MatrixXd> bc;        // one block per Dirichlet face
  std::vector<Eigen::MatrixXd> periodic;  // per periodic axis: points on the lower face
  Eigen::MatrixXd ic;                     // n_ic x dims, time coordinate at t0
};

/// Interior points uniform in the open box, boundary points uniform on each
/// face, initial points uniform at t0. Deterministic per seed.
Batches sample_collocation(const PdeProblem& problem, std::uint64_t seed);

struct LossTerms {
  double loss = 0.0;
  double l_res = 0.0;
  double l_bc = 0.0;
  double l_ic = 0.0;
};

struct LossResult {
  LossTerms terms;
  ParamGrads grads;  // empty unless requested
  bool finite = true;
};

/// lambda_res * mean |r|^2 + lambda_bc * mean |bc mismatch|^2 + lambda_ic * mean |ic mismatch|^2.
/// Empty blocks contribute zero. Gradients are exact (jets + pullback).
LossResult pinn_loss(const FekanModel& model, const PdeProblem& problem, const Batches& batches,
                     bool with_grads = true);

/// Separable counterpart on tensor grids: the residual is evaluated on
/// `interior`, Dirichlet data on the grid restricted to each face and the
/// initial condition on the grid restricted to t0.
struct SeparableBatches {
  AxisGrid interior;
  std::vector<AxisGrid> bc;  // one per Dirichlet face
  std::optional<AxisGrid> ic;
};

/// Per-axis sorted uniform samples strictly inside the box.
SeparableBatches sample_separable(const PdeProblem& problem, const std::vector<int>& counts, std::uint64_t seed);

LossResult separable_pinn_loss(const SeparableModel& model, const PdeProblem& problem, const SeparableBatches& batches,
                               bool with_grads = true);

/// ||pred - exact|| / ||exact||.
double relative_l2(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& exact);

/// Model outputs at each row of `points` (rows x outputs, flattened row-major).
Eigen::VectorXd predict(const FekanModel& model, const Eigen::MatrixXd& points);

// ------------------------------------------------------------- problems

/// Delta u + k^2 u = q on [-1,1]^2, u = 0 on the boundary, u = sin(a1 pi x) sin(a2 pi y).
PdeProblem helmholtz2d(double a1 = 4.0, double a2 = 4.0, double k = 1.0);
/// Three-dimensional analogue on [-1,1]^3.
PdeProblem helmholtz3d(double a1 = 6.0, double a2 = 6.0, double a3 = 6.0, double k = 1.0);
/// u_t - 1e-4 u_xx + 5u^3 - 5u = 0 on [-1,1] x [0,1], periodic in x, u(x,0) = x^2 cos(pi x).
PdeProblem allen_cahn();
/// u_tt - Delta u + u^2 = f on [-1,1]^2 x [0,10] with u = (x1+x2) cos t + x1 x2 sin t.
PdeProblem klein_gordon();
/// Lorenz system as a t -> (x,y,z) problem on [t0, t1] with soft initial state.
PdeProblem lorenz_pi(double t0, double t1, const Eigen::Vector3d& state0, const LorenzParams& p = {});
/// u'' + pi^2 sin(pi x) = 0 on [-1,1], u(+-1) = 0, u = sin(pi x).
PdeProblem poisson_toy();

/// Number of windows of length dt covering [0, t_end].
int lorenz_window_count(double t_end = 4.0, double dt = 0.5);

// ------------------------------------------------------------- reference data

/// Values on a tensor grid, row-major (last axis fastest).
struct GridData {
  std::vector<Eigen::Index> shape;
  std::vector<Eigen::VectorXd> axes;  // may be empty when read from CSV
  Eigen::VectorXd values;
};

struct AllenCahnSolverOptions {
  int n_x = 512;       // Fourier modes on the periodic x grid
  double dt = 1e-4;    // ETDRK4 step
  int n_t = 201;       // stored snapshots on [0, 1], endpoints included
};

/// Fourier-spectral ETDRK4 solution of the Allen-Cahn problem.
/// x_i = -1 + 2 i / n_x (periodic), t_j = j / (n_t - 1).
GridData allen_cahn_reference(const AllenCahnSolverOptions& options = {});

/// RK4 reference for Lorenz PI: columns t, x, y, z.
Eigen::MatrixXd lorenz_reference(const Eigen::Vector3d& state0, double t_end, double dt, const LorenzParams& p = {});

/// CSV: first line the axis sizes, then one line per leading index with the
/// last-axis values. Axis coordinates are not stored; readers supply them.
void write_grid_csv(const std::string& path, const GridData& data);
/// Reads shape and values back; axes are left empty.
GridData read_grid_csv(const std::string& path);

}  // namespace fekan
