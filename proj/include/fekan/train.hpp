#pragma once

// Adam, full-batch training loops, multi-seed aggregation and the phase-wise
// boundary introduction protocol.

#include "fekan/model.hpp"
#include "fekan/physics.hpp"
#include "fekan/separable.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fekan {

struct AdamState {
  Eigen::VectorXd m, v;
  int step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Returns false, leaving params and state
/// untouched, when any gradient is non-finite (a divergence event).
/// Moments are sized on first use; a later size change throws DimensionMismatch.
bool adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state);

enum class DivergencePolicy { Halt, Record };

struct EarlyStop {
  enum class Metric { Loss, RelL2 };
  int patience = 1000;  // epochs without improvement
  Metric metric = Metric::Loss;
  double min_delta = 0.0;
};

struct TrainConfig {
  int epochs = 1000;
  std::vector<std::uint64_t> seeds{0};
  int log_every = 100;
  std::optional<EarlyStop> early_stop;
  DivergencePolicy divergence_policy = DivergencePolicy::Halt;
  double lr = 1e-3;

  void validate() const;
};

/// Non-finite or above 1e12.
bool is_divergent(double loss);

struct TrainRecord {
  int epoch = 0;
  double loss = 0.0;
  double l_res = 0.0;
  double l_bc = 0.0;
  double l_ic = 0.0;
  double rel_l2 = std::numeric_limits<double>::quiet_NaN();  // NaN when no metric
  double sec_per_iter = 0.0;                                 // running mean over optimizer steps
  bool diverged = false;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  int epochs_run = 0;
  bool diverged = false;
  std::optional<int> diverged_epoch;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_rel_l2 = std::numeric_limits<double>::quiet_NaN();
  double sec_per_iter = 0.0;
  /// Extra scalar metrics (e.g. per-face boundary errors) aggregated by run_multiseed.
  std::map<std::string, double> metrics;
};

/// Loss (and gradients when asked) at the current parameters.
using LossFn = std::function<LossResult(bool with_grads)>;
/// Held-out relative L2 at the current parameters.
using MetricFn = std::function<double()>;

struct ParamAccess {
  std::function<Eigen::VectorXd()> get;
  std::function<void(const Eigen::VectorXd&)> set;
};

/// Generic full-batch Adam loop. Records are written at epoch 0, every
/// log_every epochs and after the final step (epoch == epochs_run); each row
/// holds the loss terms and metric at the parameters of that epoch before
/// its update. `state` carries optimizer moments across calls when given.
TrainResult run_adam(const ParamAccess& params, const LossFn& loss, const MetricFn& metric, const TrainConfig& cfg,
                     AdamState* state = nullptr);

/// Full-batch MSE regression of `targets` (rows x outputs) at `points`.
TrainResult train_regression(FekanModel& model, const Eigen::MatrixXd& points, const Eigen::MatrixXd& targets,
                             const TrainConfig& cfg, const MetricFn& metric = {}, AdamState* state = nullptr);

/// Mean squared error of the model on (points, targets) and its gradient.
LossResult regression_loss(const FekanModel& model, const Eigen::MatrixXd& points, const Eigen::MatrixXd& targets,
                           bool with_grads);

TrainResult train_pinn(FekanModel& model, const PdeProblem& problem, const Batches& batches, const TrainConfig& cfg,
                       const MetricFn& metric = {}, AdamState* state = nullptr);

TrainResult train_separable(SeparableModel& model, const PdeProblem& problem, const SeparableBatches& batches,
                            const TrainConfig& cfg, const MetricFn& metric = {}, AdamState* state = nullptr);

/// Affine map of states into [-1, 1]^3 taken from the training data range.
struct StateScaling {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_width = Eigen::Vector3d::Ones();

  static StateScaling fit(const std::vector<Eigen::MatrixXd>& trajectories);
  [[nodiscard]] Eigen::Vector3d to_unit(const Eigen::Vector3d& s) const;
  [[nodiscard]] Eigen::Vector3d from_unit(const Eigen::Vector3d& u) const;
};

/// Rolls the one-step map forward `steps` times from state0 (rows: states).
Eigen::MatrixXd rollout(const FekanModel& model, const StateScaling& scaling, const Eigen::Vector3d& state0, int steps);

/// One-step map s_i -> s_{i+1} in scaled coordinates. Epoch e takes one Adam
/// step on all transitions of trajectory e mod n. The metric is the
/// relative L2 of the autoregressive rollout against `held_out`.
TrainResult train_lorenz_onestep(FekanModel& model, const std::vector<Eigen::MatrixXd>& trajectories,
                                 const Eigen::MatrixXd& held_out, const StateScaling& scaling, const TrainConfig& cfg);

/// Sequential Lorenz PI over windows of length dt on [0, t_end]. Window w
/// trains a fresh model from `make_model(w)` with the previous window's
/// predicted terminal state as soft initial condition.
struct LorenzPiResult {
  std::vector<FekanModel> models;
  std::vector<TrainResult> windows;
  double rel_l2 = 0.0;                 // all states over [0, t_end]
  Eigen::Vector3d rel_l2_per_state = Eigen::Vector3d::Zero();
  bool diverged = false;
};
LorenzPiResult train_lorenz_pi(const std::function<FekanModel(int window)>& make_model, const PdeProblem& base,
                               const Eigen::Vector3d& state0, double t_end, double dt, const TrainConfig& cfg,
                               std::uint64_t seed, const Eigen::MatrixXd& reference);

// ---------------------------------------------------------------- phases

struct Phase {
  Batches batches;
  int epochs = 0;
};

/// Phase i trains on every point of face i plus one anchor point from each
/// other face (drawn per seed); the residual batch is shared. Requires a
/// rectangular two-dimensional problem with four Dirichlet faces.
std::vector<Phase> phase_schedule(const PdeProblem& problem, const Batches& full, std::uint64_t seed,
                                  const std::vector<int>& epochs = {20000, 20000, 20000, 45000});

struct PhaseRun {
  std::vector<TrainResult> phases;
  /// face_mse[p][q]: mean squared boundary error on face q after phase p.
  std::vector<std::vector<double>> face_mse;
};

/// Trains the phases in order, carrying optimizer moments across phases.
PhaseRun train_phases(FekanModel& model, const PdeProblem& problem, const std::vector<Phase>& phases,
                      const Batches& full, const TrainConfig& cfg, const MetricFn& metric = {});

/// Mean squared Dirichlet mismatch of the model on each face block.
std::vector<double> face_errors(const FekanModel& model, const PdeProblem& problem, const Batches& full);

// ------------------------------------------------------------ multi-seed

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult result;
};

struct CurvePoint {
  int epoch = 0;
  double loss_mean = 0.0;
  double loss_std = 0.0;
  double rel_l2_mean = 0.0;
  double rel_l2_std = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population convention

  bool operator==(const MeanStd&) const = default;
};

struct MultiSeedSummary {
  int seeds = 0;
  int completed = 0;
  int diverged = 0;
  std::optional<MeanStd> rel_l2;  // over completed runs; absent when none completed
  double sec_per_iter = 0.0;      // mean over all runs
  std::map<std::string, MeanStd> metrics;
  /// Mean/std over seeds at shared record epochs, cut at the earliest divergence.
  std::vector<CurvePoint> curve;
  std::vector<SeedRun> runs;
};

MeanStd mean_std(const std::vector<double>& values);

MultiSeedSummary summarize(std::vector<SeedRun> runs);

/// Runs `run(seed)` for every seed on a small worker pool (threads <= 0 picks
/// the hardware concurrency) and summarizes. Results do not depend on the
/// thread count.
MultiSeedSummary run_multiseed(const std::vector<std::uint64_t>& seeds,
                               const std::function<TrainResult(std::uint64_t)>& run, int threads = 0);

// ------------------------------------------------------------------ CSV

/// Columns epoch,loss,l_res,l_bc,l_ic,rel_l2,sec_per_iter,diverged. Without
/// timing the sec_per_iter column is left empty so files compare bytewise.
std::string records_csv(const std::vector<TrainRecord>& records, bool with_timing = true);
void write_records_csv(const std::string& path, const std::vector<TrainRecord>& records, bool with_timing = true);

}  // namespace fekan
