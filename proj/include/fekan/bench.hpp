#pragma once

// Experiment presets, run configs, per-experiment runners, summary emission
// and the comparison table used by the CLI.

#include "fekan/model.hpp"
#include "fekan/ntk.hpp"
#include "fekan/train.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fekan::bench {

enum class Experiment { FitFunction, LorenzMap, SolvePde, SolveSeparable, LorenzPi, Forgetting, Ntk };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

/// Feature map recipe. Identity gives plain KAN; deterministic maps share one
/// frequency list across enriched dimensions; RFF draws with the run seed.
struct MapSpec {
  enum class Mode { Identity, Deterministic, Rff };
  Mode mode = Mode::Identity;
  std::vector<double> freqs;  // deterministic: a_1..a_m per enriched dimension
  bool include_one = true;
  double sigma = 1.0;  // rff
  int m = 3;           // rff frequencies per dimension
  std::vector<int> enrich_dims;  // empty = all

  [[nodiscard]] FeatureMap build(int input_dims, std::uint64_t seed) const;
  [[nodiscard]] bool enriched() const { return mode != Mode::Identity; }
};

struct ModelSpec {
  std::vector<int> hidden;  // widths between map and output (separable: body hidden)
  BasisSpec basis;
  MapSpec map;
  std::optional<std::pair<double, double>> input_domain;  // first-layer domain override
  std::optional<bool> base_path;
  double init_scale = 0.1;
  int rank = 10;  // separable embedding width
};

struct DataSpec {
  int n_res = 0;  // 0 keeps the problem default
  int n_bc = 0;
  int n_ic = 0;
  int n_train = 2000;                // fit-function / ntk sample count on [0, 1]
  int n_eval = 10000;                // fit-function evaluation points
  std::vector<int> grid;             // separable collocation counts per axis
  std::vector<int> eval_grid;        // evaluation grid counts per axis (pde / separable)
  std::vector<int> phase_epochs;     // forgetting
  int n_traj = 20;                   // lorenz-map training trajectories
  int traj_steps = 500;              // lorenz-map steps per trajectory
  double dt = 0.01;                  // lorenz-map step
  double t_end = 4.0;                // lorenz-pi horizon
  double window = 0.5;               // lorenz-pi window length
  int ntk_points = 128;
  int ntk_checkpoints = 5;           // evenly spaced in epochs, both ends included
};

struct RunConfig {
  std::string name;
  Experiment experiment = Experiment::FitFunction;
  std::string problem;  // target / PDE name
  std::string label;    // architecture label, e.g. "FEKAN" or "SPI-KAN"
  ModelSpec model;
  TrainConfig train;
  DataSpec data;
  nlohmann::json metadata = nlohmann::json::object();  // provenance notes, keys sorted

  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Every named preset. Names follow <experiment>-<kan|fekan>-<basis>[-variant].
const std::map<std::string, RunConfig>& load_presets();

/// Human-readable basis description, e.g. "spline k=3 G=5".
std::string basis_label(const BasisSpec& spec);

/// Desk-scale overrides applied on top of a preset; unset fields keep it.
struct Overrides {
  std::optional<int> epochs;
  std::optional<int> n_res;
  std::optional<int> seeds;  // seeds 0..n-1
  std::optional<int> log_every;
};
RunConfig apply_overrides(const RunConfig& preset, const Overrides& o);

struct SummaryRow {
  std::string name;
  std::string label;
  std::string basis;
  long long params = 0;
  std::optional<MeanStd> rel_l2;
  double sec_per_iter = 0.0;
  int seeds = 0;
  int completed = 0;
  int diverged = 0;

  bool operator==(const SummaryRow&) const = default;
};

nlohmann::ordered_json to_json(const SummaryRow& row);
SummaryRow summary_row_from_json(const nlohmann::json& j);

struct RunOutput {
  SummaryRow row;
  MultiSeedSummary summary;
  /// Per seed NTK spectra at each checkpoint (ntk experiment only).
  std::map<std::uint64_t, std::vector<Spectrum>> spectra;
};

/// Summary row for a config from its multi-seed aggregate.
SummaryRow make_row(const RunConfig& cfg, const MultiSeedSummary& summary);

/// Parameter count of the model the config builds.
long long param_count(const RunConfig& cfg);

/// Runs every seed of the config. `reference_dir` is where reference_<problem>.csv
/// files live (needed by allen_cahn). threads <= 0 picks the hardware count.
RunOutput run(const RunConfig& cfg, const std::string& reference_dir, int threads = 0);

/// Writes records_<seed>.csv, summary.json and spectra files into `dir`.
/// `preset` is the unmodified preset so both preset and effective values are kept.
void emit_summary(const std::string& dir, const RunConfig& effective, const RunConfig& preset, const RunOutput& out);

/// Summary JSON (also what emit_summary writes), without timing-free guarantees:
/// sec_per_iter is included.
nlohmann::ordered_json summary_json(const RunConfig& effective, const RunConfig& preset, const RunOutput& out);

/// Writes reference_<problem>.csv for allen_cahn or lorenz_pi and returns the path.
std::string make_reference(const std::string& problem, const std::string& dir);
std::string reference_path(const std::string& dir, const std::string& problem);

struct CompareRow {
  SummaryRow row;
  std::optional<double> rel_l2_delta;  // mean rel-L2 minus the first summary's
  double sec_per_iter_delta = 0.0;
  int diverged_delta = 0;
};

/// Joins summaries; deltas are taken against the first one.
std::vector<CompareRow> compare(const std::vector<SummaryRow>& rows);
std::string format_compare(const std::vector<CompareRow>& rows);

/// FEKAN_OUT when set, otherwise "runs".
std::string output_root();

}  // namespace fekan::bench
