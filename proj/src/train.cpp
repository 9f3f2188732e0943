#include "fekan/train.hpp"

#include "fekan/random.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace fekan {

bool adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& s) {
  if (grads.size() != params.size()) throw DimensionMismatch("adam_step: gradient and parameter sizes differ");
  if (s.m.size() == 0 && s.v.size() == 0) {
    s.m = Eigen::VectorXd::Zero(params.size());
    s.v = Eigen::VectorXd::Zero(params.size());
  }
  if (s.m.size() != params.size() || s.v.size() != params.size())
    throw DimensionMismatch("adam_step: moment sizes differ from parameters");
  if (!grads.allFinite()) return false;
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, s.step);
  const double c2 = 1.0 - std::pow(s.beta2, s.step);
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
  return true;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (log_every <= 0) throw std::invalid_argument("log_every must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (early_stop && early_stop->patience <= 0) throw std::invalid_argument("early-stop patience must be positive");
}

bool is_divergent(double loss) { return !std::isfinite(loss) || loss > 1e12; }

namespace {

using Clock = std::chrono::steady_clock;

TrainRecord make_record(int epoch, const LossTerms& t, double rel, double spi, bool diverged) {
  return TrainRecord{epoch, t.loss, t.l_res, t.l_bc, t.l_ic, rel, spi, diverged};
}

}  // namespace

TrainResult run_adam(const ParamAccess& params, const LossFn& loss, const MetricFn& metric, const TrainConfig& cfg,
                     AdamState* state) {
  cfg.validate();
  AdamState local;
  AdamState& st = state ? *state : local;
  st.lr = cfg.lr;
  TrainResult out;
  Eigen::VectorXd theta = params.get();
  double seconds = 0.0;
  int steps = 0;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  auto spi = [&] { return steps > 0 ? seconds / steps : 0.0; };
  auto eval_metric = [&] { return metric ? metric() : std::numeric_limits<double>::quiet_NaN(); };

  int epoch = 0;
  bool stopped = false;
  for (; epoch < cfg.epochs; ++epoch) {
    auto t0 = Clock::now();
    LossResult r = loss(true);
    seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    const bool finite = r.finite && std::isfinite(r.terms.loss) && r.grads.allFinite();
    const bool divergent = !finite || is_divergent(r.terms.loss);
    const bool halt = !finite || (divergent && cfg.divergence_policy == DivergencePolicy::Halt);
    const bool log_now = epoch % cfg.log_every == 0;
    // the row describes the parameters this epoch started from
    const double rel = (log_now || divergent) ? eval_metric() : std::numeric_limits<double>::quiet_NaN();
    t0 = Clock::now();
    if (!halt && adam_step(theta, r.grads, st)) params.set(theta);
    seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    ++steps;

    if (divergent) {
      if (!out.diverged) {
        out.diverged = true;
        out.diverged_epoch = epoch;
      }
      out.records.push_back(make_record(epoch, r.terms, rel, spi(), true));
      if (halt) {
        stopped = true;
        ++epoch;
        break;
      }
      continue;
    }
    if (log_now) out.records.push_back(make_record(epoch, r.terms, rel, spi(), false));
    if (cfg.early_stop) {
      const auto& es = *cfg.early_stop;
      double value = r.terms.loss;
      bool have = true;
      if (es.metric == EarlyStop::Metric::RelL2) {
        have = log_now && metric;
        value = rel;
      }
      if (have) {
        if (value < best - es.min_delta) {
          best = value;
          best_epoch = epoch;
        } else if (epoch - best_epoch >= es.patience) {
          ++epoch;
          break;
        }
      }
    }
  }
  out.epochs_run = epoch;
  out.sec_per_iter = spi();
  if (!stopped) {
    const LossResult fin = loss(false);
    const bool bad = !fin.finite || is_divergent(fin.terms.loss);
    if (bad && !out.diverged) {
      out.diverged = true;
      out.diverged_epoch = epoch;
    }
    out.final_loss = fin.terms.loss;
    out.final_rel_l2 = bad ? std::numeric_limits<double>::quiet_NaN() : eval_metric();
    out.records.push_back(make_record(epoch, fin.terms, out.final_rel_l2, out.sec_per_iter, bad));
  } else {
    out.final_loss = out.records.back().loss;
  }
  return out;
}

namespace {

ParamAccess access(FekanModel& m) {
  return {[&m] { return Eigen::VectorXd(m.params()); }, [&m](const Eigen::VectorXd& t) { m.params() = t; }};
}

}  // namespace

LossResult regression_loss(const FekanModel& model, const Eigen::MatrixXd& points, const Eigen::MatrixXd& targets,
                           bool with_grads) {
  if (points.rows() != targets.rows()) throw DimensionMismatch("regression: points and targets differ in rows");
  if (points.cols() != model.input_dims() || targets.cols() != model.output_dims())
    throw DimensionMismatch("regression: model does not match data");
  const Eigen::Index n = points.rows();
  const int O = model.output_dims();
  LossResult out;
  if (with_grads) out.grads = ParamGrads::Zero(model.param_count());
  if (n == 0) return out;
  const Eigen::MatrixXd pts = points.transpose();
  const double w = 1.0 / static_cast<double>(n * O);
  Workspace ws;
  std::vector<double> vb(O);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    model.eval(pts.col(i).data(), 0, with_grads, ws);
    for (int o = 0; o < O; ++o) {
      const double e = ws.value(o) - targets(i, o);
      sum += e * e;
      vb[o] = 2.0 * w * e;
    }
    if (with_grads) model.pullback(ws, vb.data(), nullptr, nullptr, out.grads.data());
  }
  out.terms.loss = sum * w;
  out.terms.l_res = out.terms.loss;
  out.finite = std::isfinite(out.terms.loss);
  return out;
}

TrainResult train_regression(FekanModel& model, const Eigen::MatrixXd& points, const Eigen::MatrixXd& targets,
                             const TrainConfig& cfg, const MetricFn& metric, AdamState* state) {
  return run_adam(
      access(model), [&](bool g) { return regression_loss(model, points, targets, g); }, metric, cfg, state);
}

TrainResult train_pinn(FekanModel& model, const PdeProblem& problem, const Batches& batches, const TrainConfig& cfg,
                       const MetricFn& metric, AdamState* state) {
  return run_adam(
      access(model), [&](bool g) { return pinn_loss(model, problem, batches, g); }, metric, cfg, state);
}

TrainResult train_separable(SeparableModel& model, const PdeProblem& problem, const SeparableBatches& batches,
                            const TrainConfig& cfg, const MetricFn& metric, AdamState* state) {
  const ParamAccess acc{[&model] { return model.params(); }, [&model](const Eigen::VectorXd& t) { model.set_params(t); }};
  return run_adam(
      acc, [&](bool g) { return separable_pinn_loss(model, problem, batches, g); }, metric, cfg, state);
}

// ------------------------------------------------------------------ Lorenz

StateScaling StateScaling::fit(const std::vector<Eigen::MatrixXd>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("StateScaling::fit: no trajectories");
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& t : trajectories) {
    if (t.cols() != 3) throw DimensionMismatch("trajectories must have three columns");
    lo = lo.cwiseMin(t.colwise().minCoeff().transpose());
    hi = hi.cwiseMax(t.colwise().maxCoeff().transpose());
  }
  StateScaling s;
  s.center = 0.5 * (lo + hi);
  // 10% margin so held-out states rarely leave the basis domain
  s.half_width = (0.55 * (hi - lo)).cwiseMax(1e-12);
  return s;
}

Eigen::Vector3d StateScaling::to_unit(const Eigen::Vector3d& s) const {
  return (s - center).cwiseQuotient(half_width);
}

Eigen::Vector3d StateScaling::from_unit(const Eigen::Vector3d& u) const {
  return center + u.cwiseProduct(half_width);
}

Eigen::MatrixXd rollout(const FekanModel& model, const StateScaling& scaling, const Eigen::Vector3d& state0,
                        int steps) {
  if (model.input_dims() != 3 || model.output_dims() != 3) throw DimensionMismatch("rollout needs a 3 -> 3 model");
  Eigen::MatrixXd out(steps + 1, 3);
  Eigen::Vector3d u = scaling.to_unit(state0);
  out.row(0) = state0.transpose();
  Workspace ws;
  for (int i = 1; i <= steps; ++i) {
    model.eval(u.data(), 0, false, ws);
    u = Eigen::Vector3d(ws.value(0), ws.value(1), ws.value(2));
    out.row(i) = scaling.from_unit(u).transpose();
  }
  return out;
}

TrainResult train_lorenz_onestep(FekanModel& model, const std::vector<Eigen::MatrixXd>& trajectories,
                                 const Eigen::MatrixXd& held_out, const StateScaling& scaling, const TrainConfig& cfg) {
  if (trajectories.empty()) throw std::invalid_argument("train_lorenz_onestep: no trajectories");
  std::vector<Eigen::MatrixXd> inputs, outputs;
  for (const auto& t : trajectories) {
    if (t.rows() < 2 || t.cols() != 3) throw DimensionMismatch("trajectory needs at least two 3-states");
    Eigen::MatrixXd u(t.rows(), 3);
    for (Eigen::Index i = 0; i < t.rows(); ++i) u.row(i) = scaling.to_unit(t.row(i).transpose()).transpose();
    inputs.emplace_back(u.topRows(u.rows() - 1));
    outputs.emplace_back(u.bottomRows(u.rows() - 1));
  }
  int epoch = 0;
  const auto n = static_cast<int>(trajectories.size());
  // run_adam calls loss(true) exactly once per epoch, in order
  auto loss = [&](bool g) {
    if (!g) return regression_loss(model, inputs[(epoch + n - 1) % n], outputs[(epoch + n - 1) % n], false);
    const int k = epoch++ % n;
    return regression_loss(model, inputs[k], outputs[k], true);
  };
  MetricFn metric;
  if (held_out.rows() > 1) {
    metric = [&] {
      const Eigen::MatrixXd pred = rollout(model, scaling, held_out.row(0).transpose(), static_cast<int>(held_out.rows()) - 1);
      const Eigen::MatrixXd diff = pred - held_out;
      if (!diff.allFinite()) return std::numeric_limits<double>::infinity();
      return diff.norm() / held_out.norm();
    };
  }
  return run_adam(access(model), loss, metric, cfg);
}

LorenzPiResult train_lorenz_pi(const std::function<FekanModel(int)>& make_model, const PdeProblem& base,
                               const Eigen::Vector3d& state0, double t_end, double dt, const TrainConfig& cfg,
                               std::uint64_t seed, const Eigen::MatrixXd& reference) {
  const int windows = lorenz_window_count(t_end, dt);
  LorenzPiResult out;
  Eigen::Vector3d s0 = state0;
  for (int w = 0; w < windows; ++w) {
    const double t0 = w * dt;
    const double t1 = std::min(t_end, (w + 1) * dt);
    PdeProblem p = lorenz_pi(t0, t1, s0);
    p.n_res = base.n_res;
    p.n_ic = base.n_ic;
    p.lambda_res = base.lambda_res;
    p.lambda_ic = base.lambda_ic;
    FekanModel m = make_model(w);
    const Batches b = sample_collocation(p, seed * 7919 + static_cast<std::uint64_t>(w));
    TrainResult r = train_pinn(m, p, b, cfg);
    out.diverged = out.diverged || r.diverged;
    out.windows.push_back(std::move(r));
    if (out.diverged) {
      out.models.push_back(std::move(m));
      break;
    }
    s0 = m.forward(Eigen::VectorXd::Constant(1, t1));
    out.models.push_back(std::move(m));
  }
  if (out.diverged || reference.rows() == 0) {
    out.rel_l2 = std::numeric_limits<double>::quiet_NaN();
    out.rel_l2_per_state.setConstant(std::numeric_limits<double>::quiet_NaN());
    return out;
  }
  // reference rows: t, x, y, z; each time goes to the window containing it
  Eigen::MatrixXd pred(reference.rows(), 3);
  for (Eigen::Index i = 0; i < reference.rows(); ++i) {
    const double t = reference(i, 0);
    const int w = std::clamp(static_cast<int>(std::floor(t / dt)), 0, windows - 1);
    pred.row(i) = out.models[w].forward(Eigen::VectorXd::Constant(1, t)).transpose();
  }
  const Eigen::MatrixXd exact = reference.rightCols(3);
  out.rel_l2 = (pred - exact).norm() / exact.norm();
  for (int c = 0; c < 3; ++c) out.rel_l2_per_state[c] = relative_l2(pred.col(c), exact.col(c));
  return out;
}

// ------------------------------------------------------------------ phases

std::vector<Phase> phase_schedule(const PdeProblem& problem, const Batches& full, std::uint64_t seed,
                                  const std::vector<int>& epochs) {
  if (problem.dims != 2 || problem.dirichlet_faces.size() != 4 || full.bc.size() != 4)
    throw std::invalid_argument("phase_schedule needs a rectangular 2D problem with four Dirichlet faces");
  if (epochs.size() != 4) throw std::invalid_argument("phase_schedule: one epoch count per phase");
  for (const auto& blk : full.bc)
    if (blk.rows() == 0) throw std::invalid_argument("phase_schedule: empty boundary block");
  Rng rng(seed);
  std::vector<Eigen::Index> anchor(4);
  for (int f = 0; f < 4; ++f) anchor[f] = static_cast<Eigen::Index>(rng.index(full.bc[f].rows()));
  std::vector<Phase> out;
  for (int p = 0; p < 4; ++p) {
    Phase ph;
    ph.epochs = epochs[p];
    ph.batches.res = full.res;
    ph.batches.ic = full.ic;
    for (int f = 0; f < 4; ++f) {
      ph.batches.bc.push_back(f == p ? full.bc[f] : Eigen::MatrixXd(full.bc[f].row(anchor[f])));
    }
    out.push_back(std::move(ph));
  }
  return out;
}

std::vector<double> face_errors(const FekanModel& model, const PdeProblem& problem, const Batches& full) {
  std::vector<double> out;
  Workspace ws;
  std::vector<double> want(problem.outputs);
  for (const auto& blk : full.bc) {
    const Eigen::MatrixXd pts = blk.transpose();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
      model.eval(pts.col(i).data(), 0, false, ws);
      problem.bc_value(pts.col(i).data(), want.data());
      for (int o = 0; o < problem.outputs; ++o) sum += std::pow(ws.value(o) - want[o], 2);
    }
    out.push_back(pts.cols() > 0 ? sum / static_cast<double>(pts.cols() * problem.outputs) : 0.0);
  }
  return out;
}

PhaseRun train_phases(FekanModel& model, const PdeProblem& problem, const std::vector<Phase>& phases,
                      const Batches& full, const TrainConfig& cfg, const MetricFn& metric) {
  PhaseRun out;
  AdamState state;
  for (const Phase& ph : phases) {
    TrainConfig c = cfg;
    c.epochs = ph.epochs;
    TrainResult r = train_pinn(model, problem, ph.batches, c, metric, &state);
    const bool stop = r.diverged;
    out.phases.push_back(std::move(r));
    if (stop) {
      out.face_mse.emplace_back(full.bc.size(), std::numeric_limits<double>::quiet_NaN());
      break;
    }
    out.face_mse.push_back(face_errors(model, problem, full));
  }
  return out;
}

// ------------------------------------------------------------- multi-seed

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

MultiSeedSummary summarize(std::vector<SeedRun> runs) {
  MultiSeedSummary s;
  s.seeds = static_cast<int>(runs.size());
  std::vector<double> rel;
  std::map<std::string, std::vector<double>> extra;
  double spi = 0.0;
  std::optional<int> earliest;
  for (const auto& r : runs) {
    spi += r.result.sec_per_iter;
    if (r.result.diverged) {
      ++s.diverged;
      const int e = r.result.diverged_epoch.value_or(0);
      earliest = earliest ? std::min(*earliest, e) : e;
      continue;
    }
    ++s.completed;
    if (std::isfinite(r.result.final_rel_l2)) rel.push_back(r.result.final_rel_l2);
    for (const auto& [k, v] : r.result.metrics) extra[k].push_back(v);
  }
  if (!runs.empty()) s.sec_per_iter = spi / static_cast<double>(runs.size());
  if (!rel.empty()) s.rel_l2 = mean_std(rel);
  for (const auto& [k, v] : extra) s.metrics[k] = mean_std(v);

  // curve over epochs logged by every run, cut at the earliest divergence
  if (!runs.empty()) {
    std::map<int, std::vector<const TrainRecord*>> at;
    for (const auto& r : runs)
      for (const auto& rec : r.result.records)
        if (!earliest || rec.epoch < *earliest) at[rec.epoch].push_back(&rec);
    for (const auto& [epoch, recs] : at) {
      if (recs.size() != runs.size()) continue;
      std::vector<double> l, e;
      for (const auto* rec : recs) {
        l.push_back(rec->loss);
        e.push_back(rec->rel_l2);
      }
      const MeanStd ls = mean_std(l), es = mean_std(e);
      s.curve.push_back({epoch, ls.mean, ls.std, es.mean, es.std});
    }
  }
  s.runs = std::move(runs);
  return s;
}

MultiSeedSummary run_multiseed(const std::vector<std::uint64_t>& seeds,
                               const std::function<TrainResult(std::uint64_t)>& run, int threads) {
  if (seeds.empty()) throw std::invalid_argument("run_multiseed: at least one seed");
  const int n = static_cast<int>(seeds.size());
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  std::vector<SeedRun> runs(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        runs[i] = SeedRun{seeds[i], run(seeds[i])};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return summarize(std::move(runs));
}

// ------------------------------------------------------------------ CSV

std::string records_csv(const std::vector<TrainRecord>& records, bool with_timing) {
  std::string out = "epoch,loss,l_res,l_bc,l_ic,rel_l2,sec_per_iter,diverged\n";
  char buf[512];
  for (const auto& r : records) {
    char spi[64] = "";
    if (with_timing) std::snprintf(spi, sizeof spi, "%.6g", r.sec_per_iter);
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%d\n", r.epoch, r.loss, r.l_res, r.l_bc,
                  r.l_ic, r.rel_l2, spi, r.diverged ? 1 : 0);
    out += buf;
  }
  return out;
}

void write_records_csv(const std::string& path, const std::vector<TrainRecord>& records, bool with_timing) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << records_csv(records, with_timing);
}

}  // namespace fekan
