#include "fekan/bench.hpp"

#include "fekan/physics.hpp"
#include "fekan/random.hpp"
#include "fekan/separable.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fekan::bench {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ------------------------------------------------------------------ names

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::FitFunction: return "fit-function";
    case Experiment::LorenzMap: return "lorenz-map";
    case Experiment::SolvePde: return "solve-pde";
    case Experiment::SolveSeparable: return "solve-separable";
    case Experiment::LorenzPi: return "lorenz-pi";
    case Experiment::Forgetting: return "forgetting";
    case Experiment::Ntk: return "ntk";
  }
  return "?";
}

Experiment experiment_from_string(const std::string& s) {
  for (Experiment e : {Experiment::FitFunction, Experiment::LorenzMap, Experiment::SolvePde, Experiment::SolveSeparable,
                       Experiment::LorenzPi, Experiment::Forgetting, Experiment::Ntk}) {
    if (to_string(e) == s) return e;
  }
  throw std::invalid_argument("unknown experiment: " + s);
}

namespace {

std::string mode_name(MapSpec::Mode m) {
  switch (m) {
    case MapSpec::Mode::Identity: return "identity";
    case MapSpec::Mode::Deterministic: return "deterministic";
    case MapSpec::Mode::Rff: return "rff";
  }
  return "?";
}

MapSpec::Mode mode_from_string(const std::string& s) {
  if (s == "identity") return MapSpec::Mode::Identity;
  if (s == "deterministic") return MapSpec::Mode::Deterministic;
  if (s == "rff") return MapSpec::Mode::Rff;
  throw std::invalid_argument("unknown map mode: " + s);
}

}  // namespace

FeatureMap MapSpec::build(int input_dims, std::uint64_t seed) const {
  std::set<int> dims;
  if (enrich_dims.empty()) {
    for (int d = 0; d < input_dims; ++d) dims.insert(d);
  } else {
    for (int d : enrich_dims) {
      if (d < 0 || d >= input_dims) throw std::invalid_argument("enrich_dims entry out of range");
      dims.insert(d);
    }
  }
  switch (mode) {
    case Mode::Identity: return FeatureMap::identity(input_dims);
    case Mode::Deterministic:
      return build_deterministic(std::vector<std::vector<double>>(static_cast<std::size_t>(input_dims), freqs),
                                 include_one, false, dims);
    case Mode::Rff: return build_rff(sigma, m, input_dims, dims, seed);
  }
  throw std::logic_error("unreachable map mode");
}

// ------------------------------------------------------------------ JSON

namespace {

ojson map_to_json(const MapSpec& m) {
  ojson j;
  j["mode"] = mode_name(m.mode);
  if (m.mode == MapSpec::Mode::Deterministic) {
    j["freqs"] = m.freqs;
    j["include_one"] = m.include_one;
  } else if (m.mode == MapSpec::Mode::Rff) {
    // the draw seed is the run seed
    j["freqs"] = ojson{{"sigma", m.sigma}, {"m", m.m}, {"seed", "run"}};
  }
  j["enrich_dims"] = m.enrich_dims;
  return j;
}

MapSpec map_from_json(const nlohmann::json& j) {
  MapSpec m;
  m.mode = mode_from_string(j.at("mode").get<std::string>());
  if (m.mode == MapSpec::Mode::Deterministic) {
    m.freqs = j.at("freqs").get<std::vector<double>>();
    m.include_one = j.value("include_one", true);
  } else if (m.mode == MapSpec::Mode::Rff) {
    const auto& p = j.at("freqs");
    m.sigma = p.at("sigma").get<double>();
    m.m = p.at("m").get<int>();
  }
  m.enrich_dims = j.value("enrich_dims", std::vector<int>{});
  return m;
}

template <class T>
ojson opt_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson train_to_json(const TrainConfig& t) {
  ojson j;
  j["epochs"] = t.epochs;
  j["seeds"] = t.seeds;
  j["log_every"] = t.log_every;
  j["lr"] = t.lr;
  j["divergence_policy"] = t.divergence_policy == DivergencePolicy::Halt ? "halt" : "record";
  if (t.early_stop) {
    j["early_stop"] = ojson{{"patience", t.early_stop->patience},
                            {"metric", t.early_stop->metric == EarlyStop::Metric::Loss ? "loss" : "rel_l2"},
                            {"min_delta", t.early_stop->min_delta}};
  } else {
    j["early_stop"] = nullptr;
  }
  return j;
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.epochs = j.at("epochs").get<int>();
  t.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  t.log_every = j.value("log_every", t.log_every);
  t.lr = j.value("lr", t.lr);
  const std::string pol = j.value("divergence_policy", std::string("halt"));
  if (pol == "halt") t.divergence_policy = DivergencePolicy::Halt;
  else if (pol == "record") t.divergence_policy = DivergencePolicy::Record;
  else throw std::invalid_argument("unknown divergence policy: " + pol);
  if (j.contains("early_stop") && !j.at("early_stop").is_null()) {
    const auto& e = j.at("early_stop");
    EarlyStop es;
    es.patience = e.at("patience").get<int>();
    const std::string metric = e.value("metric", std::string("loss"));
    if (metric == "loss") es.metric = EarlyStop::Metric::Loss;
    else if (metric == "rel_l2") es.metric = EarlyStop::Metric::RelL2;
    else throw std::invalid_argument("unknown early-stop metric: " + metric);
    es.min_delta = e.value("min_delta", 0.0);
    t.early_stop = es;
  }
  return t;
}

ojson data_to_json(const DataSpec& d) {
  ojson j;
  j["n_res"] = d.n_res;
  j["n_bc"] = d.n_bc;
  j["n_ic"] = d.n_ic;
  j["n_train"] = d.n_train;
  j["n_eval"] = d.n_eval;
  j["grid"] = d.grid;
  j["eval_grid"] = d.eval_grid;
  j["phase_epochs"] = d.phase_epochs;
  j["n_traj"] = d.n_traj;
  j["traj_steps"] = d.traj_steps;
  j["dt"] = d.dt;
  j["t_end"] = d.t_end;
  j["window"] = d.window;
  j["ntk_points"] = d.ntk_points;
  j["ntk_checkpoints"] = d.ntk_checkpoints;
  return j;
}

DataSpec data_from_json(const nlohmann::json& j) {
  DataSpec d;
  d.n_res = j.value("n_res", d.n_res);
  d.n_bc = j.value("n_bc", d.n_bc);
  d.n_ic = j.value("n_ic", d.n_ic);
  d.n_train = j.value("n_train", d.n_train);
  d.n_eval = j.value("n_eval", d.n_eval);
  d.grid = j.value("grid", d.grid);
  d.eval_grid = j.value("eval_grid", d.eval_grid);
  d.phase_epochs = j.value("phase_epochs", d.phase_epochs);
  d.n_traj = j.value("n_traj", d.n_traj);
  d.traj_steps = j.value("traj_steps", d.traj_steps);
  d.dt = j.value("dt", d.dt);
  d.t_end = j.value("t_end", d.t_end);
  d.window = j.value("window", d.window);
  d.ntk_points = j.value("ntk_points", d.ntk_points);
  d.ntk_checkpoints = j.value("ntk_checkpoints", d.ntk_checkpoints);
  return d;
}

}  // namespace

ojson to_json(const RunConfig& c) {
  ojson j;
  j["format"] = "fekan-run-config";
  j["name"] = c.name;
  j["experiment"] = to_string(c.experiment);
  j["problem"] = c.problem;
  j["label"] = c.label;
  ojson m;
  m["hidden"] = c.model.hidden;
  m["basis"] = basis_spec_to_json(c.model.basis);
  m["map"] = map_to_json(c.model.map);
  m["input_domain"] = c.model.input_domain ? ojson::array({c.model.input_domain->first, c.model.input_domain->second})
                                           : ojson(nullptr);
  m["base_path"] = opt_json(c.model.base_path);
  m["init_scale"] = c.model.init_scale;
  m["rank"] = c.model.rank;
  j["model"] = m;
  j["train"] = train_to_json(c.train);
  j["data"] = data_to_json(c.data);
  j["metadata"] = ojson::parse(c.metadata.dump());
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string("fekan-run-config")) != "fekan-run-config")
    throw std::invalid_argument("not a fekan-run-config document");
  RunConfig c;
  c.name = j.at("name").get<std::string>();
  c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
  c.problem = j.at("problem").get<std::string>();
  c.label = j.value("label", std::string());
  const auto& m = j.at("model");
  c.model.hidden = m.at("hidden").get<std::vector<int>>();
  c.model.basis = basis_spec_from_json(m.at("basis"));
  c.model.map = map_from_json(m.at("map"));
  if (m.contains("input_domain") && !m.at("input_domain").is_null()) {
    const auto d = m.at("input_domain").get<std::vector<double>>();
    if (d.size() != 2) throw std::invalid_argument("input_domain needs [lo, hi]");
    c.model.input_domain = std::make_pair(d[0], d[1]);
  }
  if (m.contains("base_path") && !m.at("base_path").is_null()) c.model.base_path = m.at("base_path").get<bool>();
  c.model.init_scale = m.value("init_scale", c.model.init_scale);
  c.model.rank = m.value("rank", c.model.rank);
  c.train = train_from_json(j.at("train"));
  c.data = data_from_json(j.value("data", nlohmann::json::object()));
  if (j.contains("metadata")) c.metadata = j.at("metadata");
  c.validate();
  return c;
}

namespace {

const std::set<std::string>& problems_for(Experiment e) {
  static const std::map<Experiment, std::set<std::string>> table{
      {Experiment::FitFunction, {"test_function"}},
      {Experiment::Ntk, {"test_function"}},
      {Experiment::LorenzMap, {"lorenz"}},
      {Experiment::SolvePde, {"helmholtz2d", "helmholtz3d", "allen_cahn", "klein_gordon", "poisson"}},
      {Experiment::SolveSeparable, {"helmholtz3d", "klein_gordon", "helmholtz2d"}},
      {Experiment::LorenzPi, {"lorenz_pi"}},
      {Experiment::Forgetting, {"helmholtz2d"}},
  };
  return table.at(e);
}

}  // namespace

void RunConfig::validate() const {
  if (name.empty()) throw std::invalid_argument("run config needs a name");
  if (!problems_for(experiment).contains(problem))
    throw std::invalid_argument("problem '" + problem + "' is not valid for " + to_string(experiment));
  model.basis.validate();
  for (int w : model.hidden)
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
  if (model.map.mode == MapSpec::Mode::Deterministic && model.map.freqs.empty())
    throw std::invalid_argument("deterministic map needs frequencies");
  if (model.map.mode == MapSpec::Mode::Rff && (model.map.m < 1 || !(model.map.sigma >= 0.0)))
    throw std::invalid_argument("rff map needs m >= 1 and sigma >= 0");
  if (model.rank < 1) throw std::invalid_argument("rank must be positive");
  train.validate();
  if (train.seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (data.n_res < 0 || data.n_bc < 0 || data.n_ic < 0) throw std::invalid_argument("counts must be non-negative");
  if (experiment == Experiment::FitFunction || experiment == Experiment::Ntk) {
    if (data.n_train < 2 || data.n_eval < 2) throw std::invalid_argument("n_train and n_eval must be at least 2");
  }
  if (experiment == Experiment::Ntk) {
    if (data.ntk_points < 1 || data.ntk_points > kMaxNtkPoints)
      throw std::invalid_argument("ntk_points must lie in [1, 128]");
    if (data.ntk_checkpoints < 2) throw std::invalid_argument("ntk needs at least two checkpoints");
    if (model.map.mode == MapSpec::Mode::Identity && model.hidden.empty())
      throw std::invalid_argument("ntk model needs a hidden layer");
  }
  if (experiment == Experiment::Forgetting && data.phase_epochs.size() != 4)
    throw std::invalid_argument("forgetting needs four phase epoch counts");
  if (experiment == Experiment::LorenzMap && (data.n_traj < 1 || data.traj_steps < 1 || !(data.dt > 0.0)))
    throw std::invalid_argument("lorenz-map needs trajectories, steps and a positive dt");
  if (experiment == Experiment::LorenzPi && !(data.window > 0.0 && data.t_end > 0.0))
    throw std::invalid_argument("lorenz-pi needs a positive window and horizon");
}

// ------------------------------------------------------------------ presets

std::string basis_label(const BasisSpec& s) {
  std::ostringstream os;
  os << to_string(s.kind);
  switch (s.kind) {
    case BasisKind::Spline:
    case BasisKind::Relu: os << " k=" << s.k << " G=" << s.G; break;
    case BasisKind::HRelu: os << " k=" << s.k << " G=" << s.G << " n=" << s.n; break;
    case BasisKind::Fourier: os << " N=" << s.N; break;
    case BasisKind::Chebyshev: os << " k=" << s.k; break;
    case BasisKind::Rbf: os << " N_f=" << s.n_f; break;
    case BasisKind::WaveletDoG: break;
  }
  return os.str();
}

namespace {

std::vector<std::uint64_t> seed_range(int n) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

MapSpec det_map(std::vector<double> freqs) {
  MapSpec m;
  m.mode = MapSpec::Mode::Deterministic;
  m.freqs = std::move(freqs);
  return m;
}

// Metadata says where each value comes from: "published" values were given
// with the experiment, "default" values are ours.
nlohmann::json meta(std::initializer_list<std::pair<const char*, const char*>> items) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : items) j[k] = v;
  return j;
}

std::map<std::string, RunConfig> build_presets() {
  std::map<std::string, RunConfig> out;
  const double pi = std::numbers::pi;
  auto add = [&](RunConfig c) {
    c.validate();
    const std::string key = c.name;
    out.emplace(key, std::move(c));
  };

  // function fitting: one hidden layer of six units, 50k epochs
  struct FitBasis {
    std::string tag;
    BasisSpec spec;
    const char* values;
  };
  const std::vector<FitBasis> fit_bases{
      {"spline", BasisSpec::spline(15, 2), "k=2 G=15 published"},
      {"fourier", BasisSpec::fourier(50), "N=50 published"},
      {"cheby", BasisSpec::chebyshev(4), "k_c=4 published"},
      {"rbf", BasisSpec::rbf(50), "N_f=50 published"},
      {"relu", BasisSpec::relu(15, 2), "k=2 G=15 published"},
      {"hrelu", BasisSpec::hrelu(15, 2, 3), "k=2 G=15 n=3 published"},
      {"wavelet", BasisSpec::wavelet(), "derivative-of-Gaussian wavelet published"},
      {"spline-g10", BasisSpec::spline(10, 2), "k=2 G=10 published (grid sweep)"},
      {"spline-g15", BasisSpec::spline(15, 2), "k=2 G=15 published (grid sweep)"},
      {"spline-g20", BasisSpec::spline(20, 2), "k=2 G=20 published (grid sweep)"},
  };
  for (const auto& fb : fit_bases) {
    for (bool fe : {false, true}) {
      for (Experiment e : {Experiment::FitFunction, Experiment::Ntk}) {
        if (e == Experiment::Ntk && fb.tag != "spline") continue;
        RunConfig c;
        c.name = std::string(e == Experiment::Ntk ? "ntk-" : "funfit-") + (fe ? "fekan-" : "kan-") + fb.tag;
        c.experiment = e;
        c.problem = "test_function";
        c.label = fe ? "FEKAN" : "KAN";
        c.model.hidden = {6};
        c.model.basis = fb.spec;
        if (fe) c.model.map = det_map({pi, 2 * pi, 3 * pi, 4 * pi});
        else c.model.input_domain = std::make_pair(0.0, 1.0);
        c.train.epochs = 50000;
        c.train.seeds = seed_range(3);
        c.train.log_every = 500;
        if (e == Experiment::Ntk) c.train.epochs = 10000;
        if (fb.tag == "cheby") c.train.seeds = seed_range(10);
        c.metadata = meta({{"architecture", "single hidden layer of six units, published"},
                           {"basis", fb.values},
                           {"map", fe ? "nine terms [1, cos(j pi x), sin(j pi x)] j=1..4, published" : "identity"},
                           {"epochs", e == Experiment::Ntk ? "10000, default (desk-scale diagnostic run)"
                                                           : "50000, published"},
                           {"optimizer", "Adam lr=1e-3, published"},
                           {"n_train", "2000 uniform points on [0,1], default"},
                           {"n_eval", "10000 uniform points on [0,1], default"},
                           {"seeds", fb.tag == "cheby" ? "10, published" : "3, default"}});
        add(std::move(c));
      }
    }
  }

  // two-dimensional Helmholtz: two hidden layers of seven units, 100k epochs
  const std::vector<FitBasis> helm_bases{
      {"spline", BasisSpec::spline(5, 3), "k=3 G=5 published"},
      {"fourier", BasisSpec::fourier(10), "N=10 published"},
      {"cheby", BasisSpec::chebyshev(4), "k_c=4 published"},
      {"rbf", BasisSpec::rbf(10), "N_f=10 published"},
      {"relu", BasisSpec::relu(5, 3), "k=3 G=5 published"},
      {"hrelu", BasisSpec::hrelu(5, 3, 3), "k=3 G=5 n=3 published"},
      {"wavelet", BasisSpec::wavelet(), "derivative-of-Gaussian wavelet published"},
  };
  auto helm = [&](const std::string& name, const std::string& label, const FitBasis& fb, MapSpec map,
                  const char* map_note) {
    RunConfig c;
    c.name = name;
    c.experiment = Experiment::SolvePde;
    c.problem = "helmholtz2d";
    c.label = label;
    c.model.hidden = {7, 7};
    c.model.basis = fb.spec;
    c.model.map = std::move(map);
    if (!c.model.map.enriched()) c.model.input_domain = std::make_pair(-1.0, 1.0);
    c.train.epochs = 100000;
    c.train.seeds = seed_range(3);
    c.train.log_every = 1000;
    c.data.n_res = 10000;
    c.data.n_bc = 250;
    c.data.eval_grid = {101, 101};
    c.metadata = meta({{"architecture", "two hidden layers of seven units, published"},
                       {"basis", fb.values},
                       {"map", map_note},
                       {"epochs", "100000, published"},
                       {"optimizer", "Adam lr=1e-3, published"},
                       {"problem", "a1=a2=4, k=1 on [-1,1]^2, published"},
                       {"n_res", "10000, default"},
                       {"n_bc", "250 per face, default"},
                       {"eval_grid", "101x101, default"}});
    add(std::move(c));
  };
  for (const auto& fb : helm_bases) {
    helm("helm2d-kan-" + fb.tag, "PI-KAN", fb, MapSpec{}, "identity");
    helm("helm2d-fekan-" + fb.tag, "PI-FEKAN", fb, det_map({1, 2, 3}),
         "seven terms per dimension [1, cos(jx), sin(jx)] j=1..3, published");
  }
  for (const auto& fb : {helm_bases[0], helm_bases[2]}) {
    for (int sigma : {2, 10}) {
      MapSpec m;
      m.mode = MapSpec::Mode::Rff;
      m.sigma = sigma;
      m.m = 3;
      helm("helm2d-fekan-" + fb.tag + "-rff-s" + std::to_string(sigma), "PI-FEKAN(RFF)", fb, m,
           sigma == 2 ? "random frequencies a~N(0,4), seven terms per dimension, published"
                      : "random frequencies a~N(0,100), seven terms per dimension, published");
    }
  }
  // alias matching the CLI examples
  {
    RunConfig c = out.at("helm2d-fekan-spline");
    c.name = "helmholtz2d-fekan-spline";
    add(c);
    c = out.at("helm2d-kan-spline");
    c.name = "helmholtz2d-kan-spline";
    add(c);
  }

  // Allen-Cahn
  for (bool fe : {false, true}) {
    RunConfig c;
    c.name = std::string("allen-cahn-") + (fe ? "fekan" : "kan") + "-spline";
    c.experiment = Experiment::SolvePde;
    c.problem = "allen_cahn";
    c.label = fe ? "PI-FEKAN" : "PI-KAN";
    c.model.hidden = {7, 7};
    c.model.basis = BasisSpec::spline(6, 3);
    if (fe) c.model.map = det_map({1, 2, 3});
    else c.model.input_domain = std::make_pair(-1.0, 1.0);
    c.train.epochs = 100000;
    c.train.seeds = seed_range(3);
    c.train.log_every = 1000;
    c.data.n_res = 6000;
    c.data.n_bc = 100;
    c.data.n_ic = 256;
    c.data.eval_grid = {128, 101};
    c.metadata = meta({{"architecture", "two hidden layers of seven units, published"},
                       {"basis", "k=3 G=6 published"},
                       {"map", fe ? "seven terms per dimension, default (same as Helmholtz)" : "identity"},
                       {"n_res", "6000, published (smallest of 6000/10000/15000)"},
                       {"epochs", "100000, default"},
                       {"n_bc", "100 periodic pairs, default"},
                       {"n_ic", "256, default"},
                       {"eval_grid", "128x101 subsample of the 512x201 spectral reference, default"}});
    add(std::move(c));
  }

  // separable Klein-Gordon and three-dimensional Helmholtz
  for (const std::string problem : {"klein_gordon", "helmholtz3d"}) {
    const std::string stem = problem == "klein_gordon" ? "kg-sep-" : "helm3d-sep-";
    for (bool fe : {false, true}) {
      for (const auto& [tag, spec, values] : std::vector<std::tuple<std::string, BasisSpec, const char*>>{
               {"spline", BasisSpec::spline(3, 3), "k=3 G=3 published"},
               {"cheby", BasisSpec::chebyshev(4), "k_c=4 published"}}) {
        RunConfig c;
        c.name = stem + (fe ? "fekan-" : "kan-") + tag;
        c.experiment = Experiment::SolveSeparable;
        c.problem = problem;
        c.label = fe ? "SPI-FEKAN" : "SPI-KAN";
        c.model.hidden = {5};
        c.model.rank = 10;
        c.model.basis = spec;
        if (fe) c.model.map = det_map({1, 2});
        c.train.epochs = 50000;
        c.train.seeds = seed_range(5);
        c.train.log_every = 500;
        c.data.grid = {32, 32, 32};
        c.data.eval_grid = problem == "klein_gordon" ? std::vector<int>{21, 21, 41} : std::vector<int>{26, 26, 26};
        c.metadata = meta({{"architecture", "three bodies, one hidden layer of five units, embedding rank ten, published"},
                           {"basis", values},
                           {"map", fe ? "five terms per body [1, cos x, sin x, cos 2x, sin 2x], published" : "identity"},
                           {"epochs", "50000, published"},
                           {"grid", "32 points per axis, default"},
                           {"seeds", "5, default"}});
        add(std::move(c));
      }
    }
  }

  // Lorenz one-step map
  for (bool fe : {false, true}) {
    RunConfig c;
    c.name = std::string("lorenz-map-") + (fe ? "fekan" : "kan") + "-spline";
    c.experiment = Experiment::LorenzMap;
    c.problem = "lorenz";
    c.label = fe ? "FEKAN" : "KAN";
    c.model.hidden = {10};
    c.model.basis = BasisSpec::spline(7, 2);
    if (fe) c.model.map = det_map({1, 2, 3});
    c.train.epochs = 2000;
    c.train.seeds = seed_range(3);
    c.train.log_every = 100;
    c.metadata = meta({{"basis", "k=2 G=7 published"},
                       {"system", "sigma=10 rho=28 beta=8/3, published"},
                       {"architecture", "one hidden layer of ten units, default"},
                       {"map", fe ? "seven terms per scaled state, default" : "identity"},
                       {"data", "20 trajectories of 500 RK4 steps dt=0.01, default"},
                       {"epochs", "2000, default"}});
    add(std::move(c));
  }

  // Lorenz physics-informed over windows
  for (bool fe : {false, true}) {
    for (const auto& [tag, spec, values] : std::vector<std::tuple<std::string, BasisSpec, const char*>>{
             {"spline", BasisSpec::spline(5, 3), "k=3 G=5, default"},
             {"cheby", BasisSpec::chebyshev(4), "k_c=4, default"}}) {
      RunConfig c;
      c.name = std::string("lorenz-pi-") + (fe ? "fekan-" : "kan-") + tag;
      c.experiment = Experiment::LorenzPi;
      c.problem = "lorenz_pi";
      c.label = fe ? "PI-FEKAN" : "PI-KAN";
      c.model.hidden = {7, 7};
      c.model.basis = spec;
      if (fe) c.model.map = det_map({1, 2, 3});
      c.train.epochs = 5000;
      c.train.seeds = seed_range(3);
      c.train.log_every = 500;
      c.data.n_res = 200;
      c.metadata = meta({{"problem", "initial state (1,1,1) on [0,4], windows of 0.5, published"},
                         {"basis", values},
                         {"architecture", "two hidden layers of seven units, default"},
                         {"map", fe ? "seven terms in t, default" : "identity"},
                         {"epochs", "5000 per window, default"},
                         {"n_res", "200 per window, default"}});
      add(std::move(c));
    }
  }

  // boundary phases on Helmholtz
  for (bool fe : {false, true}) {
    for (int G : {3, 6}) {
      RunConfig c;
      c.name = std::string("forgetting-") + (fe ? "fekan" : "kan") + "-g" + std::to_string(G);
      c.experiment = Experiment::Forgetting;
      c.problem = "helmholtz2d";
      c.label = fe ? "PI-FEKAN" : "PI-KAN";
      c.model.hidden = {7, 7};
      c.model.basis = BasisSpec::spline(G, 3);
      if (fe) c.model.map = det_map({1, 2, 3});
      else c.model.input_domain = std::make_pair(-1.0, 1.0);
      c.train.epochs = 20000;
      c.train.seeds = seed_range(3);
      c.train.log_every = 1000;
      c.data.n_res = 10000;
      c.data.n_bc = 250;
      c.data.eval_grid = {101, 101};
      c.data.phase_epochs = {20000, 20000, 20000, 45000};
      c.metadata = meta({{"phases", "20000/20000/20000/45000 epochs, published"},
                         {"basis", G == 3 ? "k=3 G=3, grid published, order default" : "k=3 G=6, grid published, order default"},
                         {"map", fe ? "seven terms per dimension, published" : "identity"},
                         {"architecture", "two hidden layers of seven units, default (same as Helmholtz)"},
                         {"n_res", "10000, default"},
                         {"n_bc", "250 per face, default"}});
      add(std::move(c));
    }
  }
  return out;
}

}  // namespace

const std::map<std::string, RunConfig>& load_presets() {
  static const std::map<std::string, RunConfig> presets = build_presets();
  return presets;
}

RunConfig apply_overrides(const RunConfig& preset, const Overrides& o) {
  RunConfig c = preset;
  if (o.epochs) {
    if (*o.epochs < 0) throw std::invalid_argument("--epochs must be non-negative");
    c.train.epochs = *o.epochs;
    if (c.experiment == Experiment::Forgetting) {
      // keep the published 20:20:20:45 ratio
      const int e = *o.epochs;
      c.data.phase_epochs = {e, e, e, static_cast<int>((45LL * e) / 20)};
    }
  }
  if (o.n_res) {
    if (*o.n_res < 1) throw std::invalid_argument("--n-res must be positive");
    c.data.n_res = *o.n_res;
  }
  if (o.seeds) {
    if (*o.seeds < 1) throw std::invalid_argument("--seeds must be positive");
    c.train.seeds = seed_range(*o.seeds);
  }
  if (o.log_every) c.train.log_every = *o.log_every;
  c.validate();
  return c;
}

// ------------------------------------------------------------------ building

namespace {

std::vector<int> widths_for(const RunConfig& c, const FeatureMap& map, int outputs) {
  std::vector<int> w{map.output_width()};
  w.insert(w.end(), c.model.hidden.begin(), c.model.hidden.end());
  w.push_back(outputs);
  return w;
}

ModelOptions options_for(const RunConfig& c) {
  ModelOptions o;
  o.base_path = c.model.base_path;
  o.input_domain = c.model.input_domain;
  o.init_scale = c.model.init_scale;
  return o;
}

FekanModel build_model(const RunConfig& c, int input_dims, int outputs, std::uint64_t seed) {
  const FeatureMap map = c.model.map.build(input_dims, seed);
  return FekanModel::init(widths_for(c, map, outputs), c.model.basis, map, seed, options_for(c));
}

PdeProblem make_problem(const RunConfig& c) {
  PdeProblem p;
  if (c.problem == "helmholtz2d") p = helmholtz2d();
  else if (c.problem == "helmholtz3d") p = helmholtz3d();
  else if (c.problem == "allen_cahn") p = allen_cahn();
  else if (c.problem == "klein_gordon") p = klein_gordon();
  else if (c.problem == "poisson") p = poisson_toy();
  else throw std::invalid_argument("no PDE named " + c.problem);
  if (c.data.n_res > 0) p.n_res = c.data.n_res;
  if (c.data.n_bc > 0) p.n_bc = c.data.n_bc;
  if (c.data.n_ic > 0) p.n_ic = c.data.n_ic;
  return p;
}

SeparableModel build_separable(const RunConfig& c, const PdeProblem& p, std::uint64_t seed) {
  std::vector<FeatureMap> maps;
  std::vector<ModelOptions> opts;
  for (int d = 0; d < p.dims; ++d) {
    maps.push_back(c.model.map.build(1, seed * 31 + static_cast<std::uint64_t>(d)));
    ModelOptions o = options_for(c);
    // plain bodies see raw coordinates; their first layer covers the axis
    if (!c.model.map.enriched() && !o.input_domain) o.input_domain = std::make_pair(p.lo[d], p.hi[d]);
    opts.push_back(o);
  }
  return SeparableModel::init(maps, c.model.hidden, c.model.rank, c.model.basis, seed, opts);
}

Eigen::VectorXd linspace(double lo, double hi, int n) {
  if (n == 1) return Eigen::VectorXd::Constant(1, 0.5 * (lo + hi));
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

AxisGrid eval_axes(const PdeProblem& p, const std::vector<int>& counts) {
  if (static_cast<int>(counts.size()) != p.dims) throw std::invalid_argument("eval_grid needs one count per axis");
  AxisGrid g;
  for (int d = 0; d < p.dims; ++d) g.axes.push_back(linspace(p.lo[d], p.hi[d], counts[d]));
  return g;
}

// Grid points in row-major order (last axis fastest), one row per point.
Eigen::MatrixXd grid_rows(const AxisGrid& g) {
  const Eigen::Index total = g.total();
  Eigen::MatrixXd pts(total, g.dims());
  std::vector<Eigen::Index> idx(g.axes.size(), 0);
  for (Eigen::Index r = 0; r < total; ++r) {
    for (int d = 0; d < g.dims(); ++d) pts(r, d) = g.axes[d][idx[d]];
    for (int d = g.dims() - 1; d >= 0; --d) {
      if (++idx[d] < g.axes[d].size()) break;
      idx[d] = 0;
    }
  }
  return pts;
}

Eigen::VectorXd exact_values(const PdeProblem& p, const Eigen::MatrixXd& pts) {
  if (!p.exact) throw std::invalid_argument(p.name + " has no closed-form solution");
  Eigen::VectorXd out(pts.rows() * p.outputs);
  Eigen::VectorXd x(p.dims);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    x = pts.row(i).transpose();
    p.exact(x.data(), out.data() + i * p.outputs);
  }
  return out;
}

struct EvalSet {
  Eigen::MatrixXd points;
  Eigen::VectorXd values;
};

EvalSet pde_eval_set(const RunConfig& c, const PdeProblem& p, const std::string& reference_dir) {
  EvalSet e;
  if (c.problem != "allen_cahn") {
    std::vector<int> counts = c.data.eval_grid;
    if (counts.empty()) counts.assign(static_cast<std::size_t>(p.dims), p.dims == 1 ? 201 : (p.dims == 2 ? 101 : 21));
    e.points = grid_rows(eval_axes(p, counts));
    e.values = exact_values(p, e.points);
    return e;
  }
  const std::string path = reference_path(reference_dir, "allen_cahn");
  if (!fs::exists(path))
    throw std::runtime_error("missing reference file " + path +
                             "; create it with `fekan make-reference allen_cahn` (same FEKAN_OUT)");
  const GridData ref = read_grid_csv(path);
  if (ref.shape.size() != 2) throw std::runtime_error("allen_cahn reference must be two-dimensional");
  const Eigen::Index nx = ref.shape[0], nt = ref.shape[1];
  const std::vector<int> want = c.data.eval_grid.empty() ? std::vector<int>{static_cast<int>(nx), static_cast<int>(nt)}
                                                         : c.data.eval_grid;
  if (want.size() != 2 || want[0] < 1 || want[1] < 2 || nx % want[0] != 0 || (nt - 1) % (want[1] - 1) != 0)
    throw std::invalid_argument("allen_cahn eval_grid must evenly subsample the reference grid");
  const Eigen::Index sx = nx / want[0], st = (nt - 1) / (want[1] - 1);
  e.points.resize(static_cast<Eigen::Index>(want[0]) * want[1], 2);
  e.values.resize(e.points.rows());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < nx; i += sx) {
    for (Eigen::Index j = 0; j < nt; j += st) {
      e.points(r, 0) = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(nx);
      e.points(r, 1) = static_cast<double>(j) / static_cast<double>(nt - 1);
      e.values[r] = ref.values[i * nt + j];
      ++r;
    }
  }
  return e;
}

// Fit-function data: midpoints of a uniform partition of [0, 1].
EvalSet target_set(int n, double offset) {
  const HighFreqTarget t;
  EvalSet e;
  e.points.resize(n, 1);
  e.values.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + offset) / n;
    e.points(i, 0) = x;
    e.values[i] = target_eval(t, x);
  }
  return e;
}

// Appends a segment's records with shifted epochs; the first row of a later
// segment repeats the previous final row and is dropped.
void append_records(TrainResult& acc, const TrainResult& seg, int offset) {
  bool skip = !acc.records.empty();
  for (TrainRecord r : seg.records) {
    if (skip) {
      skip = false;
      if (r.epoch == 0) continue;
    }
    r.epoch += offset;
    acc.records.push_back(r);
  }
}

void finish_from(TrainResult& acc, const std::vector<TrainResult>& segs) {
  acc.epochs_run = 0;
  double time = 0.0;
  int steps = 0;
  for (const auto& s : segs) {
    if (s.diverged && !acc.diverged) {
      acc.diverged = true;
      acc.diverged_epoch = acc.epochs_run + s.diverged_epoch.value_or(s.epochs_run);
    }
    acc.epochs_run += s.epochs_run;
    time += s.sec_per_iter * s.epochs_run;
    steps += s.epochs_run;
  }
  acc.sec_per_iter = steps > 0 ? time / steps : 0.0;
  if (!segs.empty()) acc.final_loss = segs.back().final_loss;
}

TrainResult run_fit(const RunConfig& c, std::uint64_t seed) {
  FekanModel model = build_model(c, 1, 1, seed);
  const EvalSet train = target_set(c.data.n_train, 0.5);
  const EvalSet eval = target_set(c.data.n_eval, 0.25);
  TrainConfig cfg = c.train;
  MetricFn metric = [&] { return relative_l2(predict(model, eval.points), eval.values); };
  return train_regression(model, train.points, train.values, cfg, metric);
}

TrainResult run_ntk(const RunConfig& c, std::uint64_t seed, std::vector<Spectrum>& spectra) {
  FekanModel model = build_model(c, 1, 1, seed);
  const EvalSet train = target_set(c.data.n_train, 0.5);
  const EvalSet eval = target_set(c.data.n_eval, 0.25);
  const EvalSet ntk_pts = target_set(c.data.ntk_points, 0.5);
  MetricFn metric = [&] { return relative_l2(predict(model, eval.points), eval.values); };
  const int n_ck = c.data.ntk_checkpoints;
  std::vector<std::pair<double, FekanModel>> checkpoints{{0.0, model}};
  std::vector<TrainResult> segs;
  TrainResult acc;
  AdamState state;
  state.lr = c.train.lr;
  int done = 0;
  for (int s = 1; s < n_ck; ++s) {
    const int target = static_cast<int>((static_cast<long long>(c.train.epochs) * s) / (n_ck - 1));
    TrainConfig cfg = c.train;
    cfg.epochs = target - done;
    TrainResult r = train_regression(model, train.points, train.values, cfg, metric, &state);
    append_records(acc, r, done);
    done += r.epochs_run;
    const bool stop = r.diverged;
    segs.push_back(std::move(r));
    if (stop) break;
    checkpoints.emplace_back(static_cast<double>(done), model);
  }
  finish_from(acc, segs);
  if (acc.diverged) return acc;
  acc.final_rel_l2 = metric();
  if (checkpoints.size() < 2) checkpoints.emplace_back(static_cast<double>(done), model);
  const std::vector<DriftPoint> drift = ntk_drift(checkpoints, ntk_pts.points);
  for (const auto& d : drift) spectra.push_back(d.spectrum);
  acc.metrics["mid_ratio_initial"] = normalized_mid_eigenvalue(drift.front().spectrum);
  acc.metrics["mid_ratio_final"] = normalized_mid_eigenvalue(drift.back().spectrum);
  acc.metrics["acr_initial"] = acr(drift.front().spectrum);
  acc.metrics["acr_final"] = acr(drift.back().spectrum);
  acc.metrics["drift_initial_to_final"] = drift.front().frobenius_to_final;
  return acc;
}

TrainResult run_lorenz_map(const RunConfig& c, std::uint64_t seed) {
  Rng rng(seed * 2654435761ULL + 17);
  const OdeRhs rhs = [](const Eigen::VectorXd& s) -> Eigen::VectorXd {
    return lorenz_rhs(Eigen::Vector3d(s[0], s[1], s[2]));
  };
  auto draw = [&] {
    Eigen::VectorXd s(3);
    s << rng.uniform(-15.0, 15.0), rng.uniform(-20.0, 20.0), rng.uniform(5.0, 40.0);
    return s;
  };
  std::vector<Eigen::MatrixXd> trajs;
  for (int i = 0; i < c.data.n_traj; ++i) trajs.push_back(integrate_rk4(rhs, draw(), c.data.dt, c.data.traj_steps));
  const Eigen::MatrixXd held_out = integrate_rk4(rhs, draw(), c.data.dt, c.data.traj_steps);
  const StateScaling scaling = StateScaling::fit(trajs);
  FekanModel model = build_model(c, 3, 3, seed);
  return train_lorenz_onestep(model, trajs, held_out, scaling, c.train);
}

TrainResult run_pde(const RunConfig& c, std::uint64_t seed, const std::string& reference_dir) {
  const PdeProblem p = make_problem(c);
  const EvalSet eval = pde_eval_set(c, p, reference_dir);
  FekanModel model = build_model(c, p.dims, p.outputs, seed);
  const Batches b = sample_collocation(p, seed);
  MetricFn metric = [&] { return relative_l2(predict(model, eval.points), eval.values); };
  return train_pinn(model, p, b, c.train, metric);
}

TrainResult run_separable(const RunConfig& c, std::uint64_t seed) {
  const PdeProblem p = make_problem(c);
  std::vector<int> counts = c.data.grid;
  if (counts.empty()) counts.assign(static_cast<std::size_t>(p.dims), 32);
  const SeparableBatches b = sample_separable(p, counts, seed);
  std::vector<int> ec = c.data.eval_grid;
  if (ec.empty()) ec.assign(static_cast<std::size_t>(p.dims), 21);
  const AxisGrid eg = eval_axes(p, ec);
  const Eigen::VectorXd exact = exact_values(p, grid_rows(eg));
  SeparableModel model = build_separable(c, p, seed);
  MetricFn metric = [&] { return relative_l2(model.forward_grid(eg), exact); };
  return train_separable(model, p, b, c.train, metric);
}

Eigen::MatrixXd lorenz_pi_reference(const RunConfig& c, const std::string& reference_dir) {
  const std::string path = reference_path(reference_dir, "lorenz_pi");
  if (fs::exists(path)) {
    const GridData g = read_grid_csv(path);
    if (g.shape.size() != 2 || g.shape[1] != 4) throw std::runtime_error("lorenz_pi reference must have 4 columns");
    Eigen::MatrixXd m(g.shape[0], 4);
    for (Eigen::Index i = 0; i < g.shape[0]; ++i)
      for (int k = 0; k < 4; ++k) m(i, k) = g.values[i * 4 + k];
    return m;
  }
  // the RK4 reference is cheap enough to build on the fly
  return lorenz_reference(Eigen::Vector3d(1.0, 1.0, 1.0), c.data.t_end, 1e-3);
}

TrainResult run_lorenz_pi(const RunConfig& c, std::uint64_t seed, const Eigen::MatrixXd& reference) {
  const Eigen::Vector3d s0(1.0, 1.0, 1.0);
  PdeProblem base = lorenz_pi(0.0, c.data.window, s0);
  if (c.data.n_res > 0) base.n_res = c.data.n_res;
  if (c.data.n_ic > 0) base.n_ic = c.data.n_ic;
  const double window = c.data.window;
  auto make = [&](int w) {
    RunConfig cw = c;
    if (!cw.model.map.enriched() && !cw.model.input_domain)
      cw.model.input_domain = std::make_pair(w * window, (w + 1) * window);
    return build_model(cw, 1, 3, seed * 1009 + static_cast<std::uint64_t>(w));
  };
  const LorenzPiResult r = train_lorenz_pi(make, base, s0, c.data.t_end, window, c.train, seed, reference);
  TrainResult acc;
  int offset = 0;
  for (const auto& w : r.windows) {
    append_records(acc, w, offset);
    offset += w.epochs_run;
  }
  finish_from(acc, r.windows);
  acc.diverged = acc.diverged || r.diverged;
  acc.final_rel_l2 = r.rel_l2;
  if (!r.diverged) {
    acc.metrics["rel_l2_x"] = r.rel_l2_per_state[0];
    acc.metrics["rel_l2_y"] = r.rel_l2_per_state[1];
    acc.metrics["rel_l2_z"] = r.rel_l2_per_state[2];
  }
  return acc;
}

TrainResult run_forgetting(const RunConfig& c, std::uint64_t seed) {
  const PdeProblem p = make_problem(c);
  const EvalSet eval = pde_eval_set(c, p, "");
  FekanModel model = build_model(c, p.dims, p.outputs, seed);
  const Batches full = sample_collocation(p, seed);
  const std::vector<Phase> phases = phase_schedule(p, full, seed, c.data.phase_epochs);
  MetricFn metric = [&] { return relative_l2(predict(model, eval.points), eval.values); };
  const PhaseRun run = train_phases(model, p, phases, full, c.train, metric);
  TrainResult acc;
  int offset = 0;
  for (const auto& ph : run.phases) {
    append_records(acc, ph, offset);
    offset += ph.epochs_run;
  }
  finish_from(acc, run.phases);
  if (!acc.diverged) acc.final_rel_l2 = metric();
  for (std::size_t ph = 0; ph < run.face_mse.size(); ++ph) {
    for (std::size_t q = 0; q < run.face_mse[ph].size(); ++q) {
      acc.metrics["face" + std::to_string(q + 1) + "_after_phase" + std::to_string(ph + 1)] = run.face_mse[ph][q];
    }
  }
  return acc;
}

}  // namespace

long long param_count(const RunConfig& c) {
  switch (c.experiment) {
    case Experiment::FitFunction:
    case Experiment::Ntk: return build_model(c, 1, 1, 0).param_count();
    case Experiment::LorenzMap: return build_model(c, 3, 3, 0).param_count();
    case Experiment::LorenzPi: {
      const long long per = build_model(c, 1, 3, 0).param_count();
      return per * lorenz_window_count(c.data.t_end, c.data.window);
    }
    case Experiment::SolvePde:
    case Experiment::Forgetting: {
      const PdeProblem p = make_problem(c);
      return build_model(c, p.dims, p.outputs, 0).param_count();
    }
    case Experiment::SolveSeparable: {
      const PdeProblem p = make_problem(c);
      return build_separable(c, p, 0).param_count();
    }
  }
  return 0;
}

SummaryRow make_row(const RunConfig& cfg, const MultiSeedSummary& summary) {
  SummaryRow row;
  row.name = cfg.name;
  row.label = cfg.label;
  row.basis = basis_label(cfg.model.basis);
  row.params = param_count(cfg);
  row.rel_l2 = summary.rel_l2;
  row.sec_per_iter = summary.sec_per_iter;
  row.seeds = summary.seeds;
  row.completed = summary.completed;
  row.diverged = summary.diverged;
  return row;
}

RunOutput run(const RunConfig& cfg, const std::string& reference_dir, int threads) {
  cfg.validate();
  RunOutput out;
  std::mutex mu;
  Eigen::MatrixXd lorenz_ref;
  if (cfg.experiment == Experiment::LorenzPi) lorenz_ref = lorenz_pi_reference(cfg, reference_dir);
  if (cfg.experiment == Experiment::SolvePde) (void)pde_eval_set(cfg, make_problem(cfg), reference_dir);  // fail early
  auto one = [&](std::uint64_t seed) -> TrainResult {
    switch (cfg.experiment) {
      case Experiment::FitFunction: return run_fit(cfg, seed);
      case Experiment::LorenzMap: return run_lorenz_map(cfg, seed);
      case Experiment::SolvePde: return run_pde(cfg, seed, reference_dir);
      case Experiment::SolveSeparable: return run_separable(cfg, seed);
      case Experiment::LorenzPi: return run_lorenz_pi(cfg, seed, lorenz_ref);
      case Experiment::Forgetting: return run_forgetting(cfg, seed);
      case Experiment::Ntk: {
        std::vector<Spectrum> spectra;
        TrainResult r = run_ntk(cfg, seed, spectra);
        std::lock_guard lock(mu);
        out.spectra[seed] = std::move(spectra);
        return r;
      }
    }
    throw std::logic_error("unreachable experiment");
  };
  out.summary = run_multiseed(cfg.train.seeds, one, threads);
  out.row = make_row(cfg, out.summary);
  return out;
}

// ------------------------------------------------------------------ summaries

namespace {

ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

}  // namespace

ojson to_json(const SummaryRow& r) {
  ojson j;
  j["name"] = r.name;
  j["label"] = r.label;
  j["basis"] = r.basis;
  j["params"] = r.params;
  if (r.rel_l2) j["rel_l2"] = ojson{{"mean", r.rel_l2->mean}, {"std", r.rel_l2->std}};
  else j["rel_l2"] = nullptr;
  j["sec_per_iter"] = r.sec_per_iter;
  j["seeds"] = r.seeds;
  j["completed"] = r.completed;
  j["diverged"] = r.diverged;
  return j;
}

SummaryRow summary_row_from_json(const nlohmann::json& j) {
  SummaryRow r;
  r.name = j.at("name").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.basis = j.at("basis").get<std::string>();
  r.params = j.at("params").get<long long>();
  if (!j.at("rel_l2").is_null()) r.rel_l2 = MeanStd{j.at("rel_l2").at("mean").get<double>(), j.at("rel_l2").at("std").get<double>()};
  r.sec_per_iter = j.at("sec_per_iter").get<double>();
  r.seeds = j.at("seeds").get<int>();
  r.completed = j.at("completed").get<int>();
  r.diverged = j.at("diverged").get<int>();
  return r;
}

ojson summary_json(const RunConfig& effective, const RunConfig& preset, const RunOutput& out) {
  ojson j;
  j["format"] = "fekan-summary";
  j["row"] = to_json(out.row);
  j["experiment"] = to_string(effective.experiment);
  j["problem"] = effective.problem;
  ojson metrics = ojson::object();
  for (const auto& [k, v] : out.summary.metrics) metrics[k] = ojson{{"mean", v.mean}, {"std", v.std}};
  j["metrics"] = metrics;
  ojson seeds = ojson::array();
  for (const auto& sr : out.summary.runs) {
    ojson s;
    s["seed"] = sr.seed;
    s["diverged"] = sr.result.diverged;
    s["diverged_epoch"] = opt_json(sr.result.diverged_epoch);
    s["epochs_run"] = sr.result.epochs_run;
    s["final_loss"] = num(sr.result.final_loss);
    s["final_rel_l2"] = num(sr.result.final_rel_l2);
    s["sec_per_iter"] = sr.result.sec_per_iter;
    ojson m = ojson::object();
    for (const auto& [k, v] : sr.result.metrics) m[k] = num(v);
    s["metrics"] = m;
    seeds.push_back(s);
  }
  j["per_seed"] = seeds;
  ojson curve = ojson::array();
  for (const auto& cp : out.summary.curve) {
    curve.push_back(ojson{{"epoch", cp.epoch},
                          {"loss_mean", num(cp.loss_mean)},
                          {"loss_std", num(cp.loss_std)},
                          {"rel_l2_mean", num(cp.rel_l2_mean)},
                          {"rel_l2_std", num(cp.rel_l2_std)}});
  }
  j["curve"] = curve;
  j["preset"] = to_json(preset);
  j["effective"] = to_json(effective);
  return j;
}

void emit_summary(const std::string& dir, const RunConfig& effective, const RunConfig& preset, const RunOutput& out) {
  fs::create_directories(dir);
  for (const auto& sr : out.summary.runs) {
    write_records_csv((fs::path(dir) / ("records_" + std::to_string(sr.seed) + ".csv")).string(), sr.result.records);
  }
  for (const auto& [seed, spectra] : out.spectra) {
    const fs::path sub = fs::path(dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(sub);
    for (const auto& s : spectra) {
      char tag[64];
      std::snprintf(tag, sizeof tag, "%.0f", s.tau);
      write_spectrum_csv((sub / (std::string("spectra_") + tag + ".csv")).string(), {s});
    }
  }
  std::ofstream f(fs::path(dir) / "summary.json", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write summary.json in " + dir);
  f << summary_json(effective, preset, out).dump(2) << "\n";
}

// ------------------------------------------------------------------ references

std::string reference_path(const std::string& dir, const std::string& problem) {
  return (fs::path(dir) / ("reference_" + problem + ".csv")).string();
}

std::string make_reference(const std::string& problem, const std::string& dir) {
  fs::create_directories(dir);
  const std::string path = reference_path(dir, problem);
  if (problem == "allen_cahn") {
    write_grid_csv(path, allen_cahn_reference());
  } else if (problem == "lorenz_pi") {
    const Eigen::MatrixXd m = lorenz_reference(Eigen::Vector3d(1.0, 1.0, 1.0), 4.0, 1e-3);
    GridData g;
    g.shape = {m.rows(), 4};
    g.values.resize(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (int k = 0; k < 4; ++k) g.values[i * 4 + k] = m(i, k);
    write_grid_csv(path, g);
  } else {
    throw std::invalid_argument("no reference generator for '" + problem + "' (known: allen_cahn, lorenz_pi)");
  }
  return path;
}

// ------------------------------------------------------------------ compare

std::vector<CompareRow> compare(const std::vector<SummaryRow>& rows) {
  std::vector<CompareRow> out;
  if (rows.empty()) return out;
  const SummaryRow& base = rows.front();
  for (const auto& r : rows) {
    CompareRow c;
    c.row = r;
    if (r.rel_l2 && base.rel_l2) c.rel_l2_delta = r.rel_l2->mean - base.rel_l2->mean;
    c.sec_per_iter_delta = r.sec_per_iter - base.sec_per_iter;
    c.diverged_delta = r.diverged - base.diverged;
    out.push_back(c);
  }
  return out;
}

std::string format_compare(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-32s %-14s %-22s %8s %-24s %12s %9s %12s %12s\n", "name", "label", "basis", "params",
                "rel_l2", "sec/iter", "diverged", "d_rel_l2", "d_sec/iter");
  os << buf;
  for (const auto& c : rows) {
    char rel[64] = "n/a";
    if (c.row.rel_l2) std::snprintf(rel, sizeof rel, "%.5f +- %.5f", c.row.rel_l2->mean, c.row.rel_l2->std);
    char drel[32] = "n/a";
    if (c.rel_l2_delta) std::snprintf(drel, sizeof drel, "%+.5f", *c.rel_l2_delta);
    char div[32];
    std::snprintf(div, sizeof div, "%d/%d", c.row.diverged, c.row.seeds);
    std::snprintf(buf, sizeof buf, "%-32s %-14s %-22s %8lld %-24s %12.6f %9s %12s %+12.6f\n", c.row.name.c_str(),
                  c.row.label.c_str(), c.row.basis.c_str(), c.row.params, rel, c.row.sec_per_iter, div, drel,
                  c.sec_per_iter_delta);
    os << buf;
  }
  return os.str();
}

std::string output_root() {
  const char* env = std::getenv("FEKAN_OUT");
  return env && *env ? std::string(env) : std::string("runs");
}

}  // namespace fekan::bench
