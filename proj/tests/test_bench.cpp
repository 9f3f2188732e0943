#include "doctest.h"

#include "fekan/bench.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fekan;
using namespace fekan::bench;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Drops the sec_per_iter column (7th) from a records CSV.
std::string without_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (line.back() == ',') cells.emplace_back();
    REQUIRE(cells.size() == 8);
    cells.erase(cells.begin() + 6);
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fekan_test_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_fit(const std::string& preset, int epochs) {
  RunConfig c = apply_overrides(load_presets().at(preset), Overrides{epochs, std::nullopt, 2, 5});
  c.data.n_train = 200;
  c.data.n_eval = 300;
  return c;
}

TrainResult fake(double rel, bool diverged) {
  TrainResult r;
  r.diverged = diverged;
  if (diverged) r.diverged_epoch = 3;
  r.final_rel_l2 = diverged ? std::numeric_limits<double>::quiet_NaN() : rel;
  r.records.push_back(TrainRecord{0, 1.0, 1.0, 0, 0, rel, 0.0, false});
  r.sec_per_iter = 0.5;
  return r;
}

}  // namespace

TEST_CASE("every preset round-trips serialize -> parse -> serialize") {
  const auto& presets = load_presets();
  CHECK(presets.size() > 40);
  for (const auto& [name, cfg] : presets) {
    CAPTURE(name);
    CHECK(cfg.name == name);
    const std::string a = to_json(cfg).dump();
    const RunConfig back = run_config_from_json(nlohmann::json::parse(a));
    CHECK(to_json(back).dump() == a);
    CHECK_FALSE(cfg.metadata.empty());
    CHECK(param_count(cfg) > 0);
  }
}

TEST_CASE("preset examples encode the published hyperparameters") {
  const auto& presets = load_presets();
  SUBCASE("funfit-fekan-spline") {
    const RunConfig& c = presets.at("funfit-fekan-spline");
    CHECK(c.model.map.build(1, 0).output_width() == 9);
    CHECK(c.model.hidden == std::vector<int>{6});
    CHECK(c.model.basis.kind == BasisKind::Spline);
    CHECK(c.model.basis.k == 2);
    CHECK(c.model.basis.G == 15);
    CHECK(c.train.epochs == 50000);
    CHECK(c.train.lr == 1e-3);
  }
  SUBCASE("helm2d-fekan-spline") {
    const RunConfig& c = presets.at("helm2d-fekan-spline");
    CHECK(c.model.map.build(2, 0).output_width() == 14);
    CHECK(c.model.hidden == std::vector<int>{7, 7});
    CHECK(c.model.basis.k == 3);
    CHECK(c.model.basis.G == 5);
    CHECK(c.train.epochs == 100000);
  }
  SUBCASE("kg-sep-fekan-cheby") {
    const RunConfig& c = presets.at("kg-sep-fekan-cheby");
    CHECK(c.problem == "klein_gordon");
    CHECK(c.model.map.build(1, 0).output_width() == 5);
    CHECK(c.model.hidden == std::vector<int>{5});
    CHECK(c.model.rank == 10);
    CHECK(c.model.basis.kind == BasisKind::Chebyshev);
    CHECK(c.model.basis.k == 4);
    CHECK(c.train.epochs == 50000);
  }
  SUBCASE("plain KAN presets use identity maps") {
    CHECK(presets.at("funfit-kan-spline").model.map.build(1, 0).output_width() == 1);
    CHECK(presets.at("helm2d-kan-spline").model.map.build(2, 0).output_width() == 2);
  }
  SUBCASE("rff presets draw seven terms per dimension from the run seed") {
    const RunConfig& c = presets.at("helm2d-fekan-spline-rff-s2");
    CHECK(c.model.map.sigma == 2.0);
    const FeatureMap a = c.model.map.build(2, 3), b = c.model.map.build(2, 3), d = c.model.map.build(2, 4);
    CHECK(a.output_width() == 14);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.to_json().dump() != d.to_json().dump());
  }
}

TEST_CASE("overrides keep the preset and record the effective values") {
  const RunConfig& p = load_presets().at("forgetting-fekan-g3");
  const RunConfig e = apply_overrides(p, Overrides{400, 500, 2, std::nullopt});
  CHECK(e.train.epochs == 400);
  CHECK(e.data.phase_epochs == std::vector<int>{400, 400, 400, 900});
  CHECK(e.data.n_res == 500);
  CHECK(e.train.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(p.data.phase_epochs == std::vector<int>{20000, 20000, 20000, 45000});
  CHECK_THROWS_AS(apply_overrides(p, Overrides{-1, std::nullopt, std::nullopt, std::nullopt}), std::invalid_argument);
  CHECK_THROWS_AS(apply_overrides(p, Overrides{std::nullopt, 0, std::nullopt, std::nullopt}), std::invalid_argument);
}

TEST_CASE("config validation rejects bad configs") {
  RunConfig c = load_presets().at("funfit-fekan-spline");
  c.problem = "helmholtz2d";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = load_presets().at("funfit-fekan-spline");
  c.train.seeds.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  auto j = nlohmann::json::parse(to_json(load_presets().at("funfit-fekan-spline")).dump());
  j["experiment"] = "nope";
  CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
}

TEST_CASE("emit_summary: one seed gives std 0 and the JSON row round-trips") {
  const RunConfig c = load_presets().at("funfit-fekan-spline");
  RunOutput out;
  out.summary = summarize({SeedRun{0, fake(0.02, false)}});
  out.row = make_row(c, out.summary);
  REQUIRE(out.row.rel_l2);
  CHECK(out.row.rel_l2->std == 0.0);
  CHECK(out.row.rel_l2->mean == 0.02);
  const fs::path dir = scratch("one");
  emit_summary(dir.string(), c, c, out);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary_row_from_json(j.at("row")) == out.row);
  CHECK(fs::exists(dir / "records_0.csv"));
}

TEST_CASE("emit_summary: mixed diverged and completed runs keep both counts") {
  const RunConfig c = load_presets().at("funfit-kan-cheby");
  RunOutput out;
  out.summary = summarize({SeedRun{0, fake(0.02, false)}, SeedRun{1, fake(0.0, true)}, SeedRun{2, fake(0.04, false)}});
  out.row = make_row(c, out.summary);
  CHECK(out.row.completed == 2);
  CHECK(out.row.diverged == 1);
  const fs::path dir = scratch("mixed");
  emit_summary(dir.string(), c, c, out);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(j.at("row").at("completed") == 2);
  CHECK(j.at("row").at("diverged") == 1);
  CHECK(j.at("per_seed").at(1).at("final_rel_l2").is_null());
  CHECK(summary_row_from_json(j.at("row")) == out.row);

  // all diverged: no mean
  RunOutput all;
  all.summary = summarize({SeedRun{0, fake(0.0, true)}});
  all.row = make_row(c, all.summary);
  CHECK_FALSE(all.row.rel_l2);
  CHECK(summary_row_from_json(nlohmann::json::parse(to_json(all.row).dump())) == all.row);
}

TEST_CASE("compare: identical inputs give zero deltas") {
  SummaryRow r{"a", "FEKAN", "spline k=2 G=15", 100, MeanStd{0.01, 0.001}, 0.2, 3, 3, 0};
  const auto rows = compare({r, r});
  REQUIRE(rows.size() == 2);
  for (const auto& c : rows) {
    REQUIRE(c.rel_l2_delta);
    CHECK(*c.rel_l2_delta == 0.0);
    CHECK(c.sec_per_iter_delta == 0.0);
    CHECK(c.diverged_delta == 0);
  }
  SummaryRow worse = r;
  worse.rel_l2 = MeanStd{0.03, 0.0};
  CHECK(*compare({r, worse})[1].rel_l2_delta == doctest::Approx(0.02));
  CHECK(format_compare(rows).find("+0.00000") != std::string::npos);
}

TEST_CASE("fit-function runs are reproducible apart from timing") {
  const RunConfig c = tiny_fit("funfit-fekan-spline", 30);
  const RunOutput a = run(c, "", 1);
  const RunOutput b = run(c, "", 2);
  const fs::path da = scratch("det_a"), db = scratch("det_b");
  emit_summary(da.string(), c, load_presets().at("funfit-fekan-spline"), a);
  emit_summary(db.string(), c, load_presets().at("funfit-fekan-spline"), b);
  for (int s = 0; s < 2; ++s) {
    const std::string f = "records_" + std::to_string(s) + ".csv";
    CHECK(without_timing(slurp(da / f)) == without_timing(slurp(db / f)));
  }
  REQUIRE(a.row.rel_l2);
  CHECK(a.row.rel_l2->mean == b.row.rel_l2->mean);
  CHECK(a.row.completed == 2);
}

TEST_CASE("each experiment kind runs end to end at tiny scale") {
  const fs::path refs = scratch("refs");
  auto tiny = [](const std::string& name, int epochs) {
    RunConfig c = apply_overrides(load_presets().at(name), Overrides{epochs, 64, 1, 1});
    return c;
  };
  SUBCASE("solve-pde helmholtz") {
    RunConfig c = tiny("helm2d-fekan-spline", 3);
    c.data.n_bc = 8;
    c.data.eval_grid = {11, 11};
    const RunOutput o = run(c, refs.string(), 1);
    CHECK(o.row.completed == 1);
    CHECK(std::isfinite(o.row.rel_l2->mean));
  }
  SUBCASE("solve-separable klein-gordon") {
    RunConfig c = tiny("kg-sep-fekan-spline", 3);
    c.data.grid = {4, 4, 5};
    c.data.eval_grid = {5, 5, 6};
    const RunOutput o = run(c, refs.string(), 1);
    CHECK(o.row.completed == 1);
    CHECK(std::isfinite(o.row.rel_l2->mean));
  }
  SUBCASE("forgetting") {
    RunConfig c = tiny("forgetting-fekan-g3", 2);
    c.data.n_bc = 8;
    c.data.eval_grid = {11, 11};
    const RunOutput o = run(c, refs.string(), 1);
    CHECK(o.summary.metrics.contains("face1_after_phase4"));
    CHECK(o.summary.runs[0].result.epochs_run == 2 + 2 + 2 + 4);
  }
  SUBCASE("lorenz-map") {
    RunConfig c = tiny("lorenz-map-fekan-spline", 4);
    c.data.n_traj = 2;
    c.data.traj_steps = 20;
    const RunOutput o = run(c, refs.string(), 1);
    CHECK(o.row.completed == 1);
  }
  SUBCASE("lorenz-pi uses a reference file when present") {
    make_reference("lorenz_pi", refs.string());
    RunConfig c = tiny("lorenz-pi-fekan-spline", 2);
    c.data.n_res = 16;
    const RunOutput o = run(c, refs.string(), 1);
    CHECK(o.summary.metrics.contains("rel_l2_z"));
    CHECK(o.summary.runs[0].result.epochs_run == 2 * 8);
  }
  SUBCASE("ntk writes one spectrum per checkpoint") {
    RunConfig c = tiny("ntk-fekan-spline", 8);
    c.data.n_train = 100;
    c.data.n_eval = 100;
    c.data.ntk_points = 16;
    const RunOutput o = run(c, refs.string(), 1);
    REQUIRE(o.spectra.contains(0));
    CHECK(o.spectra.at(0).size() == 5);
    CHECK(o.spectra.at(0).back().tau == 8.0);
    CHECK(o.summary.metrics.contains("mid_ratio_final"));
    const fs::path dir = scratch("ntk");
    emit_summary(dir.string(), c, c, o);
    CHECK(fs::exists(dir / "seed_0" / "spectra_0.csv"));
    CHECK(fs::exists(dir / "seed_0" / "spectra_8.csv"));
  }
  SUBCASE("allen-cahn without a reference fails with a hint") {
    RunConfig c = tiny("allen-cahn-fekan-spline", 1);
    try {
      (void)run(c, (refs / "missing").string(), 1);
      FAIL("expected a missing-reference error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("make-reference") != std::string::npos);
    }
  }
}

TEST_CASE("make_reference writes the lorenz reference and rejects unknown problems") {
  const fs::path refs = scratch("mkref");
  const std::string p = make_reference("lorenz_pi", refs.string());
  const GridData g = read_grid_csv(p);
  REQUIRE(g.shape.size() == 2);
  CHECK(g.shape[0] == 4001);
  CHECK(g.shape[1] == 4);
  CHECK(g.values[0] == 0.0);
  CHECK(g.values[1] == 1.0);
  CHECK_THROWS_AS(make_reference("poisson", refs.string()), std::invalid_argument);
}

TEST_CASE("output root follows FEKAN_OUT") {
  ::setenv("FEKAN_OUT", "/tmp/somewhere", 1);
  CHECK(output_root() == "/tmp/somewhere");
  ::unsetenv("FEKAN_OUT");
  CHECK(output_root() == "runs");
}

#ifdef FEKAN_CLI
namespace {
int sh(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }
}  // namespace

TEST_CASE("cli contract") {
  const fs::path root = scratch("cli");
  const std::string env = "FEKAN_OUT=" + root.string() + " ";
  const std::string cli = env + FEKAN_CLI;
  CHECK(sh(cli + " fit-function --preset spline-g15 --seeds 3 --epochs 10 --log-every 5") == 0);
  const fs::path dir = root / "funfit-fekan-spline-g15";
  for (int s = 0; s < 3; ++s) CHECK(fs::exists(dir / ("records_" + std::to_string(s) + ".csv")));
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(j.at("format") == "fekan-summary");
  CHECK(j.at("row").at("seeds") == 3);
  CHECK(j.at("preset").at("train").at("epochs") == 50000);
  CHECK(j.at("effective").at("train").at("epochs") == 10);
  CHECK(run_config_from_json(j.at("effective")).train.epochs == 10);

  const std::string s = (dir / "summary.json").string();
  CHECK(sh(cli + " compare " + s + " " + s) == 0);
  CHECK(sh(cli + " fit-function --preset spline-g15 --bogus 3") != 0);
  CHECK(sh(cli + " fit-function --preset no-such-preset") != 0);
  CHECK(sh(cli + " solve-pde --preset funfit-fekan-spline") != 0);
  CHECK(sh(cli + " solve-pde --preset allen-cahn-fekan-spline --epochs 1") != 0);
  CHECK(sh(cli + " frobnicate") != 0);

  // a config file with a flag on top
  const fs::path cfg = root / "cfg.json";
  std::ofstream(cfg) << to_json(load_presets().at("funfit-kan-wavelet")).dump(2);
  CHECK(sh(cli + " fit-function --config " + cfg.string() + " --epochs 5 --seeds 1") == 0);
  const auto k = nlohmann::json::parse(slurp(root / "funfit-kan-wavelet" / "summary.json"));
  CHECK(k.at("effective").at("train").at("epochs") == 5);
}
#endif
