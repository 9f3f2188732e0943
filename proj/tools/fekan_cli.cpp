// Command-line front end: one subcommand per experiment plus reference
// generation and summary comparison.

#include "fekan/bench.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fekan::bench;

namespace {

struct ExperimentArgs {
  std::string preset;
  std::string config;
  std::optional<int> epochs, n_res, seeds, log_every;
  int threads = 0;
  std::string out_dir;
};

std::string prefix_for(Experiment e) {
  switch (e) {
    case Experiment::FitFunction: return "funfit";
    case Experiment::LorenzMap: return "lorenz-map";
    case Experiment::SolvePde: return "helm2d";
    case Experiment::SolveSeparable: return "kg-sep";
    case Experiment::LorenzPi: return "lorenz-pi";
    case Experiment::Forgetting: return "forgetting";
    case Experiment::Ntk: return "ntk";
  }
  return "";
}

// Exact preset names first, then the short form "<basis>" meaning the FEKAN
// preset of this subcommand (e.g. fit-function --preset spline-g15).
RunConfig resolve_preset(Experiment e, const std::string& name) {
  const auto& presets = load_presets();
  if (auto it = presets.find(name); it != presets.end()) return it->second;
  if (auto it = presets.find(prefix_for(e) + "-fekan-" + name); it != presets.end()) return it->second;
  throw std::invalid_argument("unknown preset '" + name + "' (run `fekan presets` for the list)");
}

int run_experiment(Experiment e, const ExperimentArgs& a) {
  RunConfig preset;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw std::invalid_argument("cannot read config " + a.config);
    preset = run_config_from_json(nlohmann::json::parse(f));
  } else if (!a.preset.empty()) {
    preset = resolve_preset(e, a.preset);
  } else {
    throw std::invalid_argument("either --preset or --config is required");
  }
  if (preset.experiment != e)
    throw std::invalid_argument("config '" + preset.name + "' belongs to " + to_string(preset.experiment));
  const RunConfig effective = apply_overrides(preset, Overrides{a.epochs, a.n_res, a.seeds, a.log_every});
  const std::string root = output_root();
  const std::string dir = a.out_dir.empty() ? (fs::path(root) / effective.name).string() : a.out_dir;
  const RunOutput out = run(effective, (fs::path(root) / "references").string(), a.threads);
  emit_summary(dir, effective, preset, out);
  std::cout << format_compare(compare({out.row}));
  std::cout << "wrote " << dir << "\n";
  return 0;
}

void add_experiment(CLI::App& app, const std::string& name, const std::string& help, Experiment e,
                    ExperimentArgs& args, std::optional<Experiment>& chosen) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--preset", args.preset, "Preset name (see `fekan presets`)");
  sub->add_option("--config", args.config, "Run-config JSON file; flags override it");
  sub->add_option("--epochs", args.epochs, "Override the epoch count");
  sub->add_option("--n-res", args.n_res, "Override the residual collocation count");
  sub->add_option("--seeds", args.seeds, "Run seeds 0..N-1");
  sub->add_option("--log-every", args.log_every, "Record interval in epochs");
  sub->add_option("--threads", args.threads, "Worker threads for seeds (0 = all cores)");
  sub->add_option("--out", args.out_dir, "Output directory (default $FEKAN_OUT/<preset>)");
  sub->callback([&chosen, e] { chosen = e; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FEKAN experiments"};
  app.require_subcommand(1);
  ExperimentArgs args;
  std::optional<Experiment> chosen;
  add_experiment(app, "fit-function", "Fit the high-frequency discontinuous target", Experiment::FitFunction, args, chosen);
  add_experiment(app, "lorenz-map", "Learn the Lorenz one-step map", Experiment::LorenzMap, args, chosen);
  add_experiment(app, "solve-pde", "Physics-informed PDE solve", Experiment::SolvePde, args, chosen);
  add_experiment(app, "solve-separable", "Separable physics-informed PDE solve", Experiment::SolveSeparable, args,
                 chosen);
  add_experiment(app, "lorenz-pi", "Windowed physics-informed Lorenz solve", Experiment::LorenzPi, args, chosen);
  add_experiment(app, "forgetting", "Phase-wise boundary introduction on Helmholtz", Experiment::Forgetting, args,
                 chosen);
  add_experiment(app, "ntk", "NTK spectra along a fit-function run", Experiment::Ntk, args, chosen);

  std::string ref_problem;
  CLI::App* mkref = app.add_subcommand("make-reference", "Write reference_<problem>.csv");
  mkref->add_option("problem", ref_problem, "allen_cahn or lorenz_pi")->required();

  std::vector<std::string> summaries;
  CLI::App* cmp = app.add_subcommand("compare", "Join summary.json files into a table");
  cmp->add_option("summaries", summaries, "summary.json files")->required();

  CLI::App* list = app.add_subcommand("presets", "List preset names");

  std::string dump_name;
  CLI::App* dump = app.add_subcommand("show-preset", "Print a preset as run-config JSON");
  dump->add_option("name", dump_name)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (chosen) return run_experiment(*chosen, args);
    if (*mkref) {
      const std::string path = make_reference(ref_problem, (fs::path(output_root()) / "references").string());
      std::cout << "wrote " << path << "\n";
      return 0;
    }
    if (*cmp) {
      std::vector<SummaryRow> rows;
      for (const auto& p : summaries) {
        std::ifstream f(p);
        if (!f) throw std::invalid_argument("cannot read " + p);
        rows.push_back(summary_row_from_json(nlohmann::json::parse(f).at("row")));
      }
      std::cout << format_compare(compare(rows));
      return 0;
    }
    if (*list) {
      for (const auto& [name, cfg] : load_presets()) std::cout << name << "  (" << to_string(cfg.experiment) << ")\n";
      return 0;
    }
    if (*dump) {
      const auto& presets = load_presets();
      const auto it = presets.find(dump_name);
      if (it == presets.end()) throw std::invalid_argument("unknown preset '" + dump_name + "'");
      std::cout << to_json(it->second).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
