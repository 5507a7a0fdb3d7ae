#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sgr/pipeline.hpp"
#include "sgr/scenario.hpp"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int slice_agent = -1;
  std::string slice_dims;
  std::string fix_at;
};

int run(const std::string& command, const Args& args) {
  try {
    sgr::ScenarioConfig cfg = sgr::parse_scenario(args.config);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";

    sgr::PipelineOverrides overrides;
    overrides.out_dir = args.out;
    overrides.seed = args.seed;
    overrides.has_seed = args.has_seed;
    overrides.slice_agent = args.slice_agent;
    overrides.slice_dims = args.slice_dims;
    overrides.fix_at = args.fix_at;
    if (const char* tol = std::getenv("SGR_SOLVER_TOL")) {
      overrides.solver_tol = std::stod(tol);
    }

    sgr::PipelineResult result = sgr::run_pipeline(command, cfg, overrides);
    for (const auto& artifact : result.artifacts) std::cout << artifact << "\n";
    if (!result.message.empty())
      (result.exit_code == 0 ? std::cout : std::cerr) << result.message << "\n";
    return result.exit_code;
  } catch (const sgr::ConfigError& ex) {
    std::cerr << "configuration error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sgr - multi-agent coordination regions: simulate, certify, optimize, verify"};
  app.require_subcommand(1);

  Args args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "scenario file (JSON)")->required();
    sub->add_option("--out", args.out, "output directory (defaults to the scenario's)");
    sub->add_option("--seed", args.seed, "sampling seed override")
        ->each([&](const std::string&) { args.has_seed = true; });
  };

  CLI::App* simulate = app.add_subcommand("simulate", "integrate the closed loop; emit trajectory and edge-event CSVs");
  CLI::App* certify = app.add_subcommand("certify", "certify a sublevel set for the fixed shapes; emit region.json");
  CLI::App* optimize = app.add_subcommand("optimize", "alternate level and shape optimization; emit per-iteration traces");
  CLI::App* verify = app.add_subcommand("verify", "sample the certified region against the simulation oracle");
  CLI::App* slice = app.add_subcommand("slice", "extract a 2-D contour of the certified level set");
  CLI::App* sweep = app.add_subcommand("sweep", "fan out the scenario's sweep entries concurrently");
  for (CLI::App* sub : {simulate, certify, optimize, verify, slice, sweep}) add_common(sub);
  slice->add_option("--slice-agent", args.slice_agent, "agent whose plane is sliced (0-based)");
  slice->add_option("--slice-dims", args.slice_dims,
                    "two indices a,b of the agent state block (positions first, then velocities)");
  slice->add_option("--fix-at", args.fix_at, "fix the remaining coordinates: formation | initial")
      ->check(CLI::IsMember({"formation", "initial"}));

  CLI11_PARSE(app, argc, argv);

  for (CLI::App* sub : {simulate, certify, optimize, verify, slice, sweep}) {
    if (sub->parsed()) return run(sub->get_name(), args);
  }
  return 1;
}
