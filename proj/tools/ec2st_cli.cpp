// Command-line front end for the sequential two-sample testing experiments.
//
// Every subcommand reads a JSON experiment config, runs the Monte Carlo
// harness, and writes config.json / rates.csv / runs.jsonl / summary.json
// (and curves.svg) into --out.  Identical config + seed produce identical
// output bytes, whatever --jobs is.  Failures print a one-line JSON error
// object to stderr and exit nonzero.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ec2st/harness.hpp"

namespace {

struct SubcommandArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
};

void attach_options(CLI::App* cmd, SubcommandArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)")
      ->each([&args](const std::string&) { args.seed_given = true; });
  cmd->add_option("--jobs", args.jobs, "worker threads")
      ->check(CLI::PositiveNumber);
}

int fail(const std::string& kind, const std::string& message) {
  nlohmann::json err;
  err["error"] = kind;
  err["message"] = message;
  std::cerr << err.dump() << "\n";
  return 1;
}

int run(ec2st::ExperimentKind kind, const SubcommandArgs& args) {
  nlohmann::json raw;
  {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) return fail("io", "cannot open config: " + args.config_path);
    try {
      in >> raw;
    } catch (const nlohmann::json::exception& e) {
      return fail("config", std::string("config is not valid JSON: ") + e.what());
    }
  }

  try {
    ec2st::ExperimentConfig config = ec2st::parse_experiment_config(raw, kind);
    if (args.seed_given) config.master_seed = args.seed;
    config.jobs = args.jobs;
    const ec2st::ExperimentResult result = ec2st::run_experiment(config);
    ec2st::emit_reports(result, config, args.out_dir);
    std::cout << experiment_kind_name(kind) << ": wrote " << args.out_dir
              << " (replications=" << config.replications
              << ", seed=" << config.master_seed << ")\n";
    return 0;
  } catch (const ec2st::ConfigError& e) {
    return fail("config", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anytime-valid sequential two-sample testing experiments"};
  app.require_subcommand(1);

  struct Entry {
    ec2st::ExperimentKind kind;
    const char* description;
  };
  const Entry entries[] = {
      {ec2st::ExperimentKind::kType1,
       "rejection rate under the null vs sample budget"},
      {ec2st::ExperimentKind::kPower,
       "rejection rate under the alternative vs sample budget"},
      {ec2st::ExperimentKind::kStoppingTime,
       "samples consumed until rejection, per batch size"},
      {ec2st::ExperimentKind::kLambdaAblation,
       "sensitivity to the initial mixture weight"},
      {ec2st::ExperimentKind::kBatchOrder,
       "stability of the test under reshuffled batch order"},
      {ec2st::ExperimentKind::kInflationDemo,
       "naive sequential retesting vs the anytime-valid test"},
      {ec2st::ExperimentKind::kGrowthRate,
       "e-value growth per sample against the exact information rate"},
  };

  SubcommandArgs args[std::size(entries)];
  CLI::App* cmds[std::size(entries)];
  for (std::size_t i = 0; i < std::size(entries); ++i) {
    cmds[i] = app.add_subcommand(experiment_kind_name(entries[i].kind),
                                 entries[i].description);
    attach_options(cmds[i], args[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < std::size(entries); ++i) {
    if (cmds[i]->parsed()) return run(entries[i].kind, args[i]);
  }
  return fail("cli", "no subcommand given");
}
