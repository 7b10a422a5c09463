#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gpa/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Geometric preferential attachment: equilibria, simulation, coupling and fitness checks"};
  app.set_version_flag("--version", gpa::cli::version());
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  bool fault_inject = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"equilibrium", "solve for the limit measure and check its identities"},
      {"simulate", "grow graphs for each seed and compare with the limit laws"},
      {"coupled-check", "run coupled continuous/dustbin processes and check domination"},
      {"fitness", "phase and limit measure of the fitness model"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seeds", seeds, "seed list overriding sim.seeds")->delimiter(',');
    sub->add_option("--jobs", jobs, "seeds run concurrently")->check(CLI::PositiveNumber);
    if (name == "coupled-check") sub->add_flag("--fault-inject", fault_inject, "halve a_sup (negative control)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gpa::cli::kConfigError;
  }

  gpa::cli::RunOptions opt;
  if (!out_dir.empty()) opt.out_dir = out_dir;
  if (!seeds.empty()) opt.seeds = seeds;
  opt.jobs = jobs;
  opt.fault_inject = fault_inject;
  return gpa::cli::run_command(app.get_subcommands().front()->get_name(), config, opt, std::cout, std::cerr);
}
