#include <CLI11.hpp>

#include <iostream>

#include "isofed_cli/commands.h"

int main(int argc, char** argv) {
  using namespace isofed::cli;
  CLI::App app{"isofed: semi-supervised federated learning simulator"};
  app.require_subcommand(1);

  RunOptions run;
  std::string run_out;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
  run_cmd->add_option("--config", run.config, "run config (INI)")->required();
  run_cmd->add_option("--out", run_out, "output directory (overrides [output] dir)");
  run_cmd->add_flag("--force", run.force, "allow a non-empty output directory");
  auto* run_seed = run_cmd->add_option("--seed", "override experiment seed");
  auto* run_threads = run_cmd->add_option("--threads", "cap on concurrent client trainers");

  PartitionOptions part;
  std::string part_out;
  auto* part_cmd = app.add_subcommand("partition", "print the client x class partition table");
  part_cmd->add_option("--config", part.config, "run config (INI)")->required();
  part_cmd->add_option("--out", part_out, "directory for partition.csv");
  auto* part_seed = part_cmd->add_option("--seed", "override partition seed");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a Gaussian-blob MDS1 dataset");
  synth_cmd->add_option("--out", synth.out, "output .mds1 file")->required();
  synth_cmd->add_option("--classes", synth.classes)->check(CLI::Range(2, 64));
  synth_cmd->add_option("--samples", synth.samples)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed);

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--data", eval.data, "test set (MDS1)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (*run_cmd) {
    if (!run_out.empty()) run.out_dir = run_out;
    if (*run_seed) run.seed = run_seed->as<std::uint64_t>();
    if (*run_threads) run.threads = run_threads->as<std::size_t>();
    return cmd_run(run, std::cout, std::cerr);
  }
  if (*part_cmd) {
    if (!part_out.empty()) part.out_dir = part_out;
    if (*part_seed) part.seed = part_seed->as<std::uint64_t>();
    return cmd_partition(part, std::cout, std::cerr);
  }
  if (*synth_cmd) return cmd_synth(synth, std::cout, std::cerr);
  return cmd_eval(eval, std::cout, std::cerr);
}
