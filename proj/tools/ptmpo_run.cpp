#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ptmpo/numerics.hpp"
#include "ptmpo/scenario.hpp"

int main(int argc, char** argv) {
  ptmpo::ensure_fast_blas(argv);

  CLI::App app{"PT-MPO scenario runner"};
  app.require_subcommand(1);

  std::string config_path, out_path, save_pt, load_pt;
  CLI::App* run_cmd = app.add_subcommand("run", "run a scenario config");
  run_cmd->add_option("--config", config_path, "configuration file")
      ->required();
  run_cmd->add_option("--out", out_path, "CSV output path (overrides config)");
  run_cmd->add_option("--save-pt", save_pt, "serialize the built PT-MPO(s)");
  run_cmd->add_option("--load-pt", load_pt, "reuse serialized PT-MPO(s)");

  CLI11_PARSE(app, argc, argv);

  // PTMPO_THREADS caps internal parallelism (0 = auto).
  if (const char* threads = std::getenv("PTMPO_THREADS")) {
    const int n = std::atoi(threads);
    Eigen::setNbThreads(n > 0 ? n : 0);
  } else {
    Eigen::setNbThreads(1);
  }

  ptmpo::RunOptions opts;
  opts.out_path = out_path;
  opts.save_pt_path = save_pt;
  opts.load_pt_path = load_pt;
  return ptmpo::run(config_path, opts, std::cerr);
}
