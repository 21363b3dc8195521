#include <iostream>

#include "CLI11.hpp"
#include "run_config.hpp"

// Exit codes: 0 success, 1 failed checks (verify, oracle-compare) or a
// non-converged solve under task=verify, 2 invalid configuration or flags,
// 3 runtime failure.
int main(int argc, char** argv) {
  CLI::App app{"Volume-constrained double-obstacle solver and verification harness"};
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
  int jobs = 1;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides $.output)");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides $.seed)");
  app.add_flag("--quiet", quiet, "Suppress progress and the check table");
  app.add_option("--jobs", jobs, "Worker threads for independent solves")
      ->check(CLI::Range(1, 256));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  heatopt::cli::RunOptions options;
  options.quiet = quiet;
  options.jobs = jobs;
  if (*out_opt) options.out_dir = out_dir;
  if (*seed_opt) options.seed = seed;
  try {
    return heatopt::cli::run(heatopt::cli::load_config(config_path), options);
  } catch (const heatopt::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
