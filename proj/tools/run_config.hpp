#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "heatopt/domain.hpp"
#include "heatopt/energy.hpp"
#include "heatopt/error.hpp"
#include "heatopt/solver.hpp"
#include "heatopt/verify.hpp"

namespace heatopt::cli {

enum class Task { kSolve, kSweep, kVerify, kOracleCompare };

const char* task_name(Task t);

// what() reads "<json path>: <message>", e.g. "$.domain.mu: must be positive".
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct FlatFaceConfig {
  FlatFace face;
  double window = 0.4;
  double floor = 0.4;
};

struct OracleTolerances {
  double energy = 0.03;   // relative
  double volume = 0.03;   // relative
  double lambda = 0.08;   // relative
  double lambda_cv = 0.10;
};

struct RunConfig {
  Task task = Task::kSolve;
  DomainSpec domain;
  ObstacleDescriptor obstacles;
  int resolution = 129;           // nodes per axis, unless spacing is set
  std::optional<double> spacing;
  PenaltyParams penalty;
  std::optional<double> pos_threshold;  // unset: 1e-8 sup phi
  SolveParams solver;

  std::vector<double> eps_list;   // sweep
  double volume_tol = 0.01;
  bool warm_start = true;

  std::vector<int> lipschitz_resolutions;  // verify; empty skips the check
  double lipschitz_ratio_tol = 1.1;
  std::optional<FlatFaceConfig> flat_face;

  OracleTolerances oracle;

  std::uint64_t seed = 0;
  std::string output = "out";
  nlohmann::json source;          // the parsed document, echoed into summary.json
};

// Rejects unknown keys, wrong types and out-of-range values with ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

struct RunOptions {
  std::optional<std::string> out_dir;   // overrides config.output
  std::optional<std::uint64_t> seed;    // overrides config.seed
  bool quiet = false;
  int jobs = 1;
};

// Exit status: 0 success, 1 failed verification / failed oracle comparison /
// non-converged solve under task=verify. Throws on invalid input.
int run(RunConfig config, const RunOptions& options);

}  // namespace heatopt::cli
