#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace wsens::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumerical = 3 };

struct Options {
  std::string command;

  std::string input;
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
  std::string cluster;
  bool drop_single_arm_clusters = false;
  bool drop_zero_weight_units = false;

  std::string weights = "ipw";  // ipw|ebal|psmatch|exact|uniform|column:NAME|file:PATH
  std::vector<std::string> weight_covariates;
  std::string estimand;  // ate|att|atc; empty picks the method's usual target
  std::string centering = "none";
  int match_k = 1;
  bool without_replacement = false;
  double ebal_tol = 1e-8;

  std::vector<std::string> benchmarks;  // each a comma-separated column group
  std::vector<double> kappa_d{1.0};
  std::vector<double> kappa_y{1.0};
  std::string semi_weights;  // column:NAME|file:PATH, for external weights

  std::vector<double> q{1.0};
  std::vector<double> alpha{0.05};

  std::string bootstrap;  // reestimate|fixed|cluster; empty picks a default
  int replicates = 1000;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string replicates_in;

  std::string out = ".";

  std::string contour_mode = "estimate";
  double grid_max = 0.5;
  int grid_points = 21;

  std::string experiment = "coverage";  // coverage|translator|plim
  std::string dgp = "dgp1";
  long n = 500;
  long groups = 50;
  long group_size = 100;
  std::vector<double> theta_sq{0.0};
  int iterations = 300;
  std::optional<double> r2_d;
  std::vector<double> r2_y;  // one per theta_sq, or a single shared value
  int plim_draws = 0;
  long plim_n = 10000;
};

// Parses arguments (and an optional --config file) and runs the command.
// Returns the process exit code; diagnostics go to `err`, progress to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Executes an already parsed command. Throws wsens::Error subclasses.
void execute(const Options& options, std::ostream& out);

}  // namespace wsens::cli
