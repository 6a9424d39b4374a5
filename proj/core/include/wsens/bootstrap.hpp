#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "wsens/estimators.hpp"
#include "wsens/sensitivity.hpp"
#include "wsens/weight_builders.hpp"

namespace wsens {

enum class BootstrapMode { kReestimate, kFixedWeights, kCluster };

std::string_view to_string(BootstrapMode mode);

struct BootstrapConfig {
  int replicates = 1000;
  BootstrapMode mode = BootstrapMode::kReestimate;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::optional<int> max_failures;  // default floor(0.02 · replicates)
  int threads = 1;                  // 0: one per hardware thread

  int failure_budget() const;
};

void validate(const BootstrapConfig& config);

// Independent generator for replicate `index`; equal (seed, index) pairs give
// equal streams regardless of scheduling.
std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t index);

struct ReplicateStat {
  double tau_hat = 0.0;
  double sd_y_resid = 0.0;
  double sd_d_resid = 0.0;
};

// Successful replicates in index order. index.size() + failures equals the
// configured replicate count.
struct BootstrapReplicates {
  std::vector<int> index;
  std::vector<ReplicateStat> stats;
  int failures = 0;
  BootstrapConfig config;
  double base_tau = 0.0;  // full-sample estimate; fixes the worst-case direction

  std::size_t size() const { return stats.size(); }
};

// Either a procedure to rerun on each resample or weights to carry along.
using WeightSource = std::variant<BuilderSpec, WeightSet>;

// Resamples the data and refits the weighted regression B times.
//   kReestimate:   n units with replacement, weights rebuilt (needs a builder)
//   kFixedWeights: n (X, D, Y, w) tuples with replacement, weights carried
//   kCluster:      G clusters with replacement; weights rebuilt when a
//                  builder is given, carried otherwise
// Replicates that fail (one arm missing, collinear design, builder failure)
// are dropped and counted. Throws NumericalError once failures exceed the
// budget, InvalidArgument for inconsistent configuration.
BootstrapReplicates draw_replicates(const Dataset& data, const WeightSource& source,
                                    Centering centering, const BootstrapConfig& config);

struct AdjustedInterval {
  double lower = 0.0;
  double upper = 0.0;
  double se = 0.0;  // standard deviation of adjusted replicates, divisor m - 1
};

// Linear interpolation between order statistics at position (m - 1)·p of the
// sorted sample (p in [0, 1]).
double quantile_type7(std::vector<double> values, double p);

// Percentile interval of the replicate estimates adjusted at fixed params.
// With kTowardZero every replicate moves in the direction that brings the
// full-sample estimate toward zero; kAsGiven subtracts the signed bias.
AdjustedInterval adjusted_interval(const BootstrapReplicates& reps, const SensitivityParams& params,
                                   double alpha,
                                   SignConvention convention = SignConvention::kTowardZero);

struct RvAlpha {
  double value = 0.0;
  bool bracketed = true;  // false: the interval excludes 0 even as r2 -> 1
};

// Smallest x = r2_d = r2_y at which the adjusted interval reaches 0 (the
// limit on the side of zero crosses it), by bisection on [0, 1 - 1e-6] to 1e-4.
RvAlpha rv_alpha(const BootstrapReplicates& reps, double alpha);
RvAlpha rv_alpha(const Dataset& data, const WeightSource& source, Centering centering,
                 double alpha, const BootstrapConfig& config);

// Lower or upper adjusted confidence limits over the grid.
ContourGrid contour_grid(const BootstrapReplicates& reps, const GridSpec& grid, ContourMode mode,
                         double alpha);

// Columns replicate_index,tau_hat,sd_y,sd_d; values written with 17
// significant digits so a read restores them exactly.
void write_replicates_csv(std::ostream& out, const BootstrapReplicates& reps);
// base_tau is not part of the file and must be supplied. Throws
// InvalidArgument with the offending line number on malformed input.
BootstrapReplicates read_replicates_csv(std::istream& in, double base_tau);

}  // namespace wsens
