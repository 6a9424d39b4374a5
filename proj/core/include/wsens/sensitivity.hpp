#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "wsens/estimators.hpp"
#include "wsens/weighted_stats.hpp"

namespace wsens {

// r2_d = R²_w(D ~ Z | X), r2_y = R²_w(Y ~ Z | D, X); sign is the sign of
// R_w(Y ~ Z | D, X) · R_w(D ~ Z | X).
struct SensitivityParams {
  double r2_d = 0.0;
  double r2_y = 0.0;
  int sign = 1;
};

// Throws InvalidArgument unless 0 <= r2_d < 1, 0 <= r2_y <= 1, sign = ±1.
void validate(const SensitivityParams& params);

// kTowardZero ignores `sign` and moves the estimate toward zero (worst case);
// kAsGiven subtracts the signed bias.
enum class SignConvention { kTowardZero, kAsGiven };

// sqrt(r2_y · r2_d / (1 - r2_d)); the bias is this times sd_y_resid / sd_d_resid.
double bias_factor(const SensitivityParams& params);

// Signed bias tau_wls - tau_target implied by the parameters.
double bias(const SensitivityParams& params, const WlsFit& fit);

// Same adjustment from raw summary numbers; used per bootstrap replicate.
double adjust(double tau, double sd_y_resid, double sd_d_resid, const SensitivityParams& params,
              SignConvention convention = SignConvention::kTowardZero);

double adjusted_estimate(const SensitivityParams& params, const WlsFit& fit,
                         SignConvention convention = SignConvention::kTowardZero);

// Parameters carried by an observed confounder Z under the fit's weights and
// covariate design. Throws NumericalError when Z is (numerically) a function
// of D and X, so that r2_d would reach 1.
SensitivityParams params_from_z(const Dataset& data, const Eigen::VectorXd& z, const WlsFit& fit);

// RV_q: the common value of (r2_d, r2_y) that moves the estimate by q·|tau|.
double robustness_value_q(const WlsFit& fit, double q = 1.0);

// R²_w(Y ~ D | X): with r2_y = 1 this r2_d brings the estimate to zero.
double extreme_scenario_r2(const WlsFit& fit);

struct BenchmarkComponents {
  double r2_semi_d_xj = 0.0;  // R²_{w_semi}(D ~ Xj | X-j)
  double r2_full_d_xj = 0.0;  // R²_w(D ~ Xj | X-j)
  double r2_y_xj = 0.0;       // R²_w(Y ~ Xj | D, X-j)
  double r2_z_xj = 0.0;       // implied R²_w(Z ~ Xj | D, X-j)
};

struct BenchmarkResult {
  std::vector<std::string> benchmark;
  double kappa_d = 1.0;
  double kappa_y = 1.0;
  double bound_r2_d = 0.0;
  double bound_r2_y = 0.0;
  double eta_sq = 0.0;
  bool r2_y_clamped = false;  // the raw bound exceeded 1
  BenchmarkComponents components;
};

// Bounds on (r2_d, r2_y) for a confounder kappa_d (treatment side) and
// kappa_y (outcome side) times as strong as the benchmark columns. The
// benchmark columns are removed from the fit's covariate design; with a
// centered design the treatment-side R² uses the main-effect columns only and
// the outcome side uses both main effects and interactions. `semi` are the
// weights rebuilt without the benchmark columns.
//
// Throws InvalidArgument for an empty benchmark or negative kappas and
// NumericalError when a denominator vanishes or bound_r2_d >= 1.
BenchmarkResult benchmark_bounds(const WlsFit& fit, const Dataset& data, const WeightSet& semi,
                                 const std::vector<std::string>& benchmark_columns,
                                 double kappa_d = 1.0, double kappa_y = 1.0);

// Worst-case adjusted estimate at the bounded parameters.
double adjusted_from_bound(const BenchmarkResult& bound, const WlsFit& fit);

struct TranslatorDiagnostic {
  double semi_strength = 0.0;  // R²_{w_semi}(D~Z|X-j) / R²_{w_semi}(D~Xj|X-j)
  double translator = 0.0;     // R²_w(D~Z|X-j) / R²_{w_semi}(D~Z|X-j)
  double kappa_d = 0.0;        // their product
};

// Decomposes the treatment-side benchmarking constant of an observed Z.
// Covariate columns are taken from data.x directly.
TranslatorDiagnostic translator_diagnostic(const Dataset& data, const Eigen::VectorXd& z,
                                           const WeightSet& w, const WeightSet& semi,
                                           const std::vector<std::string>& benchmark_columns);

struct GridSpec {
  std::vector<double> r2_d_axis;
  std::vector<double> r2_y_axis;

  // 21 equally spaced values 0.5·i/21 on each axis.
  static GridSpec standard();
};

enum class ContourMode { kEstimate, kLowerCi, kUpperCi };

std::string_view to_string(ContourMode mode);

// values(i, j) is evaluated at (r2_d_axis[i], r2_y_axis[j]).
struct ContourGrid {
  std::vector<double> r2_d_axis;
  std::vector<double> r2_y_axis;
  Eigen::MatrixXd values;
  ContourMode mode = ContourMode::kEstimate;
};

// Adjusted point estimates over the grid. Throws InvalidArgument for axis
// values outside [0, 1).
ContourGrid contour_grid(const WlsFit& fit, const GridSpec& grid,
                         SignConvention convention = SignConvention::kTowardZero);

// Long format: header "r2_d,r2_y,value" then one row per cell.
void write_contour_csv(std::ostream& out, const ContourGrid& grid);

struct WeightComparison {
  double correlation = 0.0;
  double correlation_control = 0.0;  // NaN when either vector is constant in the arm
  double correlation_treated = 0.0;
  EssSummary ess_full;
  EssSummary ess_semi;
};

// Unweighted Pearson correlation of the two weight vectors plus ESS
// summaries. Throws NumericalError when either vector is constant.
WeightComparison weight_comparison(const WeightSet& w, const WeightSet& semi, const Eigen::VectorXd& d);

}  // namespace wsens
