#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "wsens/estimators.hpp"
#include "wsens/weighted_stats.hpp"

namespace wsens {

struct PropensityModel {
  Eigen::VectorXd coefficients;  // intercept first
  Eigen::VectorXd fitted_scores;
  int iterations = 0;

  // Scores for new covariate rows under the fitted coefficients.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

// Maximum-likelihood logistic regression of d on (1, x) by iteratively
// reweighted least squares with step halving on the deviance. Converged once
// the largest coefficient change is below 1e-8. Throws ConvergenceError after
// 100 iterations (the usual symptom of separation) and RankDeficientError for
// collinear x.
PropensityModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& d);

constexpr double kScoreClamp = 1e-6;

// Inverse-probability weights for the estimand, rescaled per arm. Scores are
// clamped into [1e-6, 1 - 1e-6]; the number moved is kept in the diagnostics.
WeightSet ipw_weights(const PropensityModel& model, const Eigen::VectorXd& d, Estimand estimand);

// Maximum-entropy weights that match the reweighted arm's covariate means to
// the target means (ATT: treated, ATC: control, ATE: pooled; both arms are
// reweighted for ATE). Solved through the convex dual with damped Newton and
// step halving. Throws ConvergenceError when the constraints are infeasible or
// 200 iterations pass without max |imbalance| < tol.
WeightSet entropy_balance(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, Estimand estimand,
                          double tol = 1e-8);

// k-nearest-neighbour matching on the propensity score. For ATT each treated
// unit is matched to controls (ATC swaps the roles). Ties in distance go to the
// lower unit index. With replacement a matched unit's raw weight is its match
// count. Without replacement units are processed in descending score order and
// greedily take the nearest available matches; those left with none are
// dropped with weight 0.
WeightSet ps_match_weights(const PropensityModel& model, const Eigen::VectorXd& d, int k = 1,
                           bool with_replacement = true, Estimand estimand = Estimand::kAtt);

// Exact matching for the ATT on the strata formed by identical rows of x.
// Controls get (stratum treated count) / (stratum control count), treated 1;
// treated units in strata without controls are dropped with weight 0.
WeightSet exact_match_weights(const Eigen::MatrixXd& x, const Eigen::VectorXd& d);

// How a set of weights was (or would be) produced from a dataset, so the same
// procedure can be rerun on bootstrap samples and for semi-weights.
struct BuilderSpec {
  WeightMethod method = WeightMethod::kUniform;
  Estimand estimand = Estimand::kAte;
  std::vector<std::string> columns;  // names or source variables of the dataset
  int k = 1;
  bool with_replacement = true;
  double tol = 1e-8;
};

void validate(const BuilderSpec& spec);

// Runs the builder on the named columns. An empty column list yields uniform
// weights.
WeightSet build_weights(const BuilderSpec& spec, const Dataset& data);
WeightSet build_weights(const BuilderSpec& spec, const Dataset& data,
                        const std::vector<Eigen::Index>& columns);

// Reruns the builder without the benchmark columns. Benchmark columns the
// builder never used leave the weights unchanged; removing every builder
// column gives uniform weights.
WeightSet semi_weights(const BuilderSpec& spec, const Dataset& data,
                       const std::vector<std::string>& benchmark_columns);

}  // namespace wsens
