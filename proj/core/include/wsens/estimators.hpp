#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsens/weighted_stats.hpp"

namespace wsens {

// Covariates, binary treatment, outcome and optional cluster labels.
//
// Categorical inputs arrive already expanded into indicator columns; `sources`
// records the original variable each column came from so that a name such as
// "village" can select all of its indicators at once.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  std::vector<std::string> sources;
  Eigen::VectorXd d;
  Eigen::VectorXd y;
  std::optional<std::vector<int>> cluster;

  Eigen::Index size() const { return d.size(); }
  Eigen::Index num_covariates() const { return x.cols(); }
  Eigen::Index num_treated() const;

  // Throws InvalidArgument on shape mismatch, non-finite values, non-binary or
  // single-arm treatment, or duplicate column names.
  void validate() const;

  // Column indices for a list of names; each entry may be a column name or a
  // source variable (selecting all of its columns). Result is sorted and
  // unique. Throws InvalidArgument for unknown names.
  std::vector<Eigen::Index> resolve(std::span<const std::string> columns) const;
  std::vector<Eigen::Index> complement(std::span<const Eigen::Index> columns) const;

  Dataset select_units(std::span<const Eigen::Index> rows) const;
  Dataset select_covariates(std::span<const Eigen::Index> columns) const;
};

// Builds a dataset with generated column names x1..xP (sources equal names).
Dataset make_dataset(Eigen::MatrixXd x, Eigen::VectorXd d, Eigen::VectorXd y,
                     std::optional<std::vector<int>> cluster = std::nullopt);

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, std::span<const Eigen::Index> columns);

// Lin-style centering: covariates are replaced by (X - m(X), D * (X - m(X)))
// with m the unweighted overall / treated / control mean.
enum class Centering { kNone, kAte, kAtt, kAtc };

std::string_view to_string(Centering centering);

// Covariate block entering the regression next to the intercept and D.
struct CovariateDesign {
  Eigen::MatrixXd block;
  std::vector<Eigen::Index> sources;  // data.x column behind each block column
  std::vector<bool> interaction;      // true for D * (X - m(X)) columns
};

CovariateDesign covariate_design(const Dataset& data, Centering centering);

// Weighted least squares fit of Y on (1, D, X) plus the residual spreads the
// sensitivity formulas need.
struct WlsFit {
  double tau_hat = 0.0;
  double mu_hat = 0.0;
  Eigen::VectorXd beta_hat;
  double sd_y_resid = 0.0;    // sd_w(Y^{⊥X,D})
  double sd_d_resid = 0.0;    // sd_w(D^{⊥X})
  double sd_y_given_x = 0.0;  // sd_w(Y^{⊥X})
  double r2_yd_given_x = 0.0;
  Centering centering = Centering::kNone;
  WeightSet weights;
  CovariateDesign design;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
};

struct TargetFit {
  WlsFit fit;  // tau_hat is the Z-adjusted estimate
  double gamma_hat = 0.0;
};

// Minimal per-sample summary used inside bootstrap loops.
struct WlsSummary {
  double tau_hat = 0.0;
  double sd_y_resid = 0.0;
  double sd_d_resid = 0.0;
};

WlsFit fit_wls(const Dataset& data, const WeightSet& w, Centering centering = Centering::kNone);

// Same regression with Z added as a regressor. Throws RankDeficientError when
// Z is collinear with (1, D, X).
TargetFit fit_with_z(const Dataset& data, const Eigen::VectorXd& z, const WeightSet& w,
                     Centering centering = Centering::kNone);

WlsSummary summarize_wls(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& d,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w);

// Hájek weighted difference in means.
double weighted_diff_in_means(const Dataset& data, const WeightSet& w);

}  // namespace wsens
