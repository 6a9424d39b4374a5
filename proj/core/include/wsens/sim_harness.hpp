#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "wsens/bootstrap.hpp"
#include "wsens/estimators.hpp"
#include "wsens/sensitivity.hpp"
#include "wsens/weight_builders.hpp"

namespace wsens {

// kDgp1: X, Z ~ N(0, 1); P(D = 1) = logistic(X + Z - 1);
//        Y = X + Z + delta_i D + eps with eps ~ N(0, var 2), delta_i ~ N(0, var theta_sq).
// kDgp2: as kDgp1 but G clusters of n_g units sharing delta_g.
// kDgp3: Z ~ U(-2, 2); P(D = 1) = 0.007 if |Z| > 1, logistic(5Z) otherwise;
//        X = Z^4 is observed and Y = X + Z + eps.
// The true treatment effect is zero in all three.
enum class DgpKind { kDgp1, kDgp2, kDgp3 };

std::string_view to_string(DgpKind kind);

struct DgpSpec {
  DgpKind kind = DgpKind::kDgp1;
  Eigen::Index n = 500;          // kDgp1, kDgp3
  Eigen::Index groups = 50;      // kDgp2
  Eigen::Index group_size = 100;  // kDgp2
  double theta_sq = 0.0;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return kind == DgpKind::kDgp2 ? groups * group_size : n; }
};

void validate(const DgpSpec& spec);

struct SimDraw {
  Dataset data;  // single covariate "x"; cluster labels for kDgp2
  Eigen::VectorXd z;
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
};

SimDraw generate(const DgpSpec& spec);

// Propensity-score weights from the observed covariate, as in the coverage
// studies.
BuilderSpec default_builder(WeightMethod method, Estimand estimand);

struct CoverageConfig {
  DgpSpec dgp;
  BuilderSpec builder;
  BootstrapMode mode = BootstrapMode::kFixedWeights;
  SensitivityParams params;  // applied with its own sign
  int iterations = 300;
  int replicates = 400;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int threads = 0;  // parallel over iterations
};

struct CoverageResult {
  CoverageConfig config;
  int iterations = 0;
  int covered = 0;
  double coverage = 0.0;  // covered / iterations
  double mean_estimate = 0.0;
  double mean_width = 0.0;
};

// Per iteration: draw data, build weights, bootstrap, form the adjusted
// interval at config.params and check whether it contains the true effect 0.
CoverageResult coverage_experiment(const CoverageConfig& config);

// Mean of params_from_z with the true Z over `draws` independent samples of
// `dgp`. The sign is that of the majority of draws.
SensitivityParams estimate_plim_params(const DgpSpec& dgp, const BuilderSpec& builder, int draws,
                                       std::uint64_t seed, int threads = 0);

struct TranslatorResult {
  double translator = 0.0;
  double semi_strength = 0.0;
  double r2_weighted = 0.0;    // R²_w(D ~ Z)
  double r2_unweighted = 0.0;  // R²(D ~ Z)
  double cor_unweighted = 0.0;
  double ess_fraction_control = 0.0;
};

// Entropy-balancing (ATT) weights on X = Z^4 from a DGP-3 draw, benchmarked
// against X itself, so the semi-weights are uniform.
TranslatorResult translator_experiment(Eigen::Index n, std::uint64_t seed);

void write_coverage_csv(std::ostream& out, const std::vector<CoverageResult>& results);
void write_translator_csv(std::ostream& out, Eigen::Index n, std::uint64_t seed,
                          const TranslatorResult& result);

}  // namespace wsens
