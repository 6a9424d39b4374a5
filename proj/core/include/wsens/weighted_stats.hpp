#pragma once

// Sample statistics of the weighted empirical distribution, where unit i
// carries probability w_i / sum(w). Every function normalizes the weights
// internally, so raw and rescaled weights give identical answers. Variances
// use the population divisor (no degrees-of-freedom correction).

#include <Eigen/Dense>

#include <cstddef>
#include <string_view>
#include <vector>

namespace wsens {

enum class WeightMethod { kUniform, kIpw, kEntropyBalance, kPsMatch, kExactMatch, kExternal };
enum class Estimand { kAte, kAtt, kAtc, kNone };

std::string_view to_string(WeightMethod method);
std::string_view to_string(Estimand estimand);

// Side information a weight builder reports alongside the weights.
struct BuildDiagnostics {
  std::vector<Eigen::Index> dropped_units;  // treated units left without a match
  std::size_t clamped_scores = 0;           // propensity scores moved into [eps, 1-eps]
};

// Per-unit weights with provenance. `weights` always sums to n; `raw` keeps
// what the builder (or the user) produced before normalization.
struct WeightSet {
  Eigen::VectorXd weights;
  Eigen::VectorXd raw;
  WeightMethod method = WeightMethod::kUniform;
  Estimand estimand = Estimand::kNone;
  bool rescaled = false;
  BuildDiagnostics diagnostics;

  Eigen::Index size() const { return weights.size(); }

  static WeightSet uniform(Eigen::Index n);
  // Scales `raw` to sum to n. Throws InvalidArgument on negative, non-finite
  // or all-zero input.
  static WeightSet normalized(Eigen::VectorXd raw, WeightMethod method = WeightMethod::kExternal,
                              Estimand estimand = Estimand::kNone);
};

struct EssSummary {
  double overall = 0.0;
  double control = 0.0;
  double treated = 0.0;
  double fraction_overall = 0.0;  // overall / n
  double fraction_control = 0.0;  // control / n_0
  double fraction_treated = 0.0;  // treated / n_1
};

// Throws InvalidArgument unless w has length n, is finite, nonnegative and
// not identically zero.
void check_weights(const Eigen::VectorXd& w, Eigen::Index n);

double weighted_mean(const Eigen::VectorXd& values, const Eigen::VectorXd& w);
Eigen::VectorXd weighted_means(const Eigen::MatrixXd& values, const Eigen::VectorXd& w);

Eigen::MatrixXd weighted_cov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             const Eigen::VectorXd& w);
double weighted_var(const Eigen::VectorXd& values, const Eigen::VectorXd& w);
double weighted_sd(const Eigen::VectorXd& values, const Eigen::VectorXd& w);
// R_w(b ~ a). Throws NumericalError if either side has zero weighted variance.
double weighted_cor(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& w);

// b^{⊥_w a}: b centered by its weighted mean minus its weighted projection on
// the (weighted-centered) columns of a. With zero columns only the mean is
// removed. Throws RankDeficientError naming the dependent columns of a when
// the weighted Gram matrix is singular (relative pivot tolerance 1e-12).
Eigen::VectorXd residualize(const Eigen::VectorXd& b, const Eigen::MatrixXd& a,
                            const Eigen::VectorXd& w);
Eigen::MatrixXd residualize_columns(const Eigen::MatrixXd& b, const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& w);

// R²_w(b ~ a).
double r2(const Eigen::VectorXd& b, const Eigen::MatrixXd& a, const Eigen::VectorXd& w);
// R²_w(b ~ a | x) = R²_w(b^{⊥x} ~ a^{⊥x}). Throws NumericalError when b has no
// weighted variance left after removing x.
double partial_r2(const Eigen::VectorXd& b, const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& w);
// Signed R_w(b ~ a | x) for a single column a.
double partial_cor(const Eigen::VectorXd& b, const Eigen::VectorXd& a, const Eigen::MatrixXd& x,
                   const Eigen::VectorXd& w);

// (sum w)^2 / sum w^2.
double effective_sample_size(const Eigen::VectorXd& w);
// Overall and per-arm effective sample sizes. Throws InvalidArgument if an arm
// is empty or carries no weight.
EssSummary effective_sample_size(const Eigen::VectorXd& w, const Eigen::VectorXd& d);

// Within-arm rescaling so that the weights sum to n and
// EFF(w) = EFF_0(w) + EFF_1(w).
WeightSet rescale_weights(const Eigen::VectorXd& raw, const Eigen::VectorXd& d,
                          WeightMethod method = WeightMethod::kExternal,
                          Estimand estimand = Estimand::kNone);

}  // namespace wsens
