#include "wsens/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "wsens/errors.hpp"

namespace wsens {

namespace {

constexpr double kUnitTolerance = 1e-12;

Eigen::MatrixXd hstack(const Eigen::VectorXd& first, const Eigen::MatrixXd& rest) {
  Eigen::MatrixXd out(first.size(), rest.cols() + 1);
  out.col(0) = first;
  out.rightCols(rest.cols()) = rest;
  return out;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd ac = a.array() - a.mean();
  const Eigen::ArrayXd bc = b.array() - b.mean();
  const double va = ac.square().sum();
  const double vb = bc.square().sum();
  if (!(va > 0.0) || !(vb > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp((ac * bc).sum() / std::sqrt(va * vb), -1.0, 1.0);
}

Eigen::VectorXd subset(const Eigen::VectorXd& v, const Eigen::VectorXd& d, double arm) {
  Eigen::VectorXd out((d.array() == arm).count());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] == arm) out[k++] = v[i];
  }
  return out;
}

void check_axis(const std::vector<double>& axis) {
  for (double v : axis) {
    if (!(v >= 0.0 && v < 1.0)) throw InvalidArgument("contour axis values must lie in [0, 1)");
  }
}

}  // namespace

void validate(const SensitivityParams& params) {
  if (!(params.r2_d >= 0.0 && params.r2_d < 1.0)) {
    throw InvalidArgument("r2_d must lie in [0, 1), got " + std::to_string(params.r2_d));
  }
  if (!(params.r2_y >= 0.0 && params.r2_y <= 1.0)) {
    throw InvalidArgument("r2_y must lie in [0, 1], got " + std::to_string(params.r2_y));
  }
  if (params.sign != 1 && params.sign != -1) throw InvalidArgument("sign must be +1 or -1");
}

double bias_factor(const SensitivityParams& params) {
  validate(params);
  return std::sqrt(params.r2_y * params.r2_d / (1.0 - params.r2_d));
}

double bias(const SensitivityParams& params, const WlsFit& fit) {
  if (!(fit.sd_d_resid > 0.0)) throw NumericalError("fit has no residual treatment variation");
  return params.sign * bias_factor(params) * fit.sd_y_resid / fit.sd_d_resid;
}

double adjust(double tau, double sd_y_resid, double sd_d_resid, const SensitivityParams& params,
              SignConvention convention) {
  if (!(sd_d_resid > 0.0)) throw NumericalError("no residual treatment variation");
  const double magnitude = bias_factor(params) * sd_y_resid / sd_d_resid;
  if (convention == SignConvention::kAsGiven) return tau - params.sign * magnitude;
  return tau >= 0.0 ? tau - magnitude : tau + magnitude;
}

double adjusted_estimate(const SensitivityParams& params, const WlsFit& fit,
                         SignConvention convention) {
  return adjust(fit.tau_hat, fit.sd_y_resid, fit.sd_d_resid, params, convention);
}

SensitivityParams params_from_z(const Dataset& data, const Eigen::VectorXd& z, const WlsFit& fit) {
  if (z.size() != data.size()) throw InvalidArgument("Z length differs from dataset");
  const Eigen::VectorXd& w = fit.weights.weights;
  const Eigen::MatrixXd& x = fit.design.block;
  const Eigen::VectorXd z_perp = residualize(z, x, w);
  const double z_var = weighted_var(z, w);
  if (!(weighted_var(z_perp, w) > 1e-20 * z_var) || !(z_var > 0.0)) {
    throw NumericalError("Z has no weighted variation left after removing X");
  }
  const double r_d = partial_cor(data.d, z, x, w);
  if (std::abs(r_d) >= 1.0 - kUnitTolerance) {
    throw NumericalError("R²_w(D ~ Z | X) reaches 1: Z is a function of D and X");
  }
  const Eigen::VectorXd z_perp_dx = residualize(z, hstack(data.d, x), w);
  if (!(weighted_var(z_perp_dx, w) > 1e-20 * z_var)) {
    throw NumericalError("Z is collinear with (D, X)");
  }
  const double r_y = partial_cor(data.y, z, hstack(data.d, x), w);
  SensitivityParams params;
  params.r2_d = r_d * r_d;
  params.r2_y = r_y * r_y;
  params.sign = r_d * r_y < 0.0 ? -1 : 1;
  return params;
}

double robustness_value_q(const WlsFit& fit, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("q must lie in (0, 1]");
  const double r2 = fit.r2_yd_given_x;
  if (r2 >= 1.0) return 1.0;
  const double omega_sq = q * q * r2 / (1.0 - r2);
  return 0.5 * (std::sqrt(omega_sq * omega_sq + 4.0 * omega_sq) - omega_sq);
}

double extreme_scenario_r2(const WlsFit& fit) { return fit.r2_yd_given_x; }

BenchmarkResult benchmark_bounds(const WlsFit& fit, const Dataset& data, const WeightSet& semi,
                                 const std::vector<std::string>& benchmark_columns, double kappa_d,
                                 double kappa_y) {
  if (benchmark_columns.empty()) throw InvalidArgument("benchmark: no columns given");
  if (!(kappa_d >= 0.0) || !(kappa_y >= 0.0) || !std::isfinite(kappa_d) || !std::isfinite(kappa_y)) {
    throw InvalidArgument("benchmark: kappa values must be finite and nonnegative");
  }
  const Eigen::Index n = data.size();
  check_weights(semi.weights, n);
  const std::vector<Eigen::Index> bench = data.resolve(benchmark_columns);
  auto in_bench = [&](Eigen::Index src) {
    return std::binary_search(bench.begin(), bench.end(), src);
  };

  const CovariateDesign& design = fit.design;
  std::vector<Eigen::Index> j_d, rest_d, j_y, rest_y;
  for (std::size_t k = 0; k < design.sources.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const bool is_bench = in_bench(design.sources[k]);
    (is_bench ? j_y : rest_y).push_back(col);
    if (!design.interaction[k]) (is_bench ? j_d : rest_d).push_back(col);
  }
  if (j_d.empty()) throw InvalidArgument("benchmark: columns are not part of the covariate design");

  const Eigen::VectorXd& w = fit.weights.weights;
  const Eigen::MatrixXd xj_d = select_columns(design.block, j_d);
  const Eigen::MatrixXd xr_d = select_columns(design.block, rest_d);
  const Eigen::MatrixXd xj_y = select_columns(design.block, j_y);
  const Eigen::MatrixXd xr_y = hstack(data.d, select_columns(design.block, rest_y));

  BenchmarkResult out;
  out.benchmark = benchmark_columns;
  out.kappa_d = kappa_d;
  out.kappa_y = kappa_y;
  auto& c = out.components;
  c.r2_semi_d_xj = partial_r2(data.d, xj_d, xr_d, semi.weights);
  c.r2_full_d_xj = partial_r2(data.d, xj_d, xr_d, w);
  c.r2_y_xj = partial_r2(data.y, xj_y, xr_y, w);

  if (c.r2_full_d_xj >= 1.0 - kUnitTolerance) {
    throw NumericalError("benchmark: columns explain all residual treatment variation");
  }
  if (c.r2_y_xj >= 1.0 - kUnitTolerance) {
    throw NumericalError("benchmark: columns explain all residual outcome variation");
  }
  out.bound_r2_d = kappa_d * c.r2_semi_d_xj / (1.0 - c.r2_full_d_xj);
  if (!(out.bound_r2_d < 1.0)) {
    throw NumericalError(fmt::format("benchmark too strong: bound on R²_w(D ~ Z | X) is {:.6g} >= 1",
                                     out.bound_r2_d));
  }
  const double strength = kappa_d * c.r2_semi_d_xj;
  c.r2_z_xj = strength / (1.0 - strength) * (c.r2_full_d_xj / (1.0 - c.r2_full_d_xj));
  if (!(c.r2_z_xj < 1.0)) {
    throw NumericalError(fmt::format("benchmark too strong: implied R²_w(Z ~ Xj | D, X-j) is {:.6g}",
                                     c.r2_z_xj));
  }
  out.eta_sq = std::pow((std::sqrt(kappa_y) + std::sqrt(c.r2_z_xj)) / std::sqrt(1.0 - c.r2_z_xj), 2);
  const double raw_y = out.eta_sq * c.r2_y_xj / (1.0 - c.r2_y_xj);
  out.r2_y_clamped = raw_y > 1.0;
  out.bound_r2_y = std::min(raw_y, 1.0);
  return out;
}

double adjusted_from_bound(const BenchmarkResult& bound, const WlsFit& fit) {
  return adjusted_estimate({bound.bound_r2_d, bound.bound_r2_y, 1}, fit, SignConvention::kTowardZero);
}

TranslatorDiagnostic translator_diagnostic(const Dataset& data, const Eigen::VectorXd& z,
                                           const WeightSet& w, const WeightSet& semi,
                                           const std::vector<std::string>& benchmark_columns) {
  if (z.size() != data.size()) throw InvalidArgument("Z length differs from dataset");
  check_weights(w.weights, data.size());
  check_weights(semi.weights, data.size());
  const std::vector<Eigen::Index> bench = data.resolve(benchmark_columns);
  if (bench.empty()) throw InvalidArgument("translator: no benchmark columns");
  const Eigen::MatrixXd xj = select_columns(data.x, bench);
  const Eigen::MatrixXd rest = select_columns(data.x, data.complement(bench));

  const double r2_w_z = partial_r2(data.d, z, rest, w.weights);
  const double r2_s_z = partial_r2(data.d, z, rest, semi.weights);
  const double r2_s_xj = partial_r2(data.d, xj, rest, semi.weights);
  if (!(r2_s_z > 0.0)) throw NumericalError("translator: R²(D ~ Z | X-j) under semi-weights is zero");
  if (!(r2_s_xj > 0.0)) throw NumericalError("translator: R²(D ~ Xj | X-j) under semi-weights is zero");
  TranslatorDiagnostic out;
  out.translator = r2_w_z / r2_s_z;
  out.semi_strength = r2_s_z / r2_s_xj;
  out.kappa_d = r2_w_z / r2_s_xj;
  return out;
}

GridSpec GridSpec::standard() {
  GridSpec g;
  for (int i = 0; i < 21; ++i) g.r2_d_axis.push_back(0.5 * i / 21.0);
  g.r2_y_axis = g.r2_d_axis;
  return g;
}

std::string_view to_string(ContourMode mode) {
  switch (mode) {
    case ContourMode::kEstimate: return "estimate";
    case ContourMode::kLowerCi: return "lower_ci";
    case ContourMode::kUpperCi: return "upper_ci";
  }
  return "unknown";
}

ContourGrid contour_grid(const WlsFit& fit, const GridSpec& grid, SignConvention convention) {
  check_axis(grid.r2_d_axis);
  check_axis(grid.r2_y_axis);
  ContourGrid out;
  out.r2_d_axis = grid.r2_d_axis;
  out.r2_y_axis = grid.r2_y_axis;
  out.mode = ContourMode::kEstimate;
  out.values.resize(static_cast<Eigen::Index>(grid.r2_d_axis.size()),
                    static_cast<Eigen::Index>(grid.r2_y_axis.size()));
  for (std::size_t i = 0; i < grid.r2_d_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.r2_y_axis.size(); ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          adjusted_estimate({grid.r2_d_axis[i], grid.r2_y_axis[j], 1}, fit, convention);
    }
  }
  return out;
}

void write_contour_csv(std::ostream& out, const ContourGrid& grid) {
  out << "r2_d,r2_y,value\n";
  for (std::size_t i = 0; i < grid.r2_d_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.r2_y_axis.size(); ++j) {
      fmt::print(out, "{:.12g},{:.12g},{:.12g}\n", grid.r2_d_axis[i], grid.r2_y_axis[j],
                 grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
}

WeightComparison weight_comparison(const WeightSet& w, const WeightSet& semi, const Eigen::VectorXd& d) {
  if (w.size() != semi.size() || w.size() != d.size()) {
    throw InvalidArgument("weight comparison: lengths differ");
  }
  WeightComparison out;
  out.correlation = pearson(w.weights, semi.weights);
  if (std::isnan(out.correlation)) throw NumericalError("weight comparison: a weight vector is constant");
  out.correlation_control = pearson(subset(w.weights, d, 0.0), subset(semi.weights, d, 0.0));
  out.correlation_treated = pearson(subset(w.weights, d, 1.0), subset(semi.weights, d, 1.0));
  out.ess_full = effective_sample_size(w.weights, d);
  out.ess_semi = effective_sample_size(semi.weights, d);
  return out;
}

}  // namespace wsens
