#pragma once

// Independent reference implementations for tests. Regressions here go
// through explicit normal equations (LDLT), never through the library's
// QR / partialling code paths.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wsens/wsens.hpp"

namespace oracle {

inline double rel_tol(double tol, double scale) { return tol * std::max(1.0, std::abs(scale)); }

struct LsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd resid;
  double ssr = 0.0;  // sum of w * resid^2 with w summing to n
};

// Weighted least squares of y on [1, a] by normal equations.
inline LsFit wls(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd design(n, a.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(a.cols()) = a;
  const Eigen::VectorXd wn = w * (static_cast<double>(n) / w.sum());
  const Eigen::MatrixXd xtwx = design.transpose() * wn.asDiagonal() * design;
  const Eigen::VectorXd xtwy = design.transpose() * wn.asDiagonal() * y;
  LsFit fit;
  fit.beta = xtwx.ldlt().solve(xtwy);
  fit.resid = y - design * fit.beta;
  fit.ssr = (wn.array() * fit.resid.array().square()).sum();
  return fit;
}

inline Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(std::max(a.rows(), b.rows()), a.cols() + b.cols());
  if (a.cols()) out.leftCols(a.cols()) = a;
  if (b.cols()) out.rightCols(b.cols()) = b;
  return out;
}

// 1 - SSR(y ~ 1 + others + target) / SSR(y ~ 1 + others).
inline double partial_r2(const Eigen::VectorXd& y, const Eigen::MatrixXd& target, const Eigen::MatrixXd& others,
                         const Eigen::VectorXd& w) {
  const double reduced = wls(others, y, w).ssr;
  const double full = wls(hcat(others, target), y, w).ssr;
  return 1.0 - full / reduced;
}

// Covariate block of the treatment regression, built directly: raw X, or
// [X - m, D * (X - m)] with m the unweighted mean over the centering group.
inline Eigen::MatrixXd design_block(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, wsens::Centering c) {
  if (c == wsens::Centering::kNone) return x;
  Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(x.cols());
  double count = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool in = c == wsens::Centering::kAte || (c == wsens::Centering::kAtt && d[i] == 1.0) ||
                    (c == wsens::Centering::kAtc && d[i] == 0.0);
    if (in) {
      m += x.row(i);
      count += 1.0;
    }
  }
  m /= count;
  const Eigen::MatrixXd xc = x.rowwise() - m;
  return hcat(xc, d.asDiagonal() * xc);
}

// Coefficient on D in y ~ 1 + D + block (+ z).
inline double tau(const Eigen::MatrixXd& block, const Eigen::VectorXd& d, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w) {
  return wls(hcat(d, block), y, w).beta[1];
}

// Unweighted sensitivity statistics from regression t-statistics.
struct Unweighted {
  double tau = 0.0;
  double se = 0.0;
  double df = 0.0;
  double t = 0.0;
  double r2_yd = 0.0;  // partial R2 of D in the outcome regression

  static Unweighted fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, const Eigen::VectorXd& y) {
    const Eigen::Index n = y.size();
    const Eigen::MatrixXd a = hcat(d, x);
    Eigen::MatrixXd design(n, a.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(a.cols()) = a;
    const Eigen::MatrixXd xtx = design.transpose() * design;
    const Eigen::VectorXd beta = xtx.ldlt().solve(design.transpose() * y);
    const Eigen::VectorXd resid = y - design * beta;
    Unweighted u;
    u.df = static_cast<double>(n - design.cols());
    const double sigma2 = resid.squaredNorm() / u.df;
    const Eigen::MatrixXd inv = xtx.ldlt().solve(Eigen::MatrixXd::Identity(design.cols(), design.cols()));
    u.tau = beta[1];
    u.se = std::sqrt(sigma2 * inv(1, 1));
    u.t = u.tau / u.se;
    u.r2_yd = u.t * u.t / (u.t * u.t + u.df);
    return u;
  }

  double bias(double r2_y, double r2_d) const { return se * std::sqrt(df * r2_y * r2_d / (1.0 - r2_d)); }

  double rv(double q) const {
    const double f = q * std::abs(t) / std::sqrt(df);
    return 0.5 * (std::sqrt(std::pow(f, 4) + 4.0 * f * f) - f * f);
  }
};

// Partial R2 of one regressor from its t-statistic in an unweighted fit.
inline double t_partial_r2(const Eigen::MatrixXd& others, const Eigen::VectorXd& target, const Eigen::VectorXd& y) {
  const Unweighted u = Unweighted::fit(others, target, y);
  return u.r2_yd;
}

// Unweighted bounds for a single benchmark regressor.
struct UnweightedBound {
  double r2_d = 0.0;
  double r2_y = 0.0;
};

inline UnweightedBound unweighted_bound(double r2_dxj, double r2_yxj, double kd, double ky) {
  UnweightedBound b;
  b.r2_d = kd * r2_dxj / (1.0 - r2_dxj);
  const double r2_zxj = kd * r2_dxj * r2_dxj / ((1.0 - kd * r2_dxj) * (1.0 - r2_dxj));
  const double eta = (std::sqrt(ky) + std::sqrt(r2_zxj)) / std::sqrt(1.0 - r2_zxj);
  b.r2_y = eta * eta * r2_yxj / (1.0 - r2_yxj);
  return b;
}

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Random observational instance: X (n x p), unobserved Z correlated with X,
// D from a logistic model in (X, Z), Y linear in (X, D, Z) plus noise.
// With `binary_leading` > 0 the first columns are 0/1 so exact matching
// has populated strata.
struct Instance {
  wsens::Dataset data;
  Eigen::VectorXd z;
};

inline Instance random_instance(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p, int binary_leading = 0) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd z(n), d(n), y(n);
  Eigen::VectorXd a(p), c(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    a[j] = 0.8 * normal(rng) / std::sqrt(static_cast<double>(p));
    c[j] = normal(rng);
  }
  const double tau = normal(rng);
  const double gz = normal(rng);
  const double dz = 0.7 * normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      x(i, j) = j < binary_leading ? (unit(rng) < 0.5 ? 1.0 : 0.0) : normal(rng);
    }
    z[i] = 0.5 * x(i, 0) + normal(rng);
  }
  for (int attempt = 0;; ++attempt) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d[i] = unit(rng) < logistic(x.row(i).dot(a) + dz * z[i]) ? 1.0 : 0.0;
    }
    const double treated = d.sum();
    if (treated >= 0.2 * static_cast<double>(n) && treated <= 0.8 * static_cast<double>(n)) break;
  }
  for (Eigen::Index i = 0; i < n; ++i) y[i] = x.row(i).dot(c) + tau * d[i] + gz * z[i] + normal(rng);
  Instance inst;
  inst.data = wsens::make_dataset(std::move(x), std::move(d), std::move(y));
  inst.z = std::move(z);
  return inst;
}

// Exhaustive nearest-neighbour matching with replacement: for each focal
// unit, the k pool units of smallest |score gap|, ties to the lower index.
inline Eigen::VectorXd brute_force_match_counts(const Eigen::VectorXd& score, const Eigen::VectorXd& d, int k,
                                                double focal_value) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(score.size());
  for (Eigen::Index f = 0; f < score.size(); ++f) {
    if (d[f] != focal_value) continue;
    counts[f] = 1.0;
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index c = 0; c < score.size(); ++c) {
      if (d[c] != focal_value) all.emplace_back(std::abs(score[c] - score[f]), c);
    }
    std::sort(all.begin(), all.end());
    for (int j = 0; j < k; ++j) counts[all[static_cast<std::size_t>(j)].second] += 1.0;
  }
  return counts;
}

}  // namespace oracle
