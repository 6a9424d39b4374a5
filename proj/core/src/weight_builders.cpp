#include "wsens/weight_builders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "wsens/errors.hpp"

namespace wsens {

namespace {

constexpr int kLogisticMaxIter = 100;
constexpr double kLogisticStepTol = 1e-8;
constexpr int kEbalMaxIter = 200;
constexpr int kMaxHalvings = 30;

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& d) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) dev += softplus(eta[i]) - d[i] * eta[i];
  return 2.0 * dev;
}

void check_binary(const Eigen::VectorXd& d) {
  Eigen::Index treated = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d[i] != 0.0 && d[i] != 1.0) throw InvalidArgument("treatment must be coded 0/1");
    treated += d[i] == 1.0 ? 1 : 0;
  }
  if (treated == 0 || treated == d.size()) throw InvalidArgument("treatment must contain both arms");
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

double log_sum_exp(const Eigen::VectorXd& a) {
  const double top = a.maxCoeff();
  return top + std::log((a.array() - top).exp().sum());
}

// Entropy-balance dual for one arm: finds q ∝ exp(c λ) with sum_i q_i c_i = 0,
// where the rows of c are covariates minus their target means.
Eigen::VectorXd solve_balance(const Eigen::MatrixXd& c, double tol) {
  const Eigen::Index m = c.rows();
  std::vector<Eigen::Index> active;
  std::vector<double> scale;
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    const double mean = c.col(j).mean();
    const double sd = std::sqrt((c.col(j).array() - mean).square().mean());
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      active.push_back(j);
      scale.push_back(sd);
    } else if (std::abs(mean) > tol) {
      throw ConvergenceError("entropy balancing infeasible: column " + std::to_string(j) +
                             " is constant in the reweighted arm but off target");
    }
  }
  const Eigen::Index p = static_cast<Eigen::Index>(active.size());
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  if (p == 0) return uniform;

  Eigen::MatrixXd s(m, p);
  const Eigen::Map<const Eigen::VectorXd> sd(scale.data(), p);
  for (Eigen::Index k = 0; k < p; ++k) s.col(k) = c.col(active[static_cast<std::size_t>(k)]) / scale[static_cast<std::size_t>(k)];

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m);
  double f = log_sum_exp(a);
  for (int iter = 0; iter < kEbalMaxIter; ++iter) {
    Eigen::VectorXd q = (a.array() - a.maxCoeff()).exp();
    q /= q.sum();
    const Eigen::VectorXd g = s.transpose() * q;
    const double violation = g.cwiseProduct(sd).cwiseAbs().maxCoeff();
    if (violation < tol) return q;

    const Eigen::MatrixXd h = s.transpose() * q.asDiagonal() * s - g * g.transpose();
    const Eigen::VectorXd step = -h.completeOrthogonalDecomposition().solve(g);
    const double slope = g.dot(step);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half <= kMaxHalvings; ++half, t *= 0.5) {
      const Eigen::VectorXd trial_a = s * (lambda + t * step);
      const double trial_f = log_sum_exp(trial_a);
      bool ok = std::isfinite(trial_f) && trial_f <= f + 1e-4 * t * slope;
      if (!ok && std::isfinite(trial_f) && std::abs(trial_f - f) <= 1e-13 * (1.0 + std::abs(f))) {
        // At round-off level the objective cannot discriminate; fall back to
        // requiring a smaller imbalance.
        Eigen::VectorXd tq = (trial_a.array() - trial_a.maxCoeff()).exp();
        tq /= tq.sum();
        ok = (s.transpose() * tq).cwiseProduct(sd).cwiseAbs().maxCoeff() < violation;
      }
      if (ok) {
        lambda += t * step;
        a = trial_a;
        f = trial_f;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw ConvergenceError("entropy balancing line search failed; constraints may be infeasible");
    }
  }
  throw ConvergenceError("entropy balancing did not converge in 200 iterations; constraints may be "
                         "infeasible");
}

struct Candidate {
  double distance;
  Eigen::Index index;
  bool operator<(const Candidate& other) const {
    return distance < other.distance || (distance == other.distance && index < other.index);
  }
};

// k nearest pool units to `score` with ties to the lower index. `pool` is
// sorted by (score, index).
std::vector<Eigen::Index> nearest_in_sorted(const std::vector<Eigen::Index>& pool,
                                            const Eigen::VectorXd& scores, double score, int k) {
  const auto n = static_cast<std::ptrdiff_t>(pool.size());
  const auto mid = std::lower_bound(pool.begin(), pool.end(), score,
                                    [&](Eigen::Index i, double v) { return scores[i] < v; }) -
                   pool.begin();
  auto dist = [&](std::ptrdiff_t pos) { return std::abs(scores[pool[static_cast<std::size_t>(pos)]] - score); };

  // Walk outwards to find the k-th smallest distance.
  std::ptrdiff_t lo = mid - 1;
  std::ptrdiff_t hi = mid;
  double kth = 0.0;
  for (int taken = 0; taken < k; ++taken) {
    if (hi >= n || (lo >= 0 && dist(lo) <= dist(hi))) {
      kth = dist(lo--);
    } else {
      kth = dist(hi++);
    }
  }
  // Everything within the k-th distance competes under the tie rule.
  while (lo >= 0 && dist(lo) <= kth) --lo;
  while (hi < n && dist(hi) <= kth) ++hi;
  std::vector<Candidate> cands;
  for (std::ptrdiff_t pos = lo + 1; pos < hi; ++pos) {
    if (dist(pos) <= kth) cands.push_back({dist(pos), pool[static_cast<std::size_t>(pos)]});
  }
  std::partial_sort(cands.begin(), cands.begin() + k, cands.end());
  std::vector<Eigen::Index> out(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(j)] = cands[static_cast<std::size_t>(j)].index;
  return out;
}

}  // namespace

Eigen::VectorXd PropensityModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() + 1 != coefficients.size()) throw InvalidArgument("predict: column count mismatch");
  const Eigen::VectorXd eta = with_intercept(x) * coefficients;
  return eta.unaryExpr([](double v) { return sigmoid(v); });
}

PropensityModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& d) {
  if (x.rows() != d.size()) throw InvalidArgument("fit_logistic: X and D lengths differ");
  check_binary(d);
  const Eigen::MatrixXd a = with_intercept(x);
  if (x.cols() > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.rows(), a.cols());
    qr.setThreshold(1e-12);
    qr.compute(a);
    if (qr.rank() < a.cols()) {
      std::vector<std::size_t> dependent;
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index k = qr.rank(); k < a.cols(); ++k) dependent.push_back(static_cast<std::size_t>(perm[k]));
      std::sort(dependent.begin(), dependent.end());
      throw RankDeficientError("propensity design is rank deficient", std::move(dependent));
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(a.cols());
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(a.rows());
  double dev = deviance(eta, d);
  for (int iter = 1; iter <= kLogisticMaxIter; ++iter) {
    const Eigen::VectorXd mu = eta.unaryExpr([](double v) { return sigmoid(v); });
    const Eigen::VectorXd wt = mu.cwiseProduct((1.0 - mu.array()).matrix());
    const Eigen::MatrixXd h = a.transpose() * wt.asDiagonal() * a;
    const Eigen::VectorXd g = a.transpose() * (d - mu);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
      throw ConvergenceError("logistic regression: information matrix singular (perfect separation?)");
    }
    const Eigen::VectorXd step = ldlt.solve(g);
    double t = 1.0;
    Eigen::VectorXd trial_eta;
    double trial_dev = 0.0;
    for (int half = 0; half <= kMaxHalvings; ++half, t *= 0.5) {
      trial_eta = a * (beta + t * step);
      trial_dev = deviance(trial_eta, d);
      if (trial_dev <= dev + 1e-10 * (1.0 + dev)) break;
    }
    beta += t * step;
    eta = trial_eta;
    dev = trial_dev;
    if ((t * step).cwiseAbs().maxCoeff() < kLogisticStepTol) {
      PropensityModel model;
      model.coefficients = beta;
      model.fitted_scores = eta.unaryExpr([](double v) { return sigmoid(v); });
      model.iterations = iter;
      return model;
    }
  }
  throw ConvergenceError("logistic regression did not converge in 100 iterations (perfect "
                         "separation?)");
}

WeightSet ipw_weights(const PropensityModel& model, const Eigen::VectorXd& d, Estimand estimand) {
  const Eigen::VectorXd& score = model.fitted_scores;
  if (score.size() != d.size()) throw InvalidArgument("ipw_weights: score and treatment lengths differ");
  check_binary(d);
  std::size_t clamped = 0;
  Eigen::VectorXd raw(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    double e = score[i];
    if (!std::isfinite(e)) throw InvalidArgument("ipw_weights: non-finite propensity score");
    if (e < kScoreClamp || e > 1.0 - kScoreClamp) {
      e = std::clamp(e, kScoreClamp, 1.0 - kScoreClamp);
      ++clamped;
    }
    const bool treated = d[i] == 1.0;
    switch (estimand) {
      case Estimand::kAte: raw[i] = treated ? 1.0 / e : 1.0 / (1.0 - e); break;
      case Estimand::kAtt: raw[i] = treated ? 1.0 : e / (1.0 - e); break;
      case Estimand::kAtc: raw[i] = treated ? (1.0 - e) / e : 1.0; break;
      case Estimand::kNone: throw InvalidArgument("ipw_weights: estimand must be ATE, ATT or ATC");
    }
  }
  WeightSet ws = rescale_weights(raw, d, WeightMethod::kIpw, estimand);
  ws.diagnostics.clamped_scores = clamped;
  return ws;
}

WeightSet entropy_balance(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, Estimand estimand,
                          double tol) {
  if (x.rows() != d.size()) throw InvalidArgument("entropy_balance: X and D lengths differ");
  if (!(tol > 0.0)) throw InvalidArgument("entropy_balance: tolerance must be positive");
  check_binary(d);
  std::vector<Eigen::Index> arm[2];
  for (Eigen::Index i = 0; i < d.size(); ++i) arm[d[i] == 1.0 ? 1 : 0].push_back(i);
  auto rows = [&](int g) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(arm[g].size()), x.cols());
    for (std::size_t r = 0; r < arm[g].size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(arm[g][r]);
    return out;
  };

  Eigen::VectorXd raw = Eigen::VectorXd::Ones(d.size());
  auto reweight = [&](int g, const Eigen::RowVectorXd& target) {
    const Eigen::MatrixXd c = rows(g).rowwise() - target;
    const Eigen::VectorXd q = solve_balance(c, tol);
    for (std::size_t r = 0; r < arm[g].size(); ++r) {
      raw[arm[g][r]] = q[static_cast<Eigen::Index>(r)] * static_cast<double>(arm[g].size());
    }
  };
  switch (estimand) {
    case Estimand::kAtt: reweight(0, rows(1).colwise().mean()); break;
    case Estimand::kAtc: reweight(1, rows(0).colwise().mean()); break;
    case Estimand::kAte: {
      const Eigen::RowVectorXd pooled = x.colwise().mean();
      reweight(0, pooled);
      reweight(1, pooled);
      break;
    }
    case Estimand::kNone: throw InvalidArgument("entropy_balance: estimand must be ATE, ATT or ATC");
  }
  return rescale_weights(raw, d, WeightMethod::kEntropyBalance, estimand);
}

WeightSet ps_match_weights(const PropensityModel& model, const Eigen::VectorXd& d, int k,
                           bool with_replacement, Estimand estimand) {
  const Eigen::VectorXd& score = model.fitted_scores;
  if (score.size() != d.size()) throw InvalidArgument("ps_match_weights: score and treatment lengths differ");
  check_binary(d);
  if (k < 1) throw InvalidArgument("ps_match_weights: k must be at least 1");
  if (estimand != Estimand::kAtt && estimand != Estimand::kAtc) {
    throw InvalidArgument("ps_match_weights: matching supports ATT and ATC only");
  }
  const double focal_value = estimand == Estimand::kAtt ? 1.0 : 0.0;
  std::vector<Eigen::Index> focal;
  std::vector<Eigen::Index> pool;
  for (Eigen::Index i = 0; i < d.size(); ++i) (d[i] == focal_value ? focal : pool).push_back(i);
  if (static_cast<std::size_t>(k) > pool.size()) {
    throw InvalidArgument("ps_match_weights: k exceeds the number of units available to match");
  }

  Eigen::VectorXd raw = Eigen::VectorXd::Zero(d.size());
  BuildDiagnostics diag;
  if (with_replacement) {
    std::sort(pool.begin(), pool.end(), [&](Eigen::Index a, Eigen::Index b) {
      return score[a] < score[b] || (score[a] == score[b] && a < b);
    });
    for (auto f : focal) {
      raw[f] = 1.0;
      for (auto c : nearest_in_sorted(pool, score, score[f], k)) raw[c] += 1.0;
    }
  } else {
    std::stable_sort(focal.begin(), focal.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return score[a] > score[b]; });
    std::vector<char> taken(static_cast<std::size_t>(d.size()), 0);
    std::vector<Candidate> cands;
    for (auto f : focal) {
      cands.clear();
      for (auto c : pool) {
        if (!taken[static_cast<std::size_t>(c)]) cands.push_back({std::abs(score[c] - score[f]), c});
      }
      if (cands.empty()) {
        diag.dropped_units.push_back(f);
        continue;
      }
      const auto use = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(use), cands.end());
      raw[f] = 1.0;
      for (std::size_t j = 0; j < use; ++j) {
        raw[cands[j].index] = 1.0;
        taken[static_cast<std::size_t>(cands[j].index)] = 1;
      }
    }
    std::sort(diag.dropped_units.begin(), diag.dropped_units.end());
  }
  WeightSet ws = rescale_weights(raw, d, WeightMethod::kPsMatch, estimand);
  ws.diagnostics = std::move(diag);
  return ws;
}

WeightSet exact_match_weights(const Eigen::MatrixXd& x, const Eigen::VectorXd& d) {
  if (x.rows() != d.size()) throw InvalidArgument("exact_match_weights: X and D lengths differ");
  check_binary(d);
  struct Counts {
    double treated = 0.0;
    double control = 0.0;
  };
  std::map<std::vector<double>, Counts> strata;
  std::vector<std::vector<double>> keys(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    auto& key = keys[static_cast<std::size_t>(i)];
    key.reserve(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) key.push_back(x(i, j));
    auto& c = strata[key];
    (d[i] == 1.0 ? c.treated : c.control) += 1.0;
  }
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(d.size());
  BuildDiagnostics diag;
  bool overlap = false;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Counts& c = strata.at(keys[static_cast<std::size_t>(i)]);
    if (c.treated > 0.0 && c.control > 0.0) {
      overlap = true;
      raw[i] = d[i] == 1.0 ? 1.0 : c.treated / c.control;
    } else if (d[i] == 1.0) {
      diag.dropped_units.push_back(i);
    }
  }
  if (!overlap) throw InvalidArgument("exact_match_weights: no stratum contains both arms");
  WeightSet ws = rescale_weights(raw, d, WeightMethod::kExactMatch, Estimand::kAtt);
  ws.diagnostics = std::move(diag);
  return ws;
}

void validate(const BuilderSpec& spec) {
  if (spec.k < 1) throw InvalidArgument("builder: k must be at least 1");
  if (!(spec.tol > 0.0)) throw InvalidArgument("builder: balance tolerance must be positive");
  if (spec.method == WeightMethod::kExternal) {
    throw InvalidArgument("builder: external weights cannot be rebuilt");
  }
  if (spec.method != WeightMethod::kUniform && spec.estimand == Estimand::kNone) {
    throw InvalidArgument("builder: an estimand is required");
  }
  if (spec.method == WeightMethod::kExactMatch && spec.estimand != Estimand::kAtt) {
    throw InvalidArgument("builder: exact matching targets the ATT");
  }
  if (spec.method == WeightMethod::kPsMatch && spec.estimand == Estimand::kAte) {
    throw InvalidArgument("builder: matching targets the ATT or ATC");
  }
}

WeightSet build_weights(const BuilderSpec& spec, const Dataset& data,
                        const std::vector<Eigen::Index>& columns) {
  validate(spec);
  if (columns.empty() || spec.method == WeightMethod::kUniform) {
    WeightSet ws = WeightSet::uniform(data.size());
    ws.estimand = spec.estimand;
    return ws;
  }
  const Eigen::MatrixXd x = select_columns(data.x, columns);
  switch (spec.method) {
    case WeightMethod::kIpw: return ipw_weights(fit_logistic(x, data.d), data.d, spec.estimand);
    case WeightMethod::kEntropyBalance: return entropy_balance(x, data.d, spec.estimand, spec.tol);
    case WeightMethod::kPsMatch:
      return ps_match_weights(fit_logistic(x, data.d), data.d, spec.k, spec.with_replacement,
                              spec.estimand);
    case WeightMethod::kExactMatch: return exact_match_weights(x, data.d);
    default: break;
  }
  throw InvalidArgument("builder: unsupported method");
}

WeightSet build_weights(const BuilderSpec& spec, const Dataset& data) {
  return build_weights(spec, data, data.resolve(spec.columns));
}

WeightSet semi_weights(const BuilderSpec& spec, const Dataset& data,
                       const std::vector<std::string>& benchmark_columns) {
  const std::vector<Eigen::Index> used = data.resolve(spec.columns);
  const std::vector<Eigen::Index> bench = data.resolve(benchmark_columns);
  std::vector<Eigen::Index> kept;
  std::set_difference(used.begin(), used.end(), bench.begin(), bench.end(), std::back_inserter(kept));
  return build_weights(spec, data, kept);
}

}  // namespace wsens
