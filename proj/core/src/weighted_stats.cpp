#include "wsens/weighted_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wsens/errors.hpp"

namespace wsens {

namespace {

constexpr double kPivotTolerance = 1e-12;
// Residual variance below this fraction of the raw variance counts as zero.
constexpr double kZeroVarianceRatio = 1e-20;

Eigen::VectorXd probabilities(const Eigen::VectorXd& w) {
  const double total = w.sum();
  if (!(total > 0.0)) throw InvalidArgument("weights sum to zero");
  return w / total;
}

void check_rows(Eigen::Index rows, Eigen::Index n, const char* what) {
  if (rows != n) {
    throw InvalidArgument(std::string(what) + ": length " + std::to_string(rows) +
                          " does not match weight length " + std::to_string(n));
  }
}

void check_treatment(const Eigen::VectorXd& d, Eigen::Index n) {
  check_rows(d.size(), n, "treatment");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d[i] != 0.0 && d[i] != 1.0) throw InvalidArgument("treatment must be coded 0/1");
  }
}

}  // namespace

std::string_view to_string(WeightMethod method) {
  switch (method) {
    case WeightMethod::kUniform: return "uniform";
    case WeightMethod::kIpw: return "ipw";
    case WeightMethod::kEntropyBalance: return "entropy_balance";
    case WeightMethod::kPsMatch: return "ps_match";
    case WeightMethod::kExactMatch: return "exact_match";
    case WeightMethod::kExternal: return "external";
  }
  return "unknown";
}

std::string_view to_string(Estimand estimand) {
  switch (estimand) {
    case Estimand::kAte: return "ATE";
    case Estimand::kAtt: return "ATT";
    case Estimand::kAtc: return "ATC";
    case Estimand::kNone: return "none";
  }
  return "unknown";
}

WeightSet WeightSet::uniform(Eigen::Index n) {
  if (n < 1) throw InvalidArgument("uniform weights need n >= 1");
  WeightSet ws;
  ws.weights = Eigen::VectorXd::Ones(n);
  ws.raw = ws.weights;
  ws.method = WeightMethod::kUniform;
  ws.rescaled = true;
  return ws;
}

WeightSet WeightSet::normalized(Eigen::VectorXd raw, WeightMethod method, Estimand estimand) {
  check_weights(raw, raw.size());
  WeightSet ws;
  ws.weights = raw * (static_cast<double>(raw.size()) / raw.sum());
  ws.raw = std::move(raw);
  ws.method = method;
  ws.estimand = estimand;
  return ws;
}

void check_weights(const Eigen::VectorXd& w, Eigen::Index n) {
  check_rows(w.size(), n, "weights");
  if (n < 1) throw InvalidArgument("weights: empty");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw InvalidArgument("weights must be finite and nonnegative (unit " + std::to_string(i) +
                            ")");
    }
  }
  if (!(w.sum() > 0.0)) throw InvalidArgument("all weights are zero");
}

double weighted_mean(const Eigen::VectorXd& values, const Eigen::VectorXd& w) {
  check_rows(values.size(), w.size(), "values");
  return probabilities(w).dot(values);
}

Eigen::VectorXd weighted_means(const Eigen::MatrixXd& values, const Eigen::VectorXd& w) {
  check_rows(values.rows(), w.size(), "values");
  return values.transpose() * probabilities(w);
}

Eigen::MatrixXd weighted_cov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             const Eigen::VectorXd& w) {
  check_rows(a.rows(), w.size(), "a");
  check_rows(b.rows(), w.size(), "b");
  const Eigen::VectorXd p = probabilities(w);
  const Eigen::MatrixXd ac = a.rowwise() - (a.transpose() * p).transpose();
  const Eigen::MatrixXd bc = b.rowwise() - (b.transpose() * p).transpose();
  return ac.transpose() * p.asDiagonal() * bc;
}

double weighted_var(const Eigen::VectorXd& values, const Eigen::VectorXd& w) {
  check_rows(values.size(), w.size(), "values");
  const Eigen::VectorXd p = probabilities(w);
  const double mean = p.dot(values);
  return p.dot((values.array() - mean).square().matrix());
}

double weighted_sd(const Eigen::VectorXd& values, const Eigen::VectorXd& w) {
  return std::sqrt(weighted_var(values, w));
}

double weighted_cor(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& w) {
  const double va = weighted_var(a, w);
  const double vb = weighted_var(b, w);
  if (!(va > 0.0) || !(vb > 0.0)) throw NumericalError("correlation undefined: zero variance");
  const double cov = weighted_cov(a, b, w)(0, 0);
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

Eigen::MatrixXd residualize_columns(const Eigen::MatrixXd& b, const Eigen::MatrixXd& a,
                                    const Eigen::VectorXd& w) {
  check_rows(b.rows(), w.size(), "b");
  check_rows(a.rows(), w.size(), "a");
  const Eigen::VectorXd p = probabilities(w);
  Eigen::MatrixXd bc = b.rowwise() - (b.transpose() * p).transpose();
  if (a.cols() == 0) return bc;

  const Eigen::MatrixXd ac = a.rowwise() - (a.transpose() * p).transpose();
  const Eigen::VectorXd root = p.cwiseSqrt();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.rows(), a.cols());
  qr.setThreshold(kPivotTolerance);
  qr.compute(root.asDiagonal() * ac);
  if (qr.rank() < a.cols()) {
    std::vector<std::size_t> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < a.cols(); ++k) {
      dependent.push_back(static_cast<std::size_t>(perm[k]));
    }
    std::sort(dependent.begin(), dependent.end());
    std::string list;
    for (auto c : dependent) list += (list.empty() ? "" : ", ") + std::to_string(c);
    throw RankDeficientError("weighted design is rank deficient; collinear column(s): " + list,
                             std::move(dependent));
  }
  const Eigen::MatrixXd coef = qr.solve(root.asDiagonal() * bc);
  bc.noalias() -= ac * coef;
  return bc;
}

Eigen::VectorXd residualize(const Eigen::VectorXd& b, const Eigen::MatrixXd& a,
                            const Eigen::VectorXd& w) {
  return residualize_columns(b, a, w).col(0);
}

double r2(const Eigen::VectorXd& b, const Eigen::MatrixXd& a, const Eigen::VectorXd& w) {
  return partial_r2(b, a, Eigen::MatrixXd(b.size(), 0), w);
}

double partial_r2(const Eigen::VectorXd& b, const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& w) {
  const Eigen::VectorXd b_perp = residualize(b, x, w);
  const double total = weighted_var(b, w);
  const double remaining = weighted_var(b_perp, w);
  if (!(remaining > kZeroVarianceRatio * total) || !(total > 0.0)) {
    throw NumericalError("partial R² undefined: outcome has no weighted variance left");
  }
  const Eigen::MatrixXd a_perp = residualize_columns(a, x, w);
  const Eigen::VectorXd e = residualize(b_perp, a_perp, w);
  return std::clamp(1.0 - weighted_var(e, w) / remaining, 0.0, 1.0);
}

double partial_cor(const Eigen::VectorXd& b, const Eigen::VectorXd& a, const Eigen::MatrixXd& x,
                   const Eigen::VectorXd& w) {
  return weighted_cor(residualize(b, x, w), residualize(a, x, w), w);
}

double effective_sample_size(const Eigen::VectorXd& w) {
  const double sq = w.squaredNorm();
  if (!(sq > 0.0)) throw InvalidArgument("effective sample size: all weights zero");
  const double s = w.sum();
  return s * s / sq;
}

EssSummary effective_sample_size(const Eigen::VectorXd& w, const Eigen::VectorXd& d) {
  check_treatment(d, w.size());
  double sum[2] = {0.0, 0.0};
  double sq[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const int g = d[i] == 1.0 ? 1 : 0;
    sum[g] += w[i];
    sq[g] += w[i] * w[i];
    count[g] += 1.0;
  }
  for (int g = 0; g < 2; ++g) {
    if (!(sq[g] > 0.0)) {
      throw InvalidArgument(g == 1 ? "treated group has no weight" : "control group has no weight");
    }
  }
  EssSummary out;
  out.overall = effective_sample_size(w);
  out.control = sum[0] * sum[0] / sq[0];
  out.treated = sum[1] * sum[1] / sq[1];
  out.fraction_overall = out.overall / static_cast<double>(w.size());
  out.fraction_control = out.control / count[0];
  out.fraction_treated = out.treated / count[1];
  return out;
}

WeightSet rescale_weights(const Eigen::VectorXd& raw, const Eigen::VectorXd& d,
                          WeightMethod method, Estimand estimand) {
  check_weights(raw, raw.size());
  check_treatment(d, raw.size());
  const EssSummary ess = effective_sample_size(raw, d);
  double group_sum[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < raw.size(); ++i) group_sum[d[i] == 1.0 ? 1 : 0] += raw[i];

  const double n = static_cast<double>(raw.size());
  const double eff_total = ess.control + ess.treated;
  const double scale[2] = {n * ess.control / (eff_total * group_sum[0]),
                           n * ess.treated / (eff_total * group_sum[1])};
  WeightSet ws;
  ws.weights.resize(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) ws.weights[i] = raw[i] * scale[d[i] == 1.0 ? 1 : 0];
  ws.raw = raw;
  ws.method = method;
  ws.estimand = estimand;
  ws.rescaled = true;
  return ws;
}

}  // namespace wsens
