#include "wsens/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "wsens/errors.hpp"

namespace wsens {

namespace {

constexpr double kPivotTolerance = 1e-12;

void check_arm_weights(const Eigen::VectorXd& d, const Eigen::VectorXd& w) {
  double sum[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < d.size(); ++i) sum[d[i] == 1.0 ? 1 : 0] += w[i];
  if (!(sum[1] > 0.0)) throw NumericalError("treated arm carries no weight");
  if (!(sum[0] > 0.0)) throw NumericalError("control arm carries no weight");
}

std::string block_label(const Dataset& data, const CovariateDesign& design, Eigen::Index k) {
  const Eigen::Index src = design.sources[static_cast<std::size_t>(k)];
  std::string name = src < data.num_covariates() ? data.names[static_cast<std::size_t>(src)] : "Z";
  if (design.interaction[static_cast<std::size_t>(k)]) name += ":D";
  return name;
}

// Weighted least squares of y on [1, d, block] through a pivoted QR of the
// sqrt(w)-scaled design.
WlsFit fit_design(const Dataset& data, const WeightSet& w, CovariateDesign design,
                  Centering centering) {
  const Eigen::Index n = data.size();
  check_weights(w.weights, n);
  check_arm_weights(data.d, w.weights);

  const Eigen::Index k = design.block.cols();
  Eigen::MatrixXd full(n, k + 2);
  full.col(0).setOnes();
  full.col(1) = data.d;
  full.rightCols(k) = design.block;

  const Eigen::VectorXd p = w.weights / w.weights.sum();
  const Eigen::VectorXd root = p.cwiseSqrt();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(n, k + 2);
  qr.setThreshold(kPivotTolerance);
  qr.compute(root.asDiagonal() * full);
  if (qr.rank() < k + 2) {
    std::vector<std::size_t> dependent;
    std::string list;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < k + 2; ++j) dependent.push_back(static_cast<std::size_t>(perm[j]));
    std::sort(dependent.begin(), dependent.end());
    for (auto c : dependent) {
      const std::string label = c == 0   ? "(intercept)"
                                : c == 1 ? "D"
                                         : block_label(data, design, static_cast<Eigen::Index>(c) - 2);
      list += (list.empty() ? "" : ", ") + label;
    }
    throw RankDeficientError("weighted regression design is rank deficient; collinear: " + list,
                             std::move(dependent));
  }
  const Eigen::VectorXd coef = qr.solve(root.asDiagonal() * data.y);
  const Eigen::VectorXd resid = data.y - full * coef;

  WlsFit fit;
  fit.mu_hat = coef[0];
  fit.tau_hat = coef[1];
  fit.beta_hat = coef.tail(k);
  fit.sd_y_resid = weighted_sd(resid, w.weights);

  const Eigen::VectorXd d_perp = residualize(data.d, design.block, w.weights);
  const Eigen::VectorXd y_perp = residualize(data.y, design.block, w.weights);
  fit.sd_d_resid = weighted_sd(d_perp, w.weights);
  fit.sd_y_given_x = weighted_sd(y_perp, w.weights);
  if (!(fit.sd_d_resid > 0.0)) throw NumericalError("treatment has no weighted variation given X");
  fit.r2_yd_given_x = fit.sd_y_given_x > 0.0
                          ? std::pow(weighted_cor(d_perp, y_perp, w.weights), 2)
                          : 0.0;
  fit.centering = centering;
  fit.weights = w;
  fit.design = std::move(design);
  fit.n = n;
  fit.p = data.num_covariates();
  return fit;
}

}  // namespace

Eigen::Index Dataset::num_treated() const {
  return static_cast<Eigen::Index>((d.array() == 1.0).count());
}

void Dataset::validate() const {
  const Eigen::Index n = d.size();
  if (n < 2) throw InvalidArgument("dataset needs at least two units");
  if (y.size() != n || x.rows() != n) throw InvalidArgument("dataset: X, D, Y lengths differ");
  if (static_cast<Eigen::Index>(names.size()) != x.cols() ||
      static_cast<Eigen::Index>(sources.size()) != x.cols()) {
    throw InvalidArgument("dataset: column names do not match covariate count");
  }
  if (cluster && static_cast<Eigen::Index>(cluster->size()) != n) {
    throw InvalidArgument("dataset: cluster labels length differs");
  }
  if (!x.allFinite() || !y.allFinite() || !d.allFinite()) {
    throw InvalidArgument("dataset contains non-finite values");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d[i] != 0.0 && d[i] != 1.0) throw InvalidArgument("treatment must be coded 0/1");
  }
  const Eigen::Index treated = num_treated();
  if (treated == 0 || treated == n) throw InvalidArgument("treatment must contain both 0s and 1s");
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (!seen.insert(name).second) throw InvalidArgument("duplicate column name: " + name);
  }
}

std::vector<Eigen::Index> Dataset::resolve(std::span<const std::string> columns) const {
  std::vector<Eigen::Index> out;
  for (const auto& want : columns) {
    bool found = false;
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (names[j] == want || sources[j] == want) {
        out.push_back(static_cast<Eigen::Index>(j));
        found = true;
      }
    }
    if (!found) throw InvalidArgument("unknown covariate: " + want);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Eigen::Index> Dataset::complement(std::span<const Eigen::Index> columns) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (std::find(columns.begin(), columns.end(), j) == columns.end()) out.push_back(j);
  }
  return out;
}

Dataset Dataset::select_units(std::span<const Eigen::Index> rows) const {
  Dataset out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.x.resize(m, x.cols());
  out.d.resize(m);
  out.y.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = rows[static_cast<std::size_t>(r)];
    out.x.row(r) = x.row(i);
    out.d[r] = d[i];
    out.y[r] = y[i];
  }
  if (cluster) {
    std::vector<int> labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = (*cluster)[static_cast<std::size_t>(rows[r])];
    out.cluster = std::move(labels);
  }
  out.names = names;
  out.sources = sources;
  return out;
}

Dataset Dataset::select_covariates(std::span<const Eigen::Index> columns) const {
  Dataset out;
  out.x = select_columns(x, columns);
  for (auto j : columns) {
    out.names.push_back(names[static_cast<std::size_t>(j)]);
    out.sources.push_back(sources[static_cast<std::size_t>(j)]);
  }
  out.d = d;
  out.y = y;
  out.cluster = cluster;
  return out;
}

Dataset make_dataset(Eigen::MatrixXd x, Eigen::VectorXd d, Eigen::VectorXd y,
                     std::optional<std::vector<int>> cluster) {
  Dataset data;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    data.names.push_back("x" + std::to_string(j + 1));
  }
  data.sources = data.names;
  data.x = std::move(x);
  data.d = std::move(d);
  data.y = std::move(y);
  data.cluster = std::move(cluster);
  return data;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, std::span<const Eigen::Index> columns) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(columns[k]);
  return out;
}

std::string_view to_string(Centering centering) {
  switch (centering) {
    case Centering::kNone: return "none";
    case Centering::kAte: return "ATE";
    case Centering::kAtt: return "ATT";
    case Centering::kAtc: return "ATC";
  }
  return "unknown";
}

CovariateDesign covariate_design(const Dataset& data, Centering centering) {
  CovariateDesign design;
  const Eigen::Index p = data.num_covariates();
  if (centering == Centering::kNone) {
    design.block = data.x;
    for (Eigen::Index j = 0; j < p; ++j) {
      design.sources.push_back(j);
      design.interaction.push_back(false);
    }
    return design;
  }

  Eigen::RowVectorXd center = Eigen::RowVectorXd::Zero(p);
  double count = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const bool use = centering == Centering::kAte ||
                     (centering == Centering::kAtt && data.d[i] == 1.0) ||
                     (centering == Centering::kAtc && data.d[i] == 0.0);
    if (use) {
      center += data.x.row(i);
      count += 1.0;
    }
  }
  if (count == 0.0) throw InvalidArgument("centering group is empty");
  center /= count;

  const Eigen::MatrixXd xc = data.x.rowwise() - center;
  design.block.resize(data.size(), 2 * p);
  design.block.leftCols(p) = xc;
  design.block.rightCols(p) = data.d.asDiagonal() * xc;
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < p; ++j) {
      design.sources.push_back(j);
      design.interaction.push_back(pass == 1);
    }
  }
  return design;
}

WlsFit fit_wls(const Dataset& data, const WeightSet& w, Centering centering) {
  data.validate();
  return fit_design(data, w, covariate_design(data, centering), centering);
}

TargetFit fit_with_z(const Dataset& data, const Eigen::VectorXd& z, const WeightSet& w,
                     Centering centering) {
  data.validate();
  if (z.size() != data.size()) throw InvalidArgument("Z length differs from dataset");
  CovariateDesign design = covariate_design(data, centering);
  const Eigen::Index k = design.block.cols();
  design.block.conservativeResize(Eigen::NoChange, k + 1);
  design.block.col(k) = z;
  design.sources.push_back(data.num_covariates());
  design.interaction.push_back(false);

  TargetFit out;
  out.fit = fit_design(data, w, std::move(design), centering);
  out.gamma_hat = out.fit.beta_hat[k];
  return out;
}

WlsSummary summarize_wls(const Eigen::MatrixXd& covariates, const Eigen::VectorXd& d,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  check_arm_weights(d, w);
  Eigen::MatrixXd rhs(d.size(), 2);
  rhs.col(0) = d;
  rhs.col(1) = y;
  const Eigen::MatrixXd perp = residualize_columns(rhs, covariates, w);
  const Eigen::VectorXd p = w / w.sum();
  const double var_d = p.dot(perp.col(0).cwiseAbs2());
  if (!(var_d > 1e-14 * std::max(weighted_var(d, w), 1e-300))) {
    throw NumericalError("treatment has no weighted variation given X");
  }
  const double cov_dy = p.dot(perp.col(0).cwiseProduct(perp.col(1)));
  WlsSummary s;
  s.tau_hat = cov_dy / var_d;
  const Eigen::VectorXd e = perp.col(1) - s.tau_hat * perp.col(0);
  s.sd_y_resid = std::sqrt(p.dot(e.cwiseAbs2()));
  s.sd_d_resid = std::sqrt(var_d);
  return s;
}

double weighted_diff_in_means(const Dataset& data, const WeightSet& w) {
  check_weights(w.weights, data.size());
  if (data.y.size() != data.size()) throw InvalidArgument("outcome length differs");
  double sum_w[2] = {0.0, 0.0};
  double sum_wy[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int g = data.d[i] == 1.0 ? 1 : 0;
    sum_w[g] += w.weights[i];
    sum_wy[g] += w.weights[i] * data.y[i];
  }
  if (!(sum_w[0] > 0.0) || !(sum_w[1] > 0.0)) {
    throw NumericalError("weighted difference in means: an arm carries no weight");
  }
  return sum_wy[1] / sum_w[1] - sum_wy[0] / sum_w[0];
}

}  // namespace wsens
