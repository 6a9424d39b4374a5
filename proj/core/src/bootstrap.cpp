#include "wsens/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "parallel.hpp"
#include "wsens/errors.hpp"

namespace wsens {

namespace {

constexpr double kRvUpper = 1.0 - 1e-6;
constexpr double kRvTolerance = 1e-4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::vector<Eigen::Index>> cluster_members(const Dataset& data) {
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < data.cluster->size(); ++i) {
    groups[(*data.cluster)[i]].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<std::vector<Eigen::Index>> out;
  out.reserve(groups.size());
  for (auto& [label, rows] : groups) out.push_back(std::move(rows));
  return out;
}

// Removes covariates of a resample that are linearly dependent on the
// intercept and the columns before them (e.g. cluster indicators that sum to
// one when the reference cluster was not drawn); remaps `columns` to the kept
// positions. Earlier columns win, as with aliased terms in a linear model.
void drop_aliased_covariates(Dataset& sample, std::vector<Eigen::Index>& columns) {
  constexpr double kAliasTol = 1e-7;
  const Eigen::Index n = sample.x.rows();
  std::vector<Eigen::VectorXd> basis{Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)))};
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < sample.x.cols(); ++j) {
    Eigen::VectorXd v = sample.x.col(j);
    const double norm = v.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) v -= q.dot(v) * q;
    }
    const double rest = v.norm();
    if (norm == 0.0 || rest <= kAliasTol * norm) continue;
    basis.push_back(v / rest);
    kept.push_back(j);
  }
  if (static_cast<Eigen::Index>(kept.size()) == sample.x.cols()) return;
  std::vector<Eigen::Index> remapped;
  for (Eigen::Index c : columns) {
    const auto it = std::lower_bound(kept.begin(), kept.end(), c);
    if (it != kept.end() && *it == c) remapped.push_back(static_cast<Eigen::Index>(it - kept.begin()));
  }
  sample = sample.select_covariates(kept);
  columns = std::move(remapped);
}

// Adjusted replicate values with the direction fixed by the full-sample
// estimate under kTowardZero.
std::vector<double> adjusted_values(const BootstrapReplicates& reps, const SensitivityParams& params,
                                    SignConvention convention) {
  const double factor = bias_factor(params);
  double direction = params.sign;
  if (convention == SignConvention::kTowardZero) direction = reps.base_tau >= 0.0 ? 1.0 : -1.0;
  std::vector<double> out(reps.size());
  for (std::size_t b = 0; b < reps.size(); ++b) {
    const ReplicateStat& s = reps.stats[b];
    out[b] = s.tau_hat - direction * factor * s.sd_y_resid / s.sd_d_resid;
  }
  return out;
}

// True once the interval limit nearest zero has reached it; monotone in x
// because the adjustment moves every replicate toward and past zero.
bool reaches_zero(const BootstrapReplicates& reps, double x, double alpha) {
  const AdjustedInterval ci = adjusted_interval(reps, {x, x, 1}, alpha);
  return reps.base_tau >= 0.0 ? ci.lower <= 0.0 : ci.upper >= 0.0;
}

}  // namespace

std::string_view to_string(BootstrapMode mode) {
  switch (mode) {
    case BootstrapMode::kReestimate: return "reestimate";
    case BootstrapMode::kFixedWeights: return "fixed_weights";
    case BootstrapMode::kCluster: return "cluster";
  }
  return "unknown";
}

int BootstrapConfig::failure_budget() const {
  return max_failures ? *max_failures : static_cast<int>(std::floor(0.02 * replicates));
}

void validate(const BootstrapConfig& config) {
  if (config.replicates < 2) throw InvalidArgument("bootstrap: need at least 2 replicates");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw InvalidArgument("bootstrap: alpha must lie in (0, 1)");
  if (config.max_failures && *config.max_failures < 0) {
    throw InvalidArgument("bootstrap: max_failures must be nonnegative");
  }
  if (config.threads < 0) throw InvalidArgument("bootstrap: threads must be nonnegative");
}

std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index)));
}

BootstrapReplicates draw_replicates(const Dataset& data, const WeightSource& source,
                                    Centering centering, const BootstrapConfig& config) {
  validate(config);
  data.validate();
  const BuilderSpec* spec = std::get_if<BuilderSpec>(&source);
  if (config.mode == BootstrapMode::kReestimate && spec == nullptr) {
    throw InvalidArgument("bootstrap: re-estimation needs a weight builder, not fixed weights");
  }
  if (config.mode == BootstrapMode::kCluster && !data.cluster) {
    throw InvalidArgument("bootstrap: cluster mode needs cluster labels");
  }
  std::vector<Eigen::Index> builder_columns;
  if (spec != nullptr) {
    validate(*spec);
    builder_columns = data.resolve(spec->columns);
  }
  const WeightSet base = spec ? build_weights(*spec, data, builder_columns) : std::get<WeightSet>(source);
  check_weights(base.weights, data.size());

  BootstrapReplicates reps;
  reps.config = config;
  reps.base_tau =
      summarize_wls(covariate_design(data, centering).block, data.d, data.y, base.weights).tau_hat;

  const bool rebuild = spec != nullptr && config.mode != BootstrapMode::kFixedWeights;
  const auto clusters = config.mode == BootstrapMode::kCluster
                            ? cluster_members(data)
                            : std::vector<std::vector<Eigen::Index>>{};
  const Eigen::Index n = data.size();

  std::vector<std::optional<ReplicateStat>> slots(static_cast<std::size_t>(config.replicates));
  detail::parallel_for(config.replicates, config.threads, [&](int b) {
    auto engine = replicate_engine(config.seed, static_cast<std::uint64_t>(b));
    std::vector<Eigen::Index> rows;
    if (config.mode == BootstrapMode::kCluster) {
      std::uniform_int_distribution<std::size_t> pick(0, clusters.size() - 1);
      for (std::size_t g = 0; g < clusters.size(); ++g) {
        const auto& members = clusters[pick(engine)];
        rows.insert(rows.end(), members.begin(), members.end());
      }
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      rows.resize(static_cast<std::size_t>(n));
      for (auto& r : rows) r = pick(engine);
    }
    try {
      Dataset sample = data.select_units(rows);
      std::vector<Eigen::Index> sample_builder_columns = builder_columns;
      drop_aliased_covariates(sample, sample_builder_columns);
      Eigen::VectorXd w;
      if (rebuild) {
        w = build_weights(*spec, sample, sample_builder_columns).weights;
      } else {
        w.resize(sample.size());
        for (std::size_t k = 0; k < rows.size(); ++k) w[static_cast<Eigen::Index>(k)] = base.weights[rows[k]];
      }
      const WlsSummary s = summarize_wls(covariate_design(sample, centering).block, sample.d, sample.y, w);
      if (std::isfinite(s.tau_hat) && std::isfinite(s.sd_y_resid) && s.sd_d_resid > 0.0) {
        slots[static_cast<std::size_t>(b)] = ReplicateStat{s.tau_hat, s.sd_y_resid, s.sd_d_resid};
      }
    } catch (const Error&) {
      // Degenerate resample; counted below.
    }
  });

  for (int b = 0; b < config.replicates; ++b) {
    const auto& slot = slots[static_cast<std::size_t>(b)];
    if (slot) {
      reps.index.push_back(b);
      reps.stats.push_back(*slot);
    } else {
      ++reps.failures;
    }
  }
  if (reps.failures > config.failure_budget()) {
    throw NumericalError(fmt::format("bootstrap: {} of {} replicates failed (budget {})", reps.failures,
                                     config.replicates, config.failure_budget()));
  }
  if (reps.stats.size() < 2) throw NumericalError("bootstrap: fewer than 2 usable replicates");
  return reps;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

AdjustedInterval adjusted_interval(const BootstrapReplicates& reps, const SensitivityParams& params,
                                   double alpha, SignConvention convention) {
  if (reps.size() < 2) throw InvalidArgument("adjusted interval: need at least 2 replicates");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const std::vector<double> values = adjusted_values(reps, params, convention);
  AdjustedInterval out;
  out.lower = quantile_type7(values, alpha / 2.0);
  out.upper = quantile_type7(values, 1.0 - alpha / 2.0);
  const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  out.se = std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(values.size() - 1));
  return out;
}

RvAlpha rv_alpha(const BootstrapReplicates& reps, double alpha) {
  if (reaches_zero(reps, 0.0, alpha)) return {0.0, true};
  if (!reaches_zero(reps, kRvUpper, alpha)) return {1.0, false};
  double lo = 0.0;
  double hi = kRvUpper;
  while (hi - lo > kRvTolerance) {
    const double mid = 0.5 * (lo + hi);
    (reaches_zero(reps, mid, alpha) ? hi : lo) = mid;
  }
  return {hi, true};
}

RvAlpha rv_alpha(const Dataset& data, const WeightSource& source, Centering centering, double alpha,
                 const BootstrapConfig& config) {
  return rv_alpha(draw_replicates(data, source, centering, config), alpha);
}

ContourGrid contour_grid(const BootstrapReplicates& reps, const GridSpec& grid, ContourMode mode,
                         double alpha) {
  if (mode == ContourMode::kEstimate) {
    throw InvalidArgument("contour: bootstrap grids report lower_ci or upper_ci");
  }
  ContourGrid out;
  out.r2_d_axis = grid.r2_d_axis;
  out.r2_y_axis = grid.r2_y_axis;
  out.mode = mode;
  out.values.resize(static_cast<Eigen::Index>(grid.r2_d_axis.size()),
                    static_cast<Eigen::Index>(grid.r2_y_axis.size()));
  for (std::size_t i = 0; i < grid.r2_d_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.r2_y_axis.size(); ++j) {
      const SensitivityParams params{grid.r2_d_axis[i], grid.r2_y_axis[j], 1};
      const AdjustedInterval ci = adjusted_interval(reps, params, alpha);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          mode == ContourMode::kLowerCi ? ci.lower : ci.upper;
    }
  }
  return out;
}

void write_replicates_csv(std::ostream& out, const BootstrapReplicates& reps) {
  out << "replicate_index,tau_hat,sd_y,sd_d\n";
  for (std::size_t b = 0; b < reps.size(); ++b) {
    const ReplicateStat& s = reps.stats[b];
    fmt::print(out, "{},{:.17g},{:.17g},{:.17g}\n", reps.index[b], s.tau_hat, s.sd_y_resid, s.sd_d_resid);
  }
}

BootstrapReplicates read_replicates_csv(std::istream& in, double base_tau) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("replicate file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "replicate_index,tau_hat,sd_y,sd_d") {
    throw InvalidArgument("replicate file: unexpected header on line 1");
  }
  BootstrapReplicates reps;
  reps.base_tau = base_tau;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell[4];
    int k = 0;
    while (k < 4 && std::getline(fields, cell[k], ',')) ++k;
    std::string extra;
    if (k != 4 || std::getline(fields, extra)) {
      throw InvalidArgument(fmt::format("replicate file: expected 4 fields on line {}", line_no));
    }
    try {
      std::size_t used = 0;
      const int index = std::stoi(cell[0], &used);
      if (used != cell[0].size()) throw std::invalid_argument("trailing");
      double v[3];
      for (int j = 0; j < 3; ++j) {
        v[j] = std::stod(cell[j + 1], &used);
        if (used != cell[j + 1].size()) throw std::invalid_argument("trailing");
      }
      if (!(v[2] > 0.0)) throw std::invalid_argument("sd_d");
      reps.index.push_back(index);
      reps.stats.push_back({v[0], v[1], v[2]});
    } catch (const std::logic_error&) {
      throw InvalidArgument(fmt::format("replicate file: malformed value on line {}", line_no));
    }
  }
  if (reps.stats.size() < 2) throw InvalidArgument("replicate file: need at least 2 replicates");
  reps.config.replicates = static_cast<int>(reps.stats.size());
  return reps;
}

}  // namespace wsens
