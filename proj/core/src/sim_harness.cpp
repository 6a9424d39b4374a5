#include "wsens/sim_harness.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "parallel.hpp"
#include "wsens/errors.hpp"

namespace wsens {

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

std::string_view to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::kDgp1: return "dgp1";
    case DgpKind::kDgp2: return "dgp2";
    case DgpKind::kDgp3: return "dgp3";
  }
  return "unknown";
}

void validate(const DgpSpec& spec) {
  if (spec.kind == DgpKind::kDgp2) {
    if (spec.groups < 2 || spec.group_size < 1) throw InvalidArgument("dgp2 needs G >= 2 and n_g >= 1");
  } else if (spec.n < 2) {
    throw InvalidArgument("dgp needs n >= 2");
  }
  if (!(spec.theta_sq >= 0.0) || !std::isfinite(spec.theta_sq)) {
    throw InvalidArgument("theta_sq must be finite and nonnegative");
  }
}

SimDraw generate(const DgpSpec& spec) {
  validate(spec);
  const Eigen::Index n = spec.size();
  std::mt19937_64 engine(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double eps_sd = std::sqrt(2.0);
  const double theta = std::sqrt(spec.theta_sq);

  Eigen::VectorXd x(n), z(n), d(n), y0(n), y1(n);
  std::vector<int> cluster;
  if (spec.kind == DgpKind::kDgp3) {
    std::uniform_real_distribution<double> support(-2.0, 2.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = support(engine);
      const double p = std::abs(z[i]) > 1.0 ? 0.007 : logistic(5.0 * z[i]);
      d[i] = unit(engine) < p ? 1.0 : 0.0;
      x[i] = std::pow(z[i], 4);
      y0[i] = x[i] + z[i] + eps_sd * normal(engine);
      y1[i] = y0[i];
    }
  } else {
    const bool clustered = spec.kind == DgpKind::kDgp2;
    const Eigen::Index block = clustered ? spec.group_size : 1;
    double delta = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i % block == 0) delta = theta * normal(engine);
      x[i] = normal(engine);
      z[i] = normal(engine);
      d[i] = unit(engine) < logistic(x[i] + z[i] - 1.0) ? 1.0 : 0.0;
      y0[i] = x[i] + z[i] + eps_sd * normal(engine);
      y1[i] = y0[i] + delta;
      if (clustered) cluster.push_back(static_cast<int>(i / block));
    }
  }

  SimDraw draw;
  Eigen::VectorXd y = (d.array() == 1.0).select(y1, y0);
  draw.data = make_dataset(x, d, std::move(y));
  draw.data.names = {"x"};
  draw.data.sources = {"x"};
  if (spec.kind == DgpKind::kDgp2) draw.data.cluster = std::move(cluster);
  draw.z = std::move(z);
  draw.y0 = std::move(y0);
  draw.y1 = std::move(y1);
  return draw;
}

BuilderSpec default_builder(WeightMethod method, Estimand estimand) {
  BuilderSpec spec;
  spec.method = method;
  spec.estimand = estimand;
  spec.columns = {"x"};
  return spec;
}

CoverageResult coverage_experiment(const CoverageConfig& config) {
  validate(config.dgp);
  validate(config.params);
  if (config.iterations < 1) throw InvalidArgument("coverage: iterations must be positive");
  struct Outcome {
    bool covered = false;
    double estimate = 0.0;
    double width = 0.0;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(config.iterations));
  detail::parallel_for(config.iterations, config.threads, [&](int it) {
    auto engine = replicate_engine(config.seed, static_cast<std::uint64_t>(it));
    DgpSpec dgp = config.dgp;
    dgp.seed = engine();
    BootstrapConfig boot;
    boot.replicates = config.replicates;
    boot.mode = config.mode;
    boot.alpha = config.alpha;
    boot.seed = engine();
    boot.threads = 1;
    const SimDraw draw = generate(dgp);
    const BootstrapReplicates reps = draw_replicates(draw.data, config.builder, Centering::kNone, boot);
    const AdjustedInterval ci =
        adjusted_interval(reps, config.params, config.alpha, SignConvention::kAsGiven);
    Outcome& out = outcomes[static_cast<std::size_t>(it)];
    out.covered = ci.lower <= 0.0 && ci.upper >= 0.0;
    out.estimate = reps.base_tau;
    out.width = ci.upper - ci.lower;
  });

  CoverageResult result;
  result.config = config;
  result.iterations = config.iterations;
  for (const auto& o : outcomes) {
    result.covered += o.covered ? 1 : 0;
    result.mean_estimate += o.estimate;
    result.mean_width += o.width;
  }
  result.coverage = static_cast<double>(result.covered) / config.iterations;
  result.mean_estimate /= config.iterations;
  result.mean_width /= config.iterations;
  return result;
}

SensitivityParams estimate_plim_params(const DgpSpec& dgp, const BuilderSpec& builder, int draws,
                                       std::uint64_t seed, int threads) {
  validate(dgp);
  if (draws < 1) throw InvalidArgument("plim: draws must be positive");
  std::vector<SensitivityParams> params(static_cast<std::size_t>(draws));
  detail::parallel_for(draws, threads, [&](int k) {
    DgpSpec spec = dgp;
    spec.seed = replicate_engine(seed, static_cast<std::uint64_t>(k))();
    const SimDraw draw = generate(spec);
    const WlsFit fit = fit_wls(draw.data, build_weights(builder, draw.data));
    params[static_cast<std::size_t>(k)] = params_from_z(draw.data, draw.z, fit);
  });
  SensitivityParams mean;
  int sign_votes = 0;
  for (const auto& p : params) {
    mean.r2_d += p.r2_d / draws;
    mean.r2_y += p.r2_y / draws;
    sign_votes += p.sign;
  }
  mean.sign = sign_votes < 0 ? -1 : 1;
  return mean;
}

TranslatorResult translator_experiment(Eigen::Index n, std::uint64_t seed) {
  DgpSpec spec;
  spec.kind = DgpKind::kDgp3;
  spec.n = n;
  spec.seed = seed;
  const SimDraw draw = generate(spec);
  const WeightSet w = entropy_balance(draw.data.x, draw.data.d, Estimand::kAtt);
  const WeightSet semi = WeightSet::uniform(n);
  const TranslatorDiagnostic diag = translator_diagnostic(draw.data, draw.z, w, semi, {"x"});

  TranslatorResult out;
  out.translator = diag.translator;
  out.semi_strength = diag.semi_strength;
  out.r2_weighted = std::pow(weighted_cor(draw.data.d, draw.z, w.weights), 2);
  out.cor_unweighted = weighted_cor(draw.data.d, draw.z, semi.weights);
  out.r2_unweighted = out.cor_unweighted * out.cor_unweighted;
  out.ess_fraction_control = effective_sample_size(w.weights, draw.data.d).fraction_control;
  return out;
}

void write_coverage_csv(std::ostream& out, const std::vector<CoverageResult>& results) {
  out << "dgp,method,mode,theta_sq,n,coverage,iterations,covered,replicates,r2_d,r2_y,mean_width\n";
  for (const auto& r : results) {
    const auto& c = r.config;
    fmt::print(out, "{},{},{},{:.12g},{},{:.12g},{},{},{},{:.12g},{:.12g},{:.12g}\n", to_string(c.dgp.kind),
               to_string(c.builder.method), to_string(c.mode), c.dgp.theta_sq, c.dgp.size(), r.coverage,
               r.iterations, r.covered, c.replicates, c.params.r2_d, c.params.r2_y, r.mean_width);
  }
}

void write_translator_csv(std::ostream& out, Eigen::Index n, std::uint64_t seed,
                          const TranslatorResult& result) {
  out << "dgp,n,seed,translator,semi_strength,r2_weighted,r2_unweighted,cor_unweighted,"
         "ess_fraction_control\n";
  fmt::print(out, "dgp3,{},{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n", n, seed, result.translator,
             result.semi_strength, result.r2_weighted, result.r2_unweighted, result.cor_unweighted,
             result.ess_fraction_control);
}

}  // namespace wsens
