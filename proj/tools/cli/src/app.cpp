#include "wsens_cli/app.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "wsens/errors.hpp"

namespace wsens::cli {

namespace {

void add_options(CLI::App& app, Options& o) {
  app.add_option("--input", o.input, "Headered CSV file")->group("Data");
  app.add_option("--outcome", o.outcome, "Outcome column")->group("Data");
  app.add_option("--treatment", o.treatment, "Binary (0/1) treatment column")->group("Data");
  app.add_option("--covariates", o.covariates, "Covariate columns (comma separated)")
      ->delimiter(',')
      ->group("Data");
  app.add_option("--cluster", o.cluster, "Cluster column for cluster bootstrap")->group("Data");
  app.add_flag("--drop-single-arm-clusters", o.drop_single_arm_clusters,
               "Drop clusters whose units all share one treatment arm")
      ->group("Data");
  app.add_flag("--drop-zero-weight-units", o.drop_zero_weight_units,
               "Refit on the units the weights keep (e.g. unmatched treated units)")
      ->group("Data");

  app.add_option("--weights", o.weights, "ipw|ebal|psmatch|exact|uniform|column:NAME|file:PATH")
      ->capture_default_str()
      ->group("Weights");
  app.add_option("--weight-covariates", o.weight_covariates,
                 "Columns used to build the weights (default: --covariates)")
      ->delimiter(',')
      ->group("Weights");
  app.add_option("--estimand", o.estimand, "ate|att|atc")
      ->check(CLI::IsMember({"ate", "att", "atc"}))
      ->group("Weights");
  app.add_option("--centering", o.centering, "none|lin")
      ->check(CLI::IsMember({"none", "lin"}))
      ->capture_default_str()
      ->group("Weights");
  app.add_option("--match-k", o.match_k, "Matches per unit for psmatch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->group("Weights");
  app.add_flag("--without-replacement", o.without_replacement, "Match without replacement")
      ->group("Weights");
  app.add_option("--ebal-tol", o.ebal_tol, "Entropy-balancing tolerance")
      ->capture_default_str()
      ->group("Weights");

  app.add_option("--benchmark", o.benchmarks,
                 "Benchmark column group, e.g. female or female,age (repeatable)")
      ->group("Sensitivity");
  app.add_option("--kappa-d", o.kappa_d, "Treatment-side strength multipliers")
      ->delimiter(',')
      ->capture_default_str()
      ->group("Sensitivity");
  app.add_option("--kappa-y", o.kappa_y, "Outcome-side strength multipliers")
      ->delimiter(',')
      ->capture_default_str()
      ->group("Sensitivity");
  app.add_option("--semi-weights", o.semi_weights, "column:NAME|file:PATH for external weights")
      ->group("Sensitivity");
  app.add_option("--q", o.q, "Robustness value fractions")
      ->delimiter(',')
      ->capture_default_str()
      ->group("Sensitivity");
  app.add_option("--alpha", o.alpha, "Significance levels")
      ->delimiter(',')
      ->capture_default_str()
      ->group("Sensitivity");

  app.add_option("--bootstrap", o.bootstrap, "reestimate|fixed|cluster")
      ->check(CLI::IsMember({"reestimate", "fixed", "cluster"}))
      ->group("Bootstrap");
  app.add_option("--B", o.replicates, "Bootstrap replicates (0 disables the bootstrap)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str()
      ->group("Bootstrap");
  app.add_option("--seed", o.seed, "Random seed (required by randomized commands)")->group("Bootstrap");
  app.add_option("--threads", o.threads, "Worker threads (0: all cores)")
      ->check(CLI::NonNegativeNumber)
      ->group("Bootstrap");
  app.add_option("--replicates-in", o.replicates_in, "Reuse a replicates.csv instead of resampling")
      ->group("Bootstrap");

  app.add_option("--out", o.out, "Output directory")->capture_default_str()->group("Output");

  app.add_option("--contour-mode", o.contour_mode, "estimate|lower_ci|upper_ci")
      ->check(CLI::IsMember({"estimate", "lower_ci", "upper_ci"}))
      ->capture_default_str()
      ->group("Contour");
  app.add_option("--grid-max", o.grid_max, "Axis values are grid-max * i / grid-points")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str()
      ->group("Contour");
  app.add_option("--grid-points", o.grid_points, "Points per axis")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->group("Contour");

  app.add_option("--experiment", o.experiment, "coverage|translator|plim")
      ->check(CLI::IsMember({"coverage", "translator", "plim"}))
      ->capture_default_str()
      ->group("Simulation");
  app.add_option("--dgp", o.dgp, "dgp1|dgp2|dgp3")
      ->check(CLI::IsMember({"dgp1", "dgp2", "dgp3"}))
      ->capture_default_str()
      ->group("Simulation");
  app.add_option("--n", o.n, "Sample size (dgp1, dgp3)")->capture_default_str()->group("Simulation");
  app.add_option("--groups", o.groups, "Clusters (dgp2)")->capture_default_str()->group("Simulation");
  app.add_option("--group-size", o.group_size, "Units per cluster (dgp2)")
      ->capture_default_str()
      ->group("Simulation");
  app.add_option("--theta-sq", o.theta_sq, "Effect-heterogeneity variances")
      ->delimiter(',')
      ->capture_default_str()
      ->group("Simulation");
  app.add_option("--iterations", o.iterations, "Coverage iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->group("Simulation");
  app.add_option("--r2-d", o.r2_d, "Sensitivity parameter R2_w(D~Z|X) for coverage runs")
      ->group("Simulation");
  app.add_option("--r2-y", o.r2_y, "R2_w(Y~Z|D,X) per theta-sq value")->delimiter(',')->group("Simulation");
  app.add_option("--plim-draws", o.plim_draws, "Estimate parameters from this many large draws")
      ->check(CLI::NonNegativeNumber)
      ->group("Simulation");
  app.add_option("--plim-n", o.plim_n, "Sample size of each plim draw")
      ->capture_default_str()
      ->group("Simulation");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options options;
  CLI::App app{"Sensitivity analysis for weighted estimators of causal effects"};
  app.name("wsens");
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");
  app.require_subcommand(1, 1);
  add_options(app, options);
  for (const char* name : {"analyze", "benchmark", "contour", "simulate"}) {
    CLI::App* sub = nullptr;
    if (std::string_view(name) == "analyze") {
      sub = app.add_subcommand(name, "Estimate, bootstrap CI, robustness values and bounds");
    } else if (std::string_view(name) == "benchmark") {
      sub = app.add_subcommand(name, "Bounds and adjusted estimates for benchmark covariates");
    } else if (std::string_view(name) == "contour") {
      sub = app.add_subcommand(name, "Grid of adjusted estimates or confidence limits");
    } else {
      sub = app.add_subcommand(name, "Coverage, plim and translator simulations");
    }
    sub->fallthrough();
    sub->callback([&options, name] { options.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    execute(options, out);
  } catch (const NumericalError& e) {
    fmt::print(err, "wsens: numerical failure: {}\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    fmt::print(err, "wsens: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(err, "wsens: {}\n", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace wsens::cli
