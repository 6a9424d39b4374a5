#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "wsens/wsens.hpp"
#include "wsens_cli/app.hpp"
#include "wsens_cli/table.hpp"

namespace wsens::cli {

namespace {

namespace fs = std::filesystem;

// Ordered (key, value) pairs; the text report's detail section and report.csv
// both print every value with the same format so they round-trip exactly.
using Metrics = std::vector<std::pair<std::string, double>>;

std::string full(double v) { return fmt::format("{:.12g}", v); }

std::string short3(double v) { return std::isfinite(v) ? fmt::format("{:.3f}", v) : std::string("NA"); }

std::string label(double v) { return fmt::format("{:g}", v); }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k) out += sep;
    out += parts[k];
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(',', start);
    std::string part = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    const auto b = part.find_first_not_of(" \t");
    const auto e = part.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

Estimand parse_estimand(const std::string& text) {
  if (text == "ate") return Estimand::kAte;
  if (text == "att") return Estimand::kAtt;
  if (text == "atc") return Estimand::kAtc;
  throw InvalidArgument(fmt::format("unknown estimand '{}'", text));
}

WeightMethod parse_method(const std::string& text) {
  if (text == "ipw") return WeightMethod::kIpw;
  if (text == "ebal") return WeightMethod::kEntropyBalance;
  if (text == "psmatch") return WeightMethod::kPsMatch;
  if (text == "exact") return WeightMethod::kExactMatch;
  if (text == "uniform") return WeightMethod::kUniform;
  throw InvalidArgument(
      fmt::format("unknown weights '{}'; expected ipw|ebal|psmatch|exact|uniform|column:NAME|file:PATH", text));
}

BootstrapMode parse_mode(const std::string& text) {
  if (text == "reestimate") return BootstrapMode::kReestimate;
  if (text == "fixed") return BootstrapMode::kFixedWeights;
  if (text == "cluster") return BootstrapMode::kCluster;
  throw InvalidArgument(fmt::format("unknown bootstrap mode '{}'", text));
}

Estimand default_estimand(WeightMethod method) {
  return method == WeightMethod::kPsMatch || method == WeightMethod::kExactMatch ? Estimand::kAtt
                                                                                  : Estimand::kAte;
}

Centering centering_for(const std::string& mode, Estimand estimand) {
  if (mode == "none") return Centering::kNone;
  switch (estimand) {
    case Estimand::kAtt: return Centering::kAtt;
    case Estimand::kAtc: return Centering::kAtc;
    default: return Centering::kAte;
  }
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

// One number per line; a non-numeric first line is a header.
Eigen::VectorXd read_weights_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(fmt::format("cannot open weights file '{}'", path));
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto v = parse_double(line);
    if (!v) {
      if (lineno == 1) continue;
      throw InvalidArgument(fmt::format("{}:{}: invalid weight '{}'", path, lineno, line));
    }
    values.push_back(*v);
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

struct ExternalSource {
  std::optional<std::string> column;
  std::optional<std::string> file;
};

std::optional<ExternalSource> external_source(const std::string& text) {
  if (starts_with(text, "column:")) return ExternalSource{text.substr(7), std::nullopt};
  if (starts_with(text, "file:")) return ExternalSource{std::nullopt, text.substr(5)};
  return std::nullopt;
}

struct Prepared {
  LoadedData loaded;
  std::optional<BuilderSpec> builder;  // absent for external weights
  WeightSet weights;
  std::optional<WeightSet> external_semi;
  Estimand estimand = Estimand::kNone;
  Centering centering = Centering::kNone;
  std::string weights_label;
};

Eigen::VectorXd external_values(const ExternalSource& src, const LoadedData& loaded,
                                const std::vector<std::string>& extra_names) {
  if (src.column) {
    for (std::size_t k = 0; k < extra_names.size(); ++k) {
      if (extra_names[k] == *src.column) return loaded.extra[k];
    }
  }
  Eigen::VectorXd v = read_weights_file(*src.file);
  if (v.size() != loaded.data.size()) {
    throw InvalidArgument(fmt::format("weights file '{}' has {} values for {} units", *src.file, v.size(),
                                      loaded.data.size()));
  }
  return v;
}

void assign_weights(const Options& o, const LoadOptions& load, const std::optional<ExternalSource>& main_src,
                    Prepared& p) {
  const Dataset& data = p.loaded.data;

  if (main_src) {
    p.estimand = o.estimand.empty() ? Estimand::kNone : parse_estimand(o.estimand);
    p.weights = WeightSet::normalized(external_values(*main_src, p.loaded, load.extra_numeric),
                                      WeightMethod::kExternal, p.estimand);
    p.weights_label = o.weights;
  } else {
    BuilderSpec spec;
    spec.method = parse_method(o.weights);
    spec.estimand = o.estimand.empty() ? default_estimand(spec.method) : parse_estimand(o.estimand);
    spec.columns = o.weight_covariates.empty() ? o.covariates : o.weight_covariates;
    spec.k = o.match_k;
    spec.with_replacement = !o.without_replacement;
    spec.tol = o.ebal_tol;
    validate(spec);
    p.weights = build_weights(spec, data);
    p.estimand = spec.estimand;
    p.weights_label = fmt::format("{} ({})", to_string(spec.method), to_string(spec.estimand));
    p.builder = std::move(spec);
  }
}

Prepared prepare(const Options& o) {
  if (o.input.empty()) throw InvalidArgument("--input is required");
  if (o.outcome.empty()) throw InvalidArgument("--outcome is required");
  if (o.treatment.empty()) throw InvalidArgument("--treatment is required");

  LoadOptions load;
  load.outcome = o.outcome;
  load.treatment = o.treatment;
  load.covariates = o.covariates;
  if (!o.cluster.empty()) load.cluster = o.cluster;
  load.drop_single_arm_clusters = o.drop_single_arm_clusters;
  const auto main_src = external_source(o.weights);
  const auto semi_src = o.semi_weights.empty() ? std::nullopt : external_source(o.semi_weights);
  if (!o.semi_weights.empty() && !semi_src) {
    throw InvalidArgument("--semi-weights must be column:NAME or file:PATH");
  }
  if (main_src && main_src->column) load.extra_numeric.push_back(*main_src->column);
  if (semi_src && semi_src->column) load.extra_numeric.push_back(*semi_src->column);

  Prepared p;
  const CsvTable table = read_csv_file(o.input);
  p.loaded = load_dataset(table, load);
  assign_weights(o, load, main_src, p);
  if (o.drop_zero_weight_units) {
    // Reload without zero-weight rows so absent categorical levels vanish,
    // then rebuild the weights on the kept units.
    std::set<int> zero_lines;
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
      if (p.weights.weights[i] == 0.0) zero_lines.insert(p.loaded.source_lines[static_cast<std::size_t>(i)]);
    }
    if (!zero_lines.empty()) {
      CsvTable kept{table.header, {}, {}};
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (zero_lines.count(table.lines[r])) continue;
        kept.rows.push_back(table.rows[r]);
        kept.lines.push_back(table.lines[r]);
      }
      p.loaded = load_dataset(kept, load);
      p.loaded.dropped_rows += zero_lines.size();
      assign_weights(o, load, main_src, p);
    }
  }
  if (semi_src) {
    p.external_semi = WeightSet::normalized(external_values(*semi_src, p.loaded, load.extra_numeric));
  }
  p.centering = centering_for(o.centering, p.estimand);
  return p;
}

void validate_levels(const Options& o) {
  for (double q : o.q) {
    if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument(fmt::format("--q {} must lie in (0, 1]", q));
  }
  for (double a : o.alpha) {
    if (!(a > 0.0 && a < 1.0)) throw InvalidArgument(fmt::format("--alpha {} must lie in (0, 1)", a));
  }
  if (o.q.empty() || o.alpha.empty()) throw InvalidArgument("--q and --alpha need at least one value");
}

std::optional<BootstrapReplicates> bootstrap(const Options& o, const Prepared& p, const WlsFit& fit,
                                             std::ostream& log) {
  if (!o.replicates_in.empty()) {
    std::ifstream in(o.replicates_in);
    if (!in) throw InvalidArgument(fmt::format("cannot open replicates file '{}'", o.replicates_in));
    BootstrapReplicates reps = read_replicates_csv(in, fit.tau_hat);
    fmt::print(log, "loaded {} replicates from {}\n", reps.size(), o.replicates_in);
    return reps;
  }
  if (o.replicates == 0) return std::nullopt;
  if (!o.seed) throw InvalidArgument("--seed is required when --B > 0");

  BootstrapConfig config;
  config.replicates = o.replicates;
  config.alpha = o.alpha.front();
  config.seed = *o.seed;
  config.threads = o.threads;
  if (!o.bootstrap.empty()) {
    config.mode = parse_mode(o.bootstrap);
  } else if (p.loaded.data.cluster) {
    config.mode = BootstrapMode::kCluster;
  } else {
    config.mode = p.builder ? BootstrapMode::kReestimate : BootstrapMode::kFixedWeights;
  }
  if (config.mode == BootstrapMode::kReestimate && !p.builder) {
    throw InvalidArgument("--bootstrap reestimate needs a weight builder, not external weights");
  }
  if (config.mode == BootstrapMode::kCluster && !p.loaded.data.cluster) {
    throw InvalidArgument("--bootstrap cluster needs --cluster");
  }
  const WeightSource source = p.builder ? WeightSource(*p.builder) : WeightSource(p.weights);
  fmt::print(log, "bootstrap: {} replicates, mode {}, seed {}\n", config.replicates, to_string(config.mode),
             config.seed);
  return draw_replicates(p.loaded.data, source, p.centering, config);
}

std::ofstream open_output(const Options& o, const std::string& name) {
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw InvalidArgument(fmt::format("cannot create output directory '{}': {}", o.out, ec.message()));
  const fs::path path = fs::path(o.out) / name;
  std::ofstream out(path);
  if (!out) throw InvalidArgument(fmt::format("cannot write '{}'", path.string()));
  return out;
}

struct BoundRow {
  std::vector<std::string> columns;
  double kappa_d = 1.0;
  double kappa_y = 1.0;
  std::string status = "ok";
  BenchmarkResult result;
  double adjusted = NAN;
  double ci_lower = NAN;
  double ci_upper = NAN;
  WeightComparison comparison;
};

std::vector<BoundRow> compute_bounds(const Options& o, const Prepared& p, const WlsFit& fit,
                                     const std::optional<BootstrapReplicates>& reps) {
  std::vector<BoundRow> rows;
  if (o.benchmarks.size() > 1 && p.external_semi) {
    throw InvalidArgument("--semi-weights supports a single --benchmark group");
  }
  for (const auto& group : o.benchmarks) {
    const std::vector<std::string> columns = split_commas(group);
    if (columns.empty()) throw InvalidArgument("--benchmark needs at least one column");
    p.loaded.data.resolve(columns);
    WeightSet semi;
    if (p.external_semi) {
      semi = *p.external_semi;
    } else if (p.builder) {
      semi = semi_weights(*p.builder, p.loaded.data, columns);
    } else {
      throw InvalidArgument("external weights need --semi-weights for benchmarking");
    }
    WeightComparison comparison;
    try {
      comparison = weight_comparison(p.weights, semi, p.loaded.data.d);
    } catch (const NumericalError&) {
      // Correlation is undefined for a constant weight vector; ESS still is.
      const double nan = std::numeric_limits<double>::quiet_NaN();
      comparison.correlation = comparison.correlation_control = comparison.correlation_treated = nan;
      comparison.ess_full = effective_sample_size(p.weights.weights, p.loaded.data.d);
      comparison.ess_semi = effective_sample_size(semi.weights, p.loaded.data.d);
    }
    for (double kd : o.kappa_d) {
      for (double ky : o.kappa_y) {
        BoundRow row;
        row.columns = columns;
        row.kappa_d = kd;
        row.kappa_y = ky;
        row.comparison = comparison;
        try {
          row.result = benchmark_bounds(fit, p.loaded.data, semi, columns, kd, ky);
          row.adjusted = adjusted_from_bound(row.result, fit);
          if (reps) {
            const SensitivityParams params{row.result.bound_r2_d, row.result.bound_r2_y, 1};
            const AdjustedInterval ci = adjusted_interval(*reps, params, o.alpha.front());
            row.ci_lower = ci.lower;
            row.ci_upper = ci.upper;
          }
        } catch (const NumericalError& e) {
          row.status = e.what();
        } catch (const InvalidArgument& e) {
          row.status = e.what();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string bound_key(const BoundRow& row) {
  return fmt::format("bound[{}|kd={}|ky={}]", join(row.columns, "+"), label(row.kappa_d), label(row.kappa_y));
}

std::string finite_or_blank(double v) { return std::isfinite(v) ? full(v) : std::string(); }

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_bounds_csv(std::ostream& out, const std::vector<BoundRow>& rows) {
  out << "benchmark,kappa_d,kappa_y,status,bound_r2_y,bound_r2_d,r2_y_clamped,adjusted_estimate,ci_lower,"
         "ci_upper,correlation,correlation_control,correlation_treated,ess_full,ess_semi,ess_full_control,"
         "ess_semi_control\n";
  for (const auto& r : rows) {
    const bool ok = r.status == "ok";
    auto val = [&](double v) { return ok ? full(v) : std::string(); };
    const auto& c = r.comparison;
    fmt::print(out, "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_quote(join(r.columns, "+")),
               full(r.kappa_d), full(r.kappa_y), csv_quote(r.status), val(r.result.bound_r2_y),
               val(r.result.bound_r2_d), ok ? (r.result.r2_y_clamped ? "1" : "0") : "", val(r.adjusted),
               finite_or_blank(r.ci_lower), finite_or_blank(r.ci_upper),
               finite_or_blank(c.correlation), finite_or_blank(c.correlation_control),
               finite_or_blank(c.correlation_treated),
               full(c.ess_full.overall), full(c.ess_semi.overall), full(c.ess_full.control),
               full(c.ess_semi.control));
  }
}

void print_bounds_table(std::ostream& out, const std::vector<BoundRow>& rows, double alpha) {
  if (rows.empty()) return;
  fmt::print(out, "\n{:<34} {:>14} {:>14} {:>9}  {:<18} {:>6}\n", "Benchmark", "R2_w(Y~Z|D,X)", "R2_w(D~Z|X)",
             "Adjusted", fmt::format("{:g}% CI", 100.0 * (1.0 - alpha)), "cor_w");
  for (const auto& r : rows) {
    const std::string name =
        fmt::format("Bound ({}; kd={}, ky={})", join(r.columns, ", "), label(r.kappa_d), label(r.kappa_y));
    if (r.status != "ok") {
      fmt::print(out, "{:<34} {}\n", name, r.status);
      continue;
    }
    const std::string ci =
        std::isfinite(r.ci_lower) ? fmt::format("({}, {})", short3(r.ci_lower), short3(r.ci_upper)) : "";
    fmt::print(out, "{:<34} {:>14} {:>14} {:>9}  {:<18} {:>6}{}\n", name, short3(r.result.bound_r2_y),
               short3(r.result.bound_r2_d), short3(r.adjusted), ci,
               std::isfinite(r.comparison.correlation) ? short3(r.comparison.correlation) : "-",
               r.result.r2_y_clamped ? "  (R2_y bound clamped at 1)" : "");
  }
}

void add_bound_metrics(Metrics& m, const std::vector<BoundRow>& rows) {
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const std::string key = bound_key(r);
    m.emplace_back(key + ".r2_y", r.result.bound_r2_y);
    m.emplace_back(key + ".r2_d", r.result.bound_r2_d);
    m.emplace_back(key + ".adjusted", r.adjusted);
    if (std::isfinite(r.ci_lower)) {
      m.emplace_back(key + ".ci_lower", r.ci_lower);
      m.emplace_back(key + ".ci_upper", r.ci_upper);
    }
    if (std::isfinite(r.comparison.correlation)) m.emplace_back(key + ".correlation", r.comparison.correlation);
  }
}

double metric(const Metrics& m, const std::string& key) {
  for (const auto& [k, v] : m) {
    if (k == key) return v;
  }
  return NAN;
}

void print_header(std::ostream& out, const Options& o, const Prepared& p,
                  const std::optional<BootstrapReplicates>& reps) {
  const Dataset& data = p.loaded.data;
  const EssSummary ess = effective_sample_size(p.weights.weights, data.d);
  fmt::print(out, "input: {} (n = {}, treated = {}", o.input, data.size(), data.num_treated());
  if (p.loaded.dropped_rows) fmt::print(out, ", dropped rows = {}", p.loaded.dropped_rows);
  fmt::print(out, ")\n");
  fmt::print(out, "outcome: {}  treatment: {}  covariates: {} ({} columns)\n", o.outcome, o.treatment,
             join(o.covariates, ", "), data.num_covariates());
  fmt::print(out, "weights: {}", p.weights_label);
  if (p.weights.diagnostics.clamped_scores) {
    fmt::print(out, ", clamped scores = {}", p.weights.diagnostics.clamped_scores);
  }
  if (!p.weights.diagnostics.dropped_units.empty()) {
    fmt::print(out, ", unmatched units = {}", p.weights.diagnostics.dropped_units.size());
  }
  fmt::print(out, "\ncentering: {}\n", to_string(p.centering));
  fmt::print(out, "ESS: overall {:.1f}, control {:.1f} ({:.1f}%), treated {:.1f} ({:.1f}%)\n", ess.overall,
             ess.control, 100.0 * ess.fraction_control, ess.treated, 100.0 * ess.fraction_treated);
  if (reps) {
    fmt::print(out, "bootstrap: {} replicates, mode {}, failures {}\n", reps->size(),
               to_string(reps->config.mode), reps->failures);
  }
}

void run_analysis(const Options& o, bool full_report, std::ostream& log) {
  validate_levels(o);
  if (!full_report && o.benchmarks.empty()) throw InvalidArgument("benchmark needs at least one --benchmark");
  const Prepared p = prepare(o);
  const WlsFit fit = fit_wls(p.loaded.data, p.weights, p.centering);
  const auto reps = bootstrap(o, p, fit, log);
  const std::vector<BoundRow> rows = compute_bounds(o, p, fit, reps);

  Metrics m;
  const EssSummary ess = effective_sample_size(p.weights.weights, p.loaded.data.d);
  m.emplace_back("n", static_cast<double>(fit.n));
  m.emplace_back("n_treated", static_cast<double>(p.loaded.data.num_treated()));
  m.emplace_back("ess", ess.overall);
  m.emplace_back("ess_control", ess.control);
  m.emplace_back("ess_treated", ess.treated);
  m.emplace_back("estimate", fit.tau_hat);
  m.emplace_back("sd_y_resid", fit.sd_y_resid);
  m.emplace_back("sd_d_resid", fit.sd_d_resid);
  m.emplace_back("extreme_r2", extreme_scenario_r2(fit));
  for (double q : o.q) m.emplace_back(fmt::format("rv_q[{}]", label(q)), robustness_value_q(fit, q));
  if (reps) {
    for (double a : o.alpha) {
      const AdjustedInterval ci = adjusted_interval(*reps, {0.0, 0.0, 1}, a);
      const RvAlpha rv = rv_alpha(*reps, a);
      m.emplace_back(fmt::format("ci_lower[{}]", label(a)), ci.lower);
      m.emplace_back(fmt::format("ci_upper[{}]", label(a)), ci.upper);
      m.emplace_back(fmt::format("se[{}]", label(a)), ci.se);
      m.emplace_back(fmt::format("rv_alpha[{}]", label(a)), rv.value);
      m.emplace_back(fmt::format("rv_alpha_bracketed[{}]", label(a)), rv.bracketed ? 1.0 : 0.0);
    }
  }
  add_bound_metrics(m, rows);

  if (reps) {
    auto out = open_output(o, "replicates.csv");
    write_replicates_csv(out, *reps);
  }
  if (!rows.empty()) {
    auto out = open_output(o, "bounds.csv");
    write_bounds_csv(out, rows);
  }

  if (full_report) {
    auto txt = open_output(o, "report.txt");
    print_header(txt, o, p, reps);
    std::vector<std::string> head{"Estimate"};
    std::vector<std::string> cells{short3(fit.tau_hat)};
    if (reps) {
      const double a = o.alpha.front();
      head.push_back(fmt::format("{:g}% CI", 100.0 * (1.0 - a)));
      cells.push_back(fmt::format("({}, {})", short3(metric(m, fmt::format("ci_lower[{}]", label(a)))),
                                  short3(metric(m, fmt::format("ci_upper[{}]", label(a))))));
    }
    for (double q : o.q) {
      head.push_back(fmt::format("RV_q={}", label(q)));
      cells.push_back(short3(metric(m, fmt::format("rv_q[{}]", label(q)))));
    }
    if (reps) {
      for (double a : o.alpha) {
        head.push_back(fmt::format("RV_a={}", label(a)));
        cells.push_back(short3(metric(m, fmt::format("rv_alpha[{}]", label(a)))));
      }
    }
    head.emplace_back("R2_w(Y~D|X)");
    cells.push_back(short3(extreme_scenario_r2(fit)));
    fmt::print(txt, "\n");
    for (std::size_t k = 0; k < head.size(); ++k) {
      const std::size_t width = std::max(head[k].size(), cells[k].size());
      fmt::print(txt, "{}{:>{}}", k ? "  " : "", head[k], width);
    }
    fmt::print(txt, "\n");
    for (std::size_t k = 0; k < head.size(); ++k) {
      const std::size_t width = std::max(head[k].size(), cells[k].size());
      fmt::print(txt, "{}{:>{}}", k ? "  " : "", cells[k], width);
    }
    fmt::print(txt, "\n");
    print_bounds_table(txt, rows, o.alpha.front());
    fmt::print(txt, "\nFull precision\n");
    for (const auto& [k, v] : m) fmt::print(txt, "  {} = {}\n", k, full(v));

    auto csv = open_output(o, "report.csv");
    csv << "metric,value\n";
    for (const auto& [k, v] : m) fmt::print(csv, "{},{}\n", csv_quote(k), full(v));
    fmt::print(log, "estimate {} ; wrote report.txt and report.csv to {}\n", short3(fit.tau_hat), o.out);
  } else {
    print_header(log, o, p, reps);
    print_bounds_table(log, rows, o.alpha.front());
    fmt::print(log, "wrote bounds.csv to {}\n", o.out);
  }
}

void run_contour(const Options& o, std::ostream& log) {
  const Prepared p = prepare(o);
  const WlsFit fit = fit_wls(p.loaded.data, p.weights, p.centering);
  GridSpec grid;
  for (int i = 0; i < o.grid_points; ++i) grid.r2_d_axis.push_back(o.grid_max * i / o.grid_points);
  grid.r2_y_axis = grid.r2_d_axis;
  ContourGrid result;
  if (o.contour_mode == "estimate") {
    result = contour_grid(fit, grid);
  } else {
    const auto reps = bootstrap(o, p, fit, log);
    if (!reps) throw InvalidArgument("--contour-mode lower_ci/upper_ci needs --B > 0 or --replicates-in");
    const ContourMode mode = o.contour_mode == "lower_ci" ? ContourMode::kLowerCi : ContourMode::kUpperCi;
    result = contour_grid(*reps, grid, mode, o.alpha.front());
    auto out = open_output(o, "replicates.csv");
    write_replicates_csv(out, *reps);
  }
  auto out = open_output(o, "contour.csv");
  write_contour_csv(out, result);
  fmt::print(log, "wrote {}x{} {} grid to {}\n", grid.r2_d_axis.size(), grid.r2_y_axis.size(),
             to_string(result.mode), (fs::path(o.out) / "contour.csv").string());
}

DgpSpec dgp_from(const Options& o) {
  DgpSpec spec;
  spec.kind = o.dgp == "dgp2" ? DgpKind::kDgp2 : o.dgp == "dgp3" ? DgpKind::kDgp3 : DgpKind::kDgp1;
  spec.n = o.n;
  spec.groups = o.groups;
  spec.group_size = o.group_size;
  return spec;
}

BuilderSpec sim_builder(const Options& o) {
  if (external_source(o.weights)) throw InvalidArgument("simulate needs a weight builder");
  const WeightMethod method = parse_method(o.weights);
  BuilderSpec spec =
      default_builder(method, o.estimand.empty() ? default_estimand(method) : parse_estimand(o.estimand));
  spec.k = o.match_k;
  spec.with_replacement = !o.without_replacement;
  spec.tol = o.ebal_tol;
  validate(spec);
  return spec;
}

DgpSpec plim_dgp(const Options& o, DgpSpec spec) {
  if (spec.kind == DgpKind::kDgp2) {
    spec.groups = std::max<Eigen::Index>(2, o.plim_n / std::max<long>(1, o.group_size));
  } else {
    spec.n = o.plim_n;
  }
  return spec;
}

void run_simulate(const Options& o, std::ostream& log) {
  if (!o.seed) throw InvalidArgument("simulate requires --seed");
  const std::uint64_t seed = *o.seed;

  if (o.experiment == "translator") {
    const TranslatorResult r = translator_experiment(o.n, seed);
    auto out = open_output(o, "translator.csv");
    write_translator_csv(out, o.n, seed, r);
    fmt::print(log, "translator {:.3f}, control ESS fraction {:.3f}\n", r.translator, r.ess_fraction_control);
    return;
  }

  const BuilderSpec builder = sim_builder(o);
  const DgpSpec base = dgp_from(o);
  if (o.theta_sq.empty()) throw InvalidArgument("--theta-sq needs at least one value");

  if (o.experiment == "plim") {
    if (o.plim_draws < 1) throw InvalidArgument("--experiment plim needs --plim-draws > 0");
    auto out = open_output(o, "plim.csv");
    out << "dgp,method,theta_sq,n,draws,r2_d,r2_y,sign\n";
    for (double theta : o.theta_sq) {
      DgpSpec spec = plim_dgp(o, base);
      spec.theta_sq = theta;
      const SensitivityParams prm = estimate_plim_params(spec, builder, o.plim_draws, seed, o.threads);
      fmt::print(out, "{},{},{},{},{},{},{},{}\n", to_string(spec.kind), to_string(builder.method), full(theta),
                 spec.size(), o.plim_draws, full(prm.r2_d), full(prm.r2_y), prm.sign);
      fmt::print(log, "theta_sq {}: r2_d {:.4f}, r2_y {:.4f}\n", label(theta), prm.r2_d, prm.r2_y);
    }
    return;
  }

  if (o.plim_draws == 0) {
    if (!o.r2_d) throw InvalidArgument("coverage needs --r2-d and --r2-y (or --plim-draws)");
    if (o.r2_y.size() != 1 && o.r2_y.size() != o.theta_sq.size()) {
      throw InvalidArgument("--r2-y needs one value or one per --theta-sq value");
    }
  }
  std::vector<CoverageResult> results;
  for (std::size_t t = 0; t < o.theta_sq.size(); ++t) {
    CoverageConfig config;
    config.dgp = base;
    config.dgp.theta_sq = o.theta_sq[t];
    config.builder = builder;
    if (!o.bootstrap.empty()) {
      config.mode = parse_mode(o.bootstrap);
    } else {
      config.mode = base.kind == DgpKind::kDgp2 ? BootstrapMode::kCluster : BootstrapMode::kFixedWeights;
    }
    if (o.plim_draws > 0) {
      config.params = estimate_plim_params(plim_dgp(o, config.dgp), builder, o.plim_draws, seed, o.threads);
    } else {
      config.params = {*o.r2_d, o.r2_y.size() == 1 ? o.r2_y[0] : o.r2_y[t], 1};
    }
    config.iterations = o.iterations;
    config.replicates = o.replicates;
    config.alpha = o.alpha.front();
    config.seed = seed;
    config.threads = o.threads;
    fmt::print(log, "coverage: {} theta_sq {} ({} iterations, B = {})\n", to_string(base.kind),
               label(config.dgp.theta_sq), config.iterations, config.replicates);
    results.push_back(coverage_experiment(config));
    fmt::print(log, "  coverage {:.3f}\n", results.back().coverage);
  }
  auto out = open_output(o, "coverage.csv");
  write_coverage_csv(out, results);
}

}  // namespace

void execute(const Options& options, std::ostream& out) {
  if (options.command == "analyze") {
    run_analysis(options, true, out);
  } else if (options.command == "benchmark") {
    run_analysis(options, false, out);
  } else if (options.command == "contour") {
    run_contour(options, out);
  } else if (options.command == "simulate") {
    run_simulate(options, out);
  } else {
    throw InvalidArgument(fmt::format("unknown command '{}'", options.command));
  }
}

}  // namespace wsens::cli
