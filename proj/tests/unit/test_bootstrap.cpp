#include <doctest.h>

#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "wsens/wsens.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace wsens;

namespace {

BootstrapReplicates synthetic(std::vector<double> taus, double sd_y = 1.0, double sd_d = 0.5) {
  BootstrapReplicates reps;
  reps.config.replicates = static_cast<int>(taus.size());
  for (std::size_t b = 0; b < taus.size(); ++b) {
    reps.index.push_back(static_cast<int>(b));
    reps.stats.push_back({taus[b], sd_y, sd_d});
  }
  double sum = 0.0;
  for (double t : taus) sum += t;
  reps.base_tau = sum / static_cast<double>(taus.size());
  return reps;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(quantile_type7(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile_type7(v, 0.75) == doctest::Approx(3.25));
  CHECK(quantile_type7(v, 0.0) == 1.0);
  CHECK(quantile_type7(v, 1.0) == 4.0);
  const AdjustedInterval ci = adjusted_interval(synthetic({4.0, 1.0, 3.0, 2.0}), {0.0, 0.0, 1}, 0.5);
  CHECK(ci.lower == doctest::Approx(1.75));
  CHECK(ci.upper == doctest::Approx(3.25));
  CHECK(ci.se == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("replicates are deterministic and mode-consistent") {
  std::mt19937_64 rng(3);
  auto inst = oracle::random_instance(rng, 120, 2);
  const BuilderSpec spec{WeightMethod::kIpw, Estimand::kAte, {"x1", "x2"}};
  BootstrapConfig config;
  config.replicates = 2;
  config.seed = 42;

  const auto a = draw_replicates(inst.data, spec, Centering::kNone, config);
  const auto b = draw_replicates(inst.data, spec, Centering::kNone, config);
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a.stats[k].tau_hat == b.stats[k].tau_hat);
    CHECK(a.stats[k].sd_y_resid == b.stats[k].sd_y_resid);
    CHECK(a.stats[k].sd_d_resid == b.stats[k].sd_d_resid);
  }
  CHECK(a.base_tau == doctest::Approx(fit_wls(inst.data, build_weights(spec, inst.data)).tau_hat).epsilon(1e-12));

  config.threads = 3;
  config.replicates = 20;
  const auto serial = [&] {
    BootstrapConfig c = config;
    c.threads = 1;
    return draw_replicates(inst.data, spec, Centering::kNone, c);
  }();
  const auto parallel = draw_replicates(inst.data, spec, Centering::kNone, config);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t k = 0; k < serial.size(); ++k) CHECK(serial.stats[k].tau_hat == parallel.stats[k].tau_hat);

  config.mode = BootstrapMode::kReestimate;
  CHECK_THROWS_AS(draw_replicates(inst.data, WeightSet::uniform(120), Centering::kNone, config), InvalidArgument);
  config.mode = BootstrapMode::kCluster;
  CHECK_THROWS_AS(draw_replicates(inst.data, spec, Centering::kNone, config), InvalidArgument);
}

TEST_CASE("fixed-weight replicates centre on the estimate") {
  DgpSpec dgp;
  dgp.n = 1000;
  dgp.seed = 8;
  const SimDraw draw = generate(dgp);
  const WeightSet w = entropy_balance(draw.data.x, draw.data.d, Estimand::kAtt);
  BootstrapConfig config;
  config.replicates = 400;
  config.mode = BootstrapMode::kFixedWeights;
  config.seed = 1;
  const auto reps = draw_replicates(draw.data, w, Centering::kNone, config);
  double mean = 0.0;
  for (const auto& s : reps.stats) mean += s.tau_hat / static_cast<double>(reps.size());
  const AdjustedInterval ci = adjusted_interval(reps, {0.0, 0.0, 1}, 0.05);
  CHECK(std::abs(mean - reps.base_tau) < 0.25 * ci.se);
}

TEST_CASE("cluster replicates draw whole clusters") {
  DgpSpec dgp;
  dgp.kind = DgpKind::kDgp2;
  dgp.groups = 6;
  dgp.group_size = 30;
  dgp.seed = 5;
  const SimDraw draw = generate(dgp);
  BootstrapConfig config;
  config.replicates = 10;
  config.mode = BootstrapMode::kCluster;
  config.seed = 9;
  const auto reps = draw_replicates(draw.data, default_builder(WeightMethod::kIpw, Estimand::kAte),
                                    Centering::kNone, config);
  CHECK(reps.size() + static_cast<std::size_t>(reps.failures) == 10);
}

TEST_CASE("each cluster replicate holds exactly G whole clusters") {
  // Cluster g holds a treated unit with outcome 10^g and a control with 0, so
  // G * tau spells the draw multiplicity of every cluster in base 10.
  const int groups = 6;
  VectorXd d(2 * groups), y(2 * groups);
  std::vector<int> cluster;
  for (int g = 0; g < groups; ++g) {
    d[2 * g] = 1.0;
    d[2 * g + 1] = 0.0;
    y[2 * g] = std::pow(10.0, g);
    y[2 * g + 1] = 0.0;
    cluster.insert(cluster.end(), {g, g});
  }
  const Dataset data = make_dataset(MatrixXd(2 * groups, 0), d, y, cluster);
  BootstrapConfig config;
  config.replicates = 50;
  config.mode = BootstrapMode::kCluster;
  config.seed = 4;
  const auto reps = draw_replicates(data, WeightSet::uniform(2 * groups), Centering::kNone, config);
  REQUIRE(reps.size() == 50);
  for (const auto& s : reps.stats) {
    const double code = s.tau_hat * groups;
    CHECK(code == doctest::Approx(std::round(code)).epsilon(1e-9));
    long long digits = std::llround(code);
    int total = 0;
    while (digits > 0) {
      total += static_cast<int>(digits % 10);
      digits /= 10;
    }
    CHECK(total == groups);
  }
}

TEST_CASE("adjusted interval and robustness at level alpha") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(1.0, 0.4);
  std::vector<double> taus(2000);
  for (auto& t : taus) t = normal(rng);
  const BootstrapReplicates reps = synthetic(taus, 2.0, 0.5);

  const AdjustedInterval raw = adjusted_interval(reps, {0.0, 0.0, 1}, 0.05);
  CHECK(raw.lower == doctest::Approx(quantile_type7(taus, 0.025)));
  CHECK(raw.upper == doctest::Approx(quantile_type7(taus, 0.975)));

  const RvAlpha rv = rv_alpha(reps, 0.05);
  REQUIRE(rv.bracketed);
  CHECK(adjusted_interval(reps, {rv.value, rv.value, 1}, 0.05).lower == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(adjusted_interval(reps, {rv.value - 2e-3, rv.value - 2e-3, 1}, 0.05).lower > 0.0);

  // The RV of the point estimate exceeds the RV of the wide interval.
  const double r = reps.base_tau * 0.5 / 2.0;
  const double omega2 = r * r;
  const double rv_point = 0.5 * (std::sqrt(omega2 * omega2 + 4.0 * omega2) - omega2);
  CHECK(rv.value < rv_point);

  const BootstrapReplicates covering = synthetic({-1.0, 0.5, 1.0, 2.0});
  CHECK(rv_alpha(covering, 0.05).value == 0.0);
}

TEST_CASE("replicate csv round trip") {
  const BootstrapReplicates reps = synthetic({0.1, 0.2 + 1e-15, -3.5e-7}, 1.25, 0.333);
  std::stringstream io;
  write_replicates_csv(io, reps);
  const BootstrapReplicates back = read_replicates_csv(io, reps.base_tau);
  REQUIRE(back.size() == reps.size());
  for (std::size_t b = 0; b < reps.size(); ++b) {
    CHECK(back.index[b] == reps.index[b]);
    CHECK(back.stats[b].tau_hat == reps.stats[b].tau_hat);
    CHECK(back.stats[b].sd_y_resid == reps.stats[b].sd_y_resid);
    CHECK(back.stats[b].sd_d_resid == reps.stats[b].sd_d_resid);
  }
  std::istringstream bad("replicate_index,tau_hat,sd_y,sd_d\n0,1,2\n");
  CHECK_THROWS_AS(read_replicates_csv(bad, 0.0), InvalidArgument);
}

TEST_CASE("bootstrap contour grids") {
  const BootstrapReplicates reps = synthetic({0.8, 1.0, 1.2, 1.1, 0.9});
  GridSpec g{{0.0, 0.2}, {0.0, 0.3}};
  const ContourGrid lo = contour_grid(reps, g, ContourMode::kLowerCi, 0.05);
  const ContourGrid hi = contour_grid(reps, g, ContourMode::kUpperCi, 0.05);
  CHECK(lo.values(0, 0) == doctest::Approx(adjusted_interval(reps, {0.0, 0.0, 1}, 0.05).lower));
  CHECK((hi.values.array() >= lo.values.array()).all());
  CHECK(lo.values(1, 1) < lo.values(0, 0));
  CHECK_THROWS_AS(contour_grid(reps, g, ContourMode::kEstimate, 0.05), InvalidArgument);
}
