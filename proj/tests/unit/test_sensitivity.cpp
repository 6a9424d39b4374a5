#include <doctest.h>

#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "wsens/wsens.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace wsens;

namespace {

struct Fixture {
  oracle::Instance inst;
  WeightSet w;
  WlsFit fit;

  explicit Fixture(std::uint64_t seed, Eigen::Index n = 300, Eigen::Index p = 3) {
    std::mt19937_64 rng(seed);
    inst = oracle::random_instance(rng, n, p);
    BuilderSpec spec{WeightMethod::kIpw, Estimand::kAte, {}};
    for (Eigen::Index j = 0; j < p; ++j) spec.columns.push_back(inst.data.names[static_cast<std::size_t>(j)]);
    w = build_weights(spec, inst.data);
    fit = fit_wls(inst.data, w);
  }
};

}  // namespace

TEST_CASE("bias vanishes with either parameter at zero") {
  const Fixture f(1);
  CHECK(bias({0.0, 0.4, 1}, f.fit) == 0.0);
  CHECK(bias({0.3, 0.0, 1}, f.fit) == 0.0);
  CHECK(adjusted_estimate({0.0, 0.0, 1}, f.fit) == f.fit.tau_hat);
  CHECK_THROWS_AS(validate(SensitivityParams{1.0, 0.5, 1}), InvalidArgument);
  CHECK_THROWS_AS(validate(SensitivityParams{0.2, 1.5, 1}), InvalidArgument);
  CHECK_THROWS_AS(validate(SensitivityParams{0.2, 0.5, 0}), InvalidArgument);
}

TEST_CASE("bias from a synthetic confounder equals the refit difference") {
  for (std::uint64_t seed = 2; seed < 12; ++seed) {
    const Fixture f(seed);
    const SensitivityParams p = params_from_z(f.inst.data, f.inst.z, f.fit);
    const double refit = fit_with_z(f.inst.data, f.inst.z, f.w).fit.tau_hat;
    const double oracle_target =
        oracle::tau(oracle::hcat(f.inst.data.x, f.inst.z), f.inst.data.d, f.inst.data.y, f.w.weights);
    CHECK(refit == doctest::Approx(oracle_target).epsilon(1e-10));
    CHECK(bias(p, f.fit) == doctest::Approx(f.fit.tau_hat - refit).epsilon(1e-10));
    CHECK(adjusted_estimate(p, f.fit, SignConvention::kAsGiven) == doctest::Approx(refit).epsilon(1e-10));
  }
}

TEST_CASE("params_from_z edge cases") {
  const Fixture f(3);
  const Dataset& data = f.inst.data;
  SUBCASE("Z equal to the residualized treatment is degenerate") {
    const VectorXd z = residualize(data.d, data.x, f.w.weights);
    CHECK_THROWS_AS(params_from_z(data, z, f.fit), NumericalError);
  }
  SUBCASE("Z orthogonal to D and Y gives zero parameters") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    VectorXd noise(data.size());
    for (auto& v : noise) v = normal(rng);
    MatrixXd span(data.size(), data.x.cols() + 2);
    span << data.x, data.d, data.y;
    const VectorXd z = residualize(noise, span, f.w.weights);
    const SensitivityParams p = params_from_z(data, z, f.fit);
    CHECK(p.r2_d <= 1e-12);
    CHECK(p.r2_y <= 1e-12);
  }
}

TEST_CASE("robustness value") {
  const Fixture f(4);
  for (double q : {1.0, 0.5, 0.2}) {
    const double rv = robustness_value_q(f.fit, q);
    CHECK(adjusted_estimate({rv, rv, 1}, f.fit) == doctest::Approx((1.0 - q) * f.fit.tau_hat).epsilon(1e-10));
  }

  WlsFit unit = f.fit;
  // omega_q^2 = R2 / (1 - R2) = 1 at R2 = 1/2.
  unit.r2_yd_given_x = 0.5;
  CHECK(robustness_value_q(unit, 1.0) == doctest::Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-14));
  unit.r2_yd_given_x = 0.0;
  CHECK(robustness_value_q(unit, 1.0) == 0.0);
}

TEST_CASE("extreme scenario") {
  const Fixture f(5);
  const double r2 = extreme_scenario_r2(f.fit);
  CHECK(r2 == doctest::Approx(oracle::partial_r2(f.inst.data.y, f.inst.data.d, f.inst.data.x, f.w.weights))
                  .epsilon(1e-10));
  CHECK(std::abs(adjusted_estimate({r2, 1.0, 1}, f.fit)) <= 1e-10 * std::max(1.0, std::abs(f.fit.tau_hat)));

  Dataset data = f.inst.data;
  data.y = residualize(data.y, oracle::hcat(data.x, data.d), f.w.weights);
  CHECK(extreme_scenario_r2(fit_wls(data, f.w)) <= 1e-20);
}

TEST_CASE("benchmark bounds reduce to the unweighted formulas") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const auto inst = oracle::random_instance(rng, 150 + 20 * rep, 3);
    const Dataset& data = inst.data;
    const WeightSet uni = WeightSet::uniform(data.size());
    const WlsFit fit = fit_wls(data, uni);
    const std::vector<Eigen::Index> rest{1, 2};
    const MatrixXd x_rest = select_columns(data.x, rest);
    const double r2_dxj = oracle::t_partial_r2(x_rest, data.x.col(0), data.d);
    const double r2_yxj = oracle::t_partial_r2(oracle::hcat(x_rest, data.d), data.x.col(0), data.y);
    for (double kd : {0.5, 1.0, 2.0}) {
      for (double ky : {1.0, 3.0}) {
        const auto ref = oracle::unweighted_bound(r2_dxj, r2_yxj, kd, ky);
        const BenchmarkResult b = benchmark_bounds(fit, data, uni, {"x1"}, kd, ky);
        CHECK(b.bound_r2_d == doctest::Approx(ref.r2_d).epsilon(1e-10));
        if (!b.r2_y_clamped) CHECK(b.bound_r2_y == doctest::Approx(ref.r2_y).epsilon(1e-10));
      }
    }
    const BenchmarkResult zero = benchmark_bounds(fit, data, uni, {"x1"}, 0.0, 0.0);
    CHECK(zero.bound_r2_d == 0.0);
    CHECK(zero.bound_r2_y == 0.0);
    CHECK(adjusted_from_bound(zero, fit) == fit.tau_hat);
  }
}

TEST_CASE("benchmark bounds error on a degenerate strength") {
  const Fixture f(6);
  CHECK_THROWS_AS(benchmark_bounds(f.fit, f.inst.data, f.w, {"x1"}, 1e6, 1.0), NumericalError);
}

TEST_CASE("translator diagnostic") {
  std::mt19937_64 rng(10);
  const auto inst = oracle::random_instance(rng, 400, 1);
  const WeightSet uni = WeightSet::uniform(400);
  SUBCASE("identical weights give a translator of one") {
    const Fixture f(10, 400, 1);
    CHECK(translator_diagnostic(f.inst.data, f.inst.z, f.w, f.w, {"x1"}).translator == doctest::Approx(1.0));
  }
  SUBCASE("one covariate reduces to a ratio of plain squared correlations") {
    const WeightSet w = entropy_balance(inst.data.x, inst.data.d, Estimand::kAtt);
    const TranslatorDiagnostic t = translator_diagnostic(inst.data, inst.z, w, uni, {"x1"});
    const MatrixXd none(400, 0);
    const double num = oracle::partial_r2(inst.data.d, inst.z, none, w.weights);
    const double den = oracle::partial_r2(inst.data.d, inst.z, none, uni.weights);
    CHECK(t.translator == doctest::Approx(num / den).epsilon(1e-10));
  }
}

TEST_CASE("contour grid") {
  const Fixture f(11);
  SUBCASE("origin") {
    GridSpec g{{0.0}, {0.0}};
    CHECK(contour_grid(f.fit, g).values(0, 0) == f.fit.tau_hat);
  }
  SUBCASE("standard shape and monotone magnitude") {
    const ContourGrid c = contour_grid(f.fit, GridSpec::standard());
    REQUIRE(c.values.rows() == 21);
    REQUIRE(c.values.cols() == 21);
    CHECK(c.r2_d_axis.back() == doctest::Approx(0.5 * 20.0 / 21.0));
    const double s = f.fit.tau_hat >= 0.0 ? 1.0 : -1.0;
    for (Eigen::Index i = 0; i < 21; ++i) {
      for (Eigen::Index j = 0; j + 1 < 21; ++j) {
        CHECK(s * c.values(i, j + 1) <= s * c.values(i, j) + 1e-15);
        CHECK(s * c.values(j + 1, i) <= s * c.values(j, i) + 1e-15);
      }
    }
  }
  SUBCASE("the robustness value cell is zero") {
    const double rv = robustness_value_q(f.fit, 1.0);
    GridSpec g{{rv}, {rv}};
    CHECK(std::abs(contour_grid(f.fit, g).values(0, 0)) <= 1e-10);
  }
  SUBCASE("csv layout") {
    GridSpec g{{0.0, 0.1}, {0.0, 0.2, 0.3}};
    std::ostringstream out;
    write_contour_csv(out, contour_grid(f.fit, g));
    std::istringstream in(out.str());
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "r2_d,r2_y,value");
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 6);
  }
}

TEST_CASE("weight comparison") {
  const Fixture f(12);
  const WeightComparison same = weight_comparison(f.w, f.w, f.inst.data.d);
  CHECK(same.correlation == doctest::Approx(1.0));
  VectorXd a(2), b(2), d(2);
  a << 1, 2;
  b << 2, 1;
  d << 1, 0;
  CHECK(weight_comparison(WeightSet::normalized(a), WeightSet::normalized(b), d).correlation ==
        doctest::Approx(-1.0));
}
