#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "wsens/wsens.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace wsens;

TEST_CASE("noiseless effect") {
  VectorXd d(6);
  d << 1, 0, 1, 0, 1, 0;
  const Dataset data = make_dataset(MatrixXd(6, 0), d, 2.0 * d);
  VectorXd w(6);
  w << 1, 2, 3, 1, 2, 3;
  const WlsFit fit = fit_wls(data, WeightSet::normalized(w));
  CHECK(fit.tau_hat == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.sd_y_resid == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_wls against normal equations") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = oracle::random_instance(rng, 80 + 10 * rep, 1 + rep % 4);
    const Dataset& data = inst.data;
    std::uniform_real_distribution<double> unit(0.1, 3.0);
    VectorXd w(data.size());
    for (auto& v : w) v = unit(rng);
    const WeightSet ws = WeightSet::normalized(w);
    for (Centering c : {Centering::kNone, Centering::kAte, Centering::kAtt, Centering::kAtc}) {
      const WlsFit fit = fit_wls(data, ws, c);
      const MatrixXd block = oracle::design_block(data.x, data.d, c);
      const auto ref = oracle::wls(oracle::hcat(data.d, block), data.y, w);
      CHECK(fit.tau_hat == doctest::Approx(ref.beta[1]).epsilon(1e-9));
      CHECK(fit.mu_hat == doctest::Approx(ref.beta[0]).epsilon(1e-9));
      for (Eigen::Index j = 0; j < block.cols(); ++j) {
        CHECK(fit.beta_hat[j] == doctest::Approx(ref.beta[j + 2]).epsilon(1e-9));
      }
      CHECK(fit.sd_y_resid == doctest::Approx(std::sqrt(ref.ssr / data.size())).epsilon(1e-9));
      const auto dres = oracle::wls(block, data.d, w);
      CHECK(fit.sd_d_resid == doctest::Approx(std::sqrt(dres.ssr / data.size())).epsilon(1e-9));
      const double r2 = oracle::partial_r2(data.y, data.d, block, w);
      CHECK(fit.r2_yd_given_x == doctest::Approx(r2).epsilon(1e-9));
      const WlsSummary s = summarize_wls(fit.design.block, data.d, data.y, ws.weights);
      CHECK(s.tau_hat == doctest::Approx(fit.tau_hat).epsilon(1e-10));
    }
  }
}

TEST_CASE("uniform weights reproduce ordinary least squares") {
  std::mt19937_64 rng(4);
  const auto inst = oracle::random_instance(rng, 150, 3);
  const WlsFit fit = fit_wls(inst.data, WeightSet::uniform(150));
  const auto ols = oracle::Unweighted::fit(inst.data.x, inst.data.d, inst.data.y);
  CHECK(fit.tau_hat == doctest::Approx(ols.tau).epsilon(1e-10));
}

TEST_CASE("fit_with_z") {
  std::mt19937_64 rng(8);
  const auto inst = oracle::random_instance(rng, 200, 2);
  const Dataset& data = inst.data;
  const WeightSet ws = build_weights({WeightMethod::kIpw, Estimand::kAte, {"x1", "x2"}}, data);
  const WlsFit base = fit_wls(data, ws);

  SUBCASE("matches the oracle refit with Z") {
    const TargetFit t = fit_with_z(data, inst.z, ws);
    const double ref = oracle::tau(oracle::hcat(data.x, inst.z), data.d, data.y, ws.weights);
    CHECK(t.fit.tau_hat == doctest::Approx(ref).epsilon(1e-10));
  }
  SUBCASE("Z orthogonal to D given X leaves the estimate unchanged") {
    std::normal_distribution<double> normal;
    VectorXd noise(data.size());
    for (auto& v : noise) v = normal(rng);
    const VectorXd z = residualize(noise, oracle::hcat(data.x, data.d), ws.weights);
    CHECK(fit_with_z(data, z, ws).fit.tau_hat == doctest::Approx(base.tau_hat).epsilon(1e-10));
  }
  SUBCASE("Z equal to a covariate is collinear") {
    CHECK_THROWS_AS(fit_with_z(data, data.x.col(0), ws), RankDeficientError);
  }
}

TEST_CASE("weighted difference in means") {
  VectorXd d(4), y(4);
  d << 1, 1, 0, 0;
  y << 3, 5, 1, 2;
  const Dataset data = make_dataset(MatrixXd(4, 0), d, y);
  CHECK(weighted_diff_in_means(data, WeightSet::uniform(4)) == doctest::Approx(2.5));

  VectorXd pair(4);
  pair << 1, 0, 0, 1;
  CHECK(weighted_diff_in_means(data, WeightSet::normalized(pair)) == doctest::Approx(1.0));
}

TEST_CASE("difference in means equals the regression under exact balance") {
  std::mt19937_64 rng(30);
  const auto inst = oracle::random_instance(rng, 300, 3);
  const WeightSet ws = entropy_balance(inst.data.x, inst.data.d, Estimand::kAtt);
  CHECK(weighted_diff_in_means(inst.data, ws) ==
        doctest::Approx(fit_wls(inst.data, ws).tau_hat).epsilon(1e-8));
}

TEST_CASE("dataset validation and column selection") {
  VectorXd d(3), y(3);
  d << 1, 0, 2;
  y << 1, 2, 3;
  CHECK_THROWS_AS(make_dataset(MatrixXd::Zero(3, 1), d, y).validate(), InvalidArgument);

  Dataset data = make_dataset(MatrixXd::Random(4, 3), VectorXd::Zero(4), VectorXd::Zero(4));
  data.d << 1, 0, 1, 0;
  data.names = {"a", "v=2", "v=3"};
  data.sources = {"a", "v", "v"};
  CHECK(data.resolve(std::vector<std::string>{"v"}) == std::vector<Eigen::Index>{1, 2});
  CHECK(data.resolve(std::vector<std::string>{"v=3", "a"}) == std::vector<Eigen::Index>{0, 2});
  CHECK_THROWS_AS(data.resolve(std::vector<std::string>{"nope"}), InvalidArgument);
  CHECK(data.complement(std::vector<Eigen::Index>{1}) == std::vector<Eigen::Index>{0, 2});
}

TEST_CASE("rank deficiency names the offending column") {
  std::mt19937_64 rng(2);
  auto inst = oracle::random_instance(rng, 50, 2);
  inst.data.x.col(1) = inst.data.x.col(0) * 3.0;
  try {
    fit_wls(inst.data, WeightSet::uniform(50));
    FAIL("expected RankDeficientError");
  } catch (const RankDeficientError& e) {
    REQUIRE_FALSE(e.columns().empty());
  }
}

TEST_CASE("DGP 1 with IPW-ATE weights recovers the null effect once Z is adjusted for") {
  DgpSpec spec;
  spec.n = 10000;
  spec.seed = 17;
  const SimDraw draw = generate(spec);
  MatrixXd xz(spec.n, 2);
  xz << draw.data.x, draw.z;
  const Dataset full = make_dataset(xz, draw.data.d, draw.data.y);
  const BuilderSpec ipw{WeightMethod::kIpw, Estimand::kAte, {"x1", "x2"}};
  const WlsFit adjusted = fit_wls(full, build_weights(ipw, full));
  CHECK(std::abs(adjusted.tau_hat) < 0.1);

  // Omitting Z leaves exactly the bias its parameters imply.
  const WlsFit naive = fit_wls(draw.data, build_weights(default_builder(WeightMethod::kIpw, Estimand::kAte), draw.data));
  const double target = fit_with_z(draw.data, draw.z, naive.weights).fit.tau_hat;
  CHECK(std::abs(target) < 0.1);
  CHECK(bias(params_from_z(draw.data, draw.z, naive), naive) == doctest::Approx(naive.tau_hat - target).epsilon(1e-9));
  CHECK(naive.tau_hat > 0.5);
}
