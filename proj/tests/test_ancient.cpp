#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <shrinkerlab/ancient.hpp>

#include <cmath>

namespace sl = shrinkerlab;

namespace {

Eigen::VectorXd coeffs(std::initializer_list<double> vals) {
  Eigen::VectorXd a(Eigen::Index(vals.size()));
  Eigen::Index i = 0;
  for (double v : vals) a[i++] = v;
  return a;
}

}  // namespace

TEST_CASE("seed construction validates its inputs and resolves the weight") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  REQUIRE(spec.I == 2);

  CHECK_THROWS_AS((void)sl::make_seed(spec, coeffs({1e-3})), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::make_seed(spec, coeffs({1e-3, 0, 0})), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::make_seed(spec, coeffs({1e-3, 0}), 2.0), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::make_seed(spec, coeffs({1e-3, 0}), -8.0, 4), sl::ValidationError);

  auto seed = sl::make_seed(spec, coeffs({1e-3, 0.0}));
  CHECK(seed.tau_grid.size() == 161);
  CHECK(seed.tau_grid[0] == -8.0);
  CHECK(seed.tau_grid[160] == 0.0);
  // default weight: half the last unstable eigenvalue, capped at one half
  CHECK(sl::resolve_delta0(seed) == doctest::Approx(0.25).epsilon(1e-6));

  seed.delta0 = 0.3;
  CHECK(sl::resolve_delta0(seed) == 0.3);
  seed.delta0 = 0.6;  // outside (0, -lambda_I)
  CHECK_THROWS_AS((void)sl::resolve_delta0(seed), sl::ValidationError);
}

TEST_CASE("backward mode expansion matches its closed form") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  auto seed = sl::make_seed(spec, coeffs({2e-3, -1e-3}));
  auto fam = sl::iota_minus(seed);

  REQUIRE(fam.taus.size() == 161);
  const Eigen::Index last = fam.taus.size() - 1;
  const Eigen::VectorXd expect0 = 2e-3 * spec.phis.col(0) - 1e-3 * spec.phis.col(1);
  CHECK((fam.u.col(last) - expect0).cwiseAbs().maxCoeff() <= 1e-15);

  // each unstable coefficient decays at its own grid rate toward the end
  auto grid2 = sl::build_weighted_grid(sph);
  for (int j = 0; j < 2; ++j) {
    const double got = sl::weighted_inner<double>(fam.u.col(0), spec.phis.col(j), grid2);
    const double want = seed.a[j] * std::exp(spec.lambdas_grid[j] * 8.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("mode-wise source solve maps zero to zero and checks weights") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  const Eigen::VectorXd taus = Eigen::VectorXd::LinSpaced(41, -4.0, 0.0);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Zero(120, 41);

  auto ls = sl::solve_linear(spec, taus, h, 0.25, 0.2);
  CHECK(ls.u.u.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ls.h_tail_max == 0.0);
  CHECK(ls.tail_bound.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS((void)sl::solve_linear(spec, taus, h, 0.25, 0.3), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::solve_linear(spec, taus, h, 0.25, 0.6), sl::ValidationError);
}

TEST_CASE("fixed point over the sphere converges quadratically fast") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  auto seed = sl::make_seed(spec, coeffs({1e-3, 0.0}));
  auto sol = sl::build_ancient(seed);

  CHECK(sol.converged);
  CHECK(sol.iterations <= 6);
  REQUIRE(sol.update_star.size() >= 2);
  for (size_t k = 1; k < sol.update_star.size(); ++k)
    CHECK(sol.update_star[k] <= 0.5 * sol.update_star[k - 1]);

  // the correction beyond the linear seed is quadratic in the amplitude
  const double mu1 = sol.correction_star / 1e-6;
  CHECK(mu1 == doctest::Approx(0.33987).epsilon(0.01));

  auto half = sl::build_ancient(sl::make_seed(spec, coeffs({5e-4, 0.0})));
  const double mu2 = half.correction_star / 2.5e-7;
  CHECK(std::abs(mu1 - mu2) / mu1 < 0.25);

  // an amplitude outside the contraction regime is rejected
  auto wild = sl::make_seed(spec, coeffs({0.5, 0.0}));
  CHECK_THROWS_AS((void)sl::build_ancient(wild), sl::ValidationError);
}

TEST_CASE("fixed point agrees with the forward march") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  auto seed = sl::make_seed(spec, coeffs({1e-3, 0.0}));
  auto sol = sl::build_ancient(seed);

  auto rep = sl::ancient_consistency_audit(sol, seed);
  CHECK(rep.passed);
  CHECK(rep.metric_value("relative_difference", 1.0) <= 5e-3);
  CHECK(rep.metric_value("family_star_norm") > 0.0);
}

TEST_CASE("torus family follows the sign of the leading coefficient") {
  auto torus = sl::resample(sl::find_torus<double>(2, 0.4, 0.5, 1e-6, 1e-4), 600);
  auto tgrid = sl::build_weighted_grid(torus);
  auto tspec = sl::eigensolve(torus, tgrid, 6);
  REQUIRE(tspec.I == 3);

  for (double sign : {1.0, -1.0}) {
    auto seed = sl::make_seed(tspec, coeffs({sign * 1e-3, 0.0, 0.0}));
    auto sol = sl::build_ancient(seed);
    CHECK(sol.converged);
    CHECK(sol.iterations <= 6);
    // the unstable coefficients at the final slice are pinned to the seed
    const Eigen::Index last = sol.fam.taus.size() - 1;
    const double a1 = sl::weighted_inner<double>(sol.fam.u.col(last), tspec.phis.col(0), tgrid);
    CHECK(a1 == doctest::Approx(sign * 1e-3).epsilon(1e-9));
  }
}
