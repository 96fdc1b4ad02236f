#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <shrinkerlab/spectrum.hpp>

#include <cmath>

namespace sl = shrinkerlab;

TEST_CASE("sphere spectrum matches the closed-form rotational modes") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);

  REQUIRE(spec.count() == 6);
  const double exact[6] = {-1.0, -0.5, 0.5, 2.0, 4.0, 6.5};
  for (int j = 0; j < 6; ++j) CHECK(std::abs(spec.lambdas[j] - exact[j]) <= 1e-4);
  CHECK(spec.I == 2);
  CHECK(spec.K == 0);

  // Richardson pairing should tighten, not distort, the raw grid values.
  for (int j = 0; j < 6; ++j)
    CHECK(std::abs(spec.lambdas[j] - spec.lambdas_grid[j]) <= 2e-2);
}

TEST_CASE("truncated cylinder spectrum approximates the half-integer ladder") {
  auto cyl = sl::build_cylinder<double>(2, 8.0, 400);
  auto grid = sl::build_weighted_grid(cyl);
  auto spec = sl::eigensolve(cyl, grid, 5);

  REQUIRE(spec.count() == 5);
  const double exact[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  for (int j = 0; j < 5; ++j) CHECK(std::abs(spec.lambdas[j] - exact[j]) <= 6e-3);
  CHECK(spec.I == 2);
  CHECK(spec.K == 0);  // the near-kernel translation mode sits just above the window
  CHECK(spec.grid.boundary == sl::GridBoundary::dirichlet);

  auto rep = sl::eigen_decay_check(spec, 1.0);
  CHECK(rep.passed);
  const double slope = rep.metric_value("slope");
  CHECK(slope >= rep.metric_value("window_lo"));
  CHECK(slope <= rep.metric_value("window_hi"));
}

TEST_CASE("embedded torus has exactly three unstable directions") {
  auto torus = sl::resample(sl::find_torus<double>(2, 0.4, 0.5, 1e-6, 1e-4), 600);
  auto grid = sl::build_weighted_grid(torus);
  auto spec = sl::eigensolve(torus, grid, 6);

  REQUIRE(spec.count() == 6);
  const double frozen[6] = {-3.739762, -1.0, -0.5, 0.991994, 1.297690, 4.470905};
  for (int j = 0; j < 6; ++j) CHECK(std::abs(spec.lambdas[j] - frozen[j]) <= 1e-4);
  CHECK(spec.I == 3);
  CHECK(spec.lambdas[0] < -1.5);  // strictly below the mean curvature mode
}

TEST_CASE("eigenfunctions are orthonormal in the Gaussian inner product") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 6; ++k) {
      const double ip = sl::weighted_inner<double>(spec.phis.col(j), spec.phis.col(k), grid);
      CHECK(std::abs(ip - (j == k ? 1.0 : 0.0)) <= 1e-8);
    }
}

TEST_CASE("mean curvature and axial normal component are eigenfields") {
  auto check_identities = [](const sl::Soliton& sol, bool axial_trivial) {
    auto grid = sl::build_weighted_grid(sol);
    const Eigen::VectorXd H = sol.H;
    const Eigen::VectorXd LH = sl::apply_L(sol, grid, H);
    Eigen::VectorXd resH = LH - H;
    const Eigen::VectorXd nu = sol.nu_x;
    Eigen::VectorXd resN = sl::apply_L(sol, grid, nu) - 0.5 * nu;
    if (grid.boundary == sl::GridBoundary::dirichlet) {
      // apply_L reports the zero extension on boundary rows; compare there too.
      resH[0] = resH[resH.size() - 1] = 0.0;
      resN[0] = resN[resN.size() - 1] = 0.0;
    }
    const double hrel = sl::weighted_norm_L2(resH, grid) / sl::weighted_norm_L2(H, grid);
    CHECK(hrel <= 1e-3);
    if (axial_trivial) {
      CHECK(nu.cwiseAbs().maxCoeff() <= 1e-14);
      CHECK(sl::weighted_norm_L2(resN, grid) <= 1e-12);
    } else {
      CHECK(sl::weighted_norm_L2(resN, grid) <= 1e-3);
    }
  };

  check_identities(sl::build_sphere<double>(2, 1000), false);
  check_identities(sl::build_cylinder<double>(2, 8.0, 400), true);
  check_identities(sl::resample(sl::find_torus<double>(2, 0.4, 0.5, 1e-6, 1e-4), 600), false);
}

TEST_CASE("spectral projections split a synthetic field exactly") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);

  const Eigen::VectorXd u = 0.3 * spec.phis.col(0) + 0.2 * spec.phis.col(3);
  const Eigen::VectorXd lo = sl::project<double>(spec, u, sl::SpectralRelation::lt, 0.0);
  const Eigen::VectorXd hi = sl::project<double>(spec, u, sl::SpectralRelation::gt, 0.0);
  CHECK((lo - 0.3 * spec.phis.col(0)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((hi - 0.2 * spec.phis.col(3)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((lo + hi - u).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(sl::projection_tail(spec, u) <= 1e-8);

  auto ik = sl::index_and_kernel(spec);
  CHECK(ik.I == spec.I);
  CHECK(ik.K == spec.K);

  // Widening the kernel window reclassifies modes without recomputing them.
  auto wide = spec;
  wide.kappa_kernel = 0.6;
  auto ikw = sl::index_and_kernel(wide);
  CHECK(ikw.I == 1);
  CHECK(ikw.K == 2);
}

TEST_CASE("discrete operator is self-adjoint on every base") {
  auto run = [](const sl::Soliton& sol) {
    auto grid = sl::build_weighted_grid(sol);
    auto rep = sl::selfadjoint_check(sol, grid, 10);
    CHECK(rep.passed);
    CHECK(rep.metric_value("worst_relative_defect", 1.0) <= 1e-8);
  };
  run(sl::build_sphere<double>(2, 120));
  run(sl::build_cylinder<double>(2, 8.0, 400));
  run(sl::resample(sl::find_torus<double>(2, 0.4, 0.5, 1e-6, 1e-4), 600));
}

TEST_CASE("invalid spectral requests are rejected") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);

  CHECK_THROWS_AS((void)sl::eigensolve(sph, grid, 0), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::eigensolve(sph, grid, 500), sl::ValidationError);

  auto tiny = sl::build_sphere<double>(2, 20);
  auto tgrid = sl::build_weighted_grid(tiny);
  CHECK_THROWS_AS((void)sl::eigensolve(tiny, tgrid, 3), sl::ValidationError);

  auto big = sl::build_sphere<double>(2, 2500);
  auto bgrid = sl::build_weighted_grid(big);
  CHECK_THROWS_AS((void)sl::eigensolve(big, bgrid, 3), sl::ValidationError);

  Eigen::VectorXd wrong = Eigen::VectorXd::Zero(7);
  CHECK_THROWS_AS((void)sl::apply_L(sph, grid, wrong), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::weighted_inner<double>(wrong, wrong, grid), sl::ValidationError);

  auto spec = sl::eigensolve(sph, grid, 3);
  CHECK_THROWS_AS((void)sl::eigen_decay_check(spec, 1.0), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::selfadjoint_check(sph, grid, 0), sl::ValidationError);
}
