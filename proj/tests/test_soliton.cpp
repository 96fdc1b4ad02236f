#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shrinkerlab/soliton.hpp"

namespace sl = shrinkerlab;
using Vecd = sl::Vec<double>;

static double residual(const sl::Soliton& s,
                       sl::SolitonMode mode = sl::SolitonMode::shrinker) {
  return sl::soliton_residual(s, mode).lpNorm<Eigen::Infinity>();
}

TEST_CASE("round profile solves the shrinker equation to machine precision") {
  auto s = sl::build_sphere<double>(2, 1000);
  CHECK(s.kind == sl::SolitonKind::sphere);
  CHECK(s.topology == sl::Topology::axis_closed);
  CHECK(residual(s) < 1e-8);
  // points sit on the radius-2 circle and the curvature is n / rho
  for (Eigen::Index i = 0; i < s.size(); i += 97) {
    CHECK(std::hypot(s.x[i], s.r[i]) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.H[i] == doctest::Approx(1.0).epsilon(1e-10));
  }
  // doubling the grid keeps the residual at the same floor
  CHECK(residual(sl::build_sphere<double>(2, 2000)) < 1e-8);
}

TEST_CASE("cylinder profile is discrete-exact") {
  auto c = sl::build_cylinder<double>(2, 8.0, 400);
  CHECK(c.topology == sl::Topology::open);
  CHECK(residual(c) < 1e-10);
  CHECK(residual(sl::build_cylinder<double>(2, 8.0, 800)) < 1e-10);
  const double rad = std::sqrt(2.0);
  for (Eigen::Index i = 0; i < c.size(); i += 61) {
    CHECK(c.r[i] == doctest::Approx(rad).epsilon(1e-14));
    CHECK(c.H[i] == doctest::Approx(1.0 / rad).epsilon(1e-12));
  }
}

TEST_CASE("closed orbit search brackets the doughnut waist") {
  auto lo = sl::closure_defect<double>(2, 0.40, 1e-4);
  auto hi = sl::closure_defect<double>(2, 0.45, 1e-4);
  REQUIRE(lo.defect.has_value());
  REQUIRE(hi.defect.has_value());
  CHECK(*lo.defect < 0.0);
  CHECK(*hi.defect > 0.0);
  // orbits grazing the cylinder radius never close; the old bracket is rejected
  CHECK_THROWS_AS(sl::find_torus(2, 0.8, 1.2, 1e-6, 1e-4), sl::SearchFailure);
}

TEST_CASE("doughnut profile closes up and is mirror symmetric") {
  auto t = sl::find_torus(2, 0.4, 0.5, 1e-6, 1e-4);
  CHECK(t.topology == sl::Topology::periodic);
  CHECK(residual(t) < 1e-6);
  CHECK(t.r.minCoeff() == doctest::Approx(0.437124).epsilon(1e-4));
  CHECK(t.r.maxCoeff() == doctest::Approx(3.314708).epsilon(1e-4));
  const Eigen::Index m = t.size();
  double asym = 0.0;  // reflection through the plane crossing at node 0
  for (Eigen::Index i = 1; i < m; ++i) {
    asym = std::max(asym, std::abs(t.x[i] + t.x[m - i]));
    asym = std::max(asym, std::abs(t.r[i] - t.r[m - i]));
  }
  CHECK(asym == 0.0);  // assembly mirrors stored samples, no interpolation

  // resampling converges at better than second order
  const double r400 = residual(sl::resample(t, 400));
  const double r800 = residual(sl::resample(t, 800));
  CHECK(r400 / r800 >= 3.5);
}

TEST_CASE("rescaling is exact on the stored geometry") {
  auto s = sl::build_sphere<double>(2, 300);
  auto z = sl::rescale(s, 1.5);
  for (Eigen::Index i = 0; i < s.size(); i += 37) {
    CHECK(z.x[i] == doctest::Approx(1.5 * s.x[i]).epsilon(1e-14));
    CHECK(z.H[i] == doctest::Approx(s.H[i] / 1.5).epsilon(1e-10));
  }
  auto back = sl::rescale(z, 1.0 / 1.5);
  double drift = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    drift = std::max(drift, std::abs(back.r[i] - s.r[i]));
  CHECK(drift < 1e-10);
}

TEST_CASE("cone-asymptotic end decays at the expected rates") {
  auto ce = sl::conical_end(2, 1.0, 5.0, 50.0, 4e-3, sl::SolitonMode::shrinker);
  CHECK(ce.decay.slope_w == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(ce.decay.slope_wp == doctest::Approx(-2.0).epsilon(0.01));
  auto fine = sl::conical_end(2, 1.0, 5.0, 50.0, 2e-3, sl::SolitonMode::shrinker);
  CHECK(std::abs(fine.decay.slope_w + 1.0) <= std::abs(ce.decay.slope_w + 1.0) + 1e-9);

  auto ex = sl::conical_end(2, 1.0, 5.0, 50.0, 4e-3, sl::SolitonMode::expander);
  CHECK(ex.decay.slope_w == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(ex.decay.slope_wp == doctest::Approx(-2.0).epsilon(0.01));
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS_AS(sl::build_sphere<double>(2, 2), sl::ValidationError);
  CHECK_THROWS_AS(sl::build_cylinder<double>(2, -1.0, 100), sl::ValidationError);
  CHECK_THROWS_AS(sl::find_torus(2, 0.5, 0.4, 1e-6, 1e-4), sl::ValidationError);
}
