#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <shrinkerlab/mode_dynamics.hpp>

#include <cmath>

namespace sl = shrinkerlab;

namespace {

sl::Trajectory run_sphere(const sl::Soliton& sph, double eps, double span, double dtau,
                          Eigen::Index stride) {
  sl::GraphState s0;
  s0.base = &sph;
  s0.u = Eigen::VectorXd::Constant(sph.size(), eps);
  sl::SimOptions so;
  so.record_every = stride;
  return sl::simulate(s0, span, dtau, so);
}

}  // namespace

TEST_CASE("mode tracks close the Pythagorean identity") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  auto traj = run_sphere(sph, 5e-4, 2.0, 1e-3, 50);

  auto tr = sl::track_modes(traj, spec, spec.lambdas[0]);
  REQUIRE(tr.taus.size() == Eigen::Index(traj.states.size()));
  for (Eigen::Index k = 0; k < tr.taus.size(); ++k) {
    const double lhs = tr.below[k] * tr.below[k] + tr.at[k] * tr.at[k] +
                       tr.above[k] * tr.above[k];
    const double rhs = tr.total[k] * tr.total[k];
    if (rhs > 0.0) CHECK(std::abs(lhs - rhs) / rhs <= 1e-8);
    if (k > 0) CHECK(tr.delta[k] >= tr.delta[k - 1]);  // running sup is monotone
  }

  auto other = sl::build_sphere<double>(2, 240);
  auto ogrid = sl::build_weighted_grid(other);
  auto ospec = sl::eigensolve(other, ogrid, 6);
  CHECK_THROWS_AS((void)sl::track_modes(traj, ospec, -1.0), sl::ValidationError);
}

TEST_CASE("dominant mode fit singles out the mean curvature direction") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  auto traj = run_sphere(sph, 5e-4, 6.5, 1e-3, 5);
  REQUIRE(traj.stop == sl::StopCause::graphicality_lost);

  std::vector<sl::ModeTrack> tracks;
  for (double mu : {spec.lambdas[0], spec.lambdas[1], 0.0})
    tracks.push_back(sl::track_modes(traj, spec, mu));

  // delta0 = 0.05 keeps the window nearly linear (the quadratic correction to
  // the concentric solution is u/4 at the window edge) with 4.6 e-foldings
  auto fit = sl::dominant_mode_fit(tracks, 0.05);
  REQUIRE(fit.applicable);
  CHECK(!fit.ambiguous);
  CHECK(fit.mu_star == spec.lambdas[0]);
  CHECK(std::abs(fit.rate - 1.0) <= 0.01);  // log-norm slope matches -lambda1
  REQUIRE(fit.residuals.size() == 3);

  // the amplitude bracket matches the closed-form concentric solution
  const double C = (2.0 + 5e-4) * (2.0 + 5e-4) - 4.0;
  const double alpha_pred = (C / 4.0) * std::sqrt(4.0 / std::exp(1.0));
  const double mid = 0.5 * (fit.alpha_lo + fit.alpha_hi);
  CHECK(fit.alpha_hi >= fit.alpha_lo);
  CHECK(std::abs(mid - alpha_pred) / alpha_pred <= 0.02);

  // a short window has too few e-foldings to classify anything
  auto brief = run_sphere(sph, 5e-4, 1.0, 1e-3, 5);
  std::vector<sl::ModeTrack> short_tracks{sl::track_modes(brief, spec, spec.lambdas[0])};
  CHECK(!sl::dominant_mode_fit(short_tracks, 0.05).applicable);
}

TEST_CASE("one-sided decay audit recovers the first-mode amplitude") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);
  auto traj = run_sphere(sph, 5e-4, 6.5, 1e-3, 5);

  auto rep = sl::one_sided_decay_audit(traj, spec, 0.05);
  CHECK(rep.passed);
  CHECK(rep.metric_value("side") == 1.0);
  const double C = (2.0 + 5e-4) * (2.0 + 5e-4) - 4.0;
  const double alpha_pred = (C / 4.0) * std::sqrt(4.0 / std::exp(1.0));
  CHECK(std::abs(rep.metric_value("alpha1") - alpha_pred) / alpha_pred <= 0.02);

  // sign-mixed data is rejected outright
  sl::GraphState mixed;
  mixed.base = &sph;
  mixed.u.resize(120);
  for (int i = 0; i < 120; ++i) mixed.u[i] = 5e-4 * std::cos(2.0 * M_PI * i / 120.0);
  sl::Trajectory fake;
  fake.states.push_back(mixed);
  auto bad = sl::one_sided_decay_audit(fake, spec, 0.05);
  CHECK(!bad.passed);
}

TEST_CASE("subordination audit passes with a refined companion") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto grid = sl::build_weighted_grid(sph);
  auto spec = sl::eigensolve(sph, grid, 6);

  auto coarse = run_sphere(sph, 5e-4, 6.5, 1e-3, 5);
  auto fine = run_sphere(sph, 5e-4, 6.5, 5e-4, 10);
  auto tr_c = sl::track_modes(coarse, spec, spec.lambdas[0]);
  auto tr_f = sl::track_modes(fine, spec, spec.lambdas[0]);

  auto rep = sl::merle_zaag_audit(tr_c, &tr_f, 0.25);
  CHECK(rep.passed);
  CHECK(rep.has_flag("mu_dominant"));
  CHECK(rep.metric_value("drift_stable", 1.0) < 0.25);
  CHECK(rep.metric_value("drift_alternative", 1.0) < 0.25);

  auto solo = sl::merle_zaag_audit(tr_c, static_cast<const sl::ModeTrack*>(nullptr), 0.25);
  CHECK(solo.passed);
  CHECK(solo.has_flag("no_refinement_companion"));
}

TEST_CASE("unstable torus dynamics are classified as low-mode dominated") {
  auto torus = sl::resample(sl::find_torus<double>(2, 0.4, 0.5, 1e-6, 1e-4), 600);
  auto grid = sl::build_weighted_grid(torus);
  auto spec = sl::eigensolve(torus, grid, 6);
  REQUIRE(spec.lambdas[0] == doctest::Approx(-3.739762).epsilon(1e-4));

  // seed on the ground mode, scaled to a small graph norm, oriented outward
  Eigen::VectorXd phi = spec.phis.col(0);
  if (phi.sum() < 0.0) phi = -phi;
  const double scale = 5e-4 / sl::weighted_norm(torus, phi, 2, 1.0);
  sl::GraphState s0;
  s0.base = &torus;
  s0.u = scale * phi;

  sl::SimOptions so;
  so.record_every = 20;
  auto traj = sl::simulate(s0, 1.1, 6e-5, so);

  std::vector<sl::ModeTrack> tracks;
  for (double mu : {spec.lambdas[0], spec.lambdas[1], spec.lambdas[2], 0.0})
    tracks.push_back(sl::track_modes(traj, spec, mu));
  auto fit = sl::dominant_mode_fit(tracks);
  REQUIRE(fit.applicable);
  CHECK(fit.mu_star == spec.lambdas[0]);
  CHECK(std::abs(fit.rate - (-spec.lambdas[0])) / (-spec.lambdas[0]) <= 0.05);

  // against threshold 0 every mode of the seed is a low mode
  auto mz = sl::merle_zaag_audit(tracks.back());
  CHECK(mz.passed);
  CHECK(mz.has_flag("unstable_dominant"));
  CHECK(mz.metric_value("c_stable") < 0.5);
}
