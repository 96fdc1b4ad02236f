#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <shrinkerlab/graph_flow.hpp>

#include <cmath>

namespace sl = shrinkerlab;

TEST_CASE("zero offset is an exact discrete equilibrium") {
  auto sph = sl::build_sphere<double>(2, 120);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(120);

  CHECK(sl::flow_speed(sph, zero).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sl::error_term(sph, zero).cwiseAbs().maxCoeff() == 0.0);

  sl::GraphState s0;
  s0.base = &sph;
  s0.u = zero;
  auto traj = sl::simulate(s0, 0.05, 1e-3);
  CHECK(traj.stop == sl::StopCause::completed);
  CHECK(traj.states.back().u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant radial offset reproduces the concentric-sphere error term") {
  // A radius-2 base pushed out by u = 0.1 is the concentric sphere of radius
  // 2.1; the quasilinear remainder there is known in closed form.
  const double exact = -2.0 / 2.1 + 1.05 - 0.1;
  double dev500 = 0.0, dev1000 = 0.0;
  for (int m : {500, 1000}) {
    auto sph = sl::build_sphere<double>(2, m);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(m, 0.1);
    const double dev = (sl::error_term(sph, u).array() - exact).abs().maxCoeff();
    (m == 500 ? dev500 : dev1000) = dev;
  }
  CHECK(dev1000 <= 2e-8);
  CHECK(dev500 / dev1000 >= 3.5);  // second order in the node spacing
}

TEST_CASE("error term vanishes on pinned boundary rows") {
  auto cyl = sl::build_cylinder<double>(2, 8.0, 400);
  Eigen::VectorXd u(400);
  for (int i = 0; i < 400; ++i) u[i] = 0.01 * std::cos(M_PI * cyl.x[i] / 16.0);
  const Eigen::VectorXd E = sl::error_term(cyl, u);
  CHECK(E[0] == 0.0);
  CHECK(E[399] == 0.0);
  CHECK(E.segment(1, 398).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("weighted norms follow their definition on simple fields") {
  auto sph = sl::build_sphere<double>(2, 200);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(200, 0.03);

  CHECK(sl::weighted_norm(sph, u, 0, 0.0) == doctest::Approx(0.03).epsilon(1e-14));
  const double rmax = sph.rtilde.maxCoeff();
  CHECK(sl::weighted_norm(sph, u, 0, -1.0) == doctest::Approx(0.03 * rmax).epsilon(1e-14));
  // the discrete gradient and Hessian of a constant vanish identically
  CHECK(sl::weighted_norm(sph, u, 2, 1.0) ==
        doctest::Approx(0.03 * std::pow(sph.rtilde.minCoeff(), -1.0)).epsilon(1e-14));
  CHECK_THROWS_AS((void)sl::weighted_norm(sph, u, 3, 0.0), sl::ValidationError);
}

TEST_CASE("graphicality threshold scales inversely with base curvature") {
  auto sph = sl::build_sphere<double>(2, 120);
  auto cyl = sl::build_cylinder<double>(2, 8.0, 400);
  CHECK(std::abs(sl::graphicality_threshold(sph) - 0.2) <= 1e-12);
  CHECK(std::abs(sl::graphicality_threshold(cyl) - 0.1 * std::sqrt(2.0)) <= 1e-12);

  Eigen::VectorXd big = Eigen::VectorXd::Constant(120, 0.25);
  CHECK_THROWS_AS((void)sl::normal_graph(sph, big), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::flow_speed(sph, big), sl::ValidationError);
}

TEST_CASE("time step must respect the explicit-remainder stability bound") {
  auto sph = sl::build_sphere<double>(2, 120);
  const double bound = sl::dtau_stability_bound(sph);
  CHECK(bound == doctest::Approx(0.4 * sph.ds * sph.ds).epsilon(1e-15));

  sl::GraphState s0;
  s0.base = &sph;
  s0.u = Eigen::VectorXd::Constant(120, 0.01);
  CHECK_THROWS_AS((void)sl::simulate(s0, 1.0, 2.0 * bound), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::simulate(s0, -1.0, 1e-3), sl::ValidationError);
  CHECK_THROWS_AS((void)sl::simulate(s0, 1e-9, 1e-3), sl::ValidationError);
}

TEST_CASE("outward sphere flow tracks the exact concentric solution") {
  auto sph = sl::build_sphere<double>(2, 120);
  sl::GraphState s0;
  s0.base = &sph;
  s0.u = Eigen::VectorXd::Constant(120, 0.01);
  auto traj = sl::simulate(s0, 2.0, 1e-3);
  REQUIRE(traj.stop == sl::StopCause::completed);

  const double C = 2.01 * 2.01 - 4.0;
  double worst_rel = 0.0, worst_spread = 0.0;
  for (const auto& st : traj.states) {
    if (st.tau == 0.0) continue;
    const double exact = std::sqrt(4.0 + C * std::exp(st.tau)) - 2.0;
    worst_rel = std::max(worst_rel, std::abs(st.u.mean() - exact) / exact);
    worst_spread = std::max(worst_spread, st.u.maxCoeff() - st.u.minCoeff());
  }
  CHECK(worst_rel <= 0.01);        // matches the closed form to one percent
  CHECK(worst_spread <= 1e-12);    // rotational symmetry is preserved exactly
}

TEST_CASE("runs stop when the graphical regime is lost") {
  auto sph = sl::build_sphere<double>(2, 120);
  sl::GraphState s0;
  s0.base = &sph;
  s0.u = Eigen::VectorXd::Constant(120, 0.01);
  auto traj = sl::simulate(s0, 6.0, 1e-3);
  CHECK(traj.stop == sl::StopCause::graphicality_lost);
  CHECK(traj.stop_tau == doctest::Approx(3.040).epsilon(1e-6));
  CHECK(traj.steps == 3040);

  // a wider explicit threshold lets the same run continue past that time
  sl::SimOptions so;
  so.graph.eta_graph = 0.28;
  auto wide = sl::simulate(s0, 6.0, 1e-3, so);
  CHECK(wide.stop_tau > 3.3);
}

TEST_CASE("one-sided runs keep or report their sign") {
  auto sph = sl::build_sphere<double>(2, 120);
  sl::GraphState pos;
  pos.base = &sph;
  pos.side = 1;
  pos.u = Eigen::VectorXd::Constant(120, 0.01);
  auto traj = sl::simulate(pos, 2.0, 1e-3);
  CHECK(traj.stop == sl::StopCause::completed);
  for (const auto& st : traj.states) CHECK(st.u.minCoeff() > 0.0);

  // mixed-sign data violates the declared side on the first step
  sl::GraphState mixed;
  mixed.base = &sph;
  mixed.side = 1;
  mixed.u.resize(120);
  for (int i = 0; i < 120; ++i) mixed.u[i] = 5e-3 * std::cos(2.0 * M_PI * i / 120.0);
  auto bad = sl::simulate(mixed, 1.0, 1e-3);
  CHECK(bad.stop == sl::StopCause::sign_lost);
  CHECK(bad.steps == 0);
  CHECK(bad.states.size() == 1);
}

TEST_CASE("recording stride does not change the dynamics") {
  auto sph = sl::build_sphere<double>(2, 120);
  sl::GraphState s0;
  s0.base = &sph;
  s0.u = Eigen::VectorXd::Constant(120, 0.01);
  auto fine = sl::simulate(s0, 1.0, 1e-3);
  sl::SimOptions so;
  so.record_every = 7;
  auto coarse = sl::simulate(s0, 1.0, 1e-3, so);
  CHECK(coarse.states.size() < fine.states.size());
  CHECK(coarse.states.back().tau == fine.states.back().tau);
  CHECK((coarse.states.back().u - fine.states.back().u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean convexity audit distinguishes constrained runs") {
  auto sph = sl::build_sphere<double>(2, 120);
  sl::GraphState s0;
  s0.base = &sph;
  s0.u = Eigen::VectorXd::Constant(120, 0.01);

  auto free_run = sl::simulate(s0, 1.0, 1e-3, {{}, 50});
  auto mc0 = sl::shrinker_mean_convexity(free_run);
  CHECK(mc0.report.has_flag("not_one_sided"));

  s0.side = 1;
  auto pos_run = sl::simulate(s0, 1.0, 1e-3, {{}, 50});
  auto mc1 = sl::shrinker_mean_convexity(pos_run);
  CHECK(mc1.report.passed);
  CHECK(!mc1.report.has_flag("not_one_sided"));
  REQUIRE(mc1.value.size() == mc1.taus.size());
  REQUIRE(mc1.speed.size() == mc1.taus.size());

  s0.side = -1;
  s0.u = Eigen::VectorXd::Constant(120, -0.01);
  auto neg_run = sl::simulate(s0, 1.0, 1e-3, {{}, 50});
  auto mc2 = sl::shrinker_mean_convexity(neg_run);
  CHECK(mc2.report.passed);
}

TEST_CASE("time conventions place the rescaling consistently") {
  sl::TimeMap ancient;
  CHECK(ancient.t_of(0.0) == -1.0);
  CHECK(ancient.t_of(2.0) == doctest::Approx(-std::exp(-2.0)).epsilon(1e-15));
  CHECK(ancient.scale_of(2.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  sl::TimeMap fwd{sl::TimeConvention::forward};
  CHECK(fwd.t_of(0.0) == -1.0);
  CHECK(fwd.t_of(1.0) == doctest::Approx(-std::exp(1.0)).epsilon(1e-15));
}
