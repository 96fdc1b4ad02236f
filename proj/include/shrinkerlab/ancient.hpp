#pragma once
// Construction of the ancient families emanating from a soliton along its
// unstable modes: the backward mode expansion, the two-sided Duhamel solve of
// the linearized equation in a weighted exponential norm, and the fixed-point
// iteration whose limit is the ancient solution with prescribed asymptotics.

#include <cmath>
#include <string>
#include <vector>

#include "shrinkerlab/core.hpp"
#include "shrinkerlab/graph_flow.hpp"
#include "shrinkerlab/soliton.hpp"
#include "shrinkerlab/spectrum.hpp"

namespace shrinkerlab {

// Prescribed data of one member of the family: coefficients a of the unstable
// modes, the spectrum they refer to, and the backward time grid.  delta0 sets
// the exponential weight of the star norm and must sit inside (0, -lambda_I).
template <class S>
struct AncientSeedT {
  Vec<S> a;            // one coefficient per unstable mode, |a| small
  SpectrumT<S> spec;
  S tau_min = S(-8);
  Vec<S> tau_grid;     // ascending, ends at 0
  S delta0 = S(0);     // 0 = choose min(-lambda_I / 2, 1/2)
  S eta_star = S(0.05);  // contraction-regime radius in the star norm
};
using AncientSeed = AncientSeedT<double>;

//u over the backward grid, one column of node values per grid time.
template <class S>
struct AncientFamilyT {
  Vec<S> taus;
  Mat<S> u;
};
using AncientFamily = AncientFamilyT<double>;

template <class S>
S resolve_delta0(const AncientSeedT<S>& seed) {
  require(seed.spec.I >= 1, "ancient seed: spectrum has no unstable modes");
  const S lamI = seed.spec.lambdas[seed.spec.I - 1];
  if (seed.delta0 > S(0)) {
    require(seed.delta0 < -lamI, "ancient seed: delta0 must sit inside (0, -lambda_I)");
    return seed.delta0;
  }
  return std::min(-lamI / S(2), S(0.5));
}

template <class S>
AncientSeedT<S> make_seed(const SpectrumT<S>& spec, const Vec<S>& a, S tau_min = S(-8),
                          Eigen::Index nt = 161) {
  require(a.size() == spec.I, "make_seed: one coefficient per unstable mode");
  require(tau_min < S(0) && nt >= 8, "make_seed: need tau_min < 0 and a real grid");
  AncientSeedT<S> seed;
  seed.a = a;
  seed.spec = spec;
  seed.tau_min = tau_min;
  seed.tau_grid = Vec<S>::LinSpaced(nt, tau_min, S(0));
  seed.delta0 = resolve_delta0(seed);
  return seed;
}

// Backward mode expansion iota_-(a)(tau) = sum_j a_j e^{-lambda_j tau} phi_j:
// each unstable mode decays toward tau -> -infinity.
template <class S>
AncientFamilyT<S> iota_minus(const AncientSeedT<S>& seed) {
  const auto& spec = seed.spec;
  require(seed.a.size() == spec.I, "iota_minus: one coefficient per unstable mode");
  AncientFamilyT<S> fam;
  fam.taus = seed.tau_grid;
  fam.u = Mat<S>::Zero(spec.phis.rows(), seed.tau_grid.size());
  // grid eigenvalues keep the expansion an exact solution of the discrete
  // linear flow, so the fixed-point map closes at grid level
  for (Eigen::Index k = 0; k < fam.taus.size(); ++k)
    for (int j = 0; j < spec.I; ++j)
      fam.u.col(k) +=
          seed.a[j] * std::exp(-spec.lambdas_grid[j] * fam.taus[k]) * spec.phis.col(j);
  return fam;
}

// Grid tau-derivative of a family: centered in the interior, one-sided ends.
template <class S>
Mat<S> family_tau_derivative(const AncientFamilyT<S>& fam) {
  const Eigen::Index nt = fam.taus.size();
  require(nt >= 3, "family_tau_derivative: need at least 3 grid times");
  Mat<S> d(fam.u.rows(), nt);
  d.col(0) = (fam.u.col(1) - fam.u.col(0)) / (fam.taus[1] - fam.taus[0]);
  for (Eigen::Index k = 1; k + 1 < nt; ++k)
    d.col(k) = (fam.u.col(k + 1) - fam.u.col(k - 1)) / (fam.taus[k + 1] - fam.taus[k - 1]);
  d.col(nt - 1) =
      (fam.u.col(nt - 1) - fam.u.col(nt - 2)) / (fam.taus[nt - 1] - fam.taus[nt - 2]);
  return d;
}

// Per-time weight e^{-delta0 tau} (||u||_2^(1) + ||d_tau u||_0^(-1)).
template <class S>
Vec<S> star_track(const SolitonT<S>& base, const AncientFamilyT<S>& fam, S delta0) {
  const Mat<S> ut = family_tau_derivative(fam);
  Vec<S> track(fam.taus.size());
  for (Eigen::Index k = 0; k < fam.taus.size(); ++k) {
    const S a = weighted_norm(base, fam.u.col(k).eval(), 2, S(1));
    const S b = weighted_norm(base, ut.col(k).eval(), 0, S(-1));
    track[k] = std::exp(-delta0 * fam.taus[k]) * (a + b);
  }
  return track;
}

template <class S>
S star_norm(const SolitonT<S>& base, const AncientFamilyT<S>& fam, S delta0) {
  return star_track(base, fam, delta0).maxCoeff();
}

template <class S>
struct LinearSolveT {
  AncientFamilyT<S> u;
  Vec<S> tail_bound;  // per mode: bound on the dropped (-inf, tau_min] mass
  S h_tail_max = S(0);  // largest content of h beyond the computed modes
};
using LinearSolve = LinearSolveT<double>;

// Two-sided Duhamel solve of d_tau u = L u + h on the backward grid, mode by
// mode: unstable modes integrate back from u_j(0) = 0, the rest integrate up
// from tau = -infinity, so P_{<0} u(0) = 0 by construction.  h must decay
// like e^{delta tau}; the neglected tail of the upward integrals is bounded
// by the measured growth constant times e^{(lambda_j + delta) tau_min} and
// recorded per mode.  delta_p is the weight the caller will measure u in.
template <class S>
LinearSolveT<S> solve_linear(const SpectrumT<S>& spec, const Vec<S>& taus, const Mat<S>& h,
                             S delta, S delta_p) {
  const Eigen::Index nt = taus.size();
  const Eigen::Index nmode = spec.count();
  require(h.rows() == spec.phis.rows() && h.cols() == nt,
          "solve_linear: h must hold one node column per grid time");
  require(nt >= 3, "solve_linear: need at least 3 grid times");
  const S lamI = spec.lambdas[spec.I - 1];
  require(delta > S(0) && delta_p > S(0) && delta_p < std::min(delta, -lamI),
          "solve_linear: need 0 < delta_p < min(delta, -lambda_I)");

  LinearSolveT<S> out;
  out.u.taus = taus;
  out.u.u = Mat<S>::Zero(h.rows(), nt);
  out.tail_bound = Vec<S>::Zero(nmode);

  // mode coefficients of h on the grid, and the tail beyond the basis
  Mat<S> hc(nmode, nt);
  for (Eigen::Index k = 0; k < nt; ++k) {
    for (Eigen::Index j = 0; j < nmode; ++j)
      hc(j, k) = weighted_inner<S>(h.col(k), spec.phis.col(j), spec.grid);
    out.h_tail_max = std::max(out.h_tail_max, projection_tail(spec, h.col(k).eval()));
  }

  Mat<S> uc = Mat<S>::Zero(nmode, nt);
  for (Eigen::Index j = 0; j < nmode; ++j) {
    const S lam = spec.lambdas_grid[j];
    if (j < spec.I) {
      // u_j(tau) = -int_tau^0 e^{lambda_j (sigma - tau)} h_j(sigma) dsigma
      uc(j, nt - 1) = S(0);
      for (Eigen::Index k = nt - 2; k >= 0; --k) {
        const S dt = taus[k + 1] - taus[k];
        const S g = std::exp(lam * dt);
        uc(j, k) = g * uc(j, k + 1) - dt / S(2) * (hc(j, k) + g * hc(j, k + 1));
      }
    } else {
      // u_j(tau) = int_{-inf}^tau e^{lambda_j (sigma - tau)} h_j(sigma) dsigma
      uc(j, 0) = S(0);
      for (Eigen::Index k = 1; k < nt; ++k) {
        const S dt = taus[k] - taus[k - 1];
        const S g = std::exp(-lam * dt);
        uc(j, k) = g * uc(j, k - 1) + dt / S(2) * (g * hc(j, k - 1) + hc(j, k));
      }
      // growth constant of h_j in the weight e^{delta tau}
      S cj = S(0);
      for (Eigen::Index k = 0; k < nt; ++k)
        cj = std::max(cj, std::abs(hc(j, k)) * std::exp(-delta * taus[k]));
      out.tail_bound[j] = cj * std::exp((lam + delta) * taus[0]) / (lam + delta);
    }
  }
  for (Eigen::Index k = 0; k < nt; ++k)
    for (Eigen::Index j = 0; j < nmode; ++j)
      out.u.u.col(k) += uc(j, k) * spec.phis.col(j);
  return out;
}

// One application of the fixed-point map: S(u) = iota_-(a) + Duhamel(E(u)).
template <class S>
AncientFamilyT<S> contract_once(const AncientSeedT<S>& seed, const AncientFamilyT<S>& fam,
                                LinearSolveT<S>* diag = nullptr) {
  const auto& spec = seed.spec;
  const S delta0 = resolve_delta0(seed);
  require(star_norm(spec.base, fam, delta0) <= seed.eta_star,
          "contract_once: family leaves the contraction regime");
  const Eigen::Index nt = fam.taus.size();

  const WeightedGridT<S> grid = build_weighted_grid(spec.base);
  const SpeedBaseT<S> bcache = speed_base(spec.base);
  Mat<S> h(fam.u.rows(), nt);
  for (Eigen::Index k = 0; k < nt; ++k)
    h.col(k) = error_term(spec.base, fam.u.col(k).eval(), GraphOptionsT<S>{}, &grid, &bcache);

  auto lin = solve_linear(spec, fam.taus, h, S(2) * delta0, delta0);
  AncientFamilyT<S> next = iota_minus(seed);
  next.u += lin.u.u;
  if (diag) *diag = std::move(lin);
  return next;
}

template <class S>
struct AncientSolutionT {
  AncientFamilyT<S> fam;
  std::vector<S> update_star;  // star norm of successive differences
  int iterations = 0;
  bool converged = false;
  S correction_star = S(0);  // ||S(a) - iota_-(a)||_*
  Vec<S> tail_bound;
  S h_tail_max = S(0);
};
using AncientSolution = AncientSolutionT<double>;

// Fixed-point construction of the family member with asymptotics iota_-(a).
template <class S>
AncientSolutionT<S> build_ancient(const AncientSeedT<S>& seed, int max_iter = 12,
                                  S tol = S(1e-12)) {
  const S delta0 = resolve_delta0(seed);
  const auto& base = seed.spec.base;
  AncientSolutionT<S> out;
  out.fam = iota_minus(seed);
  const AncientFamilyT<S> first = out.fam;
  for (int it = 0; it < max_iter; ++it) {
    LinearSolveT<S> diag;
    AncientFamilyT<S> next = contract_once(seed, out.fam, &diag);
    AncientFamilyT<S> diff{next.taus, (next.u - out.fam.u).eval()};
    const S upd = star_norm(base, diff, delta0);
    out.update_star.push_back(upd);
    out.fam = std::move(next);
    out.iterations = it + 1;
    out.tail_bound = diag.tail_bound;
    out.h_tail_max = diag.h_tail_max;
    const S scale = std::max(S(1e-9), star_norm(base, out.fam, delta0));
    if (upd <= std::max(tol, S(1e-9) * scale)) {
      out.converged = true;
      break;
    }
  }
  AncientFamilyT<S> corr{out.fam.taus, (out.fam.u - first.u).eval()};
  out.correction_star = star_norm(base, corr, delta0);
  if (!out.converged) throw SearchFailure("build_ancient: fixed point did not converge");
  return out;
}

// Consistency of the fixed point with the forward march: restart the flow
// from the earliest slice and compare over the whole window, relative to the
// size of the family, in the same exponentially weighted measure.
template <class S>
AuditReport ancient_consistency_audit(const AncientSolutionT<S>& sol,
                                      const AncientSeedT<S>& seed, S rel_tol = S(0.05)) {
  AuditReport rep{"ancient_consistency"};
  const auto& base = seed.spec.base;
  const S delta0 = resolve_delta0(seed);
  const Eigen::Index nt = sol.fam.taus.size();

  GraphStateT<S> st;
  st.base = &base;
  st.tau = sol.fam.taus[0];
  st.u = sol.fam.u.col(0);
  const S bound = dtau_stability_bound(base);
  const S span = -sol.fam.taus[0];
  const long nsteps = long(std::ceil(span / (S(0.9) * bound)));
  const S dtau = span / S(nsteps);
  SimOptionsT<S> so;
  so.record_every = std::max<Eigen::Index>(1, nsteps / (4 * (nt - 1)));
  auto traj = simulate(st, span, dtau, so);
  if (traj.stop != StopCause::completed) {
    rep.fail(std::string("forward march stopped early: ") + to_string(traj.stop));
    return rep;
  }

  // compare at the recorded times against the linearly interpolated family
  S worst = S(0);
  const S scale = star_norm(base, sol.fam, delta0);
  for (const auto& rec : traj.states) {
    const S tau = rec.tau;
    Eigen::Index k = 1;
    while (k < nt - 1 && sol.fam.taus[k] < tau) ++k;
    const S t0 = sol.fam.taus[k - 1], t1 = sol.fam.taus[k];
    const S w = (tau - t0) / (t1 - t0);
    Vec<S> ref = (S(1) - w) * sol.fam.u.col(k - 1) + w * sol.fam.u.col(k);
    const S d = weighted_norm(base, (rec.u - ref).eval(), 2, S(1));
    worst = std::max(worst, std::exp(-delta0 * tau) * d);
  }
  rep.metric("worst_weighted_difference", double(worst));
  rep.metric("family_star_norm", double(scale));
  rep.metric("relative_difference", double(worst / std::max(scale, S(1e-300))));
  if (!(worst <= rel_tol * scale)) rep.fail("forward march departs from the fixed point");
  return rep;
}

}  // namespace shrinkerlab
