#pragma once

// Gaussian area integrals for axisymmetric hypersurfaces: backward heat
// kernel densities, the entropy sup over centers and scales, and the
// monotonicity audit for flows produced by the rescaled graph stepper.
//
// Centers are restricted to the rotation axis.  For an axial center the
// kernel is constant on each rotational orbit, so every integral reduces to
// a one-dimensional quadrature over the profile curve.  Off-axis centers
// would break that reduction and are not supported here.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "graph_flow.hpp"
#include "soliton.hpp"
#include "spectrum.hpp"

namespace shrinkerlab {

// A point of spacetime on the rotation axis: x0 = (axial, 0, ..., 0) at
// time t0.
template <class S>
struct SpacetimePointT {
  S axial = S(0);
  S t0 = S(0);
};

using SpacetimePoint = SpacetimePointT<double>;

// Backward heat kernel centered at X0, evaluated at the profile position
// (x, r) at time t < t0, normalized so that a hyperplane through the
// center integrates to one:
//   rho(p, t) = (4 pi (t0 - t))^{-n/2} exp(-|p - x0|^2 / (4 (t0 - t))).
template <class S>
S backward_kernel(int n, const SpacetimePointT<S>& X0, S x, S r, S t) {
  const S dt = X0.t0 - t;
  if (!(dt > S(0)))
    throw ValidationError("backward_kernel: time must precede the center time");
  const S d2 = (x - X0.axial) * (x - X0.axial) + r * r;
  return std::pow(S(4) * S(M_PI) * dt, -S(n) / S(2)) * std::exp(-d2 / (S(4) * dt));
}

// Rotational area element per node: |S^{n-1}| r^{n-1} times the arclength
// cell width.  Widths come from the parameter table, so mildly non-uniform
// profiles (graph surfaces in chord parameter) are weighted correctly.
// Cell conventions match build_weighted_grid on uniform grids: half cells
// at open ends, full cells elsewhere.
template <class S>
Vec<S> area_weights(const SolitonT<S>& sol) {
  const Eigen::Index m = sol.size();
  require(m >= 3, "area_weights: need at least 3 nodes");
  const S an = unit_sphere_area<S>(sol.n);
  Vec<S> w(m);
  if (sol.topology == Topology::periodic) {
    const S wrap = sol.length() - sol.s[m - 1] + sol.s[0];
    require(wrap > S(0), "area_weights: inconsistent periodic parameter table");
    for (Eigen::Index i = 0; i < m; ++i) {
      const S prev = (i == 0) ? wrap : sol.s[i] - sol.s[i - 1];
      const S next = (i == m - 1) ? wrap : sol.s[i + 1] - sol.s[i];
      w[i] = (prev + next) / S(2);
    }
  } else {
    for (Eigen::Index i = 1; i < m - 1; ++i) w[i] = (sol.s[i + 1] - sol.s[i - 1]) / S(2);
    if (sol.topology == Topology::open) {
      w[0] = (sol.s[1] - sol.s[0]) / S(2);
      w[m - 1] = (sol.s[m - 1] - sol.s[m - 2]) / S(2);
    } else {
      // axis_closed: the axis crossings sit half a cell beyond the end nodes
      w[0] = sol.s[1] - sol.s[0];
      w[m - 1] = sol.s[m - 1] - sol.s[m - 2];
    }
  }
  Vec<S> da(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    da[i] = an * std::pow(sol.r[i], S(sol.n - 1)) * w[i];
    require(da[i] > S(0), "area_weights: nonpositive area element");
  }
  return da;
}

// Gaussian area of the profile about the origin at unit scale,
//   F(Sigma) = (4 pi)^{-n/2} integral exp(-|p|^2/4) d mu,
// evaluated as the total mass of the spectral quadrature so the value is
// exactly weighted_inner(1, 1).
template <class S>
S f_area(const SolitonT<S>& sol) {
  return build_weighted_grid(sol).weights.sum();
}

// Gaussian integral of the backward kernel over a physical (unrescaled)
// surface at time t.
template <class S>
S gaussian_integral(const SolitonT<S>& surface, const SpacetimePointT<S>& X0, S t) {
  const Vec<S> da = area_weights(surface);
  S acc = S(0);
  for (Eigen::Index i = 0; i < surface.size(); ++i)
    acc += da[i] * backward_kernel(surface.n, X0, surface.x[i], surface.r[i], t);
  return acc;
}

// Density ratio of a recorded flow at scale r about X0: the Gaussian
// integral over the slice at time t0 - r^2.  The slice must be recorded
// exactly; no interpolation between records is attempted.
template <class S>
S density_ratio(const TrajectoryT<S>& traj, const TimeMapT<S>& tmap,
                const SpacetimePointT<S>& X0, S r, S match_tol = S(1e-9)) {
  require(!traj.states.empty(), "density_ratio: empty trajectory");
  require(r > S(0) && std::isfinite(r), "density_ratio: scale must be positive");
  const S t_want = X0.t0 - r * r;
  const GraphStateT<S>* hit = nullptr;
  S best = std::numeric_limits<S>::infinity();
  S t_hit = S(0);
  for (const auto& st : traj.states) {
    const S t = tmap.t_of(st.tau);
    const S gap = std::abs(t - t_want);
    if (gap < best) {
      best = gap;
      t_hit = t;
      hit = &st;
    }
  }
  if (!(best <= match_tol * (S(1) + std::abs(t_want))))
    throw ValidationError("density_ratio: no recorded slice at t = " +
                          std::to_string(double(t_want)) + " (nearest is " +
                          std::to_string(double(t_hit)) + ")");
  const SolitonT<S>& base = *hit->base;
  auto ng = normal_graph(base, hit->u);
  const SolitonT<S> phys = rescale(ng.surface, tmap.scale_of(hit->tau));
  return gaussian_integral(phys, X0, t_want);
}

// ---------------------------------------------------------------------------
// Entropy: sup of the Gaussian density over axial centers and scales
// ---------------------------------------------------------------------------

template <class S>
struct EntropyOptionsT {
  Eigen::Index axial_samples = 33;  // coarse sweep along the axis (odd keeps 0 on the grid)
  Eigen::Index time_samples = 25;   // coarse sweep, log-uniform in t0
  S t_lo = S(1e-2), t_hi = S(1e2);  // scale range of the sweep
  S pad = S(2);                     // axial margin beyond the profile extent
  int refine_rounds = 3;            // alternating golden-section passes
  S flat_tol = S(1e-5);             // relative axial variation treated as flat
};

using EntropyOptions = EntropyOptionsT<double>;

template <class S>
struct EntropyResultT {
  S value = S(0);
  S x0 = S(0);
  S t0 = S(1);
  bool flat = false;                     // axial landscape flat near the maximizer
  std::vector<std::array<S, 3>> history; // (x0, t0, value) after each refinement round
  AuditReport report{"entropy_search"};
};

using EntropyResult = EntropyResultT<double>;

// Largest Gaussian density of the profile over centers on the axis and
// backward times: coarse grid sweep, then golden-section refinement
// alternating between the two coordinates.  A flat axial landscape (the
// cylinder, translation invariance up to truncation) is flagged rather
// than treated as a located maximizer.
template <class S>
EntropyResultT<S> entropy(const SolitonT<S>& sol, const EntropyOptionsT<S>& opt = {}) {
  require(opt.axial_samples >= 5 && opt.time_samples >= 5, "entropy: sweep too coarse");
  require(opt.t_lo > S(0) && opt.t_hi > opt.t_lo, "entropy: bad scale range");
  const Vec<S> da = area_weights(sol);
  const Eigen::Index m = sol.size();
  const S nhalf = S(sol.n) / S(2);

  auto value_at = [&](S a, S t0) {
    const S pref = std::pow(S(4) * S(M_PI) * t0, -nhalf);
    S acc = S(0);
    for (Eigen::Index i = 0; i < m; ++i) {
      const S dx = sol.x[i] - a;
      acc += da[i] * std::exp(-(dx * dx + sol.r[i] * sol.r[i]) / (S(4) * t0));
    }
    return pref * acc;
  };

  const S xext = sol.x.cwiseAbs().maxCoeff() + opt.pad;
  const S da_step = S(2) * xext / S(opt.axial_samples - 1);
  const S dl_step = (std::log(opt.t_hi) - std::log(opt.t_lo)) / S(opt.time_samples - 1);

  EntropyResultT<S> out;
  S best = -std::numeric_limits<S>::infinity();
  S best_a = S(0), best_l = S(0);
  for (Eigen::Index ia = 0; ia < opt.axial_samples; ++ia) {
    const S a = -xext + S(ia) * da_step;
    for (Eigen::Index it = 0; it < opt.time_samples; ++it) {
      const S l = std::log(opt.t_lo) + S(it) * dl_step;
      const S v = value_at(a, std::exp(l));
      if (v > best) {
        best = v;
        best_a = a;
        best_l = l;
      }
    }
  }

  // flatness probe: grid-neighbor variation along the axis at the best scale
  {
    const S v0 = value_at(best_a, std::exp(best_l));
    const S vp = value_at(best_a + da_step, std::exp(best_l));
    const S vm = value_at(best_a - da_step, std::exp(best_l));
    const S var = std::max(std::abs(vp - v0), std::abs(vm - v0));
    out.report.metric("axial_neighbor_variation", double(var / std::max(v0, S(1e-300))));
    if (var <= opt.flat_tol * v0) {
      out.flat = true;
      out.report.flag("flat_axial_landscape");
    }
  }

  // golden-section maximization on [lo, hi]
  const S gr = (std::sqrt(S(5)) - S(1)) / S(2);
  auto golden = [&](auto f, S lo, S hi) {
    S c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    S fc = f(c), fd = f(d);
    for (int it = 0; it < 40; ++it) {
      if (fc > fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - gr * (hi - lo);
        fc = f(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + gr * (hi - lo);
        fd = f(d);
      }
    }
    return (fc > fd) ? c : d;
  };

  S wa = da_step, wl = dl_step;
  for (int round = 0; round < opt.refine_rounds; ++round) {
    best_a = golden([&](S a) { return value_at(a, std::exp(best_l)); }, best_a - wa, best_a + wa);
    best_l = golden([&](S l) { return value_at(best_a, std::exp(l)); }, best_l - wl, best_l + wl);
    best = value_at(best_a, std::exp(best_l));
    out.history.push_back({best_a, std::exp(best_l), best});
    wa /= S(4);
    wl /= S(4);
  }

  out.value = best;
  out.x0 = best_a;
  out.t0 = std::exp(best_l);
  out.report.metric("value", double(out.value));
  out.report.metric("x0", double(out.x0));
  out.report.metric("t0", double(out.t0));
  out.report.metric("rounds", double(opt.refine_rounds));
  out.report.flag("axial_centers_only");
  return out;
}

// ---------------------------------------------------------------------------
// Monotonicity audit of the Gaussian integral along a recorded flow
// ---------------------------------------------------------------------------

template <class S>
struct MonotonicityAuditT {
  Vec<S> ts;             // physical times of the recorded slices
  Vec<S> values;         // Gaussian integral about X0 per slice
  Vec<S> dissipation;    // weighted dissipation integral per slice
  Vec<S> integrand_sup;  // sup over nodes of (H - <p - x0, nu> / (2 (t0 - t)))^2
  AuditReport report;
};

using MonotonicityAudit = MonotonicityAuditT<double>;

// Checks that the Gaussian integral about X0 is non-increasing in time
// along a recorded flow, with slack for the recording step, and that the
// decrement is accounted for by the dissipation integral
//   D(t) = integral (H - <p - x0, nu> / (2 (t0 - t)))^2 rho d mu,
// a shrinking self-similar flow about X0 makes the integrand vanish
// identically.  Recorded times must be strictly increasing; feeding data
// whose clock runs backward fails the audit.
template <class S>
MonotonicityAuditT<S> huisken_audit(const TrajectoryT<S>& traj, const TimeMapT<S>& tmap,
                                    const SpacetimePointT<S>& X0, S beta = S(1)) {
  constexpr double kAtol = 1e-6;
  const Eigen::Index nt = Eigen::Index(traj.states.size());
  require(nt >= 2, "huisken_audit: need at least two recorded slices");
  const SolitonT<S>& base = *traj.states.front().base;
  const SpeedBaseT<S> bcache = speed_base(base);

  MonotonicityAuditT<S> out;
  out.ts.resize(nt);
  out.values.resize(nt);
  out.dissipation.resize(nt);
  out.integrand_sup.resize(nt);
  for (Eigen::Index k = 0; k < nt; ++k) {
    const auto& st = traj.states[size_t(k)];
    const S t = tmap.t_of(st.tau);
    out.ts[k] = t;
    auto ng = normal_graph(base, st.u, GraphOptionsT<S>{}, &bcache);
    const SolitonT<S> phys = rescale(ng.surface, tmap.scale_of(st.tau));
    const Vec<S> da = area_weights(phys);
    S val = S(0), dis = S(0), sup = S(0);
    for (Eigen::Index i = 0; i < phys.size(); ++i) {
      const S rho = backward_kernel(phys.n, X0, phys.x[i], phys.r[i], t);
      const S normal_dist = phys.xdotnu[i] - X0.axial * phys.nu_x[i];
      const S defect = phys.H[i] - normal_dist / (S(2) * (X0.t0 - t));
      val += da[i] * rho;
      dis += da[i] * rho * defect * defect;
      sup = std::max(sup, defect * defect);
    }
    out.values[k] = val;
    out.dissipation[k] = dis;
    out.integrand_sup[k] = sup;
  }

  AuditReport rep{"gaussian_integral_monotonicity"};
  rep.metric("slices", double(nt));
  rep.metric("integrand_sup_max", double(out.integrand_sup.maxCoeff()));
  rep.metric("value_drop", double(out.values[0] - out.values[nt - 1]));

  bool ordered = true;
  for (Eigen::Index k = 0; k + 1 < nt; ++k)
    if (!(out.ts[k + 1] > out.ts[k])) ordered = false;
  if (!ordered) {
    rep.fail("recorded times are not strictly increasing");
    out.report = rep;
    return out;
  }

  S worst_rise = -std::numeric_limits<S>::infinity();
  S worst_budget = S(0);
  S worst_balance = S(0);
  for (Eigen::Index k = 0; k + 1 < nt; ++k) {
    const S dt = out.ts[k + 1] - out.ts[k];
    const S rise = out.values[k + 1] - out.values[k];
    if (rise > worst_rise) worst_rise = rise;
    const S slack = S(kAtol) + beta * dt;
    if (rise > slack && worst_budget < rise - slack) worst_budget = rise - slack;
    const S trapz = (out.dissipation[k] + out.dissipation[k + 1]) / S(2) * dt;
    const S balance = std::abs(rise + trapz);
    const S budget = S(kAtol) + beta * dt * (S(1) + out.dissipation[k] + out.dissipation[k + 1]);
    worst_balance = std::max(worst_balance, balance - budget);
  }
  rep.metric("max_step_rise", double(worst_rise));
  rep.metric("monotonicity_excess", double(worst_budget));
  rep.metric("balance_excess", double(worst_balance));
  if (worst_budget > S(0)) rep.fail("gaussian integral increases beyond the recording slack");
  if (worst_balance > S(0))
    rep.fail("dissipation does not account for the decrement of the gaussian integral");
  out.report = rep;
  return out;
}

}  // namespace shrinkerlab
