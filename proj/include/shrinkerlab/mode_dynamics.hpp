#pragma once
// Spectral mode decomposition of graphical-flow trajectories and the
// dominance/decay audits built on it: stable-mode subordination, dominant
// mode identification with rate fits, and the one-sided first-mode decay law.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "shrinkerlab/core.hpp"
#include "shrinkerlab/graph_flow.hpp"
#include "shrinkerlab/soliton.hpp"
#include "shrinkerlab/spectrum.hpp"

namespace shrinkerlab {

// Audit window bound: fits run only while delta(tau) <= delta0.
inline constexpr double kDeltaWindow = 0.02;
// Relative resolution deadband: a track below mode_floor * total is reported
// as below audit resolution and its fitted constant as zero.
inline constexpr double kModeFloor = 1e-3;

template <class S>
struct ModeTrackT {
  Vec<S> taus;
  Vec<S> below, at, above;  // ||P_{<mu} u||_W, ||P_{=mu} u||_W, ||P_{>mu} u||_W
  Vec<S> total;             // ||u||_W
  Vec<S> delta;             // running sup of ||u(.,sigma)||_2^(1)
  S mu = S(0);
};
using ModeTrack = ModeTrackT<double>;

namespace detail {

template <class S>
void require_same_base(const SolitonT<S>& a, const SolitonT<S>& b, const char* who) {
  bool same = a.size() == b.size() && a.n == b.n && a.topology == b.topology;
  if (same) {
    same = (a.x - b.x).cwiseAbs().maxCoeff() <= S(1e-12) &&
           (a.r - b.r).cwiseAbs().maxCoeff() <= S(1e-12);
  }
  require(same, std::string(who) + ": trajectory base does not match the spectrum base");
}

}  // namespace detail

// Decompose every recorded state against the spectrum at threshold mu.  The
// discrete eigenbasis is W-orthonormal, so below^2 + at^2 + above^2 closes to
// total^2 up to roundoff; content beyond the computed modes is counted into
// the above track (it sits above every computed eigenvalue).
template <class S>
ModeTrackT<S> track_modes(const TrajectoryT<S>& traj, const SpectrumT<S>& spec, S mu) {
  require(!traj.states.empty(), "track_modes: empty trajectory");
  const SolitonT<S>& base = *traj.states.front().base;
  detail::require_same_base(base, spec.base, "track_modes");
  const Eigen::Index nt = Eigen::Index(traj.states.size());
  ModeTrackT<S> tr;
  tr.mu = mu;
  tr.taus.resize(nt);
  tr.below.resize(nt);
  tr.at.resize(nt);
  tr.above.resize(nt);
  tr.total.resize(nt);
  tr.delta.resize(nt);
  S running = S(0);
  for (Eigen::Index k = 0; k < nt; ++k) {
    const auto& st = traj.states[k];
    tr.taus[k] = st.tau;
    tr.below[k] = weighted_norm_L2(project(spec, st.u, SpectralRelation::lt, mu), spec.grid);
    tr.at[k] = weighted_norm_L2(project(spec, st.u, SpectralRelation::eq, mu), spec.grid);
    const S above_span =
        weighted_norm_L2(project(spec, st.u, SpectralRelation::gt, mu), spec.grid);
    const S tail = projection_tail(spec, st.u);
    tr.above[k] = std::hypot(above_span, tail);
    tr.total[k] = weighted_norm_L2(st.u, spec.grid);
    running = std::max(running, weighted_norm(base, st.u, 2, S(1)));
    tr.delta[k] = running;
  }
  return tr;
}

namespace detail {

// Indices of the audit window delta <= delta0.
template <class S>
std::vector<Eigen::Index> audit_window(const ModeTrackT<S>& tr, S delta0) {
  std::vector<Eigen::Index> w;
  for (Eigen::Index k = 0; k < tr.taus.size(); ++k)
    if (tr.delta[k] <= delta0) w.push_back(k);
  return w;
}

struct MzFit {
  double c_stable = 0;       // smallest C with above <= C delta (below + at)
  double c_alternative = 0;  // subordination constant of the dominant alternative
  bool at_dominant = true;   // mu-dominant vs unstable(below)-dominant
  bool violated = false;     // above-track has no low-mode support to lean on
  bool resolved = false;     // any track above the resolution floor at all
};

template <class S>
MzFit mz_fit(const ModeTrackT<S>& tr, const std::vector<Eigen::Index>& w, S floor) {
  MzFit f;
  for (Eigen::Index k : w) {
    const S tot = tr.total[k];
    if (!(tot > S(0))) continue;
    f.resolved = true;
    if (tr.above[k] >= floor * tot) {
      const S den = tr.delta[k] * (tr.below[k] + tr.at[k]);
      if (!(den > S(0)) || tr.below[k] + tr.at[k] < floor * tot) {
        f.violated = true;
        continue;
      }
      f.c_stable = std::max(f.c_stable, double(tr.above[k] / den));
    }
  }
  // classify the dominant low alternative at the end of the window
  const Eigen::Index last = w.back();
  f.at_dominant = tr.at[last] >= tr.below[last];
  for (Eigen::Index k : w) {
    const S tot = tr.total[k];
    if (!(tot > S(0))) continue;
    const S dom = f.at_dominant ? tr.at[k] : tr.below[k];
    const S rest = (f.at_dominant ? tr.below[k] : tr.at[k]) + tr.above[k];
    if (rest < floor * tot) continue;  // below audit resolution
    if (dom < floor * tot) {
      f.violated = true;
      continue;
    }
    f.c_alternative = std::max(f.c_alternative, double(rest / dom));
  }
  return f;
}

inline double fit_drift(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0 ? std::abs(a - b) / scale : 0.0;
}

}  // namespace detail

// Stable-mode subordination audit: on the window delta <= delta0, fit the
// smallest C with above <= C * delta * (below + at), classify whether the
// at-track or the below-track carries the solution, and fit the dominant
// alternative's subordination constant.  With a refined companion track
// (halved dtau, refined grid) the fitted constants must drift < 25%.
template <class S>
AuditReport merle_zaag_audit(const ModeTrackT<S>& track,
                             const ModeTrackT<S>* refined = nullptr,
                             S delta0 = S(kDeltaWindow), S floor = S(kModeFloor)) {
  AuditReport rep{"merle_zaag_audit"};
  auto w = detail::audit_window(track, delta0);
  if (w.empty()) {
    rep.flag("not_applicable");
    rep.notes = "delta(tau) never enters the audit window";
    return rep;
  }
  rep.metric("window_tau_lo", double(track.taus[w.front()]));
  rep.metric("window_tau_hi", double(track.taus[w.back()]));
  auto f = detail::mz_fit(track, w, floor);
  rep.metric("c_stable", f.c_stable);
  rep.metric("c_alternative", f.c_alternative);
  rep.flag(f.at_dominant ? "mu_dominant" : "unstable_dominant");
  if (!f.resolved) rep.flag("below_audit_resolution");
  if (f.violated) rep.fail("above-track dominates without low-mode support");

  if (refined) {
    auto wr = detail::audit_window(*refined, delta0);
    if (wr.empty()) {
      rep.fail("refined companion never enters the audit window");
      return rep;
    }
    auto fr = detail::mz_fit(*refined, wr, floor);
    const double d1 = detail::fit_drift(f.c_stable, fr.c_stable);
    const double d2 = detail::fit_drift(f.c_alternative, fr.c_alternative);
    rep.metric("c_stable_refined", fr.c_stable);
    rep.metric("c_alternative_refined", fr.c_alternative);
    rep.metric("drift_stable", d1);
    rep.metric("drift_alternative", d2);
    if (fr.violated) rep.fail("refined companion violates the subordination bound");
    if (f.at_dominant != fr.at_dominant) rep.fail("classification flips under refinement");
    if (d1 >= 0.25) rep.fail("stable-bound constant drifts >= 25% under refinement");
    if (d2 >= 0.25) rep.fail("alternative constant drifts >= 25% under refinement");
  } else {
    rep.flag("no_refinement_companion");
  }
  return rep;
}

template <class S>
struct DominantModeFitT {
  bool applicable = false;
  bool ambiguous = false;
  S mu_star = S(0);
  S rate = S(0);                    // least-squares slope of log ||u||_W
  S alpha_lo = S(0), alpha_hi = S(0);  // range of e^{mu* tau} ||u||_W, last e-folding
  std::vector<std::pair<S, S>> residuals;  // (mu, off-mode residual)
};
using DominantModeFit = DominantModeFitT<double>;

// Identify the dominant eigenvalue from a family of tracks of one trajectory
// at candidate thresholds mu (the unstable eigenvalues and 0): mu* minimizes
// the off-mode residual sup ||P_{!=mu} u|| / ||P_{=mu} u|| over the window.
// Needs >= 3 e-foldings of ||u||_W inside the window.
template <class S>
DominantModeFitT<S> dominant_mode_fit(const std::vector<ModeTrackT<S>>& tracks,
                                      S delta0 = S(kDeltaWindow), S floor = S(kModeFloor)) {
  DominantModeFitT<S> out;
  require(!tracks.empty(), "dominant_mode_fit: no tracks");
  const auto& t0 = tracks.front();
  for (const auto& t : tracks)
    require(t.taus.size() == t0.taus.size(), "dominant_mode_fit: tracks disagree in shape");

  auto w = detail::audit_window(t0, delta0);
  if (w.empty()) return out;
  S tmax = S(0), tmin = std::numeric_limits<S>::infinity();
  for (Eigen::Index k : w) {
    tmax = std::max(tmax, t0.total[k]);
    tmin = std::min(tmin, t0.total[k]);
  }
  if (!(tmin > S(0)) || !(std::log(tmax / tmin) >= S(3))) return out;  // < 3 e-foldings
  out.applicable = true;

  const S inf = std::numeric_limits<S>::infinity();
  S best = inf, second = inf;
  for (const auto& tr : tracks) {
    S res = S(0);
    for (Eigen::Index k : w) {
      const S off = std::hypot(tr.below[k], tr.above[k]);
      if (tr.at[k] < floor * tr.total[k]) {
        res = inf;
        break;
      }
      res = std::max(res, off / tr.at[k]);
    }
    out.residuals.emplace_back(tr.mu, res);
    if (res < best) {
      second = best;
      best = res;
      out.mu_star = tr.mu;
    } else if (res < second) {
      second = res;
    }
  }
  if (std::isfinite(second) && best > S(0) && std::abs(second - best) <= S(0.1) * best)
    out.ambiguous = true;

  // rate fit over the window
  {
    Vec<S> xs(Eigen::Index(w.size())), ys(Eigen::Index(w.size()));
    Eigen::Index i = 0;
    for (Eigen::Index k : w) {
      xs[i] = t0.taus[k];
      ys[i] = std::log(t0.total[k]);
      ++i;
    }
    out.rate = ls_slope<S>(xs, ys);
  }
  // alpha bounds over the last e-folding of ||u||_W inside the window
  {
    const S log_end = std::log(t0.total[w.back()]);
    out.alpha_lo = inf;
    out.alpha_hi = -inf;
    for (Eigen::Index k : w) {
      if (std::abs(std::log(t0.total[k]) - log_end) > S(1)) continue;
      const S val = std::exp(out.mu_star * t0.taus[k]) * t0.total[k];
      out.alpha_lo = std::min(out.alpha_lo, val);
      out.alpha_hi = std::max(out.alpha_hi, val);
    }
  }
  return out;
}

// One-sided first-mode decay law: along a strictly signed trajectory the
// lowest mode carries the solution with coefficient alpha1 != 0 and the
// off-mode remainder decays at twice the rate.  alpha1 is the average of
// e^{lambda1 tau} <u, phi1>_W over the last e-folding; the remainder check
// requires e^{2 lambda1 tau} ||P_{!=lambda1} u||_W to show no trend.
template <class S>
AuditReport one_sided_decay_audit(const TrajectoryT<S>& traj, const SpectrumT<S>& spec,
                                  S delta0 = S(kDeltaWindow)) {
  AuditReport rep{"one_sided_decay_audit"};
  require(!traj.states.empty(), "one_sided_decay_audit: empty trajectory");
  const SolitonT<S>& base = *traj.states.front().base;
  detail::require_same_base(base, spec.base, "one_sided_decay_audit");

  int side = 0;
  for (const auto& st : traj.states) {
    const S lo = st.u.minCoeff(), hi = st.u.maxCoeff();
    int s = (lo > S(0)) ? +1 : (hi < S(0)) ? -1 : 0;
    if (s == 0 || (side != 0 && s != side)) {
      rep.fail("trajectory is not one-sided (sign change in u)");
      return rep;
    }
    side = s;
  }
  rep.metric("side", double(side));

  const S lam1 = spec.lambdas[0];
  const Vec<S> phi1 = spec.phis.col(0);
  const Eigen::Index nt = Eigen::Index(traj.states.size());
  Vec<S> taus(nt), coef(nt), rem(nt), total(nt), delta(nt);
  S running = S(0);
  for (Eigen::Index k = 0; k < nt; ++k) {
    const auto& st = traj.states[k];
    taus[k] = st.tau;
    coef[k] = std::exp(lam1 * st.tau) * weighted_inner(st.u, phi1, spec.grid);
    const S off = weighted_norm_L2(project(spec, st.u, SpectralRelation::ne, lam1), spec.grid);
    rem[k] = std::exp(S(2) * lam1 * st.tau) * std::hypot(off, projection_tail(spec, st.u));
    total[k] = weighted_norm_L2(st.u, spec.grid);
    running = std::max(running, weighted_norm(base, st.u, 2, S(1)));
    delta[k] = running;
  }

  std::vector<Eigen::Index> w;
  for (Eigen::Index k = 0; k < nt; ++k)
    if (delta[k] <= delta0) w.push_back(k);
  if (w.empty()) {
    rep.flag("not_applicable");
    rep.notes = "delta(tau) never enters the audit window";
    return rep;
  }
  rep.metric("window_tau_lo", double(taus[w.front()]));
  rep.metric("window_tau_hi", double(taus[w.back()]));

  // alpha1 over the last e-folding of ||u||_W
  const S log_end = std::log(std::max(total[w.back()], std::numeric_limits<S>::min()));
  std::vector<S> samples;
  for (Eigen::Index k : w)
    if (total[k] > S(0) && std::abs(std::log(total[k]) - log_end) <= S(1))
      samples.push_back(coef[k]);
  if (samples.size() < 4) {
    rep.fail("too few samples in the last e-folding");
    return rep;
  }
  S mean = S(0);
  for (S v : samples) mean += v;
  mean /= S(samples.size());
  S var = S(0);
  for (S v : samples) var += (v - mean) * (v - mean);
  var /= S(samples.size() - 1);
  const S sd = std::sqrt(var);
  rep.metric("alpha1", double(mean));
  rep.metric("alpha1_sd", double(sd));
  if (!(S(side) * mean > S(0))) rep.fail("alpha1 sign does not match the side");
  if (!(std::abs(mean) > S(10) * sd)) rep.fail("alpha1 not resolved above sample noise");

  // remainder boundedness: linear trend of e^{2 lambda1 tau}||P_{!=}u|| over
  // the window, relative to its mean; skipped when the remainder never rises
  // above the resolution floor relative to the rescaled mode itself
  {
    S rmax = S(0), scale = S(0);
    for (Eigen::Index k : w) {
      rmax = std::max(rmax, rem[k]);
      scale = std::max(scale, std::exp(S(2) * lam1 * taus[k]) * total[k]);
    }
    rep.metric("remainder_max", double(rmax));
    if (rmax <= S(kModeFloor) * scale) {
      rep.flag("remainder_below_resolution");
    } else {
      Vec<S> xs(Eigen::Index(w.size())), ys(Eigen::Index(w.size()));
      Eigen::Index i = 0;
      S rmean = S(0);
      for (Eigen::Index k : w) {
        xs[i] = taus[k];
        ys[i] = rem[k];
        rmean += rem[k];
        ++i;
      }
      rmean /= S(xs.size());
      const S slope = ls_slope<S>(xs, ys);
      const S span = xs[xs.size() - 1] - xs[0];
      const S trend = (rmean > S(0)) ? std::abs(slope) * span / rmean : S(0);
      rep.metric("remainder_trend_ratio", double(trend));
      rep.metric("remainder_mean", double(rmean));
      if (!(trend <= S(1))) rep.fail("off-mode remainder shows a trend at twice the rate");
    }
  }
  return rep;
}

}  // namespace shrinkerlab
