#pragma once

// Localized avoidance between axisymmetric flows: the shrinking-ball cutoff
// field, its degenerate comparison operator, the conformal distance it
// induces, a distance monotonicity audit, and a profile-crossing probe.

#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "soliton.hpp"

namespace shrinkerlab {

// Cutoff supported on a ball that shrinks at rate 2n + alpha:
//   u_alpha(p, t) = (R^2 - |p - x0|^2 - (2n + alpha)(t - t0))_+
// with the center on the rotation axis.  alpha > 0 makes the comparison
// inequality strict.
template <class S>
struct ConformalFieldT {
  int n = 2;       // surface dimension; ambient space has n + 1 coordinates
  S R = S(5);
  S alpha = S(0);
  S axial = S(0);  // center x0 = (axial, 0, ..., 0)
  S t0 = S(0);

  S unclipped(S x, S r, S t) const {
    const S dx = x - axial;
    return R * R - (dx * dx + r * r) - (S(2 * n) + alpha) * (t - t0);
  }
  S operator()(S x, S r, S t) const { return std::max(S(0), unclipped(x, r, t)); }
  // squared radius of the support ball at time t (negative once it is gone)
  S support_radius2(S t) const { return R * R - (S(2 * n) + alpha) * (t - t0); }
};

using ConformalField = ConformalFieldT<double>;

// The comparison operator K u = inf over n-planes of the Hessian trace.
// The cutoff is a quadratic with Hessian -2 Id, so every n-trace is -2n and
// the time derivative is -(2n + alpha); the strict inequality d_t u < K u
// holds exactly when alpha > 0.  The audit verifies the constants and
// cross-checks them by finite differences on a sample grid over the
// support; points whose stencil leaves the support are skipped.
template <class S>
AuditReport k_operator_check(const ConformalFieldT<S>& field) {
  AuditReport rep{"k_operator_check"};
  const S dt_val = -(S(2 * field.n) + field.alpha);
  const S k_val = S(-2 * field.n);
  rep.metric("dt_value", double(dt_val));
  rep.metric("k_value", double(k_val));
  rep.metric("margin", double(field.alpha));

  const S h = S(1e-3) * std::max(field.R, S(1));
  const S guard = S(10) * field.R * h;  // keeps the whole stencil in the support
  const S t_span = field.R * field.R / (S(2) * (S(2 * field.n) + field.alpha));
  long checked = 0, skipped = 0;
  S worst = S(0);
  for (int it = 0; it < 3; ++it) {
    const S t = field.t0 + S(it) * t_span / S(2);
    for (int ix = 0; ix < 7; ++ix) {
      const S x = field.axial + (S(ix) / S(3) - S(1)) * S(0.9) * field.R;
      for (int ir = 0; ir < 5; ++ir) {
        const S r = S(ir) / S(4) * S(0.9) * field.R;
        if (field.unclipped(x, r, t) < guard) {
          ++skipped;
          continue;
        }
        auto u = [&](S xx, S rr, S tt) { return field(xx, std::abs(rr), tt); };
        const S uxx = (u(x + h, r, t) - 2 * u(x, r, t) + u(x - h, r, t)) / (h * h);
        const S urr = (u(x, r + h, t) - 2 * u(x, r, t) + u(x, r - h, t)) / (h * h);
        const S uxr = (u(x + h, r + h, t) - u(x + h, r - h, t) - u(x - h, r + h, t) +
                       u(x - h, r - h, t)) /
                      (4 * h * h);
        const S ut = (u(x, r, t + h) - u(x, r, t - h)) / (2 * h);
        worst = std::max({worst, std::abs(uxx + S(2)), std::abs(urr + S(2)), std::abs(uxr),
                          std::abs(ut - dt_val)});
        ++checked;
      }
    }
  }
  rep.metric("sampled", double(checked));
  rep.metric("skipped", double(skipped));
  rep.metric("max_stencil_deviation", double(worst));
  if (checked == 0) rep.fail("no sample point lies safely inside the support");
  const S tol = S(1e-6) * std::max(S(1), field.R * field.R);
  if (worst > tol) rep.fail("finite differences disagree with the cutoff constants");
  if (!(field.alpha > S(0)))
    rep.flag("non_strict");  // equality d_t u = K u; the inequality is not strict
  return rep;
}

namespace detail {

// distance from p to the segment [a, b] in the (x, r) plane
template <class S>
S point_segment_dist(S px, S pr, S ax, S ar, S bx, S br) {
  const S vx = bx - ax, vr = br - ar;
  const S L2 = vx * vx + vr * vr;
  S t = L2 > S(0) ? ((px - ax) * vx + (pr - ar) * vr) / L2 : S(0);
  t = std::clamp(t, S(0), S(1));
  return std::hypot(px - (ax + t * vx), pr - (ar + t * vr));
}

// proper crossing of segments [a0,a1] and [b0,b1]; parallel pairs report none
template <class S>
bool segment_cross(S a0x, S a0r, S a1x, S a1r, S b0x, S b0r, S b1x, S b1r, S& cx, S& cr) {
  const S rx = a1x - a0x, rr = a1r - a0r;
  const S sx = b1x - b0x, sr = b1r - b0r;
  const S den = rx * sr - rr * sx;
  const S scale = std::max({std::abs(rx), std::abs(rr), std::abs(sx), std::abs(sr), S(1e-30)});
  if (std::abs(den) < S(1e-14) * scale * scale) return false;
  const S qx = b0x - a0x, qr = b0r - a0r;
  const S t = (qx * sr - qr * sx) / den;
  const S u = (qx * rr - qr * rx) / den;
  if (t < S(0) || t > S(1) || u < S(0) || u > S(1)) return false;
  cx = a0x + t * rx;
  cr = a0r + t * rr;
  return true;
}

// minimum distance between two profile polylines (node against segment,
// both directions); closed periodic profiles include the wrap segment
template <class S>
S polyline_gap(const SolitonT<S>& A, const SolitonT<S>& B) {
  auto segs = [](const SolitonT<S>& P) {
    return P.topology == Topology::periodic ? P.size() : P.size() - 1;
  };
  auto gap_one_way = [&](const SolitonT<S>& P, const SolitonT<S>& Q) {
    S best = std::numeric_limits<S>::infinity();
    const Eigen::Index nq = segs(Q);
    for (Eigen::Index i = 0; i < P.size(); ++i)
      for (Eigen::Index j = 0; j < nq; ++j) {
        const Eigen::Index j1 = (j + 1) % Q.size();
        best = std::min(best, point_segment_dist(P.x[i], P.r[i], Q.x[j], Q.r[j], Q.x[j1],
                                                 Q.r[j1]));
      }
    return best;
  };
  return std::min(gap_one_way(A, B), gap_one_way(B, A));
}

}  // namespace detail

enum class DistanceMethod { automatic, radial, grid };

template <class S>
struct ConformalDistanceOptionsT {
  DistanceMethod method = DistanceMethod::automatic;
  S spacing = S(0);         // grid spacing; 0 picks R / 100
  bool refine = true;       // grid method reruns at half spacing and keeps the finer value
  S radial_tol = S(1e-8);   // concentricity detection threshold
  S quad_tol = S(1e-12);    // adaptive quadrature tolerance
};

using ConformalDistanceOptions = ConformalDistanceOptionsT<double>;

namespace detail {

template <class S>
S adaptive_simpson(S (*f)(S, const ConformalFieldT<S>&, S), const ConformalFieldT<S>& field,
                   S t, S a, S b, S fa, S fm, S fb, S whole, S tol, int depth) {
  const S m = (a + b) / S(2);
  const S lm = (a + m) / S(2), rm = (m + b) / S(2);
  const S flm = f(lm, field, t), frm = f(rm, field, t);
  const S left = (m - a) / S(6) * (fa + 4 * flm + fm);
  const S right = (b - m) / S(6) * (fm + 4 * frm + fb);
  const S delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= S(15) * tol) return left + right + delta / S(15);
  return adaptive_simpson(f, field, t, a, m, fa, flm, fm, left, tol / S(2), depth - 1) +
         adaptive_simpson(f, field, t, m, b, fm, frm, fb, right, tol / S(2), depth - 1);
}

template <class S>
S inv_field_radial(S rho, const ConformalFieldT<S>& field, S t) {
  // u along a ray from the center depends only on the distance
  return S(1) / field(field.axial + rho, S(0), t);
}

// 1-D conformal length of the radial segment between the two sphere radii
template <class S>
S radial_distance(S rhoA, S rhoB, const ConformalFieldT<S>& field, S t, S tol) {
  const S lo = std::min(rhoA, rhoB), hi = std::max(rhoA, rhoB);
  if (lo == hi) return S(0);
  if (!(field.unclipped(field.axial + hi, S(0), t) > S(0)))
    return std::numeric_limits<S>::infinity();
  const S fa = inv_field_radial(lo, field, t);
  const S fb = inv_field_radial(hi, field, t);
  const S fm = inv_field_radial((lo + hi) / S(2), field, t);
  const S whole = (hi - lo) / S(6) * (fa + 4 * fm + fb);
  return adaptive_simpson(&inv_field_radial<S>, field, t, lo, hi, fa, fm, fb, whole, tol, 40);
}

// shortest conformal path on an axis-aligned (x, r) grid: 8-connected,
// edge weight = Euclidean length / u at the edge midpoint, nodes only
// where u > 0 so paths cannot exit the support
template <class S>
S grid_distance(const SolitonT<S>& A, const SolitonT<S>& B, const ConformalFieldT<S>& field,
                S t, S h) {
  const S c2 = field.support_radius2(t);
  if (!(c2 > S(0))) return std::numeric_limits<S>::infinity();
  const S L = std::sqrt(c2);
  const Eigen::Index jmax = Eigen::Index(std::ceil(L / h));
  const Eigen::Index nx = 2 * jmax + 1, nr = jmax + 1;
  const auto id = [&](Eigen::Index jx, Eigen::Index jr) { return jr * nx + jx; };
  const auto xof = [&](Eigen::Index jx) { return field.axial + S(jx - jmax) * h; };
  const auto rof = [&](Eigen::Index jr) { return S(jr) * h; };

  std::vector<char> open(size_t(nx * nr), 0);
  for (Eigen::Index jr = 0; jr < nr; ++jr)
    for (Eigen::Index jx = 0; jx < nx; ++jx)
      open[size_t(id(jx, jr))] = field.unclipped(xof(jx), rof(jr), t) > S(0);

  // nodes within 3/4 of a cell of a profile polyline belong to that set
  auto mark = [&](const SolitonT<S>& P) {
    std::vector<char> hit(size_t(nx * nr), 0);
    const S snap = S(0.75) * h;
    const Eigen::Index nseg = (P.topology == Topology::periodic) ? P.size() : P.size() - 1;
    for (Eigen::Index sidx = 0; sidx < nseg; ++sidx) {
      const Eigen::Index s1 = (sidx + 1) % P.size();
      const S ax = P.x[sidx], ar = P.r[sidx], bx = P.x[s1], br = P.r[s1];
      const Eigen::Index jx0 = Eigen::Index(std::floor((std::min(ax, bx) - snap - field.axial) / h)) + jmax;
      const Eigen::Index jx1 = Eigen::Index(std::ceil((std::max(ax, bx) + snap - field.axial) / h)) + jmax;
      const Eigen::Index jr0 = Eigen::Index(std::floor((std::min(ar, br) - snap) / h));
      const Eigen::Index jr1 = Eigen::Index(std::ceil((std::max(ar, br) + snap) / h));
      for (Eigen::Index jr = std::max<Eigen::Index>(0, jr0); jr <= std::min(nr - 1, jr1); ++jr)
        for (Eigen::Index jx = std::max<Eigen::Index>(0, jx0); jx <= std::min(nx - 1, jx1); ++jx) {
          if (!open[size_t(id(jx, jr))] || hit[size_t(id(jx, jr))]) continue;
          if (point_segment_dist(xof(jx), rof(jr), ax, ar, bx, br) <= snap)
            hit[size_t(id(jx, jr))] = 1;
        }
    }
    return hit;
  };
  auto inside_support = [&](const SolitonT<S>& P) {
    for (Eigen::Index i = 0; i < P.size(); ++i)
      if (field.unclipped(P.x[i], P.r[i], t) > S(0)) return true;
    return false;
  };

  const bool a_in = inside_support(A), b_in = inside_support(B);
  if (!a_in || !b_in) return std::numeric_limits<S>::infinity();
  const auto srcs = mark(A), dsts = mark(B);
  const bool have_src = std::any_of(srcs.begin(), srcs.end(), [](char c) { return c != 0; });
  const bool have_dst = std::any_of(dsts.begin(), dsts.end(), [](char c) { return c != 0; });
  if (!have_src || !have_dst)
    throw NumericalError(
        "conformal_distance: grid too coarse to resolve the sets; decrease the spacing");

  const S inf = std::numeric_limits<S>::infinity();
  std::vector<S> dist(size_t(nx * nr), inf);
  using QE = std::pair<S, Eigen::Index>;
  std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
  for (Eigen::Index v = 0; v < nx * nr; ++v)
    if (srcs[size_t(v)]) {
      dist[size_t(v)] = S(0);
      pq.push({S(0), v});
    }
  const Eigen::Index dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const Eigen::Index drs[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!pq.empty()) {
    const auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[size_t(v)]) continue;
    if (dsts[size_t(v)]) return d;
    const Eigen::Index jx = v % nx, jr = v / nx;
    for (int e = 0; e < 8; ++e) {
      const Eigen::Index kx = jx + dxs[e], kr = jr + drs[e];
      if (kx < 0 || kx >= nx || kr < 0 || kr >= nr) continue;
      const Eigen::Index w = id(kx, kr);
      if (!open[size_t(w)]) continue;
      const S mx = (xof(jx) + xof(kx)) / S(2), mr = (rof(jr) + rof(kr)) / S(2);
      const S um = field.unclipped(mx, mr, t);
      if (!(um > S(0))) continue;
      const S len = h * ((e < 4) ? S(1) : S(M_SQRT2));
      const S nd = d + len / um;
      if (nd < dist[size_t(w)]) {
        dist[size_t(w)] = nd;
        pq.push({nd, w});
      }
    }
  }
  return inf;  // sets marked but separated by the support: unreachable
}

}  // namespace detail

// Conformal distance between two axisymmetric sets at time t: the infimum
// of Euclidean length / u_alpha over paths staying inside the support.
// Sets concentric about the field center reduce to a radial quadrature;
// anything else goes through the grid shortest path.  A set that misses
// the open support entirely is unreachable and the distance is infinite.
template <class S>
S conformal_distance(const SolitonT<S>& A, const SolitonT<S>& B, const ConformalFieldT<S>& field,
                     S t, const ConformalDistanceOptionsT<S>& opt = {}) {
  require(A.size() >= 2 && B.size() >= 2, "conformal_distance: degenerate set");
  auto radius_if_concentric = [&](const SolitonT<S>& P, S& rho) {
    S lo = std::numeric_limits<S>::infinity(), hi = S(0);
    for (Eigen::Index i = 0; i < P.size(); ++i) {
      const S d = std::hypot(P.x[i] - field.axial, P.r[i]);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    rho = (lo + hi) / S(2);
    return hi - lo <= opt.radial_tol * (S(1) + hi);
  };
  S rhoA = S(0), rhoB = S(0);
  const bool radial_ok =
      radius_if_concentric(A, rhoA) && radius_if_concentric(B, rhoB);
  const bool use_radial = opt.method == DistanceMethod::radial ||
                          (opt.method == DistanceMethod::automatic && radial_ok);
  if (opt.method == DistanceMethod::radial)
    require(radial_ok, "conformal_distance: sets are not concentric about the field center");
  if (use_radial) return detail::radial_distance(rhoA, rhoB, field, t, opt.quad_tol);

  const S h = opt.spacing > S(0) ? opt.spacing : field.R / S(100);
  const S coarse = detail::grid_distance(A, B, field, t, h);
  if (!opt.refine) return coarse;
  return detail::grid_distance(A, B, field, t, h / S(2));
}

// ---------------------------------------------------------------------------
// Distance monotonicity audit
// ---------------------------------------------------------------------------

template <class S>
struct AvoidanceWindowT {
  S a = S(0), b = S(0);  // time window [a, b]
  S R = S(5);            // initial comparison radius
  S gamma = S(1);        // radius margin spent by the conclusion ball
  S axial = S(0);        // ball center on the axis
};

using AvoidanceWindow = AvoidanceWindowT<double>;

template <class S>
struct AvoidanceSeriesT {
  Vec<S> ts;
  Vec<S> d;  // conformal distance per slice
  AuditReport report;
};

using AvoidanceSeries = AvoidanceSeriesT<double>;

// Checks that the conformal distance between two disjoint flows is
// non-decreasing across the recorded slices and that the final comparison
// ball holds no meeting point.  The disjointness hypothesis is verified on
// every slice before t = b inside the shrinking support ball; data that
// violates it (or a window too long for the radius budget) is rejected.
template <class S>
AvoidanceSeriesT<S> avoidance_audit(const std::vector<SolitonT<S>>& flowA,
                                    const std::vector<SolitonT<S>>& flowB, const Vec<S>& ts,
                                    const AvoidanceWindowT<S>& win, S beta = S(1),
                                    const ConformalDistanceOptionsT<S>& dopt = {}) {
  constexpr double kAtol = 1e-6;
  const Eigen::Index nt = ts.size();
  require(nt >= 2, "avoidance_audit: need at least two slices");
  require(flowA.size() == size_t(nt) && flowB.size() == size_t(nt),
          "avoidance_audit: flows must share the time grid");
  require(win.R > S(0) && win.gamma >= S(0), "avoidance_audit: bad window");
  const int n = flowA.front().n;
  for (const auto& sl : flowA) require(sl.n == n, "avoidance_audit: mixed dimensions");
  for (const auto& sl : flowB) require(sl.n == n, "avoidance_audit: mixed dimensions");
  if (!(win.b > win.a) || !(win.b < win.a + (win.R * win.R - win.gamma) / S(2 * n)))
    throw ValidationError("avoidance_audit: window [a, b] exceeds the radius budget");
  for (Eigen::Index k = 0; k < nt; ++k) {
    require(ts[k] >= win.a - S(1e-12) && ts[k] <= win.b + S(1e-12),
            "avoidance_audit: slice outside the window");
    if (k) require(ts[k] > ts[k - 1], "avoidance_audit: times must increase");
  }

  ConformalFieldT<S> field{n, win.R, S(0), win.axial, win.a};

  // hypothesis: the flows never meet inside the shrinking ball before t = b
  auto min_gap_in_ball = [&](const SolitonT<S>& A, const SolitonT<S>& B, S rad2) {
    S best = std::numeric_limits<S>::infinity();
    for (Eigen::Index i = 0; i < A.size(); ++i) {
      const S dA = (A.x[i] - win.axial) * (A.x[i] - win.axial) + A.r[i] * A.r[i];
      if (dA > rad2) continue;
      for (Eigen::Index j = 0; j < B.size(); ++j) {
        const S dB = (B.x[j] - win.axial) * (B.x[j] - win.axial) + B.r[j] * B.r[j];
        if (dB > rad2) continue;
        best = std::min(best, std::hypot(A.x[i] - B.x[j], A.r[i] - B.r[j]));
      }
    }
    return best;
  };
  for (Eigen::Index k = 0; k < nt; ++k) {
    if (ts[k] >= win.b) continue;
    const S rad2 = field.support_radius2(ts[k]);
    if (!(rad2 > S(0))) continue;
    const S gap = min_gap_in_ball(flowA[size_t(k)], flowB[size_t(k)], rad2);
    if (gap <= S(1e-9))
      throw ValidationError("avoidance_audit: flows meet inside the comparison ball at t = " +
                            std::to_string(double(ts[k])));
  }

  AvoidanceSeriesT<S> out;
  out.ts = ts;
  out.d.resize(nt);
  // which method serves a slice decides the slack model below
  auto concentric = [&](const SolitonT<S>& P) {
    S lo = std::numeric_limits<S>::infinity(), hi = S(0);
    for (Eigen::Index i = 0; i < P.size(); ++i) {
      const S d = std::hypot(P.x[i] - win.axial, P.r[i]);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    return hi - lo <= dopt.radial_tol * (S(1) + hi);
  };
  bool any_grid = false;
  for (Eigen::Index k = 0; k < nt; ++k) {
    out.d[k] = conformal_distance(flowA[size_t(k)], flowB[size_t(k)], field, ts[k], dopt);
    if (dopt.method == DistanceMethod::grid ||
        (dopt.method == DistanceMethod::automatic &&
         !(concentric(flowA[size_t(k)]) && concentric(flowB[size_t(k)]))))
      any_grid = true;
  }

  AuditReport rep{"conformal_distance_monotonicity"};
  rep.metric("slices", double(nt));
  rep.metric("d_first", double(out.d[0]));
  rep.metric("d_last", double(out.d[nt - 1]));
  const S h_used = dopt.spacing > S(0) ? dopt.spacing : win.R / S(100);
  const S grid_slack = any_grid ? h_used : S(0);  // empirical snap jitter budget
  if (any_grid) rep.metric("grid_slack", double(grid_slack));
  S worst_drop = S(0);
  for (Eigen::Index k = 0; k + 1 < nt; ++k) {
    const S slack = S(kAtol) + beta * (ts[k + 1] - ts[k]) + grid_slack;
    const S drop = out.d[k] - out.d[k + 1];
    worst_drop = std::max(worst_drop, drop);
    if (drop > slack) {
      rep.fail("conformal distance decreases beyond the slack at t = " +
               std::to_string(double(ts[k + 1])));
      break;
    }
  }
  rep.metric("max_step_drop", double(worst_drop));

  // conclusion: the final ball (radius margin gamma spent) holds no meeting
  const S rb2 = win.R * win.R - win.gamma - S(2 * n) * (win.b - win.a);
  rep.metric("final_ball_radius", double(std::sqrt(std::max(S(0), rb2))));
  const S fgap = min_gap_in_ball(flowA.back(), flowB.back(), rb2);
  rep.metric("final_gap", std::isfinite(double(fgap)) ? double(fgap) : -1.0);
  if (std::isfinite(fgap) && fgap <= S(1e-9))
    rep.fail("flows meet inside the final comparison ball");
  out.report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// Profile-crossing probe
// ---------------------------------------------------------------------------

template <class S>
struct CrossingWitnessT {
  bool found = false;
  S x = S(0), r = S(0);      // witness location in the (x, r) half-plane
  S gapA = S(0), gapB = S(0);  // distance from the witness to each profile
  S min_gap = S(0);          // certified minimum gap when no crossing exists
  std::vector<std::pair<S, S>> crossings;  // all segment crossings found
};

using CrossingWitness = CrossingWitnessT<double>;

// Searches the (x, r) half-plane for a point shared by two profiles:
// coincident nodes first, then proper segment crossings.  Without a
// crossing the minimum polyline gap is certified instead.
template <class S>
CrossingWitnessT<S> frankel_probe(const SolitonT<S>& A, const SolitonT<S>& B) {
  require(A.size() >= 2 && B.size() >= 2, "frankel_probe: degenerate profile");
  CrossingWitnessT<S> out;
  const S gap = detail::polyline_gap(A, B);
  out.min_gap = gap;
  if (gap <= S(1e-12)) {
    // overlapping profiles: any node on the other curve is a witness
    const Eigen::Index nsegB = (B.topology == Topology::periodic) ? B.size() : B.size() - 1;
    for (Eigen::Index i = 0; i < A.size() && !out.found; ++i)
      for (Eigen::Index j = 0; j < nsegB; ++j) {
        const Eigen::Index j1 = (j + 1) % B.size();
        if (detail::point_segment_dist(A.x[i], A.r[i], B.x[j], B.r[j], B.x[j1], B.r[j1]) <=
            S(1e-12)) {
          out.found = true;
          out.x = A.x[i];
          out.r = A.r[i];
          break;
        }
      }
  }
  const Eigen::Index nsa = (A.topology == Topology::periodic) ? A.size() : A.size() - 1;
  const Eigen::Index nsb = (B.topology == Topology::periodic) ? B.size() : B.size() - 1;
  for (Eigen::Index i = 0; i < nsa; ++i) {
    const Eigen::Index i1 = (i + 1) % A.size();
    for (Eigen::Index j = 0; j < nsb; ++j) {
      const Eigen::Index j1 = (j + 1) % B.size();
      S cx, cr;
      if (detail::segment_cross(A.x[i], A.r[i], A.x[i1], A.r[i1], B.x[j], B.r[j], B.x[j1],
                                B.r[j1], cx, cr))
        out.crossings.push_back({cx, cr});
    }
  }
  if (!out.found && !out.crossings.empty()) {
    out.found = true;
    out.x = out.crossings.front().first;
    out.r = out.crossings.front().second;
  }
  if (out.found) {
    auto dist_to = [&](const SolitonT<S>& P) {
      S best = std::numeric_limits<S>::infinity();
      const Eigen::Index ns = (P.topology == Topology::periodic) ? P.size() : P.size() - 1;
      for (Eigen::Index j = 0; j < ns; ++j) {
        const Eigen::Index j1 = (j + 1) % P.size();
        best = std::min(best, detail::point_segment_dist(out.x, out.r, P.x[j], P.r[j], P.x[j1],
                                                         P.r[j1]));
      }
      return best;
    };
    out.gapA = dist_to(A);
    out.gapB = dist_to(B);
    out.min_gap = S(0);
  }
  return out;
}

}  // namespace shrinkerlab
