#pragma once

// Rotationally symmetric solitons in R^{n+1} as discretized profile curves
// (x(s), r(s)) in the half-plane r >= 0, plus the shooting machinery for
// closed (Angenent-type) profiles and cone-asymptotic ends.
//
// Orientation convention (orientation = +1): the profile unit normal is
// nu = (-sin theta, cos theta), the left normal of the tangent (cos theta,
// sin theta).  With it,
//   H  = -theta' + (n-1) cos(theta)/r,    <x,nu> = r cos theta - x sin theta,
// and the soliton equation is H = sigma * <x,nu>/2 with sigma = +1 for
// shrinkers, -1 for expanders.  The convention is pinned by the zero-residual
// gate on the sphere of radius sqrt(2n) and the cylinder of radius
// sqrt(2(n-1)); both are exact orbits of the reduced system
//   x' = cos theta,  r' = sin theta,
//   theta' = (n-1) cos(theta)/r - sigma * (r cos theta - x sin theta)/2.

#include "core.hpp"

#include <algorithm>
#include <optional>

namespace shrinkerlab {

enum class SolitonKind { sphere, cylinder, torus, conical_end, custom };
enum class SolitonMode { shrinker, expander };
enum class Topology { axis_closed, periodic, open };

inline const char* to_string(SolitonKind k) {
  switch (k) {
    case SolitonKind::sphere: return "sphere";
    case SolitonKind::cylinder: return "cylinder";
    case SolitonKind::torus: return "torus";
    case SolitonKind::conical_end: return "conical_end";
    default: return "custom";
  }
}

template <class S>
struct SolitonT {
  SolitonKind kind = SolitonKind::custom;
  int n = 2;  // surface dimension; ambient dimension is n+1
  Topology topology = Topology::open;
  S orientation = S(1);
  S ds = S(0);  // uniform arclength spacing

  Vec<S> s, x, r, theta;
  Vec<S> H, A2, nu_x, nu_r, xdotnu, rtilde;

  Eigen::Index size() const { return x.size(); }
  bool closed() const { return topology != Topology::open; }
  S length() const {
    if (topology == Topology::open) return ds * S(size() - 1);
    return ds * S(size());  // axis_closed: crossings at the faces s=0, s=L
  }

  // Profile point with ghost extension: periodic wrap, axis reflection
  // (x, -r) for axis-terminated closed profiles, linear extrapolation outside
  // open ends (used only by one-sided stencils).
  Vec2<S> point(Eigen::Index i) const {
    const Eigen::Index m = size();
    switch (topology) {
      case Topology::periodic: {
        Eigen::Index j = ((i % m) + m) % m;
        return {x[j], r[j]};
      }
      case Topology::axis_closed: {
        if (i < 0) return {x[-i - 1], -r[-i - 1]};
        if (i >= m) return {x[2 * m - 1 - i], -r[2 * m - 1 - i]};
        return {x[i], r[i]};
      }
      default: {
        if (i < 0) return Vec2<S>{x[0], r[0]} + S(i) * (Vec2<S>{x[1], r[1]} - Vec2<S>{x[0], r[0]});
        if (i >= m)
          return Vec2<S>{x[m - 1], r[m - 1]} +
                 S(i - m + 1) * (Vec2<S>{x[m - 1], r[m - 1]} - Vec2<S>{x[m - 2], r[m - 2]});
        return {x[i], r[i]};
      }
    }
  }
};

using Soliton = SolitonT<double>;

namespace detail {

// Unwrap an angle to the branch nearest `near`.
template <class S>
S unwrap(S angle, S near) {
  while (angle - near > S(M_PI)) angle -= S(2) * S(M_PI);
  while (angle - near < -S(M_PI)) angle += S(2) * S(M_PI);
  return angle;
}

}  // namespace detail

// Discrete geometry of a profile polyline under a given parametrization s
// (arclength for stored solitons, cumulative chord length for graphs).
// Tangent angles come from centered chords, curvature from centered
// differences of the unwrapped angles; both are exact on circles and lines,
// second order otherwise.
template <class S>
struct DiscreteGeometry {
  Vec<S> theta, kappa, H, A2, nu_x, nu_r, xdotnu;
};

template <class S>
DiscreteGeometry<S> discrete_geometry(const SolitonT<S>& base, const Vec<S>* override_x = nullptr,
                                      const Vec<S>* override_r = nullptr,
                                      const Vec<S>* override_s = nullptr) {
  const Eigen::Index m = base.size();
  require(m >= 5, "discrete_geometry: need at least 5 nodes");
  const Vec<S>& xs = override_x ? *override_x : base.x;
  const Vec<S>& rs = override_r ? *override_r : base.r;
  const Vec<S>& ss = override_s ? *override_s : base.s;

  SolitonT<S> view;  // lightweight ghost-view over the override arrays
  view.topology = base.topology;
  view.x = xs;
  view.r = rs;

  // Chord tangent angles on the extended index range [-2, m+1].  Interior
  // angles use the Richardson pair of the span-1 and span-2 chords (exact on
  // circles and lines, 4th order otherwise); the outer two nodes of an open
  // profile fall back to short stencils.
  const bool open = base.topology == Topology::open;
  const Eigen::Index pad = 2;
  Vec<S> th_ext(m + 2 * pad);  // th_ext[k + pad] = theta_hat at node k
  auto chord_angle = [&](Eigen::Index i) -> S {
    if (open && i == 0) {
      Vec2<S> a = view.point(0), b = view.point(1);
      return std::atan2(b[1] - a[1], b[0] - a[0]);
    }
    if (open && i == m - 1) {
      Vec2<S> a = view.point(m - 2), b = view.point(m - 1);
      return std::atan2(b[1] - a[1], b[0] - a[0]);
    }
    Vec2<S> a1 = view.point(i - 1), b1 = view.point(i + 1);
    const S t1 = std::atan2(b1[1] - a1[1], b1[0] - a1[0]);
    if (open && (i == 1 || i == m - 2)) return t1;
    Vec2<S> a2 = view.point(i - 2), b2 = view.point(i + 2);
    const S t2 = detail::unwrap(std::atan2(b2[1] - a2[1], b2[0] - a2[0]), t1);
    return (S(4) * t1 - t2) / S(3);
  };
  th_ext[pad] = chord_angle(0);
  for (Eigen::Index i = 1; i < m; ++i)
    th_ext[i + pad] = detail::unwrap(chord_angle(i), th_ext[i - 1 + pad]);
  if (open) {
    for (Eigen::Index k = 1; k <= pad; ++k) {
      th_ext[pad - k] = th_ext[pad];          // unused (short stencils at ends)
      th_ext[m - 1 + pad + k] = th_ext[m - 1 + pad];
    }
  } else {
    th_ext[pad - 1] = detail::unwrap(chord_angle(-1), th_ext[pad]);
    th_ext[pad - 2] = detail::unwrap(chord_angle(-2), th_ext[pad - 1]);
    th_ext[m + pad] = detail::unwrap(chord_angle(m), th_ext[m - 1 + pad]);
    th_ext[m + pad + 1] = detail::unwrap(chord_angle(m + 1), th_ext[m + pad]);
  }

  DiscreteGeometry<S> g;
  g.theta.resize(m);
  g.kappa.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) g.theta[i] = th_ext[i + pad];
  const S h0 = ss[1] - ss[0];
  auto th = [&](Eigen::Index i) -> S { return th_ext[i + pad]; };

  // Graph surfaces carry chord-accumulated parameters that are only nearly
  // uniform; the high-order stencil requires exact uniformity.
  bool uniform = true;
  for (Eigen::Index i = 1; i + 1 < m; ++i)
    if (std::abs((ss[i + 1] - ss[i]) - h0) > S(1e-9) * std::abs(h0)) {
      uniform = false;
      break;
    }

  // Ghost arc coordinates for centered differences at closed boundaries.
  S s_before = ss[0] - h0, s_after = ss[m - 1] + h0;
  if (!uniform && !open) {
    s_before = ss[0] - (view.point(0) - view.point(-1)).norm();
    s_after = ss[m - 1] + (view.point(m) - view.point(m - 1)).norm();
  }

  for (Eigen::Index i = 0; i < m; ++i) {
    if (open) {
      if (i == 0) {
        g.kappa[i] = (th(1) - th(0)) / (ss[1] - ss[0]);
        continue;
      }
      if (i == m - 1) {
        g.kappa[i] = (th(m - 1) - th(m - 2)) / (ss[m - 1] - ss[m - 2]);
        continue;
      }
      if (!uniform || i <= 2 || i >= m - 3) {
        g.kappa[i] = (th(i + 1) - th(i - 1)) / (ss[i + 1] - ss[i - 1]);
        continue;
      }
    } else if (!uniform) {
      const S s_lo = (i == 0) ? s_before : ss[i - 1];
      const S s_hi = (i == m - 1) ? s_after : ss[i + 1];
      g.kappa[i] = (th(i + 1) - th(i - 1)) / (s_hi - s_lo);
      continue;
    }
    // 5-point 4th-order derivative of the unwrapped angle (uniform spacing)
    g.kappa[i] = (-th(i + 2) + S(8) * th(i + 1) - S(8) * th(i - 1) + th(i - 2)) / (S(12) * h0);
  }

  g.H.resize(m);
  g.A2.resize(m);
  g.nu_x.resize(m);
  g.nu_r.resize(m);
  g.xdotnu.resize(m);
  const S orient = base.orientation;
  for (Eigen::Index i = 0; i < m; ++i) {
    const S th = g.theta[i];
    const S c = std::cos(th), sn = std::sin(th);
    g.nu_x[i] = -sn * orient;
    g.nu_r[i] = c * orient;
    const S rot = (rs[i] > S(1e-12)) ? c / rs[i] : S(0);  // degenerate axis node, caller excludes it
    g.H[i] = orient * (-g.kappa[i] + S(base.n - 1) * rot);
    g.A2[i] = g.kappa[i] * g.kappa[i] + S(base.n - 1) * rot * rot;
    g.xdotnu[i] = orient * (rs[i] * c - xs[i] * sn);
  }
  return g;
}

// Fill the derived per-point fields of `sol` from its (s, x, r) data.
template <class S>
void recompute_geometry(SolitonT<S>& sol) {
  auto g = discrete_geometry(sol);
  sol.theta = g.theta;
  sol.H = g.H;
  sol.A2 = g.A2;
  sol.nu_x = g.nu_x;
  sol.nu_r = g.nu_r;
  sol.xdotnu = g.xdotnu;
  sol.rtilde = (S(1) + sol.x.array().square()).sqrt();
}

// ---------------------------------------------------------------------------
// Exact model builders
// ---------------------------------------------------------------------------

// Round sphere S^n(sqrt(2n)), cell-centered over the half-circle so the axis
// crossings sit on cell faces (no node has r = 0).
template <class S>
SolitonT<S> build_sphere(int n, Eigen::Index m) {
  require(n >= 1, "build_sphere: dimension must be >= 1");
  require(m >= 16, "build_sphere: grid size must be >= 16");
  const S R = std::sqrt(S(2 * n));
  SolitonT<S> sol;
  sol.kind = SolitonKind::sphere;
  sol.n = n;
  sol.topology = Topology::axis_closed;
  sol.ds = R * S(M_PI) / S(m);
  sol.s.resize(m);
  sol.x.resize(m);
  sol.r.resize(m);
  sol.theta.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const S psi = (S(i) + S(0.5)) * S(M_PI) / S(m);
    sol.s[i] = R * psi;
    sol.x[i] = -R * std::cos(psi);
    sol.r[i] = R * std::sin(psi);
    sol.theta[i] = S(M_PI) / S(2) - psi;
  }
  sol.H = Vec<S>::Constant(m, S(n) / R);
  sol.A2 = Vec<S>::Constant(m, S(0.5));
  sol.nu_x = (-sol.theta.array().sin()).matrix();
  sol.nu_r = sol.theta.array().cos().matrix();
  sol.xdotnu = Vec<S>::Constant(m, R);
  sol.rtilde = (S(1) + sol.x.array().square()).sqrt();
  return sol;
}

// Round cylinder R x S^{n-1}(sqrt(2(n-1))) truncated to |x| <= x_max,
// endpoint-inclusive (Dirichlet truncation boundary).
template <class S>
SolitonT<S> build_cylinder(int n, S x_max, Eigen::Index m) {
  require(n >= 2, "build_cylinder: dimension must be >= 2");
  require(x_max >= S(4), "build_cylinder: truncation half-length must be >= 4");
  require(m >= 16, "build_cylinder: grid size must be >= 16");
  const S R = std::sqrt(S(2 * (n - 1)));
  SolitonT<S> sol;
  sol.kind = SolitonKind::cylinder;
  sol.n = n;
  sol.topology = Topology::open;
  sol.ds = S(2) * x_max / S(m - 1);
  sol.s.resize(m);
  sol.x.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    sol.s[i] = S(i) * sol.ds;
    sol.x[i] = -x_max + S(i) * sol.ds;
  }
  sol.r = Vec<S>::Constant(m, R);
  sol.theta = Vec<S>::Zero(m);
  sol.H = Vec<S>::Constant(m, S(n - 1) / R);
  sol.A2 = Vec<S>::Constant(m, S(0.5));
  sol.nu_x = Vec<S>::Zero(m);
  sol.nu_r = Vec<S>::Ones(m);
  sol.xdotnu = Vec<S>::Constant(m, R);
  sol.rtilde = (S(1) + sol.x.array().square()).sqrt();
  return sol;
}

// Hyperplane {x = c} as a truncated disk profile, cell-centered in r.
// A shrinker only for c = 0; used by the density module.
template <class S>
SolitonT<S> build_plane(int n, S c, S r_max, Eigen::Index m) {
  require(n >= 1, "build_plane: dimension must be >= 1");
  require(m >= 16 && r_max > S(0), "build_plane: need m >= 16 and r_max > 0");
  SolitonT<S> sol;
  sol.kind = SolitonKind::custom;
  sol.n = n;
  sol.topology = Topology::open;
  sol.ds = r_max / S(m);
  sol.s.resize(m);
  sol.x = Vec<S>::Constant(m, c);
  sol.r.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    sol.r[i] = (S(i) + S(0.5)) * sol.ds;
    sol.s[i] = sol.r[i];
  }
  sol.theta = Vec<S>::Constant(m, S(M_PI) / S(2));
  sol.H = Vec<S>::Zero(m);
  sol.A2 = Vec<S>::Zero(m);
  sol.nu_x = Vec<S>::Constant(m, S(-1));
  sol.nu_r = Vec<S>::Zero(m);
  sol.xdotnu = Vec<S>::Constant(m, -c);
  sol.rtilde = (S(1) + sol.x.array().square()).sqrt();
  return sol;
}

// ---------------------------------------------------------------------------
// Residual
// ---------------------------------------------------------------------------

// Per-point soliton residual H - sigma*<x,nu>/2, recomputed from discrete
// geometry (stored H/nu are not trusted).  At open ends the two boundary
// nodes use one-sided stencils; residual_sup excludes them.
template <class S>
Vec<S> soliton_residual(const SolitonT<S>& sol, SolitonMode mode) {
  require(sol.size() >= 5, "soliton_residual: need at least 5 points");
  for (Eigen::Index i = 1; i < sol.size(); ++i) {
    if (Vec2<S>{sol.x[i] - sol.x[i - 1], sol.r[i] - sol.r[i - 1]}.norm() < S(1e-14))
      throw NumericalError("soliton_residual: repeated profile points");
  }
  auto g = discrete_geometry(sol);
  const S sigma = (mode == SolitonMode::shrinker) ? S(1) : S(-1);
  Vec<S> res(sol.size());
  for (Eigen::Index i = 0; i < sol.size(); ++i) res[i] = g.H[i] - sigma * S(0.5) * g.xdotnu[i];
  return res;
}

template <class S>
S residual_sup(const SolitonT<S>& sol, SolitonMode mode) {
  Vec<S> res = soliton_residual(sol, mode);
  const Eigen::Index m = res.size();
  Eigen::Index lo = 0, hi = m;
  if (sol.topology == Topology::open) {
    lo = 2;
    hi = m - 2;
  }
  S sup = S(0);
  for (Eigen::Index i = lo; i < hi; ++i)
    if (sol.r[i] > S(1e-9)) sup = std::max(sup, S(std::abs(res[i])));
  return sup;
}

// ---------------------------------------------------------------------------
// Shooting
// ---------------------------------------------------------------------------

enum class ShootStop { s_max, axis, curvature_blowup };

template <class S>
struct ShootResultT {
  Vec<S> s, x, r, theta;
  ShootStop stop = ShootStop::s_max;
  S drift = S(0);  // max per-step discrepancy between full and half-step integration
  // Axis crossing extrapolation when stop == axis:
  S x_end = S(0), s_end = S(0);
};

using ShootResult = ShootResultT<double>;

struct ShootInit {
  // Either a regular axis crossing (r = 0, |theta| = pi/2) or a point with
  // horizontal tangent on the r-axis, or a fully general start.
  enum class Kind { axis, r_axis, general } kind = Kind::r_axis;
  double x0 = 0.0, r0 = 1.0, theta0 = 0.0;

  static ShootInit axis(double x0) { return {Kind::axis, x0, 0.0, M_PI / 2}; }
  static ShootInit r_axis(double r0) { return {Kind::r_axis, 0.0, r0, 0.0}; }
  static ShootInit general(double x0, double r0, double theta0) { return {Kind::general, x0, r0, theta0}; }
};

namespace detail {

template <class S>
Eigen::Matrix<S, 3, 1> profile_rhs(int n, S sigma, const Eigen::Matrix<S, 3, 1>& y) {
  const S c = std::cos(y[2]), sn = std::sin(y[2]);
  Eigen::Matrix<S, 3, 1> f;
  f[0] = c;
  f[1] = sn;
  f[2] = S(n - 1) * c / y[1] - sigma * S(0.5) * (y[1] * c - y[0] * sn);
  return f;
}

template <class S>
Eigen::Matrix<S, 3, 1> rk4_step(int n, S sigma, const Eigen::Matrix<S, 3, 1>& y, S h) {
  auto k1 = profile_rhs(n, sigma, y);
  auto k2 = profile_rhs<S>(n, sigma, y + (h / 2) * k1);
  auto k3 = profile_rhs<S>(n, sigma, y + (h / 2) * k2);
  auto k4 = profile_rhs<S>(n, sigma, y + h * k3);
  return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

}  // namespace detail

// Integrate the reduced profile system with fixed-step RK4.  Every step is
// cross-checked against two half steps (the half-step result is kept); the
// max discrepancy is reported as `drift` and a NumericalError is raised if it
// exceeds drift_tol.  Axis starts use the regular-solution series
// theta(s) = theta0 + sigma*x0*sin(theta0)/(2n) * s for the first step.
template <class S>
ShootResultT<S> shoot_profile(int n, SolitonMode mode, const ShootInit& init, S ds, S s_max,
                              S drift_tol = S(1e-5)) {
  require(n >= 1, "shoot_profile: dimension must be >= 1");
  require(ds > S(0) && ds <= S(1e-2), "shoot_profile: need 0 < ds <= 1e-2");
  require(s_max > ds, "shoot_profile: s_max must exceed ds");
  const S sigma = (mode == SolitonMode::shrinker) ? S(1) : S(-1);

  std::vector<S> ss, xx, rr, tt;
  auto push = [&](S s, const Eigen::Matrix<S, 3, 1>& y) {
    ss.push_back(s);
    xx.push_back(y[0]);
    rr.push_back(y[1]);
    tt.push_back(y[2]);
  };

  Eigen::Matrix<S, 3, 1> y;
  S s = S(0);
  if (init.kind == ShootInit::Kind::axis) {
    require(std::abs(std::abs(init.theta0) - M_PI / 2) < 1e-12,
            "shoot_profile: axis start needs |theta0| = pi/2");
    require(std::sin(init.theta0) > 0, "shoot_profile: axis start must move into r > 0");
    const S th1 = sigma * S(init.x0) * std::sin(S(init.theta0)) / S(2 * n);
    y = {S(init.x0), S(0), S(init.theta0)};
    push(s, y);
    // series step off the axis
    const S h = ds;
    y[0] = S(init.x0) - std::sin(S(init.theta0)) * th1 * h * h / S(2);
    y[1] = std::sin(S(init.theta0)) * (h - th1 * th1 * h * h * h / S(6));
    y[2] = S(init.theta0) + th1 * h;
    s += h;
    push(s, y);
  } else {
    if (init.kind == ShootInit::Kind::r_axis) {
      y = {S(0), S(init.r0), S(0)};
    } else {
      y = {S(init.x0), S(init.r0), S(init.theta0)};
    }
    require(y[1] > S(0), "shoot_profile: need r(0) > 0 off the axis");
    push(s, y);
  }

  ShootResultT<S> out;
  out.stop = ShootStop::s_max;
  S drift = S(0);
  const S blowup = S(1) / (S(10) * ds);
  while (s + ds <= s_max + ds / 2) {
    auto full = detail::rk4_step(n, sigma, y, ds);
    auto half = detail::rk4_step<S>(n, sigma, detail::rk4_step(n, sigma, y, ds / 2), ds / 2);
    drift = std::max(drift, S((full - half).template lpNorm<Eigen::Infinity>()));
    if (drift > drift_tol)
      throw NumericalError("shoot_profile: step-size instability, drift " + std::to_string(double(drift)));
    if (half[1] <= S(0)) {
      // axis reached inside this step: linear extrapolation of the crossing
      const S f = y[1] / (y[1] - half[1]);
      out.stop = ShootStop::axis;
      out.x_end = y[0] + f * (half[0] - y[0]);
      out.s_end = s + f * ds;
      break;
    }
    y = half;
    s += ds;
    push(s, y);
    if (std::abs(detail::profile_rhs(n, sigma, y)[2]) > blowup) {
      out.stop = ShootStop::curvature_blowup;
      break;
    }
  }
  out.drift = drift;
  out.s = Eigen::Map<Vec<S>>(ss.data(), Eigen::Index(ss.size()));
  out.x = Eigen::Map<Vec<S>>(xx.data(), Eigen::Index(xx.size()));
  out.r = Eigen::Map<Vec<S>>(rr.data(), Eigen::Index(rr.size()));
  out.theta = Eigen::Map<Vec<S>>(tt.data(), Eigen::Index(tt.size()));
  return out;
}

// Closure defect of the orbit started at (0, r0) with horizontal tangent:
// the orbit is followed to its next crossing of the symmetry plane {x = 0};
// a closed symmetric profile must arrive there with theta = pi.  Returns the
// signed angle mismatch, or nullopt if the orbit never returns (termination
// cause in `stop`).
template <class S>
struct ClosureDefectT {
  std::optional<S> defect;
  S r_return = S(0);
  ShootStop stop = ShootStop::s_max;
};

template <class S>
ClosureDefectT<S> closure_defect(int n, S r0, S ds = S(2e-4), S s_max = S(20)) {
  auto traj = shoot_profile<S>(n, SolitonMode::shrinker, ShootInit::r_axis(double(r0)), ds, s_max);
  ClosureDefectT<S> out;
  out.stop = traj.stop;
  for (Eigen::Index i = 1; i < traj.x.size(); ++i) {
    if (traj.s[i] > S(4) * ds && traj.x[i - 1] > S(0) && traj.x[i] <= S(0)) {
      const S f = traj.x[i - 1] / (traj.x[i - 1] - traj.x[i]);
      out.defect = traj.theta[i - 1] + f * (traj.theta[i] - traj.theta[i - 1]) - S(M_PI);
      out.r_return = traj.r[i - 1] + f * (traj.r[i] - traj.r[i - 1]);
      return out;
    }
  }
  return out;
}

namespace detail {

// Periodic Catmull-Rom interpolation of samples (param[i], val[i]).
template <class S>
S catmull_rom(const Vec<S>& param, const Vec<S>& val, S period, S t) {
  const Eigen::Index m = param.size();
  // locate interval by binary search on the principal branch
  S tp = t - period * std::floor((t - param[0]) / period);
  Eigen::Index lo = 0, hi = m;  // param[lo] <= tp < param[lo+1] (cyclically)
  while (hi - lo > 1) {
    Eigen::Index mid = (lo + hi) / 2;
    if (param[mid] <= tp)
      lo = mid;
    else
      hi = mid;
  }
  auto P = [&](Eigen::Index i) -> S { return val[((i % m) + m) % m]; };
  auto T = [&](Eigen::Index i) -> S {
    Eigen::Index j = ((i % m) + m) % m;
    S shift = period * S(std::floor(double(i) / double(m)));
    return param[j] + shift;
  };
  const S t0 = T(lo - 1), t1 = T(lo), t2 = T(lo + 1), t3 = T(lo + 2);
  const S p0 = P(lo - 1), p1 = P(lo), p2 = P(lo + 1), p3 = P(lo + 2);
  const S u = (tp - t1) / (t2 - t1);
  const S m1 = (p2 - p0) / (t2 - t0) * (t2 - t1);
  const S m2 = (p3 - p1) / (t3 - t1) * (t2 - t1);
  const S u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * p1 + (u3 - 2 * u2 + u) * m1 + (-2 * u3 + 3 * u2) * p2 + (u3 - u2) * m2;
}

}  // namespace detail

// Bisect the closure defect over [r_lo, r_hi] and assemble the closed torus
// profile (the x > 0 half-orbit mirrored across the symmetry plane).
template <class S>
SolitonT<S> find_torus(int n, S r_lo, S r_hi, S tol = S(1e-6), S ds = S(1e-4)) {
  require(n >= 2, "find_torus: dimension must be >= 2");
  require(r_lo > S(0) && r_hi > r_lo, "find_torus: bad bracket");
  auto d_lo = closure_defect<S>(n, r_lo, ds);
  auto d_hi = closure_defect<S>(n, r_hi, ds);
  if (!d_lo.defect || !d_hi.defect)
    throw SearchFailure("find_torus: a bracket endpoint orbit never returns to the symmetry plane");
  if (*d_lo.defect * *d_hi.defect > S(0))
    throw SearchFailure("find_torus: bracket does not straddle a closed orbit");
  S a = r_lo, b = r_hi, fa = *d_lo.defect;
  for (int it = 0; it < 80 && (b - a) > S(1e-15); ++it) {
    const S mid = (a + b) / 2;
    auto dm = closure_defect<S>(n, mid, ds);
    if (!dm.defect) throw SearchFailure("find_torus: interior orbit lost the symmetry-plane return");
    if (*dm.defect * fa <= S(0)) {
      b = mid;
    } else {
      a = mid;
      fa = *dm.defect;
    }
  }
  const S r0 = (a + b) / 2;

  // Locate the symmetry-plane return of the converged orbit.
  auto scout = shoot_profile<S>(n, SolitonMode::shrinker, ShootInit::r_axis(double(r0)), ds, S(40));
  S s_cross = S(-1);
  for (Eigen::Index i = 1; i < scout.x.size(); ++i) {
    if (scout.s[i] > S(4) * ds && scout.x[i - 1] > S(0) && scout.x[i] <= S(0)) {
      const S f = scout.x[i - 1] / (scout.x[i - 1] - scout.x[i]);
      s_cross = scout.s[i - 1] + f * ds;
      break;
    }
  }
  if (s_cross <= S(0)) throw SearchFailure("find_torus: converged orbit does not return");

  // Re-integrate with a step tuned so the apex falls exactly midway between
  // the last node and its mirror image.  The stored nodes are then the RK4
  // samples themselves, uniformly spaced in arclength through both seams;
  // any interpolated node would sit off the curve, and the curvature stencil
  // amplifies off-curve noise by 1/ds^2.
  const Eigen::Index J = std::max<Eigen::Index>(8, Eigen::Index(std::llround(double(s_cross / ds) + 0.5)));
  const S h = s_cross / (S(J) - S(0.5));
  auto half_orbit =
      shoot_profile<S>(n, SolitonMode::shrinker, ShootInit::r_axis(double(r0)), h, (S(J) - S(1)) * h + h / 2);
  if (half_orbit.x.size() < J)
    throw SearchFailure("find_torus: half-orbit terminated before the symmetry plane");

  const Eigen::Index m = 2 * J - 1;
  SolitonT<S> sol;
  sol.kind = SolitonKind::torus;
  sol.n = n;
  sol.topology = Topology::periodic;
  sol.ds = h;
  sol.s.resize(m);
  sol.x.resize(m);
  sol.r.resize(m);
  for (Eigen::Index i = 0; i < J; ++i) {
    sol.x[i] = half_orbit.x[i];
    sol.r[i] = half_orbit.r[i];
  }
  for (Eigen::Index i = 1; i < J; ++i) {
    sol.x[J - 1 + i] = -half_orbit.x[J - i];
    sol.r[J - 1 + i] = half_orbit.r[J - i];
  }
  for (Eigen::Index i = 0; i < m; ++i) sol.s[i] = S(i) * h;
  recompute_geometry(sol);
  const S res = residual_sup(sol, SolitonMode::shrinker);
  if (!(res <= tol))
    throw NumericalError("find_torus: closed profile residual " + std::to_string(double(res)) +
                         " exceeds tolerance");
  return sol;
}

// ---------------------------------------------------------------------------
// Cone-asymptotic ends
// ---------------------------------------------------------------------------

template <class S>
struct DecayReportT {
  S slope_w = S(0);    // d log|w| / d log r over the outer half
  S slope_wp = S(0);   // d log|w'| / d log r
  S rho_fit_lo = S(0), rho_fit_hi = S(0);
  Eigen::Index fit_points = 0;
};

using DecayReport = DecayReportT<double>;

template <class S>
struct ConicalEndT {
  SolitonT<S> profile;
  DecayReportT<S> decay;
};

// Soliton-ODE solution asymptotic to the cone r = a*x on cone radii
// [r0, r1].  The far field of the solution over the cone is
// w = sigma*c1/rho + O(rho^{-3}), c1 = (n-1) cot(beta).  The homogeneous
// perturbation modes over the cone are a tilt (w ~ rho, a rotated cone) and a
// Gaussian mode exp(sigma*rho^2/4); integration must avoid seeding either in
// the reported window:
//  - shrinker: the Gaussian mode explodes outward, so integrate inward;
//    starting far beyond r1 makes the series truncation error (which seeds
//    the tilt) negligible inside [r0, r1];
//  - expander: the Gaussian mode decays outward; integrate outward from r0
//    and null the tilt mode by a secant shoot on a tilt parameter, driving
//    the far-end combination rho*w' + w (zero for w ~ 1/rho) to zero.
template <class S>
ConicalEndT<S> conical_end(int n, S cone_slope, S r0, S r1, S ds,
                           SolitonMode mode = SolitonMode::shrinker) {
  require(cone_slope > S(0), "conical_end: cone slope must be positive");
  require(r0 > S(0) && r0 < r1, "conical_end: need 0 < r0 < r1");
  require(ds > S(0) && ds <= S(1e-2), "conical_end: need 0 < ds <= 1e-2");
  const S beta = std::atan(cone_slope);
  const S cb = std::cos(beta), sb = std::sin(beta);
  const S sigma = (mode == SolitonMode::shrinker) ? S(1) : S(-1);
  const S c1 = sigma * S(n - 1) * cb / sb;
  const bool inward = (mode == SolitonMode::shrinker);

  // Integrate from a series start with tilt delta; collect samples with cone
  // radius in [r0, r1] and the final (rho, w, w') state.
  struct Run {
    std::vector<S> xx, rr;
    S rho_end, w_end, wp_end;
  };
  auto integrate = [&](S delta) -> Run {
    const S rho_start = inward ? std::max(S(20), S(2) * r1) : r0;
    const S rho_stop = inward ? r0 : r1;
    const S w0 = c1 / rho_start + delta * rho_start;
    const S wp0 = -c1 / (rho_start * rho_start) + delta;
    Eigen::Matrix<S, 3, 1> y;
    y[0] = rho_start * cb - w0 * sb;
    y[1] = rho_start * sb + w0 * cb;
    y[2] = beta + std::atan(wp0);
    if (inward) y[2] += S(M_PI);  // traverse toward the origin

    Run run;
    auto record = [&](const Eigen::Matrix<S, 3, 1>& p) {
      const S rho_par = p[0] * cb + p[1] * sb;
      if (rho_par >= r0 - ds && rho_par <= r1 + ds) {
        run.xx.push_back(p[0]);
        run.rr.push_back(p[1]);
      }
    };
    record(y);
    const S span_guess = std::abs(rho_start - rho_stop) / std::min(cb, sb) + S(10);
    S s = S(0);
    while (s < span_guess) {
      y = detail::rk4_step<S>(n, sigma, detail::rk4_step(n, sigma, y, ds / 2), ds / 2);
      s += ds;
      const S rho_par = y[0] * cb + y[1] * sb;
      const S w = -y[0] * sb + y[1] * cb;
      if (std::abs(w) > S(0.3) * rho_par || y[1] <= S(0))
        throw NumericalError("conical_end: solution left the graphical neighborhood of the cone");
      record(y);
      if (inward ? (rho_par <= rho_stop) : (rho_par >= rho_stop)) {
        run.rho_end = rho_par;
        run.w_end = w;
        run.wp_end = std::tan(y[2] - beta - (inward ? S(M_PI) : S(0)));
        return run;
      }
    }
    throw NumericalError("conical_end: integration failed to traverse the radii window");
  };

  Run run;
  if (inward) {
    run = integrate(S(0));
  } else {
    // secant on the tilt: the objective is affine in delta up to the
    // quadratic terms of the soliton equation
    S d0 = S(0), d1 = S(1e-4);
    auto obj = [&](const Run& rn) { return rn.rho_end * rn.wp_end + rn.w_end; };
    Run run0 = integrate(d0);
    S f0 = obj(run0);
    run = run0;
    for (int it = 0; it < 8 && std::abs(f0) > S(1e-11); ++it) {
      Run run1 = integrate(d1);
      S f1 = obj(run1);
      if (f1 == f0) break;
      const S d2 = d1 - f1 * (d1 - d0) / (f1 - f0);
      d0 = d1;
      f0 = f1;
      run0 = run1;
      d1 = d2;
      run = run1;
    }
    if (std::abs(f0) > S(1e-8)) {
      Run run1 = integrate(d1);
      if (std::abs(obj(run1)) > S(1e-8))
        throw NumericalError("conical_end: tilt shoot did not converge");
      run = run1;
    }
  }

  const Eigen::Index P = Eigen::Index(run.xx.size());
  require(P >= 16, "conical_end: radii window too small for the step size");
  ConicalEndT<S> out;
  SolitonT<S>& sol = out.profile;
  sol.kind = SolitonKind::conical_end;
  sol.n = n;
  sol.topology = Topology::open;
  sol.ds = ds;
  sol.s.resize(P);
  sol.x.resize(P);
  sol.r.resize(P);
  for (Eigen::Index i = 0; i < P; ++i) {
    const Eigen::Index j = inward ? (P - 1 - i) : i;  // store outward-oriented
    sol.x[i] = run.xx[j];
    sol.r[i] = run.rr[j];
    sol.s[i] = S(i) * ds;
  }
  recompute_geometry(sol);

  // Decay fit of the normal graph over the cone on the outer half.
  Vec<S> rho(P), w(P);
  for (Eigen::Index i = 0; i < P; ++i) {
    rho[i] = sol.x[i] * cb + sol.r[i] * sb;
    w[i] = -sol.x[i] * sb + sol.r[i] * cb;
  }
  const S fit_lo = (r0 + r1) / S(2);
  std::vector<S> lx, lw, lxp, lwp;
  for (Eigen::Index i = 1; i + 1 < P; ++i) {
    if (rho[i] < fit_lo || rho[i] > r1) continue;
    const S wp = (w[i + 1] - w[i - 1]) / (rho[i + 1] - rho[i - 1]);
    if (std::abs(w[i]) > S(0) && std::abs(wp) > S(0)) {
      lx.push_back(std::log(rho[i]));
      lw.push_back(std::log(std::abs(w[i])));
      lxp.push_back(std::log(rho[i]));
      lwp.push_back(std::log(std::abs(wp)));
    }
  }
  require(lx.size() >= 8, "conical_end: too few points in the decay-fit window");
  auto mapv = [](std::vector<S>& v) { return Eigen::Map<Vec<S>>(v.data(), Eigen::Index(v.size())); };
  Vec<S> vlx = mapv(lx), vlw = mapv(lw), vlxp = mapv(lxp), vlwp = mapv(lwp);
  out.decay.slope_w = ls_slope(vlx, vlw);
  out.decay.slope_wp = ls_slope(vlxp, vlwp);
  out.decay.rho_fit_lo = fit_lo;
  out.decay.rho_fit_hi = r1;
  out.decay.fit_points = vlx.size();
  return out;
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

// Uniform resampling to m nodes preserving topology.  Exact kinds rebuild
// exactly; generic profiles are Catmull-Rom interpolated in arclength.
template <class S>
SolitonT<S> resample(const SolitonT<S>& sol, Eigen::Index m) {
  require(m >= 16, "resample: need m >= 16");
  if (sol.kind == SolitonKind::sphere) return build_sphere<S>(sol.n, m);
  if (sol.kind == SolitonKind::cylinder) {
    const S x_max = sol.x.cwiseAbs().maxCoeff();
    return build_cylinder<S>(sol.n, x_max, m);
  }
  const Eigen::Index P = sol.size();
  require(P >= 4, "resample: source too small");
  SolitonT<S> out;
  out.kind = sol.kind;
  out.n = sol.n;
  out.topology = sol.topology;
  out.orientation = sol.orientation;
  if (sol.topology == Topology::periodic) {
    const S L = sol.length();
    out.ds = L / S(m);
    out.s.resize(m);
    out.x.resize(m);
    out.r.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const S t = S(i) * out.ds;
      out.s[i] = t;
      out.x[i] = detail::catmull_rom(sol.s, sol.x, L, t);
      out.r[i] = detail::catmull_rom(sol.s, sol.r, L, t);
    }
  } else {
    // clamped interpolation over [s_first, s_last]
    const S s0 = sol.s[0], s1 = sol.s[P - 1];
    const bool cell_centered = sol.topology == Topology::axis_closed;
    const S span = cell_centered ? sol.length() : (s1 - s0);
    out.ds = cell_centered ? span / S(m) : span / S(m - 1);
    out.s.resize(m);
    out.x.resize(m);
    out.r.resize(m);
    auto interp = [&](const Vec<S>& val, S t) -> S {
      // clamped Catmull-Rom on a non-periodic table
      Eigen::Index lo = 0, hi = P - 1;
      t = std::clamp(t, s0, s1);
      while (hi - lo > 1) {
        Eigen::Index mid = (lo + hi) / 2;
        if (sol.s[mid] <= t)
          lo = mid;
        else
          hi = mid;
      }
      auto A = [&](Eigen::Index i) { return std::clamp<Eigen::Index>(i, 0, P - 1); };
      const S t1 = sol.s[lo], t2 = sol.s[lo + 1];
      const S p0 = val[A(lo - 1)], p1 = val[lo], p2 = val[lo + 1], p3 = val[A(lo + 2)];
      const S h = t2 - t1;
      const S u = (t - t1) / h;
      const S m1 = (lo == 0) ? (p2 - p1) : (p2 - p0) / (sol.s[lo + 1] - sol.s[A(lo - 1)]) * h;
      const S m2 = (lo + 2 > P - 1) ? (p2 - p1) : (p3 - p1) / (sol.s[A(lo + 2)] - sol.s[lo]) * h;
      const S u2 = u * u, u3 = u2 * u;
      return (2 * u3 - 3 * u2 + 1) * p1 + (u3 - 2 * u2 + u) * m1 + (-2 * u3 + 3 * u2) * p2 +
             (u3 - u2) * m2;
    };
    for (Eigen::Index i = 0; i < m; ++i) {
      const S t = cell_centered ? (S(i) + S(0.5)) * out.ds + (sol.s[0] - sol.ds / S(2))
                                : s0 + S(i) * out.ds;
      out.s[i] = cell_centered ? (S(i) + S(0.5)) * out.ds : t;
      out.x[i] = interp(sol.x, t);
      out.r[i] = interp(sol.r, t);
    }
  }
  recompute_geometry(out);
  return out;
}

// Homothety x -> lambda x.  Chord angles are scale invariant, so the derived
// fields scale exactly: H by 1/lambda, |A|^2 by 1/lambda^2, <x,nu> by lambda.
// The result is tagged custom; it is no longer the standard-radius model.
template <class S>
SolitonT<S> rescale(const SolitonT<S>& sol, S lambda) {
  require(lambda > S(0) && std::isfinite(lambda), "rescale: factor must be positive and finite");
  SolitonT<S> out = sol;
  out.kind = SolitonKind::custom;
  out.ds *= lambda;
  out.s *= lambda;
  out.x *= lambda;
  out.r *= lambda;
  recompute_geometry(out);
  return out;
}

// Focal-radius based graphicality threshold: 0.1 x min over nodes of
// 1/max(|principal curvatures|).
template <class S>
S graphicality_threshold(const SolitonT<S>& sol) {
  auto g = discrete_geometry(sol);
  S worst = S(0);
  for (Eigen::Index i = 0; i < sol.size(); ++i) {
    const S k1 = std::abs(g.kappa[i]);
    const S k2 = (sol.r[i] > S(1e-12)) ? std::abs(std::cos(g.theta[i]) / sol.r[i]) : k1;
    worst = std::max(worst, std::max(k1, k2));
  }
  return (worst > S(0)) ? S(0.1) / worst : S(1);
}

}  // namespace shrinkerlab
