#pragma once

// Stability operator L = Delta - x.grad/2 + 1/2 + |A|^2 over a soliton
// profile, discretized in the rotationally equivariant sector with the
// Gaussian weight rho = (4pi)^{-n/2} exp(-|x|^2/4).  The 1-D reduction is
//   Lu = (1/W)(W u')' + (1/2 + |A|^2) u,   W(s) = r^{n-1} exp(-|p|^2/4),
// assembled in flux (Sturm-Liouville) form so the discrete operator is
// exactly self-adjoint in the weighted inner product.  Eigenvalues follow
// the convention L phi_j = -lambda_j phi_j with lambda ascending, so the
// sphere ground state is lambda_1 = -1.

#include <random>

#include "core.hpp"
#include "soliton.hpp"

namespace shrinkerlab {

enum class GridBoundary { none, dirichlet };

template <class S>
struct WeightedGridT {
  std::vector<Eigen::Index> nodes;  // indices into the profile (all of them)
  Vec<S> weights;                   // quadrature weights of the Gaussian area measure
  GridBoundary boundary = GridBoundary::none;
  Eigen::Index lo = 0, hi = 0;      // eigen-unknown node range [lo, hi)

  Eigen::Index size() const { return weights.size(); }
  Eigen::Index interior() const { return hi - lo; }
};

using WeightedGrid = WeightedGridT<double>;

// Rotational area density r^{n-1} exp(-|p|^2/4) at a profile position.
template <class S>
S sl_weight(int n, S x, S r) {
  return std::pow(r, S(n - 1)) * std::exp(-(x * x + r * r) / S(4));
}

template <class S>
WeightedGridT<S> build_weighted_grid(const SolitonT<S>& sol) {
  const Eigen::Index m = sol.size();
  require(m >= 5, "build_weighted_grid: need at least 5 nodes");
  const S cn = std::pow(S(4) * S(M_PI), -S(sol.n) / S(2)) * unit_sphere_area<S>(sol.n);
  WeightedGridT<S> grid;
  grid.nodes.resize(size_t(m));
  for (Eigen::Index i = 0; i < m; ++i) grid.nodes[size_t(i)] = i;
  grid.weights.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    S dsw = sol.ds;
    if (sol.topology == Topology::open && (i == 0 || i == m - 1)) dsw /= S(2);
    grid.weights[i] = cn * sl_weight(sol.n, sol.x[i], sol.r[i]) * dsw;
    require(grid.weights[i] > S(0), "build_weighted_grid: nonpositive quadrature weight");
  }
  if (sol.topology == Topology::open) {
    grid.boundary = GridBoundary::dirichlet;
    grid.lo = 1;
    grid.hi = m - 1;
  } else {
    grid.boundary = GridBoundary::none;
    grid.lo = 0;
    grid.hi = m;
  }
  return grid;
}

template <class S>
S weighted_inner(const Vec<S>& u, const Vec<S>& v, const WeightedGridT<S>& grid) {
  require(u.size() == grid.size() && v.size() == grid.size(),
          "weighted_inner: length mismatch with grid");
  return u.cwiseProduct(v).dot(grid.weights);
}

template <class S>
S weighted_norm_L2(const Vec<S>& u, const WeightedGridT<S>& grid) {
  return std::sqrt(std::max(S(0), weighted_inner(u, u, grid)));
}

namespace detail {

// Face conductances g_{i+1/2} = c_n W(face midpoint)/ds for the flux form.
// Closed axis-terminated profiles get zero flux at the axis faces (W = 0
// there); periodic profiles wrap; open profiles carry Dirichlet data.
template <class S>
struct FluxOperator {
  Vec<S> g;       // face conductances, face i sits between nodes i and i+1
  Vec<S> c;       // zeroth-order coefficient 1/2 + |A|^2
  bool periodic = false;
  S g_wrap = S(0);  // face between last and first node (periodic only)
};

template <class S>
FluxOperator<S> flux_operator(const SolitonT<S>& sol) {
  const Eigen::Index m = sol.size();
  const S cn = std::pow(S(4) * S(M_PI), -S(sol.n) / S(2)) * unit_sphere_area<S>(sol.n);
  FluxOperator<S> op;
  op.g.resize(m - 1);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const S xm = (sol.x[i] + sol.x[i + 1]) / S(2);
    const S rm = (sol.r[i] + sol.r[i + 1]) / S(2);
    op.g[i] = cn * sl_weight(sol.n, xm, rm) / sol.ds;
  }
  if (sol.topology == Topology::periodic) {
    op.periodic = true;
    const S xm = (sol.x[m - 1] + sol.x[0]) / S(2);
    const S rm = (sol.r[m - 1] + sol.r[0]) / S(2);
    op.g_wrap = cn * sl_weight(sol.n, xm, rm) / sol.ds;
  }
  op.c = (sol.A2.array() + S(0.5)).matrix();
  return op;
}

}  // namespace detail

// Discrete Lu in the equivariant sector.  Dirichlet ghosts are zero; the
// axis faces of a closed profile carry zero flux (the weight vanishes).
template <class S>
Vec<S> apply_L(const SolitonT<S>& sol, const WeightedGridT<S>& grid, const Vec<S>& u) {
  const Eigen::Index m = sol.size();
  require(m >= 5, "apply_L: need at least 5 nodes");
  require(u.size() == m, "apply_L: length mismatch with profile");
  auto op = detail::flux_operator(sol);
  Vec<S> Lu = Vec<S>::Zero(m);
  auto uat = [&](Eigen::Index i) -> S {
    if (op.periodic) return u[((i % m) + m) % m];
    if (i < 0 || i >= m) return S(0);  // Dirichlet ghost (axis faces never ask)
    return u[i];
  };
  auto gat = [&](Eigen::Index f) -> S {  // face f between nodes f and f+1
    if (op.periodic) {
      Eigen::Index ff = ((f % m) + m) % m;
      return ff == m - 1 ? op.g_wrap : op.g[ff];
    }
    if (f < 0 || f >= m - 1) return S(0);  // axis / outside faces
    return op.g[f];
  };
  for (Eigen::Index i = 0; i < m; ++i) {
    const S flux = gat(i) * (uat(i + 1) - u[i]) - gat(i - 1) * (u[i] - uat(i - 1));
    Lu[i] = flux / grid.weights[i] + op.c[i] * u[i];
  }
  if (grid.boundary == GridBoundary::dirichlet) {
    // Boundary rows are not part of the operator domain; report the interior
    // extension value 0 there so projections treat them consistently.
    Lu[0] = S(0);
    Lu[m - 1] = S(0);
  }
  return Lu;
}

template <class S>
struct SpectrumT {
  Vec<S> lambdas;       // reported values: Richardson pair of grid m and m/2
  Vec<S> lambdas_grid;  // discrete eigenvalues consistent with phis
  Mat<S> phis;          // node values, one column per mode, ||phi_j||_W = 1
  int I = 0;            // count of lambda < -kappa_kernel
  int K = 0;            // count of |lambda| <= kappa_kernel
  S kappa_kernel = S(1e-4);
  bool boundary_ambiguity = false;
  SolitonT<S> base;
  WeightedGridT<S> grid;

  Eigen::Index count() const { return lambdas.size(); }
};

using Spectrum = SpectrumT<double>;

namespace detail {

// Dense generalized symmetric solve of the interior pencil; returns
// eigenvalues ascending and interior-node eigenvectors.
template <class S>
void interior_eigensolve(const SolitonT<S>& sol, const WeightedGridT<S>& grid, Vec<S>& evals,
                         Mat<S>& evecs) {
  const Eigen::Index m = sol.size();
  const Eigen::Index N = grid.interior();
  auto op = flux_operator(sol);
  Mat<S> A = Mat<S>::Zero(N, N);
  Mat<S> M = Mat<S>::Zero(N, N);
  auto idx = [&](Eigen::Index node) { return node - grid.lo; };
  for (Eigen::Index i = grid.lo; i < grid.hi; ++i) {
    M(idx(i), idx(i)) = grid.weights[i];
    A(idx(i), idx(i)) = -op.c[i] * grid.weights[i];
  }
  // stiffness of the quadratic form sum_faces g (u_next - u_prev)^2
  auto add_face = [&](Eigen::Index a, Eigen::Index b, S g) {
    const bool ain = a >= grid.lo && a < grid.hi;
    const bool bin = b >= grid.lo && b < grid.hi;
    if (ain) A(idx(a), idx(a)) += g;
    if (bin) A(idx(b), idx(b)) += g;
    if (ain && bin) {
      A(idx(a), idx(b)) -= g;
      A(idx(b), idx(a)) -= g;
    }
  };
  for (Eigen::Index f = 0; f + 1 < m; ++f) add_face(f, f + 1, op.g[f]);
  if (op.periodic) add_face(m - 1, 0, op.g_wrap);

  Eigen::GeneralizedSelfAdjointEigenSolver<Mat<S>> solver(A, M);
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigensolve: generalized eigensolver failed to converge");
  evals = solver.eigenvalues();
  evecs = solver.eigenvectors();
}

}  // namespace detail

// Lowest `count` eigenpairs of L over the soliton.  Reported eigenvalues are
// the Richardson pair of the working grid and its 2x-coarsened resampling
// (both converge at 2nd order); eigenfunctions belong to the working grid.
template <class S>
SpectrumT<S> eigensolve(const SolitonT<S>& sol, const WeightedGridT<S>& grid, Eigen::Index count,
                        S kappa_kernel = S(1e-4)) {
  const Eigen::Index m = sol.size();
  require(m >= 32, "eigensolve: need at least 32 nodes");
  require(m <= 2000, "eigensolve: dense solve capped at 2000 nodes; resample the base first");
  require(count >= 1 && count <= grid.interior() - 2,
          "eigensolve: count must be in [1, interior nodes - 2]");

  Vec<S> evals;
  Mat<S> evecs;
  detail::interior_eigensolve(sol, grid, evals, evecs);

  // coarse companion for Richardson extrapolation
  auto coarse = resample(sol, m / 2);
  auto cgrid = build_weighted_grid(coarse);
  Vec<S> cvals;
  Mat<S> cvecs;
  detail::interior_eigensolve(coarse, cgrid, cvals, cvecs);

  SpectrumT<S> spec;
  spec.kappa_kernel = kappa_kernel;
  spec.base = sol;
  spec.grid = grid;
  spec.lambdas_grid = evals.head(count);
  spec.lambdas.resize(count);
  for (Eigen::Index j = 0; j < count; ++j)
    spec.lambdas[j] = (S(4) * evals[j] - cvals[j]) / S(3);

  spec.phis = Mat<S>::Zero(m, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    Vec<S> phi = Vec<S>::Zero(m);
    phi.segment(grid.lo, grid.interior()) = evecs.col(j);
    const S nw = weighted_norm_L2(phi, grid);
    require(nw > S(0), "eigensolve: zero eigenvector");
    phi /= nw;
    // deterministic sign: weighted mean positive, falling back to the first
    // substantial node
    S mean = phi.dot(grid.weights);
    if (std::abs(mean) < S(1e-10)) {
      for (Eigen::Index i = 0; i < m; ++i)
        if (std::abs(phi[i]) > S(1e-8)) {
          mean = phi[i];
          break;
        }
    }
    if (mean < S(0)) phi = -phi;
    spec.phis.col(j) = phi;
  }

  spec.I = 0;
  spec.K = 0;
  spec.boundary_ambiguity = false;
  for (Eigen::Index j = 0; j < count; ++j) {
    if (spec.lambdas[j] < -kappa_kernel) ++spec.I;
    if (std::abs(spec.lambdas[j]) <= kappa_kernel) ++spec.K;
    if (std::abs(spec.lambdas[j] + kappa_kernel) <= S(2) * kappa_kernel)
      spec.boundary_ambiguity = true;
  }
  return spec;
}

enum class SpectralRelation { lt, eq, gt, le, ge, ne };

namespace detail {

template <class S>
bool relation_selects(SpectralRelation rel, S lambda, S mu, S kappa) {
  const bool eq = std::abs(lambda - mu) <= kappa;
  switch (rel) {
    case SpectralRelation::lt: return lambda < mu && !eq;
    case SpectralRelation::eq: return eq;
    case SpectralRelation::gt: return lambda > mu && !eq;
    case SpectralRelation::le: return eq || lambda < mu;
    case SpectralRelation::ge: return eq || lambda > mu;
    default: return !eq;
  }
}

}  // namespace detail

// Spectral projector onto the modes whose reported eigenvalue compares to mu
// as requested; equality uses the kernel window kappa_kernel.
template <class S>
Vec<S> project(const SpectrumT<S>& spec, const Vec<S>& u, SpectralRelation rel, S mu) {
  require(u.size() == spec.phis.rows(), "project: length mismatch with spectrum base");
  Vec<S> out = Vec<S>::Zero(u.size());
  for (Eigen::Index j = 0; j < spec.count(); ++j) {
    if (!detail::relation_selects(rel, spec.lambdas[j], mu, spec.kappa_kernel)) continue;
    const S a = weighted_inner<S>(u, spec.phis.col(j), spec.grid);
    out += a * spec.phis.col(j);
  }
  return out;
}

// W-norm of the component of u outside the computed modes.
template <class S>
S projection_tail(const SpectrumT<S>& spec, const Vec<S>& u) {
  Vec<S> rem = u;
  for (Eigen::Index j = 0; j < spec.count(); ++j)
    rem -= weighted_inner<S>(u, spec.phis.col(j), spec.grid) * spec.phis.col(j);
  if (spec.grid.boundary == GridBoundary::dirichlet) {
    rem[0] = S(0);
    rem[rem.size() - 1] = S(0);
  }
  return weighted_norm_L2(rem, spec.grid);
}

struct IndexKernel {
  int I = 0;
  int K = 0;
  bool ambiguity = false;  // some lambda within 2*kappa of the -kappa boundary
};

template <class S>
IndexKernel index_and_kernel(const SpectrumT<S>& spec) {
  IndexKernel out;
  for (Eigen::Index j = 0; j < spec.count(); ++j) {
    if (spec.lambdas[j] < -spec.kappa_kernel) ++out.I;
    if (std::abs(spec.lambdas[j]) <= spec.kappa_kernel) ++out.K;
    if (std::abs(spec.lambdas[j] + spec.kappa_kernel) <= S(2) * spec.kappa_kernel)
      out.ambiguity = true;
  }
  return out;
}

// Polynomial growth check of the ground state on a truncated non-compact
// base: fit log|phi_1| against log(1+x^2) on the outer third (by |x|) and
// require the slope inside [1/2 + lambda_1 - beta, 1/2 + lambda_1 + beta].
template <class S>
AuditReport eigen_decay_check(const SpectrumT<S>& spec, S beta) {
  require(beta > S(0), "eigen_decay_check: beta must be positive");
  require(spec.base.topology == Topology::open,
          "eigen_decay_check: base must be a truncated non-compact soliton");
  AuditReport rep;
  rep.name = "eigen_decay";

  const Eigen::Index m = spec.base.size();
  const S ax_lo = spec.base.x.cwiseAbs().minCoeff();
  const S ax_hi = spec.base.x.cwiseAbs().maxCoeff();
  const S cut = ax_lo + (ax_hi - ax_lo) * S(2) / S(3);
  std::vector<S> lx, lphi;
  bool pos = false, neg = false;
  for (Eigen::Index i = 1; i + 1 < m; ++i) {
    if (std::abs(spec.base.x[i]) < cut) continue;
    const S p = spec.phis(i, 0);
    pos = pos || p > S(0);
    neg = neg || p < S(0);
    if (p != S(0)) {
      lx.push_back(std::log(S(1) + spec.base.x[i] * spec.base.x[i]));
      lphi.push_back(std::log(std::abs(p)));
    }
  }
  if (pos && neg) {
    rep.fail("ground state changes sign in the fit window");
    return rep;
  }
  if (lx.size() < 8) {
    rep.fail("too few nodes in the fit window");
    return rep;
  }
  Vec<S> vx = Eigen::Map<Vec<S>>(lx.data(), Eigen::Index(lx.size()));
  Vec<S> vp = Eigen::Map<Vec<S>>(lphi.data(), Eigen::Index(lphi.size()));
  const S slope = ls_slope(vx, vp);
  const S mu = spec.lambdas[0];
  const S lo = S(0.5) + mu - beta, hi = S(0.5) + mu + beta;
  rep.metric("slope", double(slope));
  rep.metric("window_lo", double(lo));
  rep.metric("window_hi", double(hi));
  rep.metric("lambda1", double(mu));
  if (!(slope >= lo && slope <= hi)) rep.fail("growth exponent outside the predicted window");
  return rep;
}

// Randomized discrete self-adjointness audit: |<Lu,v>_W - <u,Lv>_W| must be
// round-off small relative to ||u||_W ||v||_W for interior-supported fields.
template <class S>
AuditReport selfadjoint_check(const SolitonT<S>& sol, const WeightedGridT<S>& grid, int trials) {
  require(trials >= 1, "selfadjoint_check: trials must be >= 1");
  AuditReport rep;
  rep.name = "selfadjoint";
  std::mt19937 rng(12345);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index m = sol.size();
  S worst = S(0);
  for (int t = 0; t < trials; ++t) {
    Vec<S> u = Vec<S>::Zero(m), v = Vec<S>::Zero(m);
    for (Eigen::Index i = grid.lo; i < grid.hi; ++i) {
      u[i] = S(gauss(rng));
      v[i] = S(gauss(rng));
    }
    const Vec<S> Lu = apply_L(sol, grid, u);
    const Vec<S> Lv = apply_L(sol, grid, v);
    const S d = std::abs(weighted_inner(Lu, v, grid) - weighted_inner(u, Lv, grid));
    const S scale = weighted_norm_L2(u, grid) * weighted_norm_L2(v, grid);
    worst = std::max(worst, d / std::max(scale, S(1e-300)));
  }
  rep.metric("worst_relative_defect", double(worst));
  rep.metric("trials", double(trials));
  if (!(worst <= S(1e-8))) rep.fail("self-adjointness defect above 1e-8");
  return rep;
}

}  // namespace shrinkerlab
