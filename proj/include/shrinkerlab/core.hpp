#pragma once

// Shared aliases, error types, and small numeric helpers used by every module.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shrinkerlab {

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

using VecXd = Vec<double>;
using MatXd = Mat<double>;

// Input that violates a documented precondition.
struct ValidationError : std::invalid_argument {
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Computation that started from valid input but failed to converge / stay stable.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Parameter search (bracketing, bisection) did not straddle a solution.
struct SearchFailure : NumericalError {
  explicit SearchFailure(const std::string& what) : NumericalError(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

// Area of the unit (n-1)-sphere in R^n: 2 pi^{n/2} / Gamma(n/2).
template <class S>
S unit_sphere_area(int n) {
  return S(2) * std::pow(S(M_PI), S(n) / S(2)) / S(std::tgamma(double(n) / 2.0));
}

// Gaussian weight rho(p) = (4 pi)^{-n/2} exp(-|p|^2/4) for a surface dimension n.
template <class S>
S gaussian_weight(int n, S x, S r) {
  return std::pow(S(4) * S(M_PI), -S(n) / S(2)) * std::exp(-(x * x + r * r) / S(4));
}

// Least-squares slope of y against x.
template <class S>
S ls_slope(const Vec<S>& xs, const Vec<S>& ys) {
  const S mx = xs.mean();
  const S my = ys.mean();
  const S sxx = (xs.array() - mx).square().sum();
  if (sxx == S(0)) return S(0);
  return (xs.array() - mx).cwiseProduct(ys.array() - my).sum() / sxx;
}

// One metric of an audit, in insertion order so serialization is stable.
struct AuditReport {
  std::string name;
  bool passed = true;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> flags;
  std::string notes;

  void metric(const std::string& key, double value) { metrics.emplace_back(key, value); }
  void flag(const std::string& f) { flags.push_back(f); }
  void fail(const std::string& why) {
    passed = false;
    flags.push_back(why);
  }
  double metric_value(const std::string& key, double fallback = 0.0) const {
    for (const auto& [k, v] : metrics)
      if (k == key) return v;
    return fallback;
  }
  bool has_flag(const std::string& f) const {
    for (const auto& g : flags)
      if (g == f) return true;
    return false;
  }
};

}  // namespace shrinkerlab
