#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdfactor/errors.hpp"

namespace sdfactor {

namespace detail {

// Regularized lower incomplete gamma P(a, x) by its power series, for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw Error("incomplete gamma series failed to converge");
}

// Regularized upper incomplete gamma Q(a, x) by the Lentz continued fraction,
// for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw Error("incomplete gamma continued fraction failed to converge");
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw ConstraintViolation("gamma_p requires a > 0");
  if (x < 0.0) throw ConstraintViolation("gamma_p requires x >= 0");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? detail::gamma_p_series(a, x) : 1.0 - detail::gamma_q_cf(a, x);
}

// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw ConstraintViolation("gamma_q requires a > 0");
  if (x < 0.0) throw ConstraintViolation("gamma_q requires x >= 0");
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - detail::gamma_p_series(a, x) : detail::gamma_q_cf(a, x);
}

// P[X > x] for X ~ chi-square with df degrees of freedom.
inline double chi_square_upper_tail(double x, double df) {
  if (!(df > 0.0)) throw ConstraintViolation("chi-square needs df > 0");
  return gamma_q(0.5 * df, 0.5 * x);
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConstraintViolation("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConstraintViolation("quantile level must be in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

inline double sample_mean(const std::vector<double>& v) {
  if (v.empty()) throw ConstraintViolation("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) throw ConstraintViolation("sd needs at least two points");
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (static_cast<double>(v.size()) - 1.0));
}

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// Gaussian kernel density estimate on an equally spaced grid, Silverman
// bandwidth 0.9 min(sd, iqr/1.34) N^{-1/5}.
inline KdeCurve gaussian_kde(const std::vector<double>& values, int grid_points = 256) {
  if (values.size() < 2) throw ConstraintViolation("kde needs at least two points");
  if (grid_points < 2) throw ConstraintViolation("kde needs at least two grid points");
  const double sd = sample_sd(values);
  const double iqr = quantile(values, 0.75) - quantile(values, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  double h = 0.9 * spread * std::pow(static_cast<double>(values.size()), -0.2);
  if (!(h > 0.0)) h = 1e-8 * std::max(1.0, std::abs(sample_mean(values)));

  const double lo = *std::min_element(values.begin(), values.end()) - 3.0 * h;
  const double hi = *std::max_element(values.begin(), values.end()) + 3.0 * h;
  KdeCurve out;
  out.bandwidth = h;
  out.grid.resize(grid_points);
  out.density.resize(grid_points);
  const double step = (hi - lo) / (grid_points - 1);
  const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid_points; ++g) {
    const double x = lo + step * g;
    double acc = 0.0;
    for (double v : values) {
      const double z = (x - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.grid[g] = x;
    out.density[g] = norm * acc;
  }
  return out;
}

}  // namespace sdfactor
