#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

// Quasi-Newton minimizer with central-difference gradients. The objective may
// return non-finite values for infeasible points; the line search treats them
// as failures and backtracks, so the iterate path stays inside the finite
// region it started in.

namespace sdfactor {

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_step = 1e-6;
  double gradient_tol = 1e-5;
  double relative_objective_tol = 1e-9;
};

struct OptResult {
  Eigen::VectorXd x;
  double fx = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

// Central differences with a step relative to the coordinate scale. Falls
// back to a one-sided difference when one probe lands outside the feasible
// region; a coordinate with both probes infeasible gets a zero slope.
template <typename F>
Eigen::VectorXd numerical_gradient(F&& f, const Eigen::VectorXd& x, double fx, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (std::isfinite(fp) && std::isfinite(fm))
      g[i] = (fp - fm) / (2.0 * h);
    else if (std::isfinite(fp))
      g[i] = (fp - fx) / h;
    else if (std::isfinite(fm))
      g[i] = (fx - fm) / h;
    else
      g[i] = 0.0;
  }
  return g;
}

template <typename F>
OptResult bfgs_minimize(F&& f, Eigen::VectorXd x0, const BfgsOptions& opt = {}) {
  OptResult res;
  res.x = std::move(x0);
  res.fx = f(res.x);
  res.trace.push_back(res.fx);
  if (!std::isfinite(res.fx)) return res;

  const Eigen::Index d = res.x.size();
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd grad = numerical_gradient(f, res.x, res.fx, opt.gradient_step);

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it + 1;
    if (grad.cwiseAbs().maxCoeff() < opt.gradient_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd dir = -(h_inv * grad);
    double slope = dir.dot(grad);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      dir = -grad;
      slope = dir.dot(grad);
      if (!(slope < 0.0)) {
        res.converged = true;
        return res;
      }
    }

    // Backtracking Armijo search; non-finite trial values shrink the step
    // exactly like insufficient decrease does.
    constexpr double armijo = 1e-4;
    double t = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + t * dir;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= res.fx + armijo * t * slope) {
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) {
      res.converged = true;
      return res;
    }

    const Eigen::VectorXd g_new = numerical_gradient(f, x_new, f_new, opt.gradient_step);
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
      const Eigen::MatrixXd left = identity - rho * (s * y.transpose());
      h_inv = left * h_inv * left.transpose() + rho * (s * s.transpose());
    }

    const double improvement = res.fx - f_new;
    res.x = x_new;
    res.fx = f_new;
    grad = g_new;
    res.trace.push_back(res.fx);

    if (improvement < opt.relative_objective_tol * std::max(1.0, std::abs(res.fx))) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

}  // namespace sdfactor
