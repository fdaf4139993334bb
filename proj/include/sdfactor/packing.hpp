#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "errors.hpp"
#include "restrictions.hpp"
#include "tv.hpp"
#include "types.hpp"

// Bijections between the constrained parameter space and the unconstrained
// vectors the optimizer works on. Variances map through exp, the tail index
// through 2 + exp with a cap against the Gaussian-limit plateau, persistence
// entries through tanh as a stationarity guard, and loadings through the
// restriction mask.

namespace sdfactor {

constexpr double kNuCap = 200.0;

namespace detail {

inline double pack_persistence(double b) {
  if (!(std::abs(b) < 1.0))
    throw ConstraintViolation("persistence entries must lie inside (-1, 1)");
  return std::atanh(b);
}

inline double pack_nu(double nu) {
  if (!(nu > 2.0)) throw ConstraintViolation("nu must exceed 2");
  return std::log(std::min(nu, kNuCap) - 2.0);
}

inline double unpack_nu(double theta) {
  const double cap = std::log(kNuCap - 2.0);
  return 2.0 + std::exp(std::min(theta, cap));
}

inline double pack_variance(double s) {
  if (!(s > 0.0)) throw ConstraintViolation("variances must be positive");
  return std::log(s);
}

inline void check_finite_packed(const Eigen::VectorXd& theta) {
  if (!theta.allFinite())
    throw ConstraintViolation("packed parameter vector has non-finite entries");
}

}  // namespace detail

class StaticPacking {
 public:
  StaticPacking(LoadingRestriction restriction, int n, int r, bool shared_b, double beta)
      : restriction_(std::move(restriction)),
        layout_(restriction_, n, r),
        n_(n),
        r_(r),
        shared_b_(shared_b),
        beta_(beta) {}

  const LoadingRestriction& restriction() const { return restriction_; }
  const LoadingLayout& layout() const { return layout_; }
  int n() const { return n_; }
  int r() const { return r_; }
  bool shared_b() const { return shared_b_; }

  int intercept_count() const { return restriction_.pins_first_intercept() ? r_ - 1 : r_; }
  int persistence_count() const { return shared_b_ ? 1 : r_; }

  int size() const {
    return layout_.value_count() + intercept_count() + r_ + persistence_count() + n_ + 1;
  }

  Eigen::VectorXd pack(const StaticParams& p) const {
    p.validate();
    if (p.n() != n_ || p.r() != r_) throw DimensionMismatch("parameter shapes do not match packing");
    Eigen::VectorXd theta(size());
    int k = 0;
    const Eigen::VectorXd values = layout_.project(p.Lambda);
    theta.segment(k, values.size()) = values;
    k += static_cast<int>(values.size());
    for (int j = restriction_.pins_first_intercept() ? 1 : 0; j < r_; ++j) theta[k++] = p.c[j];
    for (int j = 0; j < r_; ++j) theta[k++] = p.A(j, j);
    if (shared_b_) {
      theta[k++] = detail::pack_persistence(p.B(0, 0));
    } else {
      for (int j = 0; j < r_; ++j) theta[k++] = detail::pack_persistence(p.B(j, j));
    }
    for (int i = 0; i < n_; ++i) theta[k++] = detail::pack_variance(p.Sigma[i]);
    theta[k++] = detail::pack_nu(p.nu);
    return theta;
  }

  StaticParams unpack(const Eigen::VectorXd& theta) const {
    if (theta.size() != size()) throw DimensionMismatch("packed vector has wrong length");
    detail::check_finite_packed(theta);
    StaticParams p;
    int k = 0;
    p.Lambda = layout_.expand(theta.segment(k, layout_.value_count()));
    k += layout_.value_count();
    p.c = Eigen::VectorXd::Ones(r_);
    for (int j = restriction_.pins_first_intercept() ? 1 : 0; j < r_; ++j) p.c[j] = theta[k++];
    Eigen::VectorXd a(r_);
    for (int j = 0; j < r_; ++j) a[j] = theta[k++];
    p.A = a.asDiagonal();
    Eigen::VectorXd b(r_);
    if (shared_b_) {
      b.setConstant(std::tanh(theta[k++]));
    } else {
      for (int j = 0; j < r_; ++j) b[j] = std::tanh(theta[k++]);
    }
    p.B = b.asDiagonal();
    p.Sigma.resize(n_);
    for (int i = 0; i < n_; ++i) p.Sigma[i] = std::exp(theta[k++]);
    p.nu = detail::unpack_nu(theta[k++]);
    p.beta = beta_;
    return p;
  }

 private:
  LoadingRestriction restriction_;
  LoadingLayout layout_;
  int n_ = 0;
  int r_ = 0;
  bool shared_b_ = false;
  double beta_ = 0.5;
};

// Shared-intercept mode packs the loading recursion coefficients directly;
// the loadings themselves are filtered states. Targeted mode packs the full
// static model and appends the two loading-recursion scalars, with the
// intercept tied to the packed loadings.
class TvPacking {
 public:
  TvPacking(TvMode mode, LoadingRestriction restriction, int n, int r, double beta)
      : mode_(mode), n_(n), r_(r), m_(n * r), beta_(beta) {
    if (mode_ == TvMode::ScalarTargeted)
      base_.emplace(std::move(restriction), n, r, false, beta);
  }

  TvMode mode() const { return mode_; }
  int n() const { return n_; }
  int r() const { return r_; }
  int m() const { return m_; }

  int size() const {
    if (mode_ == TvMode::ScalarTargeted) return base_->size() + 2;
    return 1 + 2 * m_ + (r_ - 1) + 2 * r_ + n_ + 1;
  }

  Eigen::VectorXd pack(const TvParams& p) const {
    p.validate();
    if (p.n() != n_ || p.r() != r_) throw DimensionMismatch("parameter shapes do not match packing");
    if (p.mode != mode_) throw ConstraintViolation("parameter mode does not match packing mode");
    Eigen::VectorXd theta(size());
    if (mode_ == TvMode::ScalarTargeted) {
      if ((p.a_l.array() != p.a_l[0]).any() || (p.b_l.array() != p.b_l[0]).any())
        throw ConstraintViolation("targeted mode requires shared loading coefficients");
      StaticParams s;
      s.Lambda = p.unvec_loading(p.target_l);
      s.c = p.c_g;
      s.A = p.A_g;
      s.B = p.B_g;
      s.Sigma = p.Sigma;
      s.nu = p.nu;
      s.beta = p.beta;
      theta.head(base_->size()) = base_->pack(s);
      theta[base_->size()] = p.a_l[0];
      theta[base_->size() + 1] = detail::pack_persistence(p.b_l[0]);
      return theta;
    }
    if ((p.c_l.array() != p.c_l[0]).any())
      throw ConstraintViolation("shared-intercept mode requires one loading intercept");
    int k = 0;
    theta[k++] = p.c_l[0];
    for (int i = 0; i < m_; ++i) theta[k++] = p.a_l[i];
    for (int i = 0; i < m_; ++i) theta[k++] = detail::pack_persistence(p.b_l[i]);
    for (int j = 1; j < r_; ++j) theta[k++] = p.c_g[j];
    for (int j = 0; j < r_; ++j) theta[k++] = p.A_g(j, j);
    for (int j = 0; j < r_; ++j) theta[k++] = detail::pack_persistence(p.B_g(j, j));
    for (int i = 0; i < n_; ++i) theta[k++] = detail::pack_variance(p.Sigma[i]);
    theta[k++] = detail::pack_nu(p.nu);
    return theta;
  }

  TvParams unpack(const Eigen::VectorXd& theta) const {
    if (theta.size() != size()) throw DimensionMismatch("packed vector has wrong length");
    detail::check_finite_packed(theta);
    TvParams p;
    p.n_series = n_;
    p.n_factors = r_;
    p.beta = beta_;
    p.alpha = 0.0;
    p.mode = mode_;
    if (mode_ == TvMode::ScalarTargeted) {
      const StaticParams s = base_->unpack(theta.head(base_->size()));
      p.c_g = s.c;
      p.A_g = s.A;
      p.B_g = s.B;
      p.Sigma = s.Sigma;
      p.nu = s.nu;
      Eigen::VectorXd target(m_);
      Eigen::Map<Eigen::MatrixXd>(target.data(), n_, r_) = s.Lambda;
      p.set_targeted(theta[size() - 2], std::tanh(theta[size() - 1]), target);
      return p;
    }
    int k = 0;
    p.c_l = Eigen::VectorXd::Constant(m_, theta[k++]);
    p.a_l.resize(m_);
    for (int i = 0; i < m_; ++i) p.a_l[i] = theta[k++];
    p.b_l.resize(m_);
    for (int i = 0; i < m_; ++i) p.b_l[i] = std::tanh(theta[k++]);
    p.c_g = Eigen::VectorXd::Ones(r_);
    for (int j = 1; j < r_; ++j) p.c_g[j] = theta[k++];
    Eigen::VectorXd a(r_);
    for (int j = 0; j < r_; ++j) a[j] = theta[k++];
    p.A_g = a.asDiagonal();
    Eigen::VectorXd b(r_);
    for (int j = 0; j < r_; ++j) b[j] = std::tanh(theta[k++]);
    p.B_g = b.asDiagonal();
    p.Sigma.resize(n_);
    for (int i = 0; i < n_; ++i) p.Sigma[i] = std::exp(theta[k++]);
    p.nu = detail::unpack_nu(theta[k++]);
    return p;
  }

 private:
  TvMode mode_;
  std::optional<StaticPacking> base_;
  int n_ = 0;
  int r_ = 0;
  int m_ = 0;
  double beta_ = 0.5;
};

}  // namespace sdfactor
