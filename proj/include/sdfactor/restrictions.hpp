#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sdfactor/errors.hpp"

namespace sdfactor {

// Loading-matrix restrictions. All of them remove the rotational ambiguity of
// the factor model; the ones that do not pin a loading at one additionally pin
// the first transition intercept at one to kill the scalar ambiguity.
enum class RestrictionKind {
  Full,                   // all loadings free, c_1 = 1
  LowerTriangular,        // unit lower-triangular top r x r block, c free
  GroupLowerTriangular,   // r = p group-tied lower-triangular blocks, c_1 = 1
  GroupCommon,            // r = p + 1: one common column plus group columns, c_1 = 1
  TwoFactorGroup,         // r = 2: common column plus group-valued column, c_1 = 1
};

inline std::string restriction_name(RestrictionKind k) {
  switch (k) {
    case RestrictionKind::Full: return "full";
    case RestrictionKind::LowerTriangular: return "lower_triangular";
    case RestrictionKind::GroupLowerTriangular: return "group_lower_triangular";
    case RestrictionKind::GroupCommon: return "group_common";
    case RestrictionKind::TwoFactorGroup: return "two_factor_group";
  }
  throw Error("unknown restriction kind");
}

struct LoadingRestriction {
  RestrictionKind kind = RestrictionKind::Full;
  std::vector<int> groups;  // group id per series, used by the group-based kinds

  static LoadingRestriction full() { return {RestrictionKind::Full, {}}; }
  static LoadingRestriction lower_triangular() { return {RestrictionKind::LowerTriangular, {}}; }
  static LoadingRestriction group_lower_triangular(std::vector<int> g) {
    return {RestrictionKind::GroupLowerTriangular, std::move(g)};
  }
  static LoadingRestriction group_common(std::vector<int> g) {
    return {RestrictionKind::GroupCommon, std::move(g)};
  }
  static LoadingRestriction two_factor_group(std::vector<int> g) {
    return {RestrictionKind::TwoFactorGroup, std::move(g)};
  }

  bool uses_groups() const {
    return kind == RestrictionKind::GroupLowerTriangular ||
           kind == RestrictionKind::GroupCommon || kind == RestrictionKind::TwoFactorGroup;
  }

  // Whether the scalar ambiguity is resolved through c_1 = 1 rather than a
  // unit loading.
  bool pins_first_intercept() const { return kind != RestrictionKind::LowerTriangular; }

  int group_count() const {
    int p = 0;
    for (int g : groups) p = std::max(p, g + 1);
    return p;
  }

  void validate(Eigen::Index n, Eigen::Index r) const {
    if (n < 1 || r < 1 || n < r) throw IncompatibleShape("need n >= r >= 1");
    if (!uses_groups()) {
      if (!groups.empty())
        throw IncompatibleShape("group labels only apply to group-based restrictions");
      return;
    }
    if (static_cast<Eigen::Index>(groups.size()) != n)
      throw IncompatibleShape("one group label per series required");
    const int p = group_count();
    std::vector<int> counts(p, 0);
    for (int g : groups) {
      if (g < 0) throw IncompatibleShape("group labels must be non-negative");
      ++counts[g];
    }
    for (int k = 0; k < p; ++k)
      if (counts[k] == 0)
        throw IncompatibleShape("group labels must be contiguous starting at zero");
    if (kind == RestrictionKind::GroupLowerTriangular && r != p)
      throw IncompatibleShape("group lower-triangular needs r equal to the group count");
    if (kind == RestrictionKind::GroupCommon && r != p + 1)
      throw IncompatibleShape("group-common needs r equal to the group count plus one");
    if (kind == RestrictionKind::TwoFactorGroup && r != 2)
      throw IncompatibleShape("two-factor group form needs r = 2");
  }
};

enum class CellKind { Free, FixedZero, FixedOne, Tied };

// Per-cell classification of an n x r loading matrix, column-major storage.
// Tied cells within the same tie class share one estimated value.
struct LoadingMask {
  Eigen::Index n = 0, r = 0;
  std::vector<CellKind> kind;
  std::vector<int> tie;  // tie class per cell, -1 when not tied
  int tie_count = 0;

  std::size_t idx(Eigen::Index i, Eigen::Index j) const {
    return static_cast<std::size_t>(j * n + i);
  }
  CellKind at(Eigen::Index i, Eigen::Index j) const { return kind[idx(i, j)]; }
  int tie_at(Eigen::Index i, Eigen::Index j) const { return tie[idx(i, j)]; }

  int free_count() const {
    int c = 0;
    for (CellKind k : kind) c += (k == CellKind::Free);
    return c;
  }
  // Number of distinct estimated loading values.
  int value_count() const { return free_count() + tie_count; }
};

inline LoadingMask build_mask(const LoadingRestriction& restr, Eigen::Index n, Eigen::Index r) {
  restr.validate(n, r);
  LoadingMask m;
  m.n = n;
  m.r = r;
  m.kind.assign(static_cast<std::size_t>(n * r), CellKind::Free);
  m.tie.assign(static_cast<std::size_t>(n * r), -1);

  switch (restr.kind) {
    case RestrictionKind::Full:
      break;
    case RestrictionKind::LowerTriangular:
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j) {
          if (i == j)
            m.kind[m.idx(i, j)] = CellKind::FixedOne;
          else if (j > i)
            m.kind[m.idx(i, j)] = CellKind::FixedZero;
        }
      break;
    case RestrictionKind::GroupLowerTriangular: {
      // One tied value per (group g, factor j <= g), class id g(g+1)/2 + j.
      for (Eigen::Index i = 0; i < n; ++i) {
        const int g = restr.groups[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < r; ++j) {
          if (j > g) {
            m.kind[m.idx(i, j)] = CellKind::FixedZero;
          } else {
            m.kind[m.idx(i, j)] = CellKind::Tied;
            m.tie[m.idx(i, j)] = g * (g + 1) / 2 + static_cast<int>(j);
          }
        }
      }
      m.tie_count = static_cast<int>(r * (r + 1) / 2);
      break;
    }
    case RestrictionKind::GroupCommon: {
      const int p = restr.group_count();
      for (Eigen::Index i = 0; i < n; ++i) {
        const int g = restr.groups[static_cast<std::size_t>(i)];
        m.kind[m.idx(i, 0)] = CellKind::Tied;
        m.tie[m.idx(i, 0)] = 0;
        for (int k = 0; k < p; ++k) {
          if (k == g) {
            m.kind[m.idx(i, k + 1)] = CellKind::Tied;
            m.tie[m.idx(i, k + 1)] = 1 + k;
          } else {
            m.kind[m.idx(i, k + 1)] = CellKind::FixedZero;
          }
        }
      }
      m.tie_count = p + 1;
      break;
    }
    case RestrictionKind::TwoFactorGroup: {
      const int p = restr.group_count();
      for (Eigen::Index i = 0; i < n; ++i) {
        const int g = restr.groups[static_cast<std::size_t>(i)];
        m.kind[m.idx(i, 0)] = CellKind::Tied;
        m.tie[m.idx(i, 0)] = 0;
        m.kind[m.idx(i, 1)] = CellKind::Tied;
        m.tie[m.idx(i, 1)] = 1 + g;
      }
      m.tie_count = p + 1;
      break;
    }
  }
  return m;
}

// Maps between the vector of distinct estimated loading values and the full
// matrix. Slot order is the column-major first appearance of each free cell
// or tie class, so packing is deterministic.
class LoadingLayout {
 public:
  LoadingLayout() = default;
  LoadingLayout(const LoadingRestriction& restr, Eigen::Index n, Eigen::Index r)
      : mask_(build_mask(restr, n, r)) {
    cell_slot_.assign(mask_.kind.size(), -1);
    std::vector<int> tie_slot(static_cast<std::size_t>(mask_.tie_count), -1);
    int next = 0;
    for (Eigen::Index j = 0; j < r; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = mask_.idx(i, j);
        switch (mask_.kind[c]) {
          case CellKind::Free:
            cell_slot_[c] = next++;
            break;
          case CellKind::Tied: {
            int& s = tie_slot[static_cast<std::size_t>(mask_.tie[c])];
            if (s < 0) s = next++;
            cell_slot_[c] = s;
            break;
          }
          default:
            break;
        }
      }
    }
    nvals_ = next;
  }

  const LoadingMask& mask() const { return mask_; }
  int value_count() const { return nvals_; }

  Eigen::MatrixXd expand(const Eigen::VectorXd& values) const {
    if (values.size() != nvals_)
      throw DimensionMismatch("loading value vector has the wrong length");
    Eigen::MatrixXd lam(mask_.n, mask_.r);
    for (Eigen::Index j = 0; j < mask_.r; ++j)
      for (Eigen::Index i = 0; i < mask_.n; ++i) {
        const auto c = mask_.idx(i, j);
        switch (mask_.kind[c]) {
          case CellKind::FixedZero: lam(i, j) = 0.0; break;
          case CellKind::FixedOne: lam(i, j) = 1.0; break;
          default: lam(i, j) = values[cell_slot_[c]]; break;
        }
      }
    return lam;
  }

  // Nearest restricted matrix in least squares: tied cells average, fixed
  // cells are ignored. Used to project unrestricted initial estimates.
  Eigen::VectorXd project(const Eigen::MatrixXd& lambda) const {
    if (lambda.rows() != mask_.n || lambda.cols() != mask_.r)
      throw DimensionMismatch("loading matrix has the wrong shape");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(nvals_);
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(nvals_);
    for (Eigen::Index j = 0; j < mask_.r; ++j)
      for (Eigen::Index i = 0; i < mask_.n; ++i) {
        const auto c = mask_.idx(i, j);
        if (cell_slot_[c] >= 0) {
          sum[cell_slot_[c]] += lambda(i, j);
          cnt[cell_slot_[c]] += 1.0;
        }
      }
    return (sum.array() / cnt.array()).matrix();
  }

  // Residual of a matrix against the restriction (fixed cells and tie spread).
  double violation(const Eigen::MatrixXd& lambda) const {
    const Eigen::MatrixXd fitted = expand(project(lambda));
    return (lambda - fitted).cwiseAbs().maxCoeff();
  }

 private:
  LoadingMask mask_;
  std::vector<int> cell_slot_;
  int nvals_ = 0;
};

// Count of estimated parameters in the static model under a restriction:
// distinct loadings, free intercepts, diagonal of A, B (shared or per factor),
// one variance per series, and the degrees of freedom.
inline int count_free_params(const LoadingRestriction& restr, Eigen::Index n, Eigen::Index r,
                             bool shared_b) {
  const LoadingLayout layout(restr, n, r);
  const int intercepts = static_cast<int>(r) - (restr.pins_first_intercept() ? 1 : 0);
  const int b_count = shared_b ? 1 : static_cast<int>(r);
  return layout.value_count() + intercepts + static_cast<int>(r) + b_count +
         static_cast<int>(n) + 1;
}

}  // namespace sdfactor
