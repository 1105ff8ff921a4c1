#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixshap/tabular.hpp"

namespace mixshap {

/// v(S) for every coalition, indexed by mask value (ascending coalition order).
struct ContributionVector {
  int M = 0;
  std::vector<double> values;

  ContributionVector() = default;
  ContributionVector(int m, std::vector<double> v);

  [[nodiscard]] double operator[](Coalition s) const { return values[s.mask]; }
  [[nodiscard]] double none() const { return values.front(); }
  [[nodiscard]] double full() const { return values.back(); }
};

struct ShapleyResult {
  double phi0 = 0.0;
  std::vector<double> phi;
  MixedRow x_star;
  double predicted = 0.0;

  /// phi0 + sum(phi) - predicted
  [[nodiscard]] double efficiency_error() const;
};

/// Replacement for the infinite kernel weight at |S| in {0, M}.
inline constexpr double kInfiniteWeightSurrogate = 1e6;

/// Shapley kernel weight (M-1) / (C(M,s) s (M-s)); the surrogate at s in {0, M}.
double shapley_kernel_weight(int M, int s);

/// Exact Shapley sum over all coalitions.
ShapleyResult shapley_direct(const ContributionVector& v);

enum class EndpointConstraint {
  /// v(empty) and v(full) enforced exactly: the infinite-weight limit of the WLS.
  Exact,
  /// Interior weights normalised to sum 1, endpoints weighted by kInfiniteWeightSurrogate.
  Surrogate,
};

/// Kernel SHAP weighted least squares over the full coalition set.
///
/// The solution is linear in v, so the map v -> (phi0, phi) is factorised once
/// per M and reused for every explained observation.
class KernelShapSolver {
 public:
  explicit KernelShapSolver(int M, EndpointConstraint mode = EndpointConstraint::Exact);

  [[nodiscard]] int M() const { return M_; }
  [[nodiscard]] ShapleyResult solve(const ContributionVector& v) const;

  /// (M+1) x 2^M matrix mapping v to (phi0, phi_1..phi_M).
  [[nodiscard]] const Eigen::MatrixXd& projection() const { return projection_; }

 private:
  int M_;
  Eigen::MatrixXd projection_;
};

ShapleyResult kernel_shap_solve(const ContributionVector& v, EndpointConstraint mode = EndpointConstraint::Exact);

struct GroupedShapley {
  std::vector<double> values;
  std::vector<int> ranks;  // 1 = largest |value|
};

/// Sums phi within each group and ranks groups by absolute value, ties to the lower group index.
GroupedShapley group_shapley(const ShapleyResult& result, const std::vector<std::vector<int>>& groups);

}  // namespace mixshap
