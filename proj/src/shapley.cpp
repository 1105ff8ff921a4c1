#include "mixshap/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "mixshap/error.hpp"

namespace mixshap {
namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

void check_contributions(const ContributionVector& v) {
  if (v.M < 1 || v.M > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "M must lie in 1..20");
  if (v.values.size() != (std::size_t{1} << v.M))
    throw Error(ErrorCode::LengthMismatch, "contribution vector must have 2^M entries");
  for (double x : v.values)
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteContribution, "v(S) is not finite");
}

// Weights for |S| = 0..M of the exact Shapley sum: s!(M-s-1)!/M! = 1/(M C(M-1,s)).
std::vector<double> permutation_weights(int M) {
  std::vector<double> w(static_cast<std::size_t>(M));
  for (int s = 0; s < M; ++s) w[static_cast<std::size_t>(s)] = 1.0 / (M * binomial(M - 1, s));
  return w;
}

Eigen::MatrixXd invert_gram(const Eigen::MatrixXd& gram) {
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
  if (cod.rank() < gram.rows()) throw Error(ErrorCode::SingularSystem, "Kernel SHAP normal equations are singular");
  return cod.pseudoInverse();
}

}  // namespace

ContributionVector::ContributionVector(int m, std::vector<double> v) : M(m), values(std::move(v)) {
  if (M < 1 || M > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "M must lie in 1..20");
  if (values.size() != (std::size_t{1} << M))
    throw Error(ErrorCode::LengthMismatch, "contribution vector must have 2^M entries");
}

double ShapleyResult::efficiency_error() const {
  return phi0 + std::accumulate(phi.begin(), phi.end(), 0.0) - predicted;
}

double shapley_kernel_weight(int M, int s) {
  if (s < 0 || s > M) throw Error(ErrorCode::InvalidArgument, "coalition size outside 0..M");
  if (s == 0 || s == M) return kInfiniteWeightSurrogate;
  return static_cast<double>(M - 1) / (binomial(M, s) * s * (M - s));
}

ShapleyResult shapley_direct(const ContributionVector& v) {
  check_contributions(v);
  const int M = v.M;
  const auto w = permutation_weights(M);
  ShapleyResult r;
  r.phi0 = v.none();
  r.predicted = v.full();
  r.phi.assign(static_cast<std::size_t>(M), 0.0);
  const std::uint32_t count = 1U << M;
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    const double vs = v.values[mask];
    const auto weight = w[static_cast<std::size_t>(std::popcount(mask))];
    for (int j = 0; j < M; ++j) {
      const std::uint32_t bit = 1U << j;
      if ((mask & bit) != 0) continue;
      r.phi[static_cast<std::size_t>(j)] += weight * (v.values[mask | bit] - vs);
    }
  }
  return r;
}

KernelShapSolver::KernelShapSolver(int M, EndpointConstraint mode) : M_(M) {
  if (M < 1 || M > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "M must lie in 1..20");
  const Eigen::Index n = Eigen::Index{1} << M;
  const std::uint32_t full = Coalition::full_mask(M);
  projection_ = Eigen::MatrixXd::Zero(M + 1, n);

  if (mode == EndpointConstraint::Surrogate) {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, M + 1);
    Eigen::VectorXd w(n);
    double interior_total = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto mask = static_cast<std::uint32_t>(s);
      Z(s, 0) = 1.0;
      for (int j = 0; j < M; ++j) Z(s, j + 1) = (mask >> j) & 1U;
      w(s) = shapley_kernel_weight(M, std::popcount(mask));
      if (mask != 0 && mask != full) interior_total += w(s);
    }
    for (Eigen::Index s = 1; s + 1 < n; ++s) w(s) /= interior_total;
    const Eigen::MatrixXd ZtW = Z.transpose() * w.asDiagonal();
    projection_ = invert_gram(ZtW * Z) * ZtW;
    return;
  }

  projection_(0, 0) = 1.0;
  if (M == 1) {
    projection_(1, 0) = -1.0;
    projection_(1, 1) = 1.0;
    return;
  }

  // Eliminate phi0 = v(empty) and phi_last = v(full) - v(empty) - sum(others);
  // what remains is an unconstrained WLS over the interior coalitions.
  const int last = M - 1;
  const Eigen::Index interior = n - 2;
  Eigen::MatrixXd A(interior, last);
  Eigen::VectorXd w(interior);
  Eigen::VectorXd z_last(interior);
  for (Eigen::Index r = 0; r < interior; ++r) {
    const auto mask = static_cast<std::uint32_t>(r + 1);
    const double zl = (mask >> last) & 1U;
    z_last(r) = zl;
    for (int j = 0; j < last; ++j) A(r, j) = static_cast<double>((mask >> j) & 1U) - zl;
    w(r) = shapley_kernel_weight(M, std::popcount(mask));
  }
  const Eigen::MatrixXd AtW = A.transpose() * w.asDiagonal();
  const Eigen::MatrixXd Q = invert_gram(AtW * A) * AtW;  // last x interior

  // b_S = v_S - (1 - z_last) v_empty - z_last v_full
  for (int j = 0; j < last; ++j) {
    double coef_none = 0.0;
    double coef_full = 0.0;
    for (Eigen::Index r = 0; r < interior; ++r) {
      projection_(j + 1, r + 1) = Q(j, r);
      coef_none -= Q(j, r) * (1.0 - z_last(r));
      coef_full -= Q(j, r) * z_last(r);
    }
    projection_(j + 1, 0) = coef_none;
    projection_(j + 1, n - 1) = coef_full;
  }
  Eigen::RowVectorXd phi_last = Eigen::RowVectorXd::Zero(n);
  phi_last(0) = -1.0;
  phi_last(n - 1) = 1.0;
  for (int j = 0; j < last; ++j) phi_last -= projection_.row(j + 1);
  projection_.row(M) = phi_last;
}

ShapleyResult KernelShapSolver::solve(const ContributionVector& v) const {
  check_contributions(v);
  if (v.M != M_) throw Error(ErrorCode::LengthMismatch, "solver built for a different M");
  const Eigen::Map<const Eigen::VectorXd> vv(v.values.data(), static_cast<Eigen::Index>(v.values.size()));
  const Eigen::VectorXd sol = projection_ * vv;
  ShapleyResult r;
  r.phi0 = sol(0);
  r.phi.assign(sol.data() + 1, sol.data() + sol.size());
  r.predicted = v.full();
  return r;
}

ShapleyResult kernel_shap_solve(const ContributionVector& v, EndpointConstraint mode) {
  check_contributions(v);
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const KernelShapSolver>> cache;
  std::shared_ptr<const KernelShapSolver> solver;
  {
    std::lock_guard lock(mu);
    auto& slot = cache[{v.M, static_cast<int>(mode)}];
    if (!slot) slot = std::make_shared<const KernelShapSolver>(v.M, mode);
    solver = slot;
  }
  return solver->solve(v);
}

GroupedShapley group_shapley(const ShapleyResult& result, const std::vector<std::vector<int>>& groups) {
  const auto M = result.phi.size();
  std::vector<int> seen(M, 0);
  for (const auto& g : groups) {
    for (int j : g) {
      if (j < 0 || static_cast<std::size_t>(j) >= M) throw Error(ErrorCode::NotAPartition, "feature index out of range");
      if (++seen[static_cast<std::size_t>(j)] > 1) throw Error(ErrorCode::NotAPartition, "feature in two groups");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw Error(ErrorCode::NotAPartition, "groups do not cover every feature");

  GroupedShapley out;
  for (const auto& g : groups) {
    double s = 0.0;
    for (int j : g) s += result.phi[static_cast<std::size_t>(j)];
    out.values.push_back(s);
  }
  std::vector<int> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(out.values[static_cast<std::size_t>(a)]) > std::abs(out.values[static_cast<std::size_t>(b)]);
  });
  out.ranks.assign(groups.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) out.ranks[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos) + 1;
  return out;
}

}  // namespace mixshap
