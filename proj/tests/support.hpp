#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mixshap/shapley.hpp"

namespace mixshap::testing {

/// Shapley values by averaging marginal contributions over all M! orderings.
/// Independent of the coalition-weight formula used by the library.
inline std::vector<double> permutation_shapley(const ContributionVector& v) {
  const int M = v.M;
  std::vector<int> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(static_cast<std::size_t>(M), 0.0);
  double count = 0.0;
  do {
    std::uint32_t mask = 0;
    for (int j : order) {
      const double before = v.values[mask];
      mask |= 1U << j;
      phi[static_cast<std::size_t>(j)] += v.values[mask] - before;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= count;
  return phi;
}

inline ContributionVector random_contributions(int M, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  std::vector<double> v(std::size_t{1} << M);
  for (double& x : v) x = z(rng);
  return ContributionVector(M, v);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mixshap::testing
