#include <cmath>
#include <random>

#include "doctest.h"
#include "mixshap/error.hpp"
#include "mixshap/shapley.hpp"
#include "support.hpp"

using namespace mixshap;
using mixshap::testing::max_abs_diff;
using mixshap::testing::permutation_shapley;
using mixshap::testing::random_contributions;

TEST_CASE("kernel weight") {
  // M=4, s=1: 3 / (4 * 1 * 3) = 0.25; s=2: 3 / (6 * 2 * 2) = 0.125
  CHECK(shapley_kernel_weight(4, 1) == doctest::Approx(0.25));
  CHECK(shapley_kernel_weight(4, 2) == doctest::Approx(0.125));
  CHECK(shapley_kernel_weight(4, 0) == kInfiniteWeightSurrogate);
  CHECK(shapley_kernel_weight(4, 4) == kInfiniteWeightSurrogate);
}

TEST_CASE("direct and kernel solutions match the permutation average") {
  std::mt19937_64 rng(11);
  for (int M = 1; M <= 7; ++M) {
    for (int rep = 0; rep < 5; ++rep) {
      const ContributionVector v = random_contributions(M, rng);
      const auto perm = permutation_shapley(v);
      const ShapleyResult d = shapley_direct(v);
      const ShapleyResult k = kernel_shap_solve(v);
      CHECK(max_abs_diff(d.phi, perm) < 1e-12);
      CHECK(max_abs_diff(k.phi, perm) < 1e-9);
      CHECK(k.phi0 == doctest::Approx(v.none()).epsilon(1e-12));
    }
  }
}

TEST_CASE("surrogate endpoint weights are close but not exact") {
  std::mt19937_64 rng(5);
  const ContributionVector v = random_contributions(5, rng);
  const ShapleyResult exact = kernel_shap_solve(v, EndpointConstraint::Exact);
  const ShapleyResult soft = kernel_shap_solve(v, EndpointConstraint::Surrogate);
  CHECK(max_abs_diff(exact.phi, soft.phi) < 1e-3);
}

TEST_CASE("axioms on structured games") {
  // additive game: phi_j = a_j
  const int M = 5;
  const std::vector<double> a{1.0, -2.0, 0.5, 0.0, 3.0};
  std::vector<double> vals(1U << M);
  for (std::uint32_t m = 0; m < vals.size(); ++m) {
    double s = 7.0;
    for (int j = 0; j < M; ++j)
      if ((m >> j) & 1U) s += a[static_cast<std::size_t>(j)];
    vals[m] = s;
  }
  const ContributionVector v(M, vals);
  ShapleyResult r = kernel_shap_solve(v);
  CHECK(max_abs_diff(r.phi, a) < 1e-10);
  r.predicted = v.full();
  CHECK(std::abs(r.efficiency_error()) < 1e-10);

  // unanimity game on {0, 2}: each gets 1/2, others 0
  std::vector<double> u(1U << M, 0.0);
  for (std::uint32_t m = 0; m < u.size(); ++m) u[m] = ((m & 0b101U) == 0b101U) ? 1.0 : 0.0;
  const ShapleyResult ru = kernel_shap_solve(ContributionVector(M, u));
  CHECK(max_abs_diff(ru.phi, {0.5, 0.0, 0.5, 0.0, 0.0}) < 1e-10);
}

TEST_CASE("solver reuse and errors") {
  const KernelShapSolver solver(3);
  CHECK(solver.projection().rows() == 4);
  CHECK(solver.projection().cols() == 8);
  CHECK_THROWS_AS((void)solver.solve(ContributionVector(2, {0, 1, 2, 3})), Error);
  CHECK_THROWS_AS((void)kernel_shap_solve(ContributionVector(2, {0, 1, NAN, 3})), Error);
  try {
    (void)shapley_direct(ContributionVector(2, {0, 1, 2}));
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("grouped values and ranks") {
  ShapleyResult r;
  r.phi = {0.1, -0.7, 0.3, 0.2};
  const GroupedShapley g = group_shapley(r, {{0, 2}, {1}, {3}});
  CHECK(g.values[0] == doctest::Approx(0.4));
  CHECK(g.values[1] == doctest::Approx(-0.7));
  CHECK(g.ranks == std::vector<int>{2, 1, 3});

  // ties go to the lower group index
  r.phi = {0.5, -0.5};
  CHECK(group_shapley(r, {{0}, {1}}).ranks == std::vector<int>{1, 2});

  r.phi = {0.1, 0.2, 0.3};
  for (const auto& bad : std::vector<std::vector<std::vector<int>>>{{{0, 1}}, {{0, 1}, {1, 2}}, {{0, 1, 2, 3}}}) {
    try {
      (void)group_shapley(r, bad);
      FAIL("expected NotAPartition");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotAPartition);
    }
  }
}
