#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mixshap/error.hpp"
#include "mixshap/oracle.hpp"
#include "mixshap/rng.hpp"
#include "support.hpp"

using namespace mixshap;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const std::vector<double> kCuts{-kInf, 0.0, 1.0, kInf};

double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

LinearModelSpec random_model(const ThresholdGaussianSpec& dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  LinearModelSpec m = LinearModelSpec::zeros(dist.schema());
  m.alpha = z(rng);
  for (int j = 0; j < dist.M(); ++j) {
    if (dist.is_categorical(j))
      for (int l = 1; l < dist.levels(j); ++l) m.beta[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] = z(rng);
    else
      m.gamma[static_cast<std::size_t>(j)] = z(rng);
  }
  return m;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("threshold distribution basics") {
  const auto d = ThresholdGaussianSpec::equicorrelated(2, 1, 0.3, kCuts);
  CHECK(d.M() == 3);
  CHECK(d.is_categorical(0));
  CHECK(!d.is_categorical(2));
  CHECK(d.levels(1) == 3);
  CHECK(d.level_of(0, -0.5) == 1);
  CHECK(d.level_of(0, 0.0) == 1);  // (v_1, v_2] is right-closed
  CHECK(d.level_of(0, 0.5) == 2);
  CHECK(d.level_of(0, 7.0) == 3);
  CHECK(d.interval(0, 2) == std::pair<double, double>{0.0, 1.0});
  CHECK(d.schema()[2].name == "x3");
  CHECK(code_of([] { (void)ThresholdGaussianSpec::equicorrelated(3, 0, -0.6, kCuts); }) == ErrorCode::NonPDCovariance);
}

TEST_CASE("independent categorical pmf factorises") {
  const auto d = ThresholdGaussianSpec::equicorrelated(3, 0, 0.0, kCuts);
  const CategoricalOracle o(d);
  REQUIRE(o.cell_count() == 27);
  const double p[3] = {Phi(0.0), Phi(1.0) - Phi(0.0), 1.0 - Phi(1.0)};
  double total = 0.0;
  for (std::int64_t c = 0; c < o.cell_count(); ++c) {
    const auto row = o.cell_row(c);
    const double want = p[static_cast<int>(row[0]) - 1] * p[static_cast<int>(row[1]) - 1] * p[static_cast<int>(row[2]) - 1];
    CHECK(o.cell_probability(c) == doctest::Approx(want).epsilon(1e-7));
    total += o.cell_probability(c);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("dependent pmf sums to one and matches rectangle probabilities") {
  const auto d = ThresholdGaussianSpec::equicorrelated(4, 0, 0.7, kCuts);
  const CategoricalOracle o(d);
  double total = 0.0;
  for (std::int64_t c = 0; c < o.cell_count(); ++c) total += o.cell_probability(c);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-7));
  const std::vector<double> cell{1, 3, 2, 2};
  Eigen::VectorXd lo(4), hi(4);
  for (int j = 0; j < 4; ++j) {
    const auto [a, b] = d.interval(j, static_cast<int>(cell[static_cast<std::size_t>(j)]));
    lo(j) = a;
    hi(j) = b;
  }
  const double qmc = mvn_rectangle_prob(d.mvn, Rectangle(lo, hi), 1e-7, RectangleMethod::QuasiMonteCarlo).value;
  CHECK(o.probability(cell) == doctest::Approx(qmc).epsilon(1e-4));
}

TEST_CASE("categorical contributions agree with the per-coalition enumerator") {
  const auto d = ThresholdGaussianSpec::equicorrelated(3, 0, 0.5, kCuts);
  const LinearModelSpec m = random_model(d, 3);
  const CategoricalOracle o(d, 1e-8);
  const auto values = o.tabulate(m.predictor());
  const std::vector<double> x{2, 1, 3};
  const ContributionVector v = o.contributions(values, x);
  CHECK(v.full() == m.predict(x));
  for (std::uint32_t mask = 0; mask < 8; ++mask)
    CHECK(v.values[mask] ==
          doctest::Approx(exact_conditional_expectation_categorical(d, m.predictor(), Coalition{mask}, x, 1e-8))
              .epsilon(1e-6));
}

TEST_CASE("independent features: v(S) is the marginal average") {
  const auto d = ThresholdGaussianSpec::equicorrelated(3, 0, 0.0, kCuts);
  const LinearModelSpec m = random_model(d, 4);
  const CategoricalOracle o(d);
  const std::vector<double> x{3, 2, 1};
  const auto phi = true_shapley(o.contributions(o.tabulate(m.predictor()), x), x, d.schema());
  // For an additive model with independent features phi_j = beta_j(x_j) - E beta_j.
  const double p[3] = {Phi(0.0), Phi(1.0) - Phi(0.0), 1.0 - Phi(1.0)};
  for (int j = 0; j < 3; ++j) {
    const auto& b = m.beta[static_cast<std::size_t>(j)];
    const double mean = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
    CHECK(phi.phi[static_cast<std::size_t>(j)] ==
          doctest::Approx(b[static_cast<std::size_t>(x[static_cast<std::size_t>(j)]) - 1] - mean).epsilon(1e-6));
  }
  CHECK(std::abs(phi.efficiency_error()) < 1e-10);
}

TEST_CASE("top cells") {
  const auto d = ThresholdGaussianSpec::equicorrelated(3, 0, 0.8, kCuts);
  const CategoricalOracle o(d);
  const auto [cells, w] = o.top_cells(5);
  REQUIRE(cells.size() == 5);
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    total += w[k];
    if (k > 0) CHECK(o.cell_probability(cells[k - 1]) >= o.cell_probability(cells[k]));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (std::int64_t c = 0; c < o.cell_count(); ++c)
    if (std::find(cells.begin(), cells.end(), c) == cells.end()) CHECK(o.cell_probability(c) <= o.cell_probability(cells[4]));
  CHECK(o.top_cells(1000).first.size() == 27);
}

TEST_CASE("mixed oracle: all-continuous case is the textbook regression") {
  const auto d = ThresholdGaussianSpec::equicorrelated(0, 3, 0.5, kCuts);
  const LinearModelSpec m = random_model(d, 5);
  const MixedOracle o(d, m);
  const std::vector<double> x{1.0, -0.5, 2.0};
  // E[x2, x3 | x1] = 0.5 x1 each for unit-variance equicorrelation 0.5
  const double want = m.alpha + m.gamma[0] * x[0] + (m.gamma[1] + m.gamma[2]) * 0.5 * x[0];
  CHECK(o.conditional_expectation(Coalition{0b001}, x) == doctest::Approx(want).epsilon(1e-12));
  CHECK(o.conditional_expectation(Coalition{0}, x) == doctest::Approx(m.alpha).epsilon(1e-12));
}

TEST_CASE("mixed oracle against Monte Carlo") {
  const auto d = ThresholdGaussianSpec::equicorrelated(2, 2, 0.6, {-kInf, -0.5, 0.0, 0.8, kInf});
  const LinearModelSpec m = random_model(d, 6);
  const MixedOracle o(d, m);
  const std::vector<double> x{2, 4, 0.3, -0.4};
  Rng rng(10);
  const int n = 400000;
  const MixedTable draws = d.sample(n, rng);
  // categorical coalitions only: conditioning by rejection
  for (std::uint32_t mask : {0b00U, 0b01U, 0b10U, 0b11U}) {
    double sum = 0.0, sq = 0.0;
    int kept = 0;
    for (int i = 0; i < n; ++i) {
      bool ok = true;
      for (int j = 0; j < 2; ++j)
        if (((mask >> j) & 1U) && draws.at(i, j) != x[static_cast<std::size_t>(j)]) ok = false;
      if (!ok) continue;
      const double f = m.predict(draws.row(i));
      sum += f;
      sq += f * f;
      ++kept;
    }
    REQUIRE(kept > 1000);
    const double mean = sum / kept;
    const double se = std::sqrt((sq / kept - mean * mean) / kept);
    CHECK(std::abs(o.conditional_expectation(Coalition{mask}, x) - mean) < 4.0 * se);
  }
  const ShapleyResult r = true_shapley(d, m, x);
  CHECK(std::abs(r.efficiency_error()) < 1e-8);
  CHECK(exact_conditional_expectation_mixed(d, m, Coalition{0b0111}, x) ==
        doctest::Approx(o.conditional_expectation(Coalition{0b0111}, x)).epsilon(1e-12));
}

TEST_CASE("feature expectations are probabilities") {
  const auto d = ThresholdGaussianSpec::equicorrelated(2, 1, 0.5, kCuts);
  const MixedOracle o(d, LinearModelSpec::zeros(d.schema()));
  const std::vector<double> x{3, 1, 0.7};
  double total = 0.0;
  for (int l = 1; l <= 3; ++l) total += o.feature_expectation(Coalition{0b101}, x, 1, l);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(code_of([&] { (void)o.feature_expectation(Coalition{0b101}, x, 0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("feasibility caps") {
  const auto big = ThresholdGaussianSpec::equicorrelated(15, 0, 0.5, kCuts);
  CHECK(code_of([&] { CategoricalOracle o(big); }) == ErrorCode::Infeasible);
  const auto seven = ThresholdGaussianSpec::equicorrelated(8, 0, 0.5, kCuts);
  const std::vector<double> x(8, 1.0);
  CHECK(code_of([&] {
          (void)exact_conditional_expectation_categorical(seven, LinearModelSpec::zeros(seven.schema()).predictor(),
                                                          Coalition{0b1}, x);
        }) == ErrorCode::Infeasible);
}

TEST_CASE("linear model json and one-hot prediction") {
  const auto d = ThresholdGaussianSpec::equicorrelated(2, 1, 0.2, kCuts);
  const FeatureSchema s = d.schema();
  const LinearModelSpec m = random_model(d, 8);
  const LinearModelSpec back = linear_model_from_json(linear_model_to_json(m, s), s);
  CHECK(back.alpha == m.alpha);
  CHECK(back.beta == m.beta);
  CHECK(back.gamma == m.gamma);
  const nlohmann::json j = {{"intercept", 1.0}, {"categorical", {{"x1", {{"2", 0.5}}}}}, {"continuous", {{"x3", 2.0}}}};
  const LinearModelSpec p = linear_model_from_json(j, s);
  CHECK(p.predict(std::vector<double>{2, 3, 1.5}) == doctest::Approx(1.0 + 0.5 + 3.0));
  CHECK(code_of([&] { (void)linear_model_from_json({{"continuous", {{"zzz", 1.0}}}}, s); }) == ErrorCode::InvalidSchema);
  CHECK(code_of([&] { (void)linear_model_from_json({{"continuous", {{"x1", 1.0}}}}, s); }) == ErrorCode::KindMismatch);

  for (const auto& row : std::vector<std::vector<double>>{{1, 1, 0.0}, {2, 3, -1.0}, {3, 2, 4.0}})
    CHECK(m.predict_onehot(one_hot_encode_row(s, row)) == doctest::Approx(m.predict(row)).epsilon(1e-14));
}

TEST_CASE("weighted mae") {
  ShapleyResult a, b;
  a.phi = {1.0, 2.0};
  b.phi = {1.5, 1.0};
  ShapleyResult c = a;
  // (1/2) * (0.25 * (0.5 + 1.0) + 0.75 * 0)
  CHECK(weighted_mae({a, a}, {b, c}, {0.25, 0.75}) == doctest::Approx(0.1875));
  CHECK(code_of([&] { (void)weighted_mae({a}, {b, c}, {1.0}); }) == ErrorCode::LengthMismatch);
}
