#include <cmath>
#include <random>

#include "doctest.h"
#include "mixshap/error.hpp"
#include "mixshap/rng.hpp"
#include "mixshap/samplers.hpp"

using namespace mixshap;

namespace {

MixedTable gaussian_table(int n, double rho, std::uint64_t seed) {
  Rng rng(seed);
  const MvnSpec spec = MvnSpec::equicorrelated(3, rho);
  const Eigen::MatrixXd x = sample_mvn(spec, n, rng);
  std::vector<double> data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) data.push_back(x(i, j));
  return MixedTable::from_dense(
      FeatureSchema({FeatureSpec::continuous("a"), FeatureSpec::continuous("b"), FeatureSpec::continuous("c")}), data);
}

MixedTable categorical_table(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> lv(1, 3);
  std::vector<double> data;
  for (int i = 0; i < n; ++i) {
    const int a = lv(rng);
    data.push_back(a);
    data.push_back(a);  // b copies a: fully dependent
    data.push_back(lv(rng));
  }
  return MixedTable::from_dense(FeatureSchema({FeatureSpec::categorical("a", 3), FeatureSpec::categorical("b", 3),
                                               FeatureSpec::categorical("c", 3)}),
                                data);
}

double linear(RowView r) { return 1.0 + 2.0 * r[0] - r[1] + 0.5 * r[2]; }

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

TEST_CASE("independence samples keep x*_S and draw training rows for Sbar") {
  const MixedTable train = gaussian_table(50, 0.5, 1);
  const FittedSampler s = fit_sampler(ConditionalSamplerSpec::independence(), train);
  const std::vector<double> x{9.0, 8.0, 7.0};
  Rng rng(4);
  const SampleBlock b = s.sample_conditional(Coalition{0b001}, x, 100, rng);
  REQUIRE(b.rows() == 100);
  for (int k = 0; k < b.rows(); ++k) {
    CHECK(b(k, 0) == 9.0);
    bool found = false;
    for (int i = 0; i < train.n() && !found; ++i) found = train.at(i, 1) == b(k, 1) && train.at(i, 2) == b(k, 2);
    CHECK(found);
  }
  const SampleBlock full = s.sample_conditional(Coalition{0b111}, x, 3, rng);
  for (int k = 0; k < 3; ++k) CHECK(full(k, 2) == 7.0);
}

TEST_CASE("expected contributions under independence equal the training average") {
  const MixedTable train = gaussian_table(40, 0.3, 2);
  const FittedSampler s = fit_sampler(ConditionalSamplerSpec::independence(), train);
  const std::vector<double> x{0.5, -1.0, 2.0};
  const ContributionVector v = expected_contributions(s, linear, x);
  for (std::uint32_t mask = 0; mask < 8; ++mask) {
    double sum = 0.0;
    for (int i = 0; i < train.n(); ++i) {
      std::vector<double> r(train.row(i).begin(), train.row(i).end());
      for (int j = 0; j < 3; ++j)
        if ((mask >> j) & 1U) r[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)];
      sum += linear(r);
    }
    CHECK(v.values[mask] == doctest::Approx(sum / train.n()).epsilon(1e-12));
  }
}

TEST_CASE("Monte Carlo contributions are reproducible and exact at the full coalition") {
  const MixedTable train = gaussian_table(200, 0.3, 3);
  const FittedSampler s = fit_sampler(ConditionalSamplerSpec::independence(), train);
  const std::vector<double> x{0.5, -1.0, 2.0};
  const ContributionVector a = estimate_contributions(s, linear, x, 100, 17);
  const ContributionVector b = estimate_contributions(s, linear, x, 100, 17);
  CHECK(a.values == b.values);
  CHECK(a.full() == linear(x));
  const ContributionVector c = estimate_contributions(s, linear, x, 100, 18);
  CHECK(a.values != c.values);
}

TEST_CASE("root-only ctree reproduces independence exactly") {
  // alpha tiny: no split can be accepted
  const MixedTable train = gaussian_table(100, 0.0, 4);
  auto spec = ConditionalSamplerSpec::ctree_kind(1e-300, 7, 200);
  const FittedSampler tree = fit_sampler(spec, train);
  const FittedSampler ind = fit_sampler(ConditionalSamplerSpec::independence(200), train);
  tree.prefit_all();
  CHECK(tree.fitted_tree_count() == 6);
  for (std::uint32_t m = 1; m < 7; ++m) CHECK(tree.tree(Coalition{m}).is_root_only());
  const std::vector<double> x{0.1, 0.2, 0.3};
  CHECK(estimate_contributions(tree, linear, x, 200, 5).values == estimate_contributions(ind, linear, x, 200, 5).values);
  CHECK(code_of([&] { (void)tree.tree(Coalition{0}); }) == ErrorCode::UnfittedCoalition);
  CHECK(code_of([&] { (void)tree.tree(Coalition{7}); }) == ErrorCode::UnfittedCoalition);
}

TEST_CASE("ctree conditional distribution follows a perfectly dependent feature") {
  const MixedTable train = categorical_table(600, 5);
  const FittedSampler s = fit_sampler(ConditionalSamplerSpec::ctree_kind(0.05), train);
  const std::vector<double> x{2.0, 2.0, 1.0};
  const WeightedSampleSet set = s.conditional_distribution(Coalition{0b001}, x);
  REQUIRE(!set.rows.empty());
  double total = 0.0;
  for (std::size_t k = 0; k < set.rows.size(); ++k) {
    CHECK(set.rows[k][0] == 2.0);
    CHECK(set.rows[k][1] == 2.0);  // b = a in every training row
    total += set.weights[k];
  }
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("gaussian sampler conditions analytically") {
  const MixedTable train = gaussian_table(4000, 0.6, 6);
  const FittedSampler s = fit_sampler(ConditionalSamplerSpec::gaussian_kind(), train);
  const MvnSpec& est = s.mvn();
  const std::vector<double> x{1.5, 0.0, 0.0};
  const std::vector<int> given{0};
  const std::vector<double> gv{1.5};
  const MvnSpec cond = conditional_mvn(est, given, gv);
  Rng rng(8);
  const SampleBlock b = s.sample_conditional(Coalition{0b001}, x, 40000, rng);
  CHECK(b.col(0).minCoeff() == 1.5);
  CHECK(b.col(1).mean() == doctest::Approx(cond.mu(0)).epsilon(0.02));
  CHECK(b.col(2).mean() == doctest::Approx(cond.mu(1)).epsilon(0.02));

  auto fixed = ConditionalSamplerSpec::gaussian_kind();
  fixed.gaussian_mu = Eigen::Vector3d::Zero();
  fixed.gaussian_sigma = Eigen::Matrix3d::Ones();
  CHECK(code_of([&] { (void)fit_sampler(fixed, train); }) == ErrorCode::DegenerateCovariance);
  CHECK(code_of([&] { (void)fit_sampler(ConditionalSamplerSpec::gaussian_kind(), categorical_table(30, 1)); }) ==
        ErrorCode::SchemaUnsupported);
}

TEST_CASE("empirical weights") {
  const MixedTable train = gaussian_table(300, 0.8, 7);
  // huge bandwidth and eta = 1: every row gets (almost) equal weight
  const FittedSampler flat = fit_sampler(ConditionalSamplerSpec::empirical(1e6, 1.0), train);
  const std::vector<double> x{0.3, 0.0, 0.0};
  const WeightedSampleSet set = flat.conditional_distribution(Coalition{0b001}, x);
  CHECK(set.rows.size() == static_cast<std::size_t>(train.n()));
  for (double w : set.weights) CHECK(w == doctest::Approx(1.0 / train.n()).epsilon(1e-6));

  // small bandwidth: the retained rows are the nearest in the S column
  const FittedSampler sharp = fit_sampler(ConditionalSamplerSpec::empirical(0.05, 0.5), train);
  const WeightedSampleSet near = sharp.conditional_distribution(Coalition{0b001}, x);
  CHECK(near.rows.size() < static_cast<std::size_t>(train.n()) / 2);
  CHECK(code_of([&] { (void)fit_sampler(ConditionalSamplerSpec::empirical(), categorical_table(30, 1)); }) ==
        ErrorCode::SchemaUnsupported);
}

TEST_CASE("non-finite predictions are rejected") {
  const MixedTable train = gaussian_table(20, 0.0, 9);
  const FittedSampler s = fit_sampler(ConditionalSamplerSpec::independence(10), train);
  const std::vector<double> x{0.0, 0.0, 0.0};
  const PredictFn bad = [](RowView r) { return r[0] > 0.0 ? NAN : 0.0; };
  CHECK(code_of([&] { (void)estimate_contributions(s, bad, x, 10, 1); }) == ErrorCode::NonFinitePrediction);
}
