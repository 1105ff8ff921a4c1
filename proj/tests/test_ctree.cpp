#include <cmath>
#include <random>

#include "doctest.h"
#include "mixshap/ctree.hpp"
#include "mixshap/error.hpp"
#include "mixshap/rng.hpp"

using namespace mixshap;

namespace {

MixedTable continuous_table(const Eigen::MatrixXd& x) {
  std::vector<FeatureSpec> f;
  for (int j = 0; j < x.cols(); ++j) f.push_back(FeatureSpec::continuous("x" + std::to_string(j + 1)));
  std::vector<double> data;
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) data.push_back(x(i, j));
  return MixedTable::from_dense(FeatureSchema(f), data);
}

std::vector<int> all_rows(int n) {
  std::vector<int> r(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = i;
  return r;
}

}  // namespace

TEST_CASE("symmetric pseudo-inverse") {
  Eigen::Matrix3d A;
  A << 2, 1, 0, 1, 2, 0, 0, 0, 0;
  const PseudoInverse p = symmetric_pinv(A);
  CHECK(p.rank == 2);
  CHECK((A * p.matrix * A - A).norm() < 1e-12);
  CHECK((p.matrix * A * p.matrix - p.matrix).norm() < 1e-12);
}

TEST_CASE("independence test: constant column and strong signal") {
  const int n = 200;
  Rng rng(1);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = x(i, 0) + 0.1 * z(rng);
    x(i, 2) = 4.0;
  }
  const MixedTable t = continuous_table(x);
  const auto rows = all_rows(n);
  const std::vector<int> resp{1};
  CHECK(independence_test(t, rows, 2, resp) == 1.0);
  CHECK(independence_test(t, rows, 0, resp) < 1e-10);
  const double mc = independence_test(t, rows, 0, resp, TestKind::MonteCarlo, 199, 3);
  CHECK(mc == doctest::Approx(1.0 / 200.0));
}

TEST_CASE("asymptotic p-values are calibrated under independence") {
  // Under H0 the p-value is uniform: the rejection rate at 0.1 over 400
  // replicates has standard error 0.015.
  int rejections = 0;
  const int reps = 400;
  std::normal_distribution<double> z;
  for (int r = 0; r < reps; ++r) {
    Rng rng(derive_seed(77, {static_cast<std::uint64_t>(r)}));
    Eigen::MatrixXd x(100, 2);
    for (int i = 0; i < 100; ++i) x.row(i) << z(rng), z(rng);
    const MixedTable t = continuous_table(x);
    const std::vector<int> resp{1};
    if (independence_test(t, all_rows(100), 0, resp) < 0.1) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / reps;
  CHECK(rate > 0.05);
  CHECK(rate < 0.15);
}

TEST_CASE("continuous split recovers a step") {
  const int n = 300;
  Rng rng(4);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    x(i, 2) = (x(i, 0) > 0.4 ? 3.0 : 0.0) + 0.2 * z(rng);
  }
  const MixedTable t = continuous_table(x);
  CtreeConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_depth = 1;
  const CtreeModel m = fit_ctree(t, {0, 1}, {2}, cfg);
  REQUIRE(!m.is_root_only());
  const CtreeNode& root = m.node(0);
  CHECK(root.feature == 0);
  CHECK(root.rule.threshold > 0.37);
  CHECK(root.rule.threshold < 0.43);
  CHECK(root.p_value < 1e-10);
  CHECK(m.depth() == 1);
  CHECK(m.leaves().size() == 2);
  int covered = 0;
  for (int leaf : m.leaves()) covered += static_cast<int>(m.leaf_rows(leaf).size());
  CHECK(covered == n);
  const std::vector<double> low{0.1, 0.5, 0.0};
  CHECK(m.route(low) == m.node(0).left);
}

TEST_CASE("categorical subset split and unseen levels") {
  // levels 1 and 3 shift the response, 2 and 4 do not; level 5 is never observed
  const FeatureSchema schema({FeatureSpec::categorical("g", 5), FeatureSpec::continuous("y")});
  Rng rng(9);
  std::normal_distribution<double> z;
  std::vector<double> data;
  for (int i = 0; i < 400; ++i) {
    const int level = 1 + i % 4;
    data.push_back(level);
    data.push_back((level == 1 || level == 3 ? 2.0 : 0.0) + 0.3 * z(rng));
  }
  const MixedTable t = MixedTable::from_dense(schema, data);
  CtreeConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_depth = 1;
  const CtreeModel m = fit_ctree(t, {0}, {1}, cfg);
  REQUIRE(!m.is_root_only());
  const SplitRule& rule = m.node(0).rule;
  CHECK(rule.kind == SplitRule::Kind::CategorySubset);
  CHECK(rule.left_levels == std::vector<int>{1, 3});
  CHECK(rule.right_levels == std::vector<int>{2, 4});

  const std::vector<double> unseen{5.0, 0.0};
  const int leaf = m.route(unseen);
  CHECK(m.node(leaf).is_leaf());
  try {
    (void)m.route(unseen, true);
    FAIL("expected UnseenLevel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnseenLevel);
  }
}

TEST_CASE("min_node and independence give a root-only tree") {
  const int n = 50;
  Rng rng(2);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) x.row(i) << z(rng), z(rng);
  CtreeConfig cfg;
  cfg.alpha = 0.05;
  cfg.min_node = 30;  // 2 * min_node > n
  const CtreeModel m = fit_ctree(continuous_table(x), {0}, {1}, cfg);
  CHECK(m.is_root_only());
  CHECK(m.leaf_rows(0).size() == static_cast<std::size_t>(n));
  CHECK(m.to_json().at("nodes").size() == 1);
}

TEST_CASE("config validation and misaligned tables") {
  CtreeConfig cfg;
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.alpha = 0.5;
  cfg.min_node = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);

  Eigen::MatrixXd a(10, 1), b(9, 1);
  a.setRandom();
  b.setRandom();
  try {
    (void)fit_ctree(continuous_table(a), continuous_table(b), CtreeConfig{});
    FAIL("expected RowMisalignment");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RowMisalignment);
  }
}

TEST_CASE("fit is deterministic") {
  const int n = 300;
  Rng rng(12);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
    x(i, 2) = x(i, 0) - x(i, 1) + z(rng);
  }
  const MixedTable t = continuous_table(x);
  CtreeConfig cfg;
  cfg.alpha = 0.05;
  const auto a = fit_ctree(t, {0, 1}, {2}, cfg).to_json().dump();
  const auto b = fit_ctree(t, {0, 1}, {2}, cfg).to_json().dump();
  CHECK(a == b);
  cfg.test = TestKind::MonteCarlo;
  cfg.permutations = 199;
  cfg.seed = 5;
  CHECK(fit_ctree(t, {0, 1}, {2}, cfg).to_json().dump() == fit_ctree(t, {0, 1}, {2}, cfg).to_json().dump());
}
