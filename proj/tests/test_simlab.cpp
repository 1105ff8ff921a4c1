#include <cmath>

#include "doctest.h"
#include "mixshap/error.hpp"
#include "mixshap/rng.hpp"
#include "mixshap/simlab.hpp"

using namespace mixshap;

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.name = "small";
  s.n_cat = 3;
  s.rho = 0.5;
  s.n_train = 200;
  s.T = 20;
  s.seed = 3;
  s.coef_seed = 4;
  s.methods = {MethodSpec::independence(50), MethodSpec::ctree(0.5, 50), MethodSpec::oracle()};
  return s;
}

}  // namespace

TEST_CASE("method labels and json") {
  CHECK(MethodSpec::gaussian().label() == "gaussian(100)");
  CHECK(MethodSpec::ctree_onehot().label() == "ctree-onehot");
  MethodSpec raw = MethodSpec::empirical();
  raw.onehot = false;
  CHECK(raw.label() == "empirical(raw)");
  for (const MethodSpec& m : {MethodSpec::independence(7), MethodSpec::ctree(0.1, 30), raw, MethodSpec::oracle()}) {
    const MethodSpec back = method_from_json(method_to_json(m));
    CHECK(back.label() == m.label());
    CHECK(back.K == m.K);
    CHECK(back.alpha == m.alpha);
  }
  CHECK(method_from_json("ctree").kind == MethodKind::Ctree);
  CHECK_THROWS_AS((void)method_from_json("xgboost"), Error);
}

TEST_CASE("cut-off parsing") {
  const auto c = cutoffs_from_json(nlohmann::json::array({0.0, 1.0}));
  REQUIRE(c.size() == 4);
  CHECK(std::isinf(c.front()));
  CHECK(c[1] == 0.0);
  CHECK(cutoffs_from_json(nlohmann::json::array({"-inf", 0.5, "inf"})).size() == 3);
  CHECK_THROWS_AS((void)cutoffs_from_json(nlohmann::json::array({"lots"})), Error);
}

TEST_CASE("OLS recovers coefficients from noiseless data") {
  ExperimentSpec s = small_spec();
  s.n_cat = 2;
  s.n_cont = 1;
  s.noise_sd = 0.0;
  Rng data = make_rng(1, {1});
  Rng coef = make_rng(1, {2});
  Rng noise = make_rng(1, {3});
  const MixedTable t = simulate_mixed_data(s, data);
  const ResponseAndModel r = make_response_and_model(t, s, coef, noise);
  CHECK(!r.rank_deficient);
  CHECK(r.fitted.alpha == doctest::Approx(r.truth.alpha).epsilon(1e-9));
  for (std::size_t j = 0; j < r.truth.beta.size(); ++j)
    for (std::size_t l = 0; l < r.truth.beta[j].size(); ++l)
      CHECK(r.fitted.beta[j][l] == doctest::Approx(r.truth.beta[j][l]).epsilon(1e-9));
  CHECK(r.fitted.gamma[2] == doctest::Approx(r.truth.gamma[2]).epsilon(1e-9));
  CHECK(r.truth.beta[0][0] == 0.0);
}

TEST_CASE("rank deficient design falls back to minimum norm") {
  // level 3 of x1 never occurs
  const FeatureSchema schema({FeatureSpec::categorical("x1", 3), FeatureSpec::continuous("x2")});
  std::vector<double> data;
  std::vector<double> y;
  for (int i = 0; i < 30; ++i) {
    data.push_back(1 + i % 2);
    data.push_back(0.1 * i);
    y.push_back(1.0 + (i % 2) * 2.0 + 0.1 * i);
  }
  bool deficient = false;
  const LinearModelSpec m = fit_linear_model(MixedTable::from_dense(schema, data), y, &deficient);
  CHECK(deficient);
  CHECK(m.beta[0][1] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(m.beta[0][2]) < 1e-9);
}

TEST_CASE("experiment is deterministic and the oracle scores zero") {
  const ExperimentSpec s = small_spec();
  const ExperimentResult a = run_experiment(s);
  const ExperimentResult b = run_experiment(s);
  REQUIRE(a.methods.size() == 3);
  for (std::size_t k = 0; k < a.methods.size(); ++k) {
    CHECK(a.methods[k].ok);
    CHECK(a.methods[k].mae == b.methods[k].mae);
  }
  CHECK(a.find("oracle")->mae == 0.0);
  CHECK(a.find("independence")->mae > 0.0);
  CHECK(a.find("nope") == nullptr);
  double w = 0.0;
  for (double x : a.weights) w += x;
  CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& t : a.truth) CHECK(std::abs(t.efficiency_error()) < 1e-8);
  for (const auto& p : a.find("ctree")->phi) CHECK(std::abs(p.efficiency_error()) < 1e-9);
}

TEST_CASE("a failing method is recorded and the others still run") {
  ExperimentSpec s = small_spec();
  MethodSpec raw = MethodSpec::gaussian();
  raw.onehot = false;  // needs continuous features
  s.methods = {raw, MethodSpec::independence(20)};
  const ExperimentResult r = run_experiment(s);
  CHECK(!r.methods[0].ok);
  CHECK(r.methods[0].error.find("SchemaUnsupported") != std::string::npos);
  CHECK(r.methods[1].ok);
}

TEST_CASE("grid expansion and deterministic csv") {
  const nlohmann::json j = nlohmann::json::parse(R"({
    "seed": 9, "replicates": 2, "rhos": [0.0, 0.8],
    "defaults": {"n_train": 150, "T": 10, "methods": [{"name": "independence", "K": 30}, "oracle"]},
    "experiments": [{"name": "m3", "n_cat": 3}]
  })");
  const GridConfig g = grid_from_json(j);
  const auto specs = g.expand();
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].coef_seed == specs[2].coef_seed);  // shared across rho
  CHECK(specs[0].coef_seed != specs[1].coef_seed);  // fresh per replicate
  CHECK(specs[0].seed != specs[2].seed);

  const GridResult a = run_grid(g);
  const GridResult b = run_grid(g);
  CHECK(results_csv(a) == results_csv(b));
  CHECK(a.failures() == 0);
  CHECK(a.cells.size() == 4);  // 2 rhos x 2 methods
  const std::string table = render_table(a);
  CHECK(table.find('*') != std::string::npos);
  const std::string plot = plot_tsv(a);
  CHECK(plot.rfind("experiment\trho\t", 0) == 0);
  CHECK(results_json(a).at("runs").size() == 4);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);

  CHECK_THROWS_AS((void)grid_from_json(nlohmann::json::parse(R"({"experiments": [{"methods": ["magic"]}]})")), Error);
}

TEST_CASE("distribution json") {
  const auto d = threshold_gaussian_from_json(
      nlohmann::json::parse(R"({"equicorrelated": {"n_cat": 2, "n_cont": 1, "rho": 0.4, "cutoffs": [0, 1]}})"));
  CHECK(d.M() == 3);
  CHECK(d.levels(0) == 3);
  CHECK(!d.is_categorical(2));
  const auto e = threshold_gaussian_from_json(nlohmann::json::parse(
      R"({"mu": [0, 1], "sigma": [[1, 0.2], [0.2, 2]], "cutoffs": [[-0.5, 0.5], []], "names": ["a", "b"]})"));
  CHECK(e.levels(0) == 3);
  CHECK(e.schema()[1].name == "b");
  CHECK_THROWS_AS((void)threshold_gaussian_from_json(nlohmann::json::parse(R"({"mu": [0], "sigma": [[1, 0]]})")),
                  Error);
}
