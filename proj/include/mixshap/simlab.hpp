#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixshap/oracle.hpp"
#include "mixshap/samplers.hpp"
#include "mixshap/shapley.hpp"

namespace mixshap {

enum class MethodKind { Independence, Empirical, Gaussian, Ctree, CtreeOnehot, Oracle };

struct MethodSpec {
  MethodKind kind = MethodKind::Independence;
  int K = 500;
  bool onehot = false;  // encode categoricals before fitting (always on for CtreeOnehot)
  double alpha = 0.5;
  int min_node = 7;
  double sigma = 0.1;
  double eta = 0.95;

  static MethodSpec independence(int K = 500);
  static MethodSpec empirical(double sigma = 0.1, double eta = 0.95);
  static MethodSpec gaussian(int K = 100);
  static MethodSpec ctree(double alpha = 0.5, int K = 500);
  static MethodSpec ctree_onehot(double alpha = 0.5, int K = 500);
  static MethodSpec oracle();

  /// Display name, e.g. "gaussian(100)".
  [[nodiscard]] std::string label() const;
  [[nodiscard]] ConditionalSamplerSpec sampler_spec() const;
};

/// Accepts a bare name ("ctree") or an object {"name": ..., "K": ..., ...}.
MethodSpec method_from_json(const nlohmann::json& j);
nlohmann::json method_to_json(const MethodSpec& m);

/// Cut-off list from JSON numbers or "-inf"/"inf" strings; missing infinite
/// end points are added.
std::vector<double> cutoffs_from_json(const nlohmann::json& j);

/// {"equicorrelated": {"n_cat", "n_cont", "rho", "cutoffs"}} or
/// {"mu", "sigma", "cutoffs": [per feature, [] = continuous], "names"}.
ThresholdGaussianSpec threshold_gaussian_from_json(const nlohmann::json& j);

struct ExperimentSpec {
  std::string name = "experiment";
  int n_cat = 3;
  int n_cont = 0;
  double rho = 0.0;
  std::vector<double> cutoffs{-std::numeric_limits<double>::infinity(), 0.0, 1.0,
                              std::numeric_limits<double>::infinity()};
  int n_train = 1000;
  /// Test observations: the most probable level combinations (all of them
  /// when fewer) for all-categorical data, fresh draws otherwise.
  int T = 2000;
  std::vector<MethodSpec> methods;
  std::uint64_t seed = 1;       // data, noise, test draws and Monte Carlo streams
  std::uint64_t coef_seed = 1;  // true coefficients; shared across a rho sweep
  int replicate = 0;
  double noise_sd = 0.1;  // N(0, 0.01) noise
  int threads = 1;
  bool timing = false;  // explain single-threaded so timings compare across methods

  [[nodiscard]] int M() const { return n_cat + n_cont; }
  [[nodiscard]] int L() const { return n_cat > 0 ? static_cast<int>(cutoffs.size()) - 1 : 0; }
  [[nodiscard]] ThresholdGaussianSpec distribution() const;
  void validate() const;
};

nlohmann::json experiment_to_json(const ExperimentSpec& spec);

MixedTable simulate_mixed_data(const ExperimentSpec& spec, Rng& rng);

struct ResponseAndModel {
  std::vector<double> y;
  LinearModelSpec truth;
  LinearModelSpec fitted;
  bool rank_deficient = false;
};

/// Draws true coefficients from N(0, 1) with coef_rng, noise with rng, and fits OLS.
ResponseAndModel make_response_and_model(const MixedTable& table, const ExperimentSpec& spec, Rng& coef_rng, Rng& rng);

/// Ordinary least squares on the one-hot design (level 1 reference). A rank
/// deficient design falls back to the minimum-norm solution and sets the flag.
LinearModelSpec fit_linear_model(const MixedTable& table, const std::vector<double>& y,
                                 bool* rank_deficient = nullptr);

struct MethodResult {
  std::string method;
  bool ok = false;
  std::string error;
  double mae = 0.0;
  double fit_seconds = 0.0;
  double explain_seconds_per_obs = 0.0;
  std::vector<ShapleyResult> phi;
};

struct ExperimentResult {
  ExperimentSpec spec;
  LinearModelSpec model;
  std::vector<std::vector<double>> test_rows;
  std::vector<double> weights;
  std::vector<ShapleyResult> truth;
  std::vector<MethodResult> methods;

  [[nodiscard]] const MethodResult* find(const std::string& label) const;
};

struct TestSet {
  std::vector<std::vector<double>> rows;
  std::vector<double> weights;
  std::vector<ShapleyResult> truth;
};

/// All-categorical: the T most probable level combinations with renormalised
/// probabilities. Otherwise T fresh draws with weights 1/T. Truth from the oracle.
TestSet build_test_set(const ThresholdGaussianSpec& dist, const LinearModelSpec& model, int T, std::uint64_t seed,
                       int threads = 1);

/// Fits the method on `train` and explains every test row; failures are
/// recorded in the result rather than thrown. Observation i uses the stream
/// derive_seed(seed, {5, i}) for every method.
MethodResult evaluate_method(const MethodSpec& method, const MixedTable& train, const LinearModelSpec& model,
                             const TestSet& test, std::uint64_t seed, int threads = 1);

/// Builds the test set and its oracle Shapley values, then explains every
/// test observation with every method. A failing method is recorded and does
/// not stop the others.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Fits the sampler a method explains with: on the one-hot table for
/// one-hot methods, on `train` otherwise. Oracle has no sampler (InvalidArgument).
FittedSampler fit_method(const MethodSpec& method, const MixedTable& train, int threads = 1);

/// Shapley values of one observation under a fitted method. For one-hot
/// methods `sampler` is fitted on the encoded table and the encoded Shapley
/// values are summed back per original feature.
ShapleyResult explain_observation(const MethodSpec& method, const FittedSampler& sampler, const LinearModelSpec& model,
                                  RowView x_star, const FeatureSchema& schema, std::uint64_t seed);

/// A grid: experiments x rho values x replicate seeds.
struct GridConfig {
  std::vector<ExperimentSpec> experiments;  // rho of each is overridden by `rhos` when non-empty
  std::vector<double> rhos;
  int replicates = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool timing = false;

  [[nodiscard]] std::vector<ExperimentSpec> expand() const;
};

GridConfig grid_from_json(const nlohmann::json& j);

struct GridCell {
  std::string experiment;
  double rho = 0.0;
  std::string method;
  std::vector<double> maes;  // per replicate; failed replicates excluded
  int failures = 0;
  double median_mae = 0.0;
  double mean_fit_seconds = 0.0;
  double mean_explain_seconds = 0.0;
};

struct GridResult {
  std::vector<ExperimentResult> runs;
  std::vector<GridCell> cells;
  [[nodiscard]] int failures() const;
};

GridResult run_grid(const GridConfig& grid);
double median(std::vector<double> values);

/// Deterministic CSV, one row per run x method (no timings).
std::string results_csv(const GridResult& grid);
std::string timings_csv(const GridResult& grid);
/// Median MAE per experiment and method across rho; '*' marks the smallest per column.
std::string render_table(const GridResult& grid);
/// Tab-separated plot data: experiment, rho, one MAE column per method.
std::string plot_tsv(const GridResult& grid);
nlohmann::json results_json(const GridResult& grid);

}  // namespace mixshap
